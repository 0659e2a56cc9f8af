#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "fac/protocol.hpp"
#include "fac/tensor.hpp"

namespace fac {

/// Window- and channel-averaged magnitude spectrum of a prediction correction
/// along the horizon, DC dropped.
struct CorrectionSpectrum {
    std::string label;
    std::string dataset;
    std::string forecaster;
    std::size_t horizon = 0;
    std::size_t windows = 0;
    std::vector<double> magnitudes;  // bins 1 .. H/2, length F - 1
};

CorrectionSpectrum correction_spectrum(const Tensor3& pre, const Tensor3& post, std::string label = "");

/// Mean overlapping-region MSE per sample position over batches of size B.
struct EarlyLateCurves {
    std::size_t batch_size = 0;
    std::size_t batches_used = 0;
    std::vector<double> direct;    // calibrated prediction before the update
    std::vector<double> adjusted;  // evaluated (stitched) prediction
};

/// Throws ValidationError if H < B or no batch has size B.
EarlyLateCurves early_vs_late_curves(const RunTrace& trace, std::size_t batch_size);

struct EvalReport {
    std::string dataset;
    std::string forecaster;
    std::string adapter;
    std::string mode;
    std::size_t lookback = 0;
    std::size_t horizon = 0;
    std::size_t channels = 0;
    std::size_t windows = 0;
    std::size_t batches = 0;
    std::size_t nominal_batch = 0;
    std::size_t updates = 0;
    std::size_t param_count = 0;
    double mse = 0.0;
    double mae = 0.0;
    double mean_adapt_ms = 0.0;
    double period_ms = 0.0;
    double total_seconds = 0.0;
    std::vector<std::string> notices;
    std::string config_json;  // echo of the run configuration
};

/// MSE and MAE of every window's full-horizon final prediction.
EvalReport evaluate(const RunTrace& trace);

// CSV emitters. Schemas:
//   spectrum: freq_index,magnitude            (freq_index starts at 1)
//   curves:   position_j,direct_mse,adjusted_mse   (position_j starts at 1)
//   report:   see kReportColumns
inline constexpr const char* kReportColumns =
    "schema_version,dataset,forecaster,adapter,mode,lookback,horizon,channels,windows,batches,nominal_batch,"
    "updates,param_count,mse,mae,mean_adapt_ms,total_seconds,config_hash";

std::string spectrum_csv(const CorrectionSpectrum& s);
std::string curves_csv(const EarlyLateCurves& c);
std::string report_csv_row(const EvalReport& r, const std::string& config_hash);

struct PlotSeries {
    std::string name;
    std::vector<double> y;  // plotted at x = 1, 2, ...
};

/// Minimal standalone SVG line plot.
std::string svg_line_plot(const std::vector<PlotSeries>& series, const std::string& title, const std::string& xlabel,
                          bool log_y);

}  // namespace fac
