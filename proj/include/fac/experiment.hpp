#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "fac/calibration.hpp"
#include "fac/diagnostics.hpp"
#include "fac/error.hpp"
#include "fac/forecaster.hpp"
#include "fac/leakage.hpp"
#include "fac/protocol.hpp"

namespace fac {

/// Bad configuration or usage, reported with exit code 2 by the CLI.
struct ConfigError : Error {
    using Error::Error;
};

struct ExperimentConfig {
    std::string data;
    std::string timestamp_column;
    std::string forecaster = "ols";
    std::string model;  // saved forecaster to load instead of fitting
    double ridge = 1e-4;
    std::string ols_variant = "shared_centered";
    DLinearOptions dlinear;
    std::string adapter = "fac";
    bool input_calibration = true;
    double gate_init = kDefaultGateInit;
    std::string mode = "matured_only";
    std::string selection = "most_recent";
    double weight_decay = 1.0;
    std::size_t max_matured = 0;
    std::size_t lookback = 96;
    std::size_t horizon = 96;
    std::string batch_rule = "paas";
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::size_t steps = 1;
    std::uint64_t seed = 2024;
    std::string out = "out";

    /// Canonical JSON (sorted keys, no whitespace); the hash is taken over it.
    std::string to_json() const;
    /// Unknown keys are rejected. Missing keys keep `base` values.
    static ExperimentConfig from_json(const std::string& text, const ExperimentConfig& base);
    static ExperimentConfig from_json(const std::string& text) { return from_json(text, ExperimentConfig{}); }
    static ExperimentConfig load(const std::filesystem::path& path);

    /// Throws ConfigError on out-of-range values and unknown names.
    void validate() const;
    std::string hash() const;
    std::string dataset_name() const;

    ProtocolConfig protocol() const;
    AdapterConfig adapter_config() const;
};

struct TrainResult {
    ForecasterModel model;
    double train_mse = 0.0;
    double val_mse = 0.0;
    std::string config_hash;
};

/// Fits the configured forecaster on the train split and writes
/// forecaster.json and train.json into `out`.
TrainResult cmd_train(const ExperimentConfig& config);

struct RunResult {
    EvalReport report;
    RunTrace trace;
    std::string config_hash;
};

/// Runs the configured protocol over the test split. Writes report.json,
/// report.csv, trace.json, batches.csv, windows.csv, trace.bin and
/// adapter.json into `out` when `write_outputs` is set.
RunResult cmd_run(const ExperimentConfig& config, bool write_outputs = true);

struct AuditResult {
    LeakageReport streaming;
    LeakageReport matured;
    std::string config_hash;
};

/// Leakage audit of the test-split batch plan. `windows` > 0 audits a
/// data-free plan of that many windows starting at anchor 0 instead.
AuditResult cmd_audit(const ExperimentConfig& config, std::size_t windows = 0);

struct DiagnoseOptions {
    std::vector<std::filesystem::path> traces;
    std::filesystem::path out = "diagnostics";
    /// "source-final" (frozen forecaster vs evaluated prediction) or
    /// "pre-post" (before vs after each update).
    std::string correction = "source-final";
    std::size_t batch_size = 0;  // curves; 0 = nominal batch of each trace
};

/// Writes spectrum_<i>.csv, curves_<i>.csv (mixed-supervision traces only)
/// and spectrum.svg / curves.svg. Returns the spectra.
std::vector<CorrectionSpectrum> cmd_diagnose(const DiagnoseOptions& options);

}  // namespace fac
