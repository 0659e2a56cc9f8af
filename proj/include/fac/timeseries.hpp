#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "fac/tensor.hpp"

namespace fac {

/// Row-major [rows x cols] real matrix; rows are time steps, cols channels.
struct SeriesMatrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    SeriesMatrix() = default;
    SeriesMatrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

    double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
};

struct ChannelStats {
    double mean = 0.0;
    double std = 1.0;
};

enum class Region { train, val, test };

const char* to_string(Region r);
Region region_from_string(const std::string& s);

/// Multivariate series, z-normalized with statistics of the train rows.
///
/// Split bounds follow the 0.7 / 0.1 / 0.2 chronological convention:
/// train = [0, train_end), val = [train_end, val_end), test = [val_end, T).
struct TimeSeriesDataset {
    SeriesMatrix values;  // normalized
    std::vector<std::string> channel_names;
    std::size_t train_end = 0;
    std::size_t val_end = 0;
    std::vector<ChannelStats> norm_stats;

    std::size_t length() const { return values.rows; }
    std::size_t channels() const { return values.cols; }

    std::size_t region_begin(Region r) const;
    std::size_t region_end(Region r) const;

    /// Normalized -> original units, in place on a [.. x C] buffer.
    void denormalize(std::span<double> rowmajor) const;
    void normalize(std::span<double> rowmajor) const;
};

/// Builds a dataset from raw (unnormalized) values. Throws ValidationError on
/// a constant or non-finite channel and LengthError when the split is degenerate.
TimeSeriesDataset make_dataset(SeriesMatrix raw, std::vector<std::string> channel_names);

/// Reads a headered CSV: one timestamp column plus numeric channels.
/// An empty `timestamp_column` selects the first column.
TimeSeriesDataset load_csv(const std::filesystem::path& path, const std::string& timestamp_column = "",
                           std::size_t min_rows = 0);

/// One mini-batch of rolling windows.
///
/// `anchor` is the global index immediately before the first target of the
/// batch; sample j (0-based) reads inputs [anchor+1+j-L, anchor+j] and
/// targets [anchor+1+j, anchor+j+H].
struct RollingBatch {
    std::size_t index = 0;
    long anchor = 0;
    std::size_t size = 0;
    Tensor3 inputs;   // [size x L x C]
    Tensor3 targets;  // [size x H x C]

    long span_first() const { return anchor + 1; }
    long span_last() const { return anchor + static_cast<long>(targets.steps + size) - 1; }
};

/// First-target indices of every complete (input, target) pair whose target
/// lies inside `region` and whose look-back lies inside the series.
std::vector<std::size_t> rolling_origins(const TimeSeriesDataset& ds, Region region, std::size_t L,
                                         std::size_t H);

/// Nominal-size tiling of `count` origins; the last batch may be smaller.
std::vector<std::size_t> plan_batch_sizes(std::size_t count, std::size_t nominal);

std::vector<RollingBatch> make_rolling_batches(const TimeSeriesDataset& ds, Region region, std::size_t L,
                                               std::size_t H, const std::vector<std::size_t>& batch_sizes);

/// All windows of a region stacked as (inputs, targets); used for fitting.
std::pair<Tensor3, Tensor3> stack_windows(const TimeSeriesDataset& ds, Region region, std::size_t L,
                                          std::size_t H);

}  // namespace fac
