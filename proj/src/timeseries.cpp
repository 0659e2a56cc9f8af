#include "fac/timeseries.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <optional>
#include <sstream>

namespace fac {

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '"')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r' || s.back() == '"'))
        s.remove_suffix(1);
    return s;
}

std::vector<std::string_view> split_row(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        auto pos = line.find(',', start);
        if (pos == std::string_view::npos) {
            out.push_back(trim(line.substr(start)));
            break;
        }
        out.push_back(trim(line.substr(start, pos - start)));
        start = pos + 1;
    }
    return out;
}

std::optional<double> parse_real(std::string_view s) {
    if (!s.empty() && s.front() == '+') s.remove_prefix(1);
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
    return v;
}

// Numeric timestamps compare numerically, anything else lexicographically
// (ISO-8601 strings order correctly that way).
bool timestamp_before(const std::string& a, const std::string& b) {
    auto na = parse_real(a);
    auto nb = parse_real(b);
    if (na && nb) return *na < *nb;
    return a < b;
}

}  // namespace

const char* to_string(Region r) {
    switch (r) {
        case Region::train: return "train";
        case Region::val: return "val";
        case Region::test: return "test";
    }
    return "?";
}

Region region_from_string(const std::string& s) {
    if (s == "train") return Region::train;
    if (s == "val") return Region::val;
    if (s == "test") return Region::test;
    throw ValidationError("unknown region '" + s + "'");
}

std::size_t TimeSeriesDataset::region_begin(Region r) const {
    switch (r) {
        case Region::train: return 0;
        case Region::val: return train_end;
        case Region::test: return val_end;
    }
    return 0;
}

std::size_t TimeSeriesDataset::region_end(Region r) const {
    switch (r) {
        case Region::train: return train_end;
        case Region::val: return val_end;
        case Region::test: return length();
    }
    return 0;
}

void TimeSeriesDataset::denormalize(std::span<double> rowmajor) const {
    const std::size_t C = channels();
    for (std::size_t i = 0; i < rowmajor.size(); ++i) {
        const auto& st = norm_stats[i % C];
        rowmajor[i] = rowmajor[i] * st.std + st.mean;
    }
}

void TimeSeriesDataset::normalize(std::span<double> rowmajor) const {
    const std::size_t C = channels();
    for (std::size_t i = 0; i < rowmajor.size(); ++i) {
        const auto& st = norm_stats[i % C];
        rowmajor[i] = (rowmajor[i] - st.mean) / st.std;
    }
}

TimeSeriesDataset make_dataset(SeriesMatrix raw, std::vector<std::string> channel_names) {
    const std::size_t T = raw.rows;
    const std::size_t C = raw.cols;
    if (C == 0) throw ValidationError("dataset has no channels");
    if (channel_names.size() != C) throw ValidationError("channel name count does not match column count");

    TimeSeriesDataset ds;
    ds.train_end = T * 7 / 10;
    ds.val_end = T * 8 / 10;
    if (!(ds.train_end > 0 && ds.train_end < ds.val_end && ds.val_end < T)) {
        throw LengthError("series of " + std::to_string(T) + " rows is too short for a 0.7/0.1/0.2 split");
    }

    for (std::size_t t = 0; t < T; ++t)
        for (std::size_t c = 0; c < C; ++c)
            if (!std::isfinite(raw(t, c)))
                throw ValidationError("non-finite value in channel '" + channel_names[c] + "' at row " +
                                      std::to_string(t));

    ds.norm_stats.resize(C);
    for (std::size_t c = 0; c < C; ++c) {
        double mean = 0.0;
        for (std::size_t t = 0; t < ds.train_end; ++t) mean += raw(t, c);
        mean /= static_cast<double>(ds.train_end);
        double var = 0.0;
        for (std::size_t t = 0; t < ds.train_end; ++t) var += (raw(t, c) - mean) * (raw(t, c) - mean);
        const double sd = std::sqrt(var / static_cast<double>(ds.train_end));
        if (!(sd > 1e-12 * std::max(1.0, std::abs(mean)))) {
            throw ValidationError("constant channel '" + channel_names[c] + "' in train region");
        }
        ds.norm_stats[c] = {mean, sd};
    }
    ds.channel_names = std::move(channel_names);
    ds.values = std::move(raw);
    ds.normalize(ds.values.data);
    return ds;
}

TimeSeriesDataset load_csv(const std::filesystem::path& path, const std::string& timestamp_column,
                           std::size_t min_rows) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open '" + path.string() + "'");

    std::string line;
    if (!std::getline(in, line)) throw ParseError("missing header row", 0);
    const auto header = split_row(line);
    std::size_t ts_col = 0;
    if (!timestamp_column.empty()) {
        auto it = std::find(header.begin(), header.end(), timestamp_column);
        if (it == header.end()) throw ParseError("timestamp column '" + timestamp_column + "' not in header", 0);
        ts_col = static_cast<std::size_t>(it - header.begin());
    }
    std::vector<std::string> names;
    for (std::size_t i = 0; i < header.size(); ++i)
        if (i != ts_col) names.emplace_back(header[i]);
    const std::size_t C = names.size();

    std::vector<double> flat;
    std::string prev_ts;
    bool have_prev = false;
    long row = 0;
    while (std::getline(in, line)) {
        ++row;
        if (trim(line).empty()) continue;
        const auto cells = split_row(line);
        if (cells.size() != header.size()) {
            throw ParseError("row " + std::to_string(row) + ": expected " + std::to_string(header.size()) +
                                 " fields, got " + std::to_string(cells.size()),
                             row);
        }
        std::string ts(cells[ts_col]);
        if (have_prev && !timestamp_before(prev_ts, ts)) {
            throw ParseError("row " + std::to_string(row) + ": timestamp '" + ts + "' is not after '" + prev_ts + "'",
                             row);
        }
        prev_ts = std::move(ts);
        have_prev = true;
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (i == ts_col) continue;
            auto v = parse_real(cells[i]);
            if (!v || !std::isfinite(*v)) {
                throw ParseError("row " + std::to_string(row) + ": cannot parse '" + std::string(cells[i]) +
                                     "' as a finite real",
                                 row);
            }
            flat.push_back(*v);
        }
    }
    const std::size_t T = C == 0 ? 0 : flat.size() / C;
    if (T < min_rows) {
        throw LengthError("series has " + std::to_string(T) + " rows, need at least " + std::to_string(min_rows));
    }
    SeriesMatrix raw;
    raw.rows = T;
    raw.cols = C;
    raw.data = std::move(flat);
    return make_dataset(std::move(raw), std::move(names));
}

std::vector<std::size_t> rolling_origins(const TimeSeriesDataset& ds, Region region, std::size_t L,
                                         std::size_t H) {
    if (L == 0 || H == 0) throw ValidationError("look-back and horizon must be >= 1");
    const std::size_t begin = std::max(ds.region_begin(region), L);
    const std::size_t end = ds.region_end(region);
    std::vector<std::size_t> out;
    for (std::size_t s = begin; s + H <= end; ++s) out.push_back(s);
    return out;
}

std::vector<std::size_t> plan_batch_sizes(std::size_t count, std::size_t nominal) {
    if (nominal == 0) throw ValidationError("batch size must be >= 1");
    std::vector<std::size_t> sizes;
    for (std::size_t done = 0; done < count; done += nominal) sizes.push_back(std::min(nominal, count - done));
    return sizes;
}

std::vector<RollingBatch> make_rolling_batches(const TimeSeriesDataset& ds, Region region, std::size_t L,
                                               std::size_t H, const std::vector<std::size_t>& batch_sizes) {
    const auto origins = rolling_origins(ds, region, L, H);
    const std::size_t total = std::accumulate(batch_sizes.begin(), batch_sizes.end(), std::size_t{0});
    if (total != origins.size()) {
        throw ShapeError("batch sizes sum to " + std::to_string(total) + " but region has " +
                         std::to_string(origins.size()) + " rolling origins");
    }
    const std::size_t C = ds.channels();
    std::vector<RollingBatch> out;
    std::size_t pos = 0;
    for (std::size_t k = 0; k < batch_sizes.size(); ++k) {
        const std::size_t B = batch_sizes[k];
        if (B == 0) throw ShapeError("batch size must be >= 1");
        RollingBatch b;
        b.index = k;
        b.anchor = static_cast<long>(origins[pos]) - 1;
        b.size = B;
        b.inputs = Tensor3(B, L, C);
        b.targets = Tensor3(B, H, C);
        for (std::size_t j = 0; j < B; ++j) {
            const std::size_t s = origins[pos + j];
            for (std::size_t t = 0; t < L; ++t)
                for (std::size_t c = 0; c < C; ++c) b.inputs(j, t, c) = ds.values(s - L + t, c);
            for (std::size_t t = 0; t < H; ++t)
                for (std::size_t c = 0; c < C; ++c) b.targets(j, t, c) = ds.values(s + t, c);
        }
        pos += B;
        out.push_back(std::move(b));
    }
    return out;
}

std::pair<Tensor3, Tensor3> stack_windows(const TimeSeriesDataset& ds, Region region, std::size_t L,
                                          std::size_t H) {
    const auto origins = rolling_origins(ds, region, L, H);
    const std::size_t C = ds.channels();
    Tensor3 x(origins.size(), L, C);
    Tensor3 y(origins.size(), H, C);
    for (std::size_t i = 0; i < origins.size(); ++i) {
        const std::size_t s = origins[i];
        for (std::size_t t = 0; t < L; ++t)
            for (std::size_t c = 0; c < C; ++c) x(i, t, c) = ds.values(s - L + t, c);
        for (std::size_t t = 0; t < H; ++t)
            for (std::size_t c = 0; c < C; ++c) y(i, t, c) = ds.values(s + t, c);
    }
    return {std::move(x), std::move(y)};
}

}  // namespace fac
