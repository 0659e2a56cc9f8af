#include "fac/report_io.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "json.hpp"

namespace fac {

std::string fnv1a_hex(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : bytes) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << h;
    return os.str();
}

namespace {

static_assert(std::endian::native == std::endian::little, "trace files assume a little-endian host");

template <class T>
void put(std::ostream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::istream& in, const std::string& path) {
    T v{};
    if (!in.read(reinterpret_cast<char*>(&v), sizeof(T))) throw ParseError("truncated trace file '" + path + "'", 0);
    return v;
}

void put_tensor(std::ostream& out, const Tensor3& t) {
    out.write(reinterpret_cast<const char*>(t.data.data()), static_cast<std::streamsize>(t.data.size() * 8));
}

Tensor3 get_tensor(std::istream& in, std::size_t n, std::size_t H, std::size_t C, const std::string& path) {
    Tensor3 t(n, H, C);
    if (!in.read(reinterpret_cast<char*>(t.data.data()), static_cast<std::streamsize>(t.data.size() * 8)))
        throw ParseError("truncated trace file '" + path + "'", 0);
    return t;
}

std::string num(double v) {
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
}

double window_mse(const Tensor3& a, const Tensor3& b, std::size_t i, double* mae = nullptr) {
    double se = 0.0, ae = 0.0;
    const auto x = a.sample(i), y = b.sample(i);
    for (std::size_t k = 0; k < x.size(); ++k) {
        se += (x[k] - y[k]) * (x[k] - y[k]);
        ae += std::abs(x[k] - y[k]);
    }
    if (mae) *mae = ae / static_cast<double>(x.size());
    return se / static_cast<double>(x.size());
}

}  // namespace

void write_trace_binary(const RunTrace& trace, const std::string& config_hash, const std::filesystem::path& path) {
    if (config_hash.size() != 16) throw ValidationError("config hash must have 16 characters");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write '" + path.string() + "'");
    out.write("FACTRACE", 8);
    put<std::uint32_t>(out, kTraceVersion);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(trace.mode));
    for (std::uint64_t v : {trace.lookback, trace.horizon, trace.channels, trace.nominal_batch, trace.batches.size()})
        put<std::uint64_t>(out, v);
    out.write(config_hash.data(), 16);
    for (const auto& b : trace.batches) {
        put<std::int64_t>(out, b.anchor);
        put<std::uint64_t>(out, b.size);
        for (const Tensor3* t : {&b.targets, &b.source, &b.pre, &b.post, &b.final}) {
            if (t->count != b.size || t->steps != trace.horizon || t->channels != trace.channels)
                throw ShapeError("write_trace_binary: batch " + std::to_string(b.index) + " has inconsistent shape");
            put_tensor(out, *t);
        }
    }
    if (!out) throw Error("write failed for '" + path.string() + "'");
}

StoredTrace read_trace_binary(const std::filesystem::path& path) {
    const std::string p = path.string();
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open '" + p + "'");
    char magic[8];
    if (!in.read(magic, 8) || std::memcmp(magic, "FACTRACE", 8) != 0)
        throw ParseError("'" + p + "' is not a trace file", 0);
    const auto version = get<std::uint32_t>(in, p);
    if (version != kTraceVersion) throw ParseError("unsupported trace version " + std::to_string(version), 0);
    const auto mode = get<std::uint32_t>(in, p);
    if (mode > static_cast<std::uint32_t>(ProtocolMode::mixed_supervision))
        throw ParseError("bad protocol mode in '" + p + "'", 0);
    StoredTrace st;
    RunTrace& t = st.trace;
    t.mode = static_cast<ProtocolMode>(mode);
    t.lookback = get<std::uint64_t>(in, p);
    t.horizon = get<std::uint64_t>(in, p);
    t.channels = get<std::uint64_t>(in, p);
    t.nominal_batch = get<std::uint64_t>(in, p);
    const auto K = get<std::uint64_t>(in, p);
    st.config_hash.resize(16);
    if (!in.read(st.config_hash.data(), 16)) throw ParseError("truncated trace file '" + p + "'", 0);
    t.batches.reserve(K);
    for (std::uint64_t k = 0; k < K; ++k) {
        BatchRecord b;
        b.index = k;
        b.anchor = get<std::int64_t>(in, p);
        b.size = get<std::uint64_t>(in, p);
        b.targets = get_tensor(in, b.size, t.horizon, t.channels, p);
        b.source = get_tensor(in, b.size, t.horizon, t.channels, p);
        b.pre = get_tensor(in, b.size, t.horizon, t.channels, p);
        b.post = get_tensor(in, b.size, t.horizon, t.channels, p);
        b.final = get_tensor(in, b.size, t.horizon, t.channels, p);
        t.batches.push_back(std::move(b));
    }
    return st;
}

std::string trace_summary_json(const RunTrace& trace, const std::string& config_hash) {
    nlohmann::json j;
    j["config_hash"] = config_hash;
    j["mode"] = to_string(trace.mode);
    j["lookback"] = trace.lookback;
    j["horizon"] = trace.horizon;
    j["channels"] = trace.channels;
    j["nominal_batch"] = trace.nominal_batch;
    j["param_count"] = trace.param_count;
    j["updates"] = trace.updates;
    j["windows"] = trace.windows();
    j["accesses"] = trace.access_log.size();
    j["notices"] = trace.notices;
    auto& bs = j["batches"] = nlohmann::json::array();
    for (const auto& b : trace.batches) {
        bs.push_back({{"index", b.index},
                      {"anchor", b.anchor},
                      {"size", b.size},
                      {"supervised", b.supervised_batches},
                      {"losses", b.losses},
                      {"skipped_steps", b.skipped_steps}});
    }
    return j.dump(2);
}

std::string batches_csv(const RunTrace& trace, const std::string& config_hash) {
    std::ostringstream os;
    os << "# config_hash=" << config_hash << '\n';
    os << "batch,anchor,size,supervised,steps,skipped,first_loss,last_loss,adapt_ms\n";
    for (const auto& b : trace.batches) {
        std::string sup;
        for (std::size_t i = 0; i < b.supervised_batches.size(); ++i)
            sup += (i ? ";" : "") + std::to_string(b.supervised_batches[i]);
        os << b.index << ',' << b.anchor << ',' << b.size << ',' << sup << ',' << b.losses.size() << ','
           << b.skipped_steps << ',' << (b.losses.empty() ? "" : num(b.losses.front())) << ','
           << (b.losses.empty() ? "" : num(b.losses.back())) << ',' << num(b.adapt_ms) << '\n';
    }
    return os.str();
}

std::string windows_csv(const RunTrace& trace, const std::string& config_hash) {
    std::ostringstream os;
    os << "# config_hash=" << config_hash << '\n';
    os << "window,batch,sample,anchor,source_mse,final_mse,final_mae\n";
    std::size_t w = 0;
    for (const auto& b : trace.batches)
        for (std::size_t j = 0; j < b.size; ++j, ++w) {
            double mae = 0.0;
            const double src = window_mse(b.source, b.targets, j);
            const double fin = window_mse(b.final, b.targets, j, &mae);
            os << w << ',' << b.index << ',' << j << ',' << b.anchor + static_cast<long>(j) << ',' << num(src) << ','
               << num(fin) << ',' << num(mae) << '\n';
        }
    return os.str();
}

std::string report_json(const EvalReport& r, const std::string& config_hash) {
    nlohmann::json j;
    j["schema_version"] = 1;
    j["config_hash"] = config_hash;
    j["dataset"] = r.dataset;
    j["forecaster"] = r.forecaster;
    j["adapter"] = r.adapter;
    j["mode"] = r.mode;
    j["lookback"] = r.lookback;
    j["horizon"] = r.horizon;
    j["channels"] = r.channels;
    j["windows"] = r.windows;
    j["batches"] = r.batches;
    j["nominal_batch"] = r.nominal_batch;
    j["updates"] = r.updates;
    j["param_count"] = r.param_count;
    j["mse"] = r.mse;
    j["mae"] = r.mae;
    j["notices"] = r.notices;
    j["config"] = r.config_json.empty() ? nlohmann::json::object() : nlohmann::json::parse(r.config_json);
    j["timing"] = {
        {"mean_adapt_ms", r.mean_adapt_ms}, {"period_ms", r.period_ms}, {"total_seconds", r.total_seconds}};
    return j.dump(2);
}

std::string leakage_json(const LeakageReport& report, const std::string& config_hash) {
    auto j = nlohmann::json::parse(report.to_json());
    j["config_hash"] = config_hash;
    return j.dump(2);
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write '" + path.string() + "'");
    out << text;
    if (!text.empty() && text.back() != '\n') out << '\n';
}

std::string read_text(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open '" + path.string() + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace fac
