#include "fac/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>

#include "fac/spectral.hpp"

namespace fac {

CorrectionSpectrum correction_spectrum(const Tensor3& pre, const Tensor3& post, std::string label) {
    require_same_shape(pre, post, "correction_spectrum");
    if (pre.count == 0) throw ValidationError("correction_spectrum: need at least one window");
    const std::size_t H = pre.steps;
    const std::size_t F = spectrum_bins(H);
    CorrectionSpectrum out;
    out.label = std::move(label);
    out.horizon = H;
    out.windows = pre.count;
    out.magnitudes.assign(F - 1, 0.0);
    const auto& plan = real_fft(H);
    std::vector<double> delta(H);
    std::vector<cplx> spec(F);
    for (std::size_t i = 0; i < pre.count; ++i)
        for (std::size_t c = 0; c < pre.channels; ++c) {
            for (std::size_t t = 0; t < H; ++t) delta[t] = post(i, t, c) - pre(i, t, c);
            plan.forward(delta, spec);
            for (std::size_t f = 1; f < F; ++f) out.magnitudes[f - 1] += std::abs(spec[f]);
        }
    const double n = static_cast<double>(pre.count * pre.channels);
    for (auto& m : out.magnitudes) m /= n;
    return out;
}

EarlyLateCurves early_vs_late_curves(const RunTrace& trace, std::size_t batch_size) {
    const std::size_t B = batch_size, H = trace.horizon;
    if (B == 0) throw ValidationError("early_vs_late_curves: batch size must be >= 1");
    if (H < B) {
        throw ValidationError("early_vs_late_curves: horizon " + std::to_string(H) + " < batch size " +
                              std::to_string(B) + ", overlapping region is empty");
    }
    EarlyLateCurves out{B, 0, std::vector<double>(B, 0.0), std::vector<double>(B, 0.0)};
    const std::size_t C = trace.channels;
    // overlap [t_k+B, t_k+H] is horizon index B-1-j .. H-1-j for sample j
    const double n = static_cast<double>((H - B + 1) * C);
    for (const auto& rec : trace.batches) {
        if (rec.size != B) continue;
        ++out.batches_used;
        for (std::size_t j = 0; j < B; ++j) {
            double d = 0.0, a = 0.0;
            for (std::size_t h = B - 1 - j; h <= H - 1 - j; ++h)
                for (std::size_t c = 0; c < C; ++c) {
                    const double y = rec.targets(j, h, c);
                    d += (rec.pre(j, h, c) - y) * (rec.pre(j, h, c) - y);
                    a += (rec.final(j, h, c) - y) * (rec.final(j, h, c) - y);
                }
            out.direct[j] += d / n;
            out.adjusted[j] += a / n;
        }
    }
    if (out.batches_used == 0)
        throw ValidationError("early_vs_late_curves: no mini-batch of size B = " + std::to_string(B));
    for (std::size_t j = 0; j < B; ++j) {
        out.direct[j] /= static_cast<double>(out.batches_used);
        out.adjusted[j] /= static_cast<double>(out.batches_used);
    }
    return out;
}

EvalReport evaluate(const RunTrace& trace) {
    EvalReport r;
    r.mode = to_string(trace.mode);
    r.lookback = trace.lookback;
    r.horizon = trace.horizon;
    r.channels = trace.channels;
    r.batches = trace.batches.size();
    r.nominal_batch = trace.nominal_batch;
    r.updates = trace.updates;
    r.param_count = trace.param_count;
    r.total_seconds = trace.total_seconds;
    r.period_ms = trace.period_ms;
    r.notices = trace.notices;
    double se = 0.0, ae = 0.0, adapt = 0.0;
    std::size_t n = 0;
    for (const auto& b : trace.batches) {
        for (std::size_t i = 0; i < b.final.size(); ++i) {
            const double e = b.final.data[i] - b.targets.data[i];
            se += e * e;
            ae += std::abs(e);
        }
        n += b.final.size();
        r.windows += b.size;
        adapt += b.adapt_ms;
    }
    if (n > 0) {
        r.mse = se / static_cast<double>(n);
        r.mae = ae / static_cast<double>(n);
    }
    if (!trace.batches.empty()) r.mean_adapt_ms = adapt / static_cast<double>(trace.batches.size());
    return r;
}

namespace {

std::string num(double v) {
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
}

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string q = "\"";
    for (char ch : s) q += ch == '"' ? std::string("\"\"") : std::string(1, ch);
    return q + "\"";
}

}  // namespace

std::string spectrum_csv(const CorrectionSpectrum& s) {
    std::ostringstream os;
    os << "freq_index,magnitude\n";
    for (std::size_t f = 0; f < s.magnitudes.size(); ++f) os << f + 1 << ',' << num(s.magnitudes[f]) << '\n';
    return os.str();
}

std::string curves_csv(const EarlyLateCurves& c) {
    std::ostringstream os;
    os << "position_j,direct_mse,adjusted_mse\n";
    for (std::size_t j = 0; j < c.direct.size(); ++j)
        os << j + 1 << ',' << num(c.direct[j]) << ',' << num(c.adjusted[j]) << '\n';
    return os.str();
}

std::string report_csv_row(const EvalReport& r, const std::string& config_hash) {
    std::ostringstream os;
    os << 1 << ',' << csv_field(r.dataset) << ',' << csv_field(r.forecaster) << ',' << csv_field(r.adapter) << ','
       << r.mode << ',' << r.lookback << ',' << r.horizon << ',' << r.channels << ',' << r.windows << ','
       << r.batches << ',' << r.nominal_batch << ',' << r.updates << ',' << r.param_count << ',' << num(r.mse)
       << ',' << num(r.mae) << ',' << num(r.mean_adapt_ms) << ',' << num(r.total_seconds) << ',' << config_hash;
    return os.str();
}

std::string svg_line_plot(const std::vector<PlotSeries>& series, const std::string& title, const std::string& xlabel,
                          bool log_y) {
    constexpr double W = 640, Hh = 400, ml = 60, mr = 20, mt = 30, mb = 45;
    static const char* colors[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd"};
    std::size_t npts = 1;
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    auto tr = [&](double v) { return log_y ? std::log10(std::max(v, 1e-300)) : v; };
    for (const auto& s : series) {
        npts = std::max(npts, s.y.size());
        for (double v : s.y) {
            if (log_y && !(v > 0)) continue;
            lo = std::min(lo, tr(v));
            hi = std::max(hi, tr(v));
        }
    }
    if (!std::isfinite(lo)) lo = 0, hi = 1;
    if (hi - lo < 1e-12) hi = lo + 1;
    auto px = [&](std::size_t i) { return ml + (W - ml - mr) * (npts == 1 ? 0.5 : double(i) / double(npts - 1)); };
    auto py = [&](double v) { return mt + (Hh - mt - mb) * (1.0 - (tr(v) - lo) / (hi - lo)); };

    std::ostringstream os;
    os << std::setprecision(6);
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << Hh << "\">\n";
    os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    os << "<text x=\"" << W / 2 << "\" y=\"18\" text-anchor=\"middle\" font-size=\"14\">" << title << "</text>\n";
    os << "<line x1=\"" << ml << "\" y1=\"" << Hh - mb << "\" x2=\"" << W - mr << "\" y2=\"" << Hh - mb
       << "\" stroke=\"black\"/>\n";
    os << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\"" << Hh - mb
       << "\" stroke=\"black\"/>\n";
    os << "<text x=\"" << W / 2 << "\" y=\"" << Hh - 10 << "\" text-anchor=\"middle\" font-size=\"12\">" << xlabel
       << "</text>\n";
    os << "<text x=\"5\" y=\"" << mt + 10 << "\" font-size=\"10\">" << (log_y ? "1e" : "") << hi << "</text>\n";
    os << "<text x=\"5\" y=\"" << Hh - mb << "\" font-size=\"10\">" << (log_y ? "1e" : "") << lo << "</text>\n";
    for (std::size_t si = 0; si < series.size(); ++si) {
        const auto& s = series[si];
        os << "<polyline fill=\"none\" stroke=\"" << colors[si % 5] << "\" stroke-width=\"1.5\" points=\"";
        for (std::size_t i = 0; i < s.y.size(); ++i) {
            if (log_y && !(s.y[i] > 0)) continue;
            os << px(i) << ',' << py(s.y[i]) << ' ';
        }
        os << "\"/>\n";
        os << "<text x=\"" << W - mr - 150 << "\" y=\"" << mt + 15 * (si + 1) << "\" font-size=\"11\" fill=\""
           << colors[si % 5] << "\">" << s.name << "</text>\n";
    }
    os << "</svg>\n";
    return os.str();
}

}  // namespace fac
