#include "fac/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <numbers>
#include <string>

namespace fac {

namespace {

std::vector<std::size_t> factorize(std::size_t n) {
    std::vector<std::size_t> f;
    for (std::size_t p : {4u, 2u, 3u, 5u}) {
        while (n % p == 0 && n > 1) {
            f.push_back(p);
            n /= p;
        }
    }
    for (std::size_t p = 7; p * p <= n; p += 2) {
        while (n % p == 0) {
            f.push_back(p);
            n /= p;
        }
    }
    if (n > 1) f.push_back(n);
    return f;
}

}  // namespace

ComplexFft::ComplexFft(std::size_t n) : n_(n), factors_(factorize(n)), twiddle_(n) {
    if (n == 0) throw ShapeError("FFT length must be >= 1");
    for (std::size_t j = 0; j < n; ++j) {
        const double ang = -2.0 * std::numbers::pi * static_cast<double>(j) / static_cast<double>(n);
        twiddle_[j] = {std::cos(ang), std::sin(ang)};
    }
}

void ComplexFft::transform(std::span<const cplx> in, std::span<cplx> out, int sign) const {
    if (in.size() != n_ || out.size() != n_) throw ShapeError("ComplexFft: buffer length mismatch");
    std::size_t widest = 1;
    for (auto f : factors_) widest = std::max(widest, f);
    std::vector<cplx> scratch(2 * widest);
    recurse(in.data(), 1, out.data(), n_, 0, sign, scratch.data());
}

// Decimation in time: split into p interleaved subsequences of length m,
// transform each, then combine with a radix-p butterfly.
void ComplexFft::recurse(const cplx* in, std::size_t stride, cplx* out, std::size_t n, std::size_t level,
                         int sign, cplx* scratch) const {
    if (n == 1) {
        out[0] = in[0];
        return;
    }
    const std::size_t p = factors_[level];
    const std::size_t m = n / p;
    for (std::size_t q = 0; q < p; ++q) recurse(in + q * stride, stride * p, out + q * m, m, level + 1, sign, scratch);

    const std::size_t step = n_ / n;  // twiddle stride for length n
    auto w = [&](std::size_t e) {
        const cplx t = twiddle_[(e % n) * step];
        return sign < 0 ? t : std::conj(t);
    };
    cplx* tmp = scratch + p;
    for (std::size_t k = 0; k < m; ++k) {
        for (std::size_t q = 0; q < p; ++q) tmp[q] = out[q * m + k] * w(q * k);
        for (std::size_t r = 0; r < p; ++r) {
            cplx acc = tmp[0];
            for (std::size_t q = 1; q < p; ++q) acc += tmp[q] * w(q * r * m);
            scratch[r] = acc;
        }
        for (std::size_t r = 0; r < p; ++r) out[k + r * m] = scratch[r];
    }
}

RealFft::RealFft(std::size_t len) : len_(len), fft_(len) {}

void RealFft::forward(std::span<const double> x, std::span<cplx> spec) const {
    if (x.size() != len_ || spec.size() != bins()) throw ShapeError("rfft: buffer length mismatch");
    std::vector<cplx> in(x.begin(), x.end());
    std::vector<cplx> out(len_);
    fft_.transform(in, out, -1);
    for (std::size_t f = 0; f < bins(); ++f) spec[f] = out[f];
    // exact zeros where a real input cannot produce an imaginary part
    spec[0].imag(0.0);
    if (len_ % 2 == 0) spec[len_ / 2].imag(0.0);
}

void RealFft::inverse(std::span<const cplx> spec, std::span<double> x, ImagPolicy policy) const {
    if (spec.size() != bins() || x.size() != len_) throw ShapeError("irfft: buffer length mismatch");
    const std::size_t F = bins();
    const bool has_nyquist = len_ % 2 == 0;
    if (policy == ImagPolicy::strict) {
        auto check = [&](std::size_t f, const char* what) {
            if (std::abs(spec[f].imag()) > 1e-9 * std::max(1.0, std::abs(spec[f].real()))) {
                throw NumericalError(std::string("irfft: ") + what + " bin has imaginary part " +
                                     std::to_string(spec[f].imag()));
            }
        };
        check(0, "DC");
        if (has_nyquist) check(F - 1, "Nyquist");
    }
    std::vector<cplx> full(len_);
    full[0] = {spec[0].real(), 0.0};
    for (std::size_t f = 1; f < F; ++f) {
        full[f] = spec[f];
        full[len_ - f] = std::conj(spec[f]);
    }
    if (has_nyquist) full[len_ / 2] = {spec[F - 1].real(), 0.0};
    std::vector<cplx> out(len_);
    fft_.transform(full, out, +1);
    const double scale = 1.0 / static_cast<double>(len_);
    for (std::size_t t = 0; t < len_; ++t) x[t] = out[t].real() * scale;
}

void RealFft::inverse_adjoint(std::span<const double> g, std::span<cplx> grad_spec) const {
    forward(g, grad_spec);
    const std::size_t F = bins();
    const double n = static_cast<double>(len_);
    for (std::size_t f = 0; f < F; ++f) {
        const bool edge = f == 0 || (len_ % 2 == 0 && f == F - 1);
        grad_spec[f] *= edge ? 1.0 / n : 2.0 / n;
        if (edge) grad_spec[f].imag(0.0);
    }
}

void RealFft::forward_adjoint(std::span<const cplx> grad_spec, std::span<double> g) const {
    // g[t] = Re sum_f G[f] exp(+2 pi i f t / n) over the one-sided bins; this
    // is n * irfft of G with interior bins halved.
    const std::size_t F = bins();
    std::vector<cplx> half(grad_spec.begin(), grad_spec.end());
    for (std::size_t f = 0; f < F; ++f) {
        const bool edge = f == 0 || (len_ % 2 == 0 && f == F - 1);
        if (!edge) half[f] *= 0.5;
    }
    inverse(half, g, ImagPolicy::discard);
    for (auto& v : g) v *= static_cast<double>(len_);
}

const RealFft& real_fft(std::size_t len) {
    thread_local std::map<std::size_t, std::unique_ptr<RealFft>> cache;
    auto& slot = cache[len];
    if (!slot) slot = std::make_unique<RealFft>(len);
    return *slot;
}

std::vector<cplx> rfft(std::span<const double> x) {
    std::vector<cplx> out(spectrum_bins(x.size()));
    real_fft(x.size()).forward(x, out);
    return out;
}

std::vector<double> irfft(std::span<const cplx> spec, std::size_t len, ImagPolicy policy) {
    if (spec.size() != spectrum_bins(len)) throw ShapeError("irfft: spectrum has wrong number of bins for length");
    std::vector<double> out(len);
    real_fft(len).inverse(spec, out, policy);
    return out;
}

std::vector<cplx> rfft_adjoint(std::span<const double> g_time) {
    std::vector<cplx> out(spectrum_bins(g_time.size()));
    real_fft(g_time.size()).inverse_adjoint(g_time, out);
    return out;
}

SpectrumBatch rfft(const Tensor3& x) {
    SpectrumBatch s{x.count, x.steps, x.channels, {}};
    s.coeffs.resize(x.count * s.bins() * x.channels);
    const auto& plan = real_fft(x.steps);
    std::vector<double> buf(x.steps);
    std::vector<cplx> spec(s.bins());
    for (std::size_t i = 0; i < x.count; ++i)
        for (std::size_t c = 0; c < x.channels; ++c) {
            gather_channel(x, i, c, buf);
            plan.forward(buf, spec);
            for (std::size_t f = 0; f < s.bins(); ++f) s(i, f, c) = spec[f];
        }
    return s;
}

Tensor3 irfft(const SpectrumBatch& s, std::size_t len, ImagPolicy policy) {
    if (s.len != len) throw ShapeError("irfft: spectrum length does not match requested length");
    Tensor3 x(s.count, len, s.channels);
    const auto& plan = real_fft(len);
    std::vector<double> buf(len);
    std::vector<cplx> spec(s.bins());
    for (std::size_t i = 0; i < s.count; ++i)
        for (std::size_t c = 0; c < s.channels; ++c) {
            for (std::size_t f = 0; f < s.bins(); ++f) spec[f] = s(i, f, c);
            plan.inverse(spec, buf, policy);
            scatter_channel(x, i, c, buf);
        }
    return x;
}

std::size_t estimate_dominant_period(const SeriesMatrix& values, std::size_t row_begin, std::size_t row_end) {
    const std::size_t T = row_end - row_begin;
    if (row_end > values.rows || row_begin >= row_end || T < 4)
        throw LengthError("period estimation needs at least 4 rows");
    const auto& plan = real_fft(T);
    const std::size_t F = plan.bins();
    std::vector<double> amp(F, 0.0);
    std::vector<double> buf(T);
    std::vector<cplx> spec(F);
    for (std::size_t c = 0; c < values.cols; ++c) {
        for (std::size_t t = 0; t < T; ++t) buf[t] = values(row_begin + t, c);
        plan.forward(buf, spec);
        for (std::size_t f = 0; f < F; ++f) amp[f] += std::abs(spec[f]);
    }
    std::size_t best = 1;
    for (std::size_t f = 2; f < F; ++f)
        if (amp[f] > amp[best]) best = f;
    auto period = static_cast<std::size_t>(std::llround(static_cast<double>(T) / static_cast<double>(best)));
    return std::clamp<std::size_t>(period, 2, T / 2);
}

std::size_t estimate_dominant_period(const SeriesMatrix& values) {
    return estimate_dominant_period(values, 0, values.rows);
}

std::size_t estimate_window_period(const SeriesMatrix& values, std::size_t row_begin, std::size_t row_end,
                                   std::size_t window) {
    if (window < 4) throw LengthError("windowed period estimation needs a window of at least 4");
    if (row_end > values.rows || row_begin >= row_end || row_end - row_begin < window)
        throw LengthError("windowed period estimation needs at least one full window");
    const auto& plan = real_fft(window);
    const std::size_t F = plan.bins();
    std::vector<double> amp(F, 0.0);
    std::vector<double> buf(window);
    std::vector<cplx> spec(F);
    for (std::size_t s = row_begin; s + window <= row_end; ++s)
        for (std::size_t c = 0; c < values.cols; ++c) {
            for (std::size_t t = 0; t < window; ++t) buf[t] = values(s + t, c);
            plan.forward(buf, spec);
            for (std::size_t f = 0; f < F; ++f) amp[f] += std::abs(spec[f]);
        }
    std::size_t best = 1;
    for (std::size_t f = 2; f < F; ++f)
        if (amp[f] > amp[best]) best = f;
    auto period = static_cast<std::size_t>(std::llround(static_cast<double>(window) / static_cast<double>(best)));
    return std::clamp<std::size_t>(period, 2, window);
}

std::size_t periodicity_batch_size(const TimeSeriesDataset& ds, std::size_t window) {
    if (window == 0) return estimate_dominant_period(ds.values, 0, ds.train_end) + 1;
    return estimate_window_period(ds.values, 0, ds.train_end, window) + 1;
}

}  // namespace fac
