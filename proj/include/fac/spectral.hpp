#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <vector>

#include "fac/tensor.hpp"
#include "fac/timeseries.hpp"

namespace fac {

using cplx = std::complex<double>;

// One-sided real DFT convention used everywhere in this library:
//
//   forward  c[f] = sum_t x[t] exp(-2 pi i f t / n),   f = 0 .. n/2
//   inverse  x[t] = (1/n) sum over the full Hermitian extension of c
//
// so the forward transform is unnormalized and the inverse carries 1/n.

inline std::size_t spectrum_bins(std::size_t len) { return len / 2 + 1; }

/// What irfft does with the imaginary parts of the DC and Nyquist bins, which
/// a real signal cannot carry.
enum class ImagPolicy {
    strict,   // reject above 1e-9 (absolute, relative to the bin magnitude)
    discard,  // drop them silently, the usual irfft behaviour
};

/// Mixed-radix complex FFT for a fixed length. Prime factors fall back to a
/// direct DFT of that radix, so any length works.
class ComplexFft {
public:
    explicit ComplexFft(std::size_t n);

    std::size_t size() const { return n_; }
    /// Unnormalized: sign -1 forward, +1 backward.
    void transform(std::span<const cplx> in, std::span<cplx> out, int sign) const;

private:
    void recurse(const cplx* in, std::size_t stride, cplx* out, std::size_t n, std::size_t level, int sign,
                 cplx* scratch) const;

    std::size_t n_;
    std::vector<std::size_t> factors_;
    std::vector<cplx> twiddle_;  // exp(-2 pi i j / n)
};

/// Real transforms of one length, plus the two adjoint maps gradients need.
class RealFft {
public:
    explicit RealFft(std::size_t len);

    std::size_t length() const { return len_; }
    std::size_t bins() const { return spectrum_bins(len_); }

    void forward(std::span<const double> x, std::span<cplx> spec) const;
    void inverse(std::span<const cplx> spec, std::span<double> x, ImagPolicy policy = ImagPolicy::strict) const;

    /// Gradient with respect to the (re, im) parts of the spectrum of a loss
    /// whose gradient with respect to inverse(spec) is `g`; bin f is returned
    /// as re + i*im. Interior bins carry 2/len, DC and Nyquist 1/len, and the
    /// discarded DC/Nyquist imaginary parts get zero.
    void inverse_adjoint(std::span<const double> g, std::span<cplx> grad_spec) const;

    /// Gradient with respect to x of a loss whose gradient with respect to the
    /// (re, im) parts of forward(x) is `grad_spec`.
    void forward_adjoint(std::span<const cplx> grad_spec, std::span<double> g) const;

private:
    std::size_t len_;
    ComplexFft fft_;
};

/// Cached per-thread plan for `len`.
const RealFft& real_fft(std::size_t len);

// Convenience wrappers on owning vectors.
std::vector<cplx> rfft(std::span<const double> x);
std::vector<double> irfft(std::span<const cplx> spec, std::size_t len, ImagPolicy policy = ImagPolicy::strict);
std::vector<cplx> rfft_adjoint(std::span<const double> g_time);

/// One-sided spectra of a [count x len x C] tensor along the time axis.
struct SpectrumBatch {
    std::size_t count = 0;
    std::size_t len = 0;
    std::size_t channels = 0;
    std::vector<cplx> coeffs;  // [count x bins x channels]

    std::size_t bins() const { return spectrum_bins(len); }
    cplx& operator()(std::size_t i, std::size_t f, std::size_t c) { return coeffs[(i * bins() + f) * channels + c]; }
    cplx operator()(std::size_t i, std::size_t f, std::size_t c) const {
        return coeffs[(i * bins() + f) * channels + c];
    }
};

SpectrumBatch rfft(const Tensor3& x);
Tensor3 irfft(const SpectrumBatch& s, std::size_t len, ImagPolicy policy = ImagPolicy::strict);

/// Dominant period of a [T x C] block from the channel-averaged amplitude
/// spectrum: P = round(T / f*) for the strongest non-DC bin f*, clamped to
/// [2, T/2].
std::size_t estimate_dominant_period(const SeriesMatrix& values, std::size_t row_begin, std::size_t row_end);
std::size_t estimate_dominant_period(const SeriesMatrix& values);

/// Same rule on the amplitude spectrum averaged over every length-`window`
/// slice of the rows: P = round(window / f*), clamped to [2, window].
std::size_t estimate_window_period(const SeriesMatrix& values, std::size_t row_begin, std::size_t row_end,
                                   std::size_t window);

/// Batch size P + 1 from the train rows, over look-back-length slices when
/// `window` > 0 and over the whole train region otherwise.
std::size_t periodicity_batch_size(const TimeSeriesDataset& ds, std::size_t window = 0);

}  // namespace fac
