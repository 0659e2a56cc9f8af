#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <random>
#include <vector>

#include "fac/tensor.hpp"
#include "fac/timeseries.hpp"

namespace fac::testing {

inline Tensor3 random_tensor(std::size_t n, std::size_t t, std::size_t c, std::mt19937_64& rng, double scale = 1.0) {
    std::normal_distribution<double> d(0.0, scale);
    Tensor3 x(n, t, c);
    for (auto& v : x.data) v = d(rng);
    return x;
}

inline std::vector<double> random_vector(std::size_t n, std::mt19937_64& rng) {
    std::normal_distribution<double> d(0.0, 1.0);
    std::vector<double> v(n);
    for (auto& x : v) x = d(rng);
    return v;
}

/// O(n^2) one-sided DFT, sign -1, unnormalized.
inline std::vector<std::complex<double>> naive_rdft(const std::vector<double>& x) {
    const std::size_t n = x.size();
    std::vector<std::complex<double>> out(n / 2 + 1);
    for (std::size_t f = 0; f < out.size(); ++f) {
        std::complex<double> acc = 0.0;
        for (std::size_t t = 0; t < n; ++t) {
            const double ang = -2.0 * std::numbers::pi * static_cast<double>((f * t) % n) / static_cast<double>(n);
            acc += x[t] * std::complex<double>(std::cos(ang), std::sin(ang));
        }
        out[f] = acc;
    }
    return out;
}

/// Sum of sinusoids plus Gaussian noise, distinct phase per channel.
inline TimeSeriesDataset periodic_dataset(std::size_t T, std::size_t C, double period, double noise,
                                          std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> d(0.0, 1.0);
    SeriesMatrix raw(T, C);
    for (std::size_t t = 0; t < T; ++t)
        for (std::size_t c = 0; c < C; ++c) {
            const double ph = 0.7 * static_cast<double>(c);
            raw(t, c) = std::sin(2.0 * std::numbers::pi * static_cast<double>(t) / period + ph) +
                        0.4 * std::cos(4.0 * std::numbers::pi * static_cast<double>(t) / period + 2.0 * ph) +
                        noise * d(rng) + static_cast<double>(c);
        }
    std::vector<std::string> names;
    for (std::size_t c = 0; c < C; ++c) names.push_back("ch" + std::to_string(c));
    return make_dataset(std::move(raw), std::move(names));
}

}  // namespace fac::testing
