#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "fac/error.hpp"

namespace fac {

/// Dense row-major [count x steps x channels] block of doubles.
///
/// Windows of a multivariate series are stored sample-major, then time, then
/// channel, so one sample is a contiguous [steps x channels] slab and one
/// channel of one sample is a strided series.
struct Tensor3 {
    std::size_t count = 0;
    std::size_t steps = 0;
    std::size_t channels = 0;
    std::vector<double> data;

    Tensor3() = default;
    Tensor3(std::size_t n, std::size_t t, std::size_t c, double fill = 0.0)
        : count(n), steps(t), channels(c), data(n * t * c, fill) {}

    std::size_t index(std::size_t i, std::size_t t, std::size_t c) const {
        return (i * steps + t) * channels + c;
    }
    double& operator()(std::size_t i, std::size_t t, std::size_t c) { return data[index(i, t, c)]; }
    double operator()(std::size_t i, std::size_t t, std::size_t c) const { return data[index(i, t, c)]; }

    std::span<double> sample(std::size_t i) { return {data.data() + i * steps * channels, steps * channels}; }
    std::span<const double> sample(std::size_t i) const {
        return {data.data() + i * steps * channels, steps * channels};
    }

    bool same_shape(const Tensor3& o) const {
        return count == o.count && steps == o.steps && channels == o.channels;
    }
    std::size_t size() const { return data.size(); }
};

inline void require_same_shape(const Tensor3& a, const Tensor3& b, const char* where) {
    if (!a.same_shape(b)) {
        throw ShapeError(std::string(where) + ": shape mismatch [" + std::to_string(a.count) + "x" +
                         std::to_string(a.steps) + "x" + std::to_string(a.channels) + "] vs [" +
                         std::to_string(b.count) + "x" + std::to_string(b.steps) + "x" +
                         std::to_string(b.channels) + "]");
    }
}

/// Gathers one channel of one sample into a contiguous buffer.
inline void gather_channel(const Tensor3& x, std::size_t i, std::size_t c, std::span<double> out) {
    for (std::size_t t = 0; t < x.steps; ++t) out[t] = x(i, t, c);
}

inline void scatter_channel(Tensor3& x, std::size_t i, std::size_t c, std::span<const double> in) {
    for (std::size_t t = 0; t < x.steps; ++t) x(i, t, c) = in[t];
}

}  // namespace fac
