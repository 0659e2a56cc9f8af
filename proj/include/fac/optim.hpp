#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace fac {

struct AdamHyper {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// First/second moment accumulators for one flat parameter vector.
struct AdamState {
    std::vector<double> m;
    std::vector<double> v;
    std::size_t step = 0;

    AdamState() = default;
    explicit AdamState(std::size_t n) : m(n, 0.0), v(n, 0.0) {}
};

/// Bias-corrected Adam update in place. Returns false, leaving params and
/// state untouched, when any gradient entry is non-finite.
bool adam_step(std::span<double> params, std::span<const double> grads, AdamState& state, const AdamHyper& hyper);

}  // namespace fac
