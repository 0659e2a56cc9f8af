#include "fac/optim.hpp"

#include <cmath>

#include "fac/error.hpp"

namespace fac {

bool adam_step(std::span<double> params, std::span<const double> grads, AdamState& state, const AdamHyper& hyper) {
    if (params.size() != grads.size() || state.m.size() != params.size() || state.v.size() != params.size())
        throw ShapeError("adam_step: parameter, gradient and state sizes differ");
    for (double g : grads)
        if (!std::isfinite(g)) return false;

    ++state.step;
    const double t = static_cast<double>(state.step);
    const double c1 = 1.0 - std::pow(hyper.beta1, t);
    const double c2 = 1.0 - std::pow(hyper.beta2, t);
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double g = grads[i];
        state.m[i] = hyper.beta1 * state.m[i] + (1.0 - hyper.beta1) * g;
        state.v[i] = hyper.beta2 * state.v[i] + (1.0 - hyper.beta2) * g * g;
        const double mhat = state.m[i] / c1;
        const double vhat = state.v[i] / c2;
        params[i] -= hyper.lr * mhat / (std::sqrt(vhat) + hyper.eps);
    }
    return true;
}

}  // namespace fac
