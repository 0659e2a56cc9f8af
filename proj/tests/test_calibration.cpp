#include <cmath>
#include <random>

#include "doctest.h"
#include "fac/calibration.hpp"
#include "fac/error.hpp"
#include "support.hpp"

using namespace fac;
using fac::testing::random_tensor;

namespace {

double inner(const Tensor3& a, const Tensor3& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a.data[i] * b.data[i];
    return s;
}

void randomize(AdapterState& s, std::mt19937_64& rng) {
    std::normal_distribution<double> d(0.0, 0.4);
    if (s.input_module)
        for (auto& p : module_params(*s.input_module)) p = d(rng);
    for (auto& p : module_params(s.output_module)) p = d(rng);
}

LinearMap random_map(std::size_t C, std::size_t L, std::size_t H, std::mt19937_64& rng) {
    std::normal_distribution<double> d(0.0, 0.3);
    LinearMap m(C, L, H);
    for (auto& w : m.weight) w = d(rng);
    for (auto& b : m.bias) b = d(rng);
    return m;
}

}  // namespace

TEST_CASE("fresh modules are the identity") {
    std::mt19937_64 rng(1);
    for (std::size_t len : {1u, 2u, 7u, 16u}) {
        const auto x = random_tensor(3, len, 2, rng);
        CHECK(FreqGcm(len, 2).apply(x).data == x.data);
        CHECK(FreqGcm(len, 2, 0.0).apply(x).data == x.data);
        CHECK(TemporalGcm(len, 2).apply(x).data == x.data);
    }
}

TEST_CASE("FreqGcm forward matches a direct evaluation") {
    std::mt19937_64 rng(2);
    const std::size_t len = 9, C = 2;
    FreqGcm m(len, C);
    std::normal_distribution<double> d(0.0, 0.5);
    for (auto& p : m.params()) p = d(rng);
    const auto x = random_tensor(2, len, C, rng);
    const auto y = m.apply(x);
    std::vector<double> col(len);
    for (std::size_t i = 0; i < 2; ++i)
        for (std::size_t c = 0; c < C; ++c) {
            gather_channel(x, i, c, col);
            auto S = fac::testing::naive_rdft(col);
            for (std::size_t f = 0; f < S.size(); ++f) S[f] = S[f] * m.weight(f, c) + m.shift(f, c);
            // inverse written out directly, Re only
            for (std::size_t t = 0; t < len; ++t) {
                double r = S[0].real();
                for (std::size_t f = 1; f < S.size(); ++f) {
                    const double ang = 2.0 * std::numbers::pi * static_cast<double>(f * t) / len;
                    r += 2.0 * (S[f].real() * std::cos(ang) - S[f].imag() * std::sin(ang));
                }
                r /= static_cast<double>(len);
                CHECK(y(i, t, c) == doctest::Approx(col[t] + std::tanh(m.gate(c)) * r).epsilon(1e-10));
            }
        }
}

TEST_CASE("module input gradients match finite differences") {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> d(0.0, 0.5);
    for (std::size_t len : {5u, 8u}) {
        FreqGcm f(len, 2);
        TemporalGcm t(len, 2);
        for (auto& p : f.params()) p = d(rng);
        for (auto& p : t.params()) p = d(rng);
        const std::vector<CalibrationModule> mods = {f, t};
        for (const auto& m : mods) {
            const auto x = random_tensor(2, len, 2, rng);
            const auto g = random_tensor(2, len, 2, rng);
            CalibrationTape tape;
            module_apply(m, x, &tape);
            std::vector<double> gp(module_params(m).size(), 0.0);
            Tensor3 gx;
            module_backward(m, tape, g, gp, &gx);
            for (std::size_t i = 0; i < x.size(); ++i) {
                Tensor3 xp = x, xm = x;
                xp.data[i] += 1e-6;
                xm.data[i] -= 1e-6;
                const double fd = (inner(module_apply(m, xp), g) - inner(module_apply(m, xm), g)) / 2e-6;
                CHECK(gx.data[i] == doctest::Approx(fd).epsilon(1e-6));
            }
        }
    }
}

TEST_CASE("adapter gradients through a forecaster match finite differences") {
    std::mt19937_64 rng(4);
    const std::size_t C = 2, L = 8, H = 6;
    const auto model = ForecasterModel::ols(random_map(C, L, H, rng));
    for (AdapterKind kind : {AdapterKind::fac, AdapterKind::temporal_gcm}) {
        auto st = make_adapter({kind, true, 0.3}, C, L, H);
        randomize(st, rng);
        const auto x = random_tensor(3, L, C, rng);
        const auto y = random_tensor(3, H, C, rng);
        auto [pred, tape] = adapter_forward(st, model, x);
        Tensor3 grad;
        mse_with_grad(pred, y, grad);
        const auto gb = adapter_backward(st, model, tape, grad);
        REQUIRE(gb.input);
        auto loss = [&] {
            Tensor3 g;
            return mse_with_grad(adapter_predict(st, model, x), y, g);
        };
        auto check_block = [&](std::span<double> params, const std::vector<double>& an) {
            for (std::size_t i = 0; i < params.size(); ++i) {
                const double keep = params[i];
                params[i] = keep + 1e-5;
                const double lp = loss();
                params[i] = keep - 1e-5;
                const double lm = loss();
                params[i] = keep;
                const double fd = (lp - lm) / 2e-5;
                CHECK(std::abs(fd - an[i]) <= 1e-6 * std::max({std::abs(fd), std::abs(an[i]), 1e-3}));
            }
        };
        check_block(module_params(*st.input_module), *gb.input);
        check_block(module_params(st.output_module), gb.output);
    }
}

TEST_CASE("mse_with_grad accumulates weighted gradients") {
    Tensor3 p(1, 2, 1), t(1, 2, 1), g(1, 2, 1, 1.0);
    p.data = {1.0, 3.0};
    t.data = {0.0, 1.0};
    const double l = mse_with_grad(p, t, g, 0.5);
    CHECK(l == doctest::Approx(0.5 * (1.0 + 4.0) / 2.0));
    CHECK(g.data[0] == doctest::Approx(1.0 + 0.5 * 2.0 * 1.0 / 2.0));
    CHECK(g.data[1] == doctest::Approx(1.0 + 0.5 * 2.0 * 2.0 / 2.0));
}

TEST_CASE("parameter counts follow the module layouts") {
    CHECK(FreqGcm(96, 7).param_count() == 4 * 7 * 49 + 7);
    CHECK(TemporalGcm(96, 1).param_count() == 96 * 96 + 96 + 1);
    CHECK(make_adapter({AdapterKind::fac, true}, 7, 96, 96).param_count() == 2758);
    CHECK(make_adapter({AdapterKind::fac, false}, 7, 96, 192).param_count() == 2723);
    CHECK(param_count(AdapterKind::fac, 8, 96, 336, true) == 6992);
    CHECK(param_count(AdapterKind::temporal_gcm, 7, 96, 96, true) == 130382);
    CHECK(param_count(AdapterKind::temporal_gcm, 1, 96, 96, false) == 9313);
    CHECK_FALSE(make_adapter({AdapterKind::fac, false}, 3, 10, 10).input_module.has_value());
}

TEST_CASE("adapter state round-trips through JSON") {
    std::mt19937_64 rng(5);
    auto st = make_adapter({AdapterKind::fac, true, 0.01}, 2, 8, 4);
    randomize(st, rng);
    const auto back = adapter_from_json(adapter_to_json(st));
    const auto model = ForecasterModel::naive(8, 4, 2);
    const auto x = random_tensor(2, 8, 2, rng);
    CHECK(adapter_predict(back, model, x).data == adapter_predict(st, model, x).data);
    CHECK(back.param_count() == st.param_count());
    CHECK_THROWS_AS(adapter_from_json("{}"), ValidationError);
}

TEST_CASE("adapter kind names") {
    CHECK(adapter_kind_from_string("fac") == AdapterKind::fac);
    CHECK(adapter_kind_from_string("temporal_gcm") == AdapterKind::temporal_gcm);
    CHECK(adapter_kind_from_string("tafas") == AdapterKind::temporal_gcm);
    CHECK_THROWS_AS(adapter_kind_from_string("petsa"), ValidationError);
}
