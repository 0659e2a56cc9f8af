#include <cmath>
#include <random>

#include "doctest.h"
#include "fac/error.hpp"
#include "fac/spectral.hpp"
#include "support.hpp"

using namespace fac;
using fac::testing::naive_rdft;
using fac::testing::random_vector;

namespace {

double re_dot(const std::vector<cplx>& a, const std::vector<cplx>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i].real() * b[i].real() + a[i].imag() * b[i].imag();
    return s;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

}  // namespace

TEST_CASE("rfft matches a naive DFT for every length up to 130") {
    std::mt19937_64 rng(1);
    for (std::size_t n = 1; n <= 130; ++n) {
        const auto x = random_vector(n, rng);
        const auto got = rfft(x);
        const auto want = naive_rdft(x);
        REQUIRE(got.size() == want.size());
        for (std::size_t f = 0; f < got.size(); ++f) CHECK(std::abs(got[f] - want[f]) < 1e-9 * (1.0 + std::sqrt(n)));
    }
}

TEST_CASE("complex transform forward then backward scales by n") {
    std::mt19937_64 rng(2);
    for (std::size_t n : {1u, 2u, 3u, 7u, 12u, 49u, 97u, 210u, 256u}) {
        ComplexFft plan(n);
        std::vector<cplx> x(n), y(n), z(n);
        for (auto& v : x) v = {random_vector(1, rng)[0], random_vector(1, rng)[0]};
        plan.transform(x, y, -1);
        plan.transform(y, z, +1);
        for (std::size_t i = 0; i < n; ++i) CHECK(std::abs(z[i] / static_cast<double>(n) - x[i]) < 1e-10);
    }
}

TEST_CASE("round trip, Parseval and adjoint identities on lengths 1..257") {
    std::mt19937_64 rng(3);
    for (std::size_t n = 1; n <= 257; ++n) {
        const auto x = random_vector(n, rng);
        const auto X = rfft(x);
        const auto back = irfft(X, n);
        for (std::size_t t = 0; t < n; ++t) REQUIRE(std::abs(back[t] - x[t]) < 1e-9);

        double energy_t = dot(x, x), energy_f = 0.0;
        for (std::size_t f = 0; f < X.size(); ++f) {
            const bool edge = f == 0 || (n % 2 == 0 && f == n / 2);
            energy_f += (edge ? 1.0 : 2.0) * std::norm(X[f]);
        }
        CHECK(std::abs(energy_t - energy_f / static_cast<double>(n)) < 1e-9 * (1.0 + energy_t));

        // <irfft(S), g> = <S, inverse_adjoint(g)>
        const auto& plan = real_fft(n);
        std::vector<cplx> S(plan.bins());
        for (auto& s : S) s = {random_vector(1, rng)[0], random_vector(1, rng)[0]};
        const auto g = random_vector(n, rng);
        std::vector<double> y(n);
        plan.inverse(S, y, ImagPolicy::discard);
        std::vector<cplx> G(plan.bins());
        plan.inverse_adjoint(g, G);
        CHECK(std::abs(dot(y, g) - re_dot(S, G)) < 1e-9 * (1.0 + std::abs(dot(y, g))));

        // <rfft(x), G> = <x, forward_adjoint(G)>
        std::vector<double> gx(n);
        plan.forward_adjoint(S, gx);
        CHECK(std::abs(re_dot(X, S) - dot(x, gx)) < 1e-9 * (1.0 + std::abs(re_dot(X, S))));
    }
}

TEST_CASE("irfft policy on DC and Nyquist imaginary parts") {
    std::vector<cplx> S = {{1.0, 0.5}, {0.0, 1.0}, {2.0, 0.0}};
    CHECK_THROWS_AS(irfft(S, 4, ImagPolicy::strict), NumericalError);
    const auto y = irfft(S, 4, ImagPolicy::discard);
    std::vector<cplx> clean = {{1.0, 0.0}, {0.0, 1.0}, {2.0, 0.0}};
    const auto z = irfft(clean, 4);
    for (std::size_t t = 0; t < 4; ++t) CHECK(y[t] == doctest::Approx(z[t]).epsilon(1e-15));
    // odd length has no Nyquist bin, so the last imaginary part is legal
    std::vector<cplx> odd = {{1.0, 0.0}, {0.0, 1.0}};
    CHECK_NOTHROW(irfft(odd, 3));
}

TEST_CASE("batched transforms agree with per-series transforms") {
    std::mt19937_64 rng(4);
    const auto x = fac::testing::random_tensor(3, 10, 2, rng);
    const auto S = rfft(x);
    std::vector<double> col(10);
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t c = 0; c < 2; ++c) {
            gather_channel(x, i, c, col);
            const auto want = rfft(col);
            for (std::size_t f = 0; f < S.bins(); ++f) CHECK(std::abs(S(i, f, c) - want[f]) < 1e-12);
        }
    const auto back = irfft(S, 10);
    for (std::size_t k = 0; k < x.size(); ++k) CHECK(std::abs(back.data[k] - x.data[k]) < 1e-12);
}

TEST_CASE("dominant period estimation") {
    SeriesMatrix m(960, 2);
    for (std::size_t t = 0; t < 960; ++t) {
        m(t, 0) = std::sin(2.0 * std::numbers::pi * static_cast<double>(t) / 24.0);
        m(t, 1) = 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(t) / 24.0) + 0.1 * std::sin(t * 1.3);
    }
    CHECK(estimate_dominant_period(m) == 24);
    CHECK(estimate_dominant_period(m, 0, 480) == 24);

    SeriesMatrix fast(100, 1);
    for (std::size_t t = 0; t < 100; ++t) fast(t, 0) = (t % 2 == 0) ? 1.0 : -1.0;
    CHECK(estimate_dominant_period(fast) == 2);
}
