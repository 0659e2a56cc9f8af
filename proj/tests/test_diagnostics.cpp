#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "doctest.h"
#include "fac/diagnostics.hpp"
#include "fac/error.hpp"
#include "support.hpp"

using namespace fac;
using fac::testing::random_tensor;

namespace {

BatchRecord toy_batch(std::size_t index, long anchor, std::size_t B, std::size_t H, double pre_off, double fin_off) {
    BatchRecord b;
    b.index = index;
    b.anchor = anchor;
    b.size = B;
    b.targets = Tensor3(B, H, 1);
    b.pre = Tensor3(B, H, 1);
    b.final = Tensor3(B, H, 1);
    for (std::size_t j = 0; j < B; ++j)
        for (std::size_t h = 0; h < H; ++h) {
            b.targets(j, h, 0) = static_cast<double>(anchor + 1 + static_cast<long>(j + h));
            b.pre(j, h, 0) = b.targets(j, h, 0) + pre_off * static_cast<double>(j + 1);
            b.final(j, h, 0) = b.targets(j, h, 0) + fin_off * static_cast<double>(h + 1);
        }
    b.source = b.pre;
    b.post = b.final;
    return b;
}

}  // namespace

TEST_CASE("identical predictions give a zero spectrum") {
    std::mt19937_64 rng(1);
    const auto x = random_tensor(4, 16, 3, rng);
    const auto s = correction_spectrum(x, x, "none");
    CHECK(s.magnitudes.size() == 8);
    for (double m : s.magnitudes) CHECK(m == 0.0);
}

TEST_CASE("single-tone correction lands in one bin") {
    const std::size_t H = 24;
    Tensor3 pre(5, H, 2), post(5, H, 2);
    for (std::size_t i = 0; i < 5; ++i)
        for (std::size_t t = 0; t < H; ++t)
            for (std::size_t c = 0; c < 2; ++c)
                post(i, t, c) = 0.7 * std::cos(2.0 * std::numbers::pi * 3.0 * static_cast<double>(t) / H);
    const auto s = correction_spectrum(pre, post);
    REQUIRE(s.magnitudes.size() == H / 2);
    for (std::size_t k = 0; k < s.magnitudes.size(); ++k) {
        if (k + 1 == 3) CHECK(s.magnitudes[k] == doctest::Approx(0.7 * H / 2.0).epsilon(1e-12));
        else CHECK(s.magnitudes[k] < 1e-9);
    }
}

TEST_CASE("spectrum matches a per-window naive DFT average") {
    std::mt19937_64 rng(2);
    for (std::size_t H : {7u, 16u, 33u}) {
        const auto pre = random_tensor(6, H, 3, rng), post = random_tensor(6, H, 3, rng);
        const auto s = correction_spectrum(pre, post);
        std::vector<double> want(H / 2, 0.0), col(H);
        for (std::size_t i = 0; i < 6; ++i)
            for (std::size_t c = 0; c < 3; ++c) {
                for (std::size_t t = 0; t < H; ++t) col[t] = post(i, t, c) - pre(i, t, c);
                const auto X = fac::testing::naive_rdft(col);
                for (std::size_t f = 1; f < X.size(); ++f) want[f - 1] += std::abs(X[f]) / 18.0;
            }
        for (std::size_t k = 0; k < want.size(); ++k) CHECK(std::abs(s.magnitudes[k] - want[k]) < 1e-9);
    }
}

TEST_CASE("spectrum is invariant to window and channel order") {
    std::mt19937_64 rng(3);
    const auto pre = random_tensor(5, 12, 3, rng), post = random_tensor(5, 12, 3, rng);
    Tensor3 pp(5, 12, 3), qq(5, 12, 3);
    const std::size_t wperm[5] = {3, 0, 4, 1, 2}, cperm[3] = {2, 0, 1};
    for (std::size_t i = 0; i < 5; ++i)
        for (std::size_t t = 0; t < 12; ++t)
            for (std::size_t c = 0; c < 3; ++c) {
                pp(i, t, c) = pre(wperm[i], t, cperm[c]);
                qq(i, t, c) = post(wperm[i], t, cperm[c]);
            }
    const auto a = correction_spectrum(pre, post), b = correction_spectrum(pp, qq);
    for (std::size_t k = 0; k < a.magnitudes.size(); ++k)
        CHECK(a.magnitudes[k] == doctest::Approx(b.magnitudes[k]).epsilon(1e-12));
    CHECK_THROWS_AS(correction_spectrum(Tensor3(0, 4, 1), Tensor3(0, 4, 1)), ValidationError);
    CHECK_THROWS_AS(correction_spectrum(pre, Tensor3(5, 11, 3)), ShapeError);
}

TEST_CASE("early-vs-late curves on a hand-built two-batch trace") {
    // B = 2, H = 3: overlap for sample j is horizon indices 1-j .. 2-j
    RunTrace t;
    t.mode = ProtocolMode::mixed_supervision;
    t.horizon = 3;
    t.channels = 1;
    t.batches = {toy_batch(0, 10, 2, 3, 1.0, 0.5), toy_batch(1, 12, 2, 3, 2.0, 0.0), toy_batch(2, 14, 1, 3, 9.0, 9.0)};
    const auto c = early_vs_late_curves(t, 2);
    CHECK(c.batches_used == 2);
    // direct error is pre_off*(j+1) everywhere; adjusted is fin_off*(h+1)
    // j=0: h in {1,2}; j=1: h in {0,1}
    const double d0 = (1.0 + 4.0) / 2.0, d1 = (4.0 + 16.0) / 2.0;
    const double a0 = ((1.0 + 2.25) / 2.0 + 0.0) / 2.0, a1 = ((0.25 + 1.0) / 2.0 + 0.0) / 2.0;
    CHECK(c.direct[0] == doctest::Approx(d0).epsilon(1e-12));
    CHECK(c.direct[1] == doctest::Approx(d1).epsilon(1e-12));
    CHECK(c.adjusted[0] == doctest::Approx(a0).epsilon(1e-12));
    CHECK(c.adjusted[1] == doctest::Approx(a1).epsilon(1e-12));
    for (double v : c.direct) CHECK(v >= 0.0);

    CHECK_THROWS_WITH_AS(early_vs_late_curves(t, 5), doctest::Contains("horizon"), ValidationError);
    t.horizon = 3;
    CHECK_THROWS_WITH_AS(early_vs_late_curves(t, 3), doctest::Contains("B = 3"), ValidationError);
}

TEST_CASE("curves coincide when final equals pre") {
    RunTrace t;
    t.horizon = 4;
    t.channels = 1;
    t.batches = {toy_batch(0, 0, 3, 4, 1.0, 0.0)};
    t.batches[0].final = t.batches[0].pre;
    const auto c = early_vs_late_curves(t, 3);
    CHECK(c.direct == c.adjusted);
    CHECK(c.direct.size() == 3);
}

TEST_CASE("evaluate aggregates final predictions") {
    RunTrace t;
    t.horizon = 2;
    t.channels = 1;
    BatchRecord b;
    b.size = 1;
    b.targets = Tensor3(1, 2, 1);
    b.targets.data = {1.0, 2.0};
    b.final = Tensor3(1, 2, 1);
    b.final.data = {2.0, 0.0};
    b.adapt_ms = 4.0;
    t.batches = {b};
    const auto r = evaluate(t);
    CHECK(r.mse == doctest::Approx((1.0 + 4.0) / 2.0));
    CHECK(r.mae == doctest::Approx(1.5));
    CHECK(r.mean_adapt_ms == 4.0);
    CHECK(r.windows == 1);

    t.batches[0].final = t.batches[0].targets;
    CHECK(evaluate(t).mse == 0.0);
    CHECK(evaluate(t).mae == 0.0);
}

TEST_CASE("evaluate does not depend on batch boundaries") {
    std::mt19937_64 rng(5);
    const auto y = random_tensor(12, 3, 2, rng), p = random_tensor(12, 3, 2, rng);
    auto split = [&](std::vector<std::size_t> sizes) {
        RunTrace t;
        t.horizon = 3;
        t.channels = 2;
        std::size_t pos = 0;
        for (std::size_t B : sizes) {
            BatchRecord b;
            b.size = B;
            b.targets = Tensor3(B, 3, 2);
            b.final = Tensor3(B, 3, 2);
            std::copy_n(y.data.begin() + pos * 6, B * 6, b.targets.data.begin());
            std::copy_n(p.data.begin() + pos * 6, B * 6, b.final.data.begin());
            pos += B;
            t.batches.push_back(b);
        }
        return evaluate(t);
    };
    const auto a = split({12}), b = split({5, 5, 2}), c = split({1, 11});
    CHECK(a.mse == doctest::Approx(b.mse).epsilon(1e-14));
    CHECK(a.mse == doctest::Approx(c.mse).epsilon(1e-14));
    CHECK(a.mae == doctest::Approx(c.mae).epsilon(1e-14));
}

TEST_CASE("csv and svg emitters") {
    CorrectionSpectrum s;
    s.magnitudes = {0.5, 0.25};
    const auto csv = spectrum_csv(s);
    CHECK(csv.rfind("freq_index,magnitude\n1,0.5\n2,0.25\n", 0) == 0);
    EarlyLateCurves c;
    c.direct = {1.0};
    c.adjusted = {2.0};
    CHECK(curves_csv(c) == "position_j,direct_mse,adjusted_mse\n1,1,2\n");
    EvalReport r;
    r.dataset = "a,b";
    const auto row = report_csv_row(r, "hash");
    CHECK(row.rfind("1,\"a,b\",", 0) == 0);
    const std::string cols = kReportColumns;
    CHECK(std::count(cols.begin(), cols.end(), ',') == std::count(row.begin(), row.end(), ',') - 1);
    const auto svg = svg_line_plot({{"x", {1.0, 0.1, 0.01}}}, "t", "f", true);
    CHECK(svg.find("<svg") != std::string::npos);
    CHECK(svg.find("<polyline") != std::string::npos);
}
