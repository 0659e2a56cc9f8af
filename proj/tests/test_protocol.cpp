#include <algorithm>
#include <random>
#include <set>

#include "doctest.h"
#include "fac/error.hpp"
#include "fac/protocol.hpp"
#include "support.hpp"

using namespace fac;

namespace {

struct Fixture {
    TimeSeriesDataset ds = fac::testing::periodic_dataset(900, 2, 12.0, 0.3, 21);
    std::size_t L = 24, H = 8;
    ForecasterModel model = fit_ols(ds, 24, 8);
};

ProtocolConfig config(ProtocolMode mode, std::size_t B, double lr = 0.01) {
    ProtocolConfig c;
    c.mode = mode;
    c.batch_rule = BatchSizeRule::fixed(B);
    c.optimizer.lr = lr;
    return c;
}

}  // namespace

TEST_CASE("maturation ledger matches the defining inequality") {
    std::mt19937_64 rng(1);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t H = 1 + rng() % 12;
        MaturationLedger ledger(H);
        std::vector<std::pair<long, std::size_t>> plan;
        long anchor = static_cast<long>(rng() % 5);
        std::vector<std::size_t> previous;
        for (int k = 0; k < 30; ++k) {
            const std::size_t B = 1 + rng() % 6;
            std::vector<std::size_t> want;
            for (std::size_t m = 0; m < plan.size(); ++m)
                if (plan[m].first + static_cast<long>(plan[m].second + H) - 1 <= anchor) want.push_back(m);
            const auto got = ledger.matured(anchor);
            CHECK(got == want);
            CHECK(std::includes(got.begin(), got.end(), previous.begin(), previous.end()));
            if (!want.empty()) CHECK(ledger.most_recent(anchor) == want.back());
            else CHECK_FALSE(ledger.most_recent(anchor).has_value());
            previous = got;
            ledger.record(anchor, B);
            plan.push_back({anchor, B});
            anchor += static_cast<long>(B);
        }
    }
    MaturationLedger l(3);
    l.record(10, 2);
    CHECK_THROWS_AS(l.record(10, 2), ValidationError);
}

TEST_CASE("frozen mode reproduces forward-only outputs") {
    Fixture f;
    const auto trace = run_frozen(f.ds, f.model, config(ProtocolMode::frozen, 5), f.L, f.H);
    const auto [x, y] = stack_windows(f.ds, Region::test, f.L, f.H);
    const auto direct = f.model.forward(x);
    CHECK(trace.stacked(&BatchRecord::final).data == direct.data);
    CHECK(trace.stacked(&BatchRecord::targets).data == y.data);
    CHECK(trace.access_log.empty());
    CHECK(trace.updates == 0);
}

TEST_CASE("matured-only reads no target beyond the current anchor") {
    Fixture f;
    for (std::size_t B : {1u, 3u, 8u, 13u}) {
        auto state = make_adapter({}, 2, f.L, f.H);
        const auto trace = run_matured_only(f.ds, f.model, state, config(ProtocolMode::matured_only, B), f.L, f.H);
        CHECK(trace.updates > 0);
        CHECK(accesses_after_anchor(trace).empty());
        for (const auto& a : trace.access_log) CHECK(a.timestamp <= trace.batches[a.step].anchor);
        // each update uses the newest matured batch
        for (const auto& b : trace.batches) {
            std::optional<std::size_t> newest;
            for (std::size_t m = 0; m < b.index; ++m) {
                const auto& pm = trace.batches[m];
                if (pm.anchor + static_cast<long>(pm.size + f.H) - 1 <= b.anchor) newest = m;
            }
            if (newest) CHECK(b.supervised_batches == std::vector<std::size_t>{*newest});
            else CHECK(b.supervised_batches.empty());
            CHECK(b.final.data == b.post.data);
        }
    }
}

TEST_CASE("access log covers every target of each supervised batch") {
    Fixture f;
    auto state = make_adapter({}, 2, f.L, f.H);
    const auto trace = run_matured_only(f.ds, f.model, state, config(ProtocolMode::matured_only, 4), f.L, f.H);
    for (const auto& b : trace.batches)
        for (std::size_t m : b.supervised_batches) {
            std::set<long> seen;
            for (const auto& a : trace.access_log)
                if (a.step == b.index && a.batch == m) seen.insert(a.timestamp);
            const auto& pm = trace.batches[m];
            CHECK(seen.size() == pm.size + f.H - 1);
            CHECK(*seen.begin() == pm.anchor + 1);
            CHECK(*seen.rbegin() == pm.anchor + static_cast<long>(pm.size + f.H) - 1);
        }
}

TEST_CASE("no maturation means frozen-equivalent predictions") {
    Fixture f;
    const std::size_t H = 200;  // every anchor of the test region is closer than H to the next
    auto ds = fac::testing::periodic_dataset(1400, 2, 12.0, 0.3, 5);
    const auto model = fit_ols(ds, f.L, H);
    auto state = make_adapter({}, 2, f.L, H);
    const auto adapted = run_matured_only(ds, model, state, config(ProtocolMode::matured_only, 10), f.L, H);
    const auto frozen = run_frozen(ds, model, config(ProtocolMode::frozen, 10), f.L, H);
    CHECK(adapted.updates == 0);
    CHECK(adapted.stacked(&BatchRecord::final).data == frozen.stacked(&BatchRecord::final).data);
    CHECK(std::any_of(adapted.notices.begin(), adapted.notices.end(),
                      [](const std::string& n) { return n.find("no mini-batch matured") != std::string::npos; }));
}

TEST_CASE("prefix stitching on a hand-enumerated toy batch") {
    // B = 3, H = 4: sample j keeps min(B-1-j, H) leading steps from pre
    Tensor3 pre(3, 4, 1, 1.0), post(3, 4, 1, 2.0);
    const auto s = stitch_predictions(pre, post, 3);
    const double want[3][4] = {{1, 1, 2, 2}, {1, 2, 2, 2}, {2, 2, 2, 2}};
    for (std::size_t j = 0; j < 3; ++j)
        for (std::size_t h = 0; h < 4; ++h) CHECK(s(j, h, 0) == want[j][h]);

    // horizon shorter than the batch: the prefix is capped at H
    Tensor3 p2(5, 2, 1, 1.0), q2(5, 2, 1, 2.0);
    const auto s2 = stitch_predictions(p2, q2, 5);
    CHECK(s2(0, 1, 0) == 1.0);
    CHECK(s2(2, 1, 0) == 1.0);
    CHECK(s2(3, 0, 0) == 1.0);
    CHECK(s2(3, 1, 0) == 2.0);
    CHECK(s2(4, 0, 0) == 2.0);
}

TEST_CASE("stitched predictions agree with pre on the prefix and post on the suffix") {
    Fixture f;
    auto state = make_adapter({}, 2, f.L, f.H);
    const auto trace =
        run_mixed_supervision(f.ds, f.model, state, config(ProtocolMode::mixed_supervision, 6, 0.05), f.L, f.H);
    for (const auto& b : trace.batches)
        for (std::size_t j = 0; j < b.size; ++j)
            for (std::size_t h = 0; h < f.H; ++h)
                for (std::size_t c = 0; c < 2; ++c) {
                    // global time of step h is anchor + 1 + j + h; observed up to anchor + B - 1
                    const bool observed = j + h + 1 <= b.size - 1;
                    CHECK(b.final(j, h, c) == (observed ? b.pre(j, h, c) : b.post(j, h, c)));
                }
}

TEST_CASE("mixed supervision reads partial targets of the current batch only") {
    Fixture f;
    auto state = make_adapter({}, 2, f.L, f.H);
    const auto trace =
        run_mixed_supervision(f.ds, f.model, state, config(ProtocolMode::mixed_supervision, 5), f.L, f.H);
    for (const auto& a : accesses_after_anchor(trace)) {
        const auto& b = trace.batches[a.step];
        CHECK(a.batch == a.step);
        CHECK(a.timestamp <= b.anchor + static_cast<long>(b.size) - 1);
    }
}

TEST_CASE("zero learning rate makes mixed supervision a no-op") {
    Fixture f;
    auto state = make_adapter({}, 2, f.L, f.H);
    const auto trace =
        run_mixed_supervision(f.ds, f.model, state, config(ProtocolMode::mixed_supervision, 6, 0.0), f.L, f.H);
    for (const auto& b : trace.batches) {
        CHECK(b.post.data == b.pre.data);
        CHECK(b.final.data == b.pre.data);
        CHECK(b.pre.data == b.source.data);
    }
}

TEST_CASE("batch size one logs an empty partial-target term") {
    Fixture f;
    auto state = make_adapter({}, 2, f.L, f.H);
    const auto trace =
        run_mixed_supervision(f.ds, f.model, state, config(ProtocolMode::mixed_supervision, 1), f.L, f.H);
    CHECK(std::any_of(trace.notices.begin(), trace.notices.end(),
                      [](const std::string& n) { return n.find("B_k = 1") != std::string::npos; }));
    CHECK(accesses_after_anchor(trace).empty());
}

TEST_CASE("runs are bitwise deterministic") {
    Fixture f;
    for (ProtocolMode mode : {ProtocolMode::matured_only, ProtocolMode::mixed_supervision}) {
        auto s1 = make_adapter({}, 2, f.L, f.H), s2 = make_adapter({}, 2, f.L, f.H);
        const auto a = run_protocol(plan_batches(f.ds, Region::test, f.L, f.H, BatchSizeRule::fixed(5)), f.model, s1,
                                    config(mode, 5));
        const auto b = run_protocol(plan_batches(f.ds, Region::test, f.L, f.H, BatchSizeRule::fixed(5)), f.model, s2,
                                    config(mode, 5));
        CHECK(a.stacked(&BatchRecord::final).data == b.stacked(&BatchRecord::final).data);
        CHECK(a.stacked(&BatchRecord::post).data == b.stacked(&BatchRecord::post).data);
    }
}

TEST_CASE("weighted selection over several matured batches") {
    Fixture f;
    auto c = config(ProtocolMode::matured_only, 3);
    c.selection = MaturedSelection::all_with_weights;
    c.max_matured = 3;
    c.weight_decay = 0.5;
    auto state = make_adapter({}, 2, f.L, f.H);
    const auto trace = run_matured_only(f.ds, f.model, state, c, f.L, f.H);
    std::size_t max_used = 0;
    for (const auto& b : trace.batches) max_used = std::max(max_used, b.supervised_batches.size());
    CHECK(max_used == 3);
    CHECK(accesses_after_anchor(trace).empty());

    c.weight_fn = [](std::size_t, std::size_t) { return -1.0; };
    auto s2 = make_adapter({}, 2, f.L, f.H);
    CHECK_THROWS_AS(run_matured_only(f.ds, f.model, s2, c, f.L, f.H), ValidationError);
}

TEST_CASE("mode and rule names") {
    CHECK(protocol_mode_from_string("matured") == ProtocolMode::matured_only);
    CHECK(protocol_mode_from_string("mixed") == ProtocolMode::mixed_supervision);
    CHECK(batch_size_rule_from_string("fixed:24").fixed_size == 24);
    CHECK(batch_size_rule_from_string("7").fixed_size == 7);
    CHECK(batch_size_rule_from_string("paas").kind == BatchSizeRule::Kind::paas);
    CHECK(batch_size_rule_from_string("paas:full").kind == BatchSizeRule::Kind::paas_full);
    CHECK_THROWS_AS(batch_size_rule_from_string("fixed:0"), ValidationError);
    CHECK_THROWS_AS(batch_size_rule_from_string("sometimes"), ValidationError);
    Fixture f;
    auto state = make_adapter({}, 2, f.L, f.H);
    CHECK_THROWS_AS(run_matured_only(f.ds, f.model, state, config(ProtocolMode::frozen, 3), f.L, f.H),
                    ValidationError);
}

TEST_CASE("PAAS batch size follows the dominant period") {
    const auto ds = fac::testing::periodic_dataset(2400, 2, 24.0, 0.1, 8);
    std::size_t nominal = 0;
    plan_batches(ds, Region::test, 96, 24, BatchSizeRule::paas(), &nominal);
    CHECK(nominal == 25);
    plan_batches(ds, Region::test, 96, 24, BatchSizeRule::paas_full(), &nominal);
    CHECK(nominal == 25);
}
