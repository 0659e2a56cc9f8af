#include "fac/protocol.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "fac/spectral.hpp"

namespace fac {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

void log_span(std::vector<SupervisionAccess>& log, std::size_t step, std::size_t batch, long first, long last) {
    for (long t = first; t <= last; ++t) log.push_back({step, batch, t});
}

// First sample of a batch, as a [1 x .. x C] tensor.
Tensor3 first_sample(const Tensor3& x) {
    Tensor3 out(1, x.steps, x.channels);
    std::copy(x.sample(0).begin(), x.sample(0).end(), out.data.begin());
    return out;
}

void accumulate(std::vector<double>& into, const std::vector<double>& g) {
    if (into.empty()) {
        into = g;
        return;
    }
    for (std::size_t i = 0; i < g.size(); ++i) into[i] += g[i];
}

void accumulate(GradientBlock& into, const GradientBlock& g) {
    accumulate(into.output, g.output);
    if (g.input) {
        if (!into.input) into.input.emplace();
        accumulate(*into.input, *g.input);
    }
}

}  // namespace

const char* to_string(ProtocolMode m) {
    switch (m) {
        case ProtocolMode::frozen: return "frozen";
        case ProtocolMode::matured_only: return "matured_only";
        case ProtocolMode::mixed_supervision: return "mixed_supervision";
    }
    return "?";
}

ProtocolMode protocol_mode_from_string(const std::string& s) {
    if (s == "frozen") return ProtocolMode::frozen;
    if (s == "matured_only" || s == "matured") return ProtocolMode::matured_only;
    if (s == "mixed_supervision" || s == "mixed") return ProtocolMode::mixed_supervision;
    throw ValidationError("unknown protocol mode '" + s + "' (expected frozen, matured_only or mixed_supervision)");
}

const char* to_string(MaturedSelection s) {
    return s == MaturedSelection::most_recent ? "most_recent" : "all_with_weights";
}

MaturedSelection matured_selection_from_string(const std::string& s) {
    if (s == "most_recent") return MaturedSelection::most_recent;
    if (s == "all_with_weights") return MaturedSelection::all_with_weights;
    throw ValidationError("unknown matured selection '" + s + "'");
}

std::string BatchSizeRule::describe() const {
    switch (kind) {
        case Kind::paas: return "paas";
        case Kind::paas_full: return "paas:full";
        case Kind::fixed: break;
    }
    return "fixed:" + std::to_string(fixed_size);
}

BatchSizeRule batch_size_rule_from_string(const std::string& s) {
    if (s == "paas") return BatchSizeRule::paas();
    if (s == "paas:full") return BatchSizeRule::paas_full();
    std::string num = s.rfind("fixed:", 0) == 0 ? s.substr(6) : s;
    try {
        std::size_t used = 0;
        const long v = std::stol(num, &used);
        if (used != num.size() || v < 1) throw std::invalid_argument(s);
        return BatchSizeRule::fixed(static_cast<std::size_t>(v));
    } catch (const std::exception&) {
        throw ValidationError("batch rule must be 'paas', 'paas:full', 'fixed:<B>' or a positive integer, got '" + s + "'");
    }
}

// ------------------------------------------------------------------ ledger

void MaturationLedger::record(long anchor, std::size_t size) {
    if (!records_.empty() && anchor <= records_.back().anchor)
        throw ValidationError("MaturationLedger: anchors must increase");
    records_.push_back({anchor, size, anchor + static_cast<long>(size + horizon_) - 1});
}

std::vector<std::size_t> MaturationLedger::matured(long anchor) const {
    std::vector<std::size_t> out;
    for (std::size_t m = 0; m < records_.size(); ++m)
        if (records_[m].anchor < anchor && records_[m].last_target <= anchor) out.push_back(m);
    return out;
}

std::optional<std::size_t> MaturationLedger::most_recent(long anchor) const {
    auto all = matured(anchor);
    if (all.empty()) return std::nullopt;
    return all.back();
}

// ------------------------------------------------------------------- trace

std::size_t RunTrace::windows() const {
    std::size_t n = 0;
    for (const auto& b : batches) n += b.size;
    return n;
}

Tensor3 RunTrace::stacked(Tensor3 BatchRecord::*field) const {
    Tensor3 out(windows(), horizon, channels);
    std::size_t pos = 0;
    for (const auto& b : batches) {
        const Tensor3& src = b.*field;
        std::copy(src.data.begin(), src.data.end(), out.data.begin() + static_cast<long>(pos));
        pos += src.size();
    }
    return out;
}

// ---------------------------------------------------------------- engine

std::vector<RollingBatch> plan_batches(const TimeSeriesDataset& ds, Region region, std::size_t L, std::size_t H,
                                       const BatchSizeRule& rule, std::size_t* nominal) {
    std::size_t B = rule.fixed_size;
    if (rule.kind == BatchSizeRule::Kind::paas) B = periodicity_batch_size(ds, L);
    if (rule.kind == BatchSizeRule::Kind::paas_full) B = periodicity_batch_size(ds);
    if (nominal) *nominal = B;
    const auto origins = rolling_origins(ds, region, L, H);
    return make_rolling_batches(ds, region, L, H, plan_batch_sizes(origins.size(), B));
}

Tensor3 stitch_predictions(const Tensor3& pre, const Tensor3& post, std::size_t batch_size) {
    require_same_shape(pre, post, "stitch_predictions");
    if (pre.count != batch_size) throw ShapeError("stitch_predictions: batch size does not match tensors");
    Tensor3 out = post;
    for (std::size_t j = 0; j < batch_size; ++j) {
        // sample j covers t_k+1+j ..; the observed prefix ends at t_k+B-1
        const std::size_t prefix = std::min(batch_size - 1 - j, pre.steps);
        for (std::size_t h = 0; h < prefix; ++h)
            for (std::size_t c = 0; c < pre.channels; ++c) out(j, h, c) = pre(j, h, c);
    }
    return out;
}

namespace {

struct Selected {
    std::size_t batch;
    double weight;
};

std::vector<Selected> select_matured(const std::vector<std::size_t>& matured, std::size_t k,
                                     const ProtocolConfig& config) {
    if (matured.empty()) return {};
    if (config.selection == MaturedSelection::most_recent) return {{matured.back(), 1.0}};
    std::vector<Selected> out;
    const std::size_t newest = matured.back();
    const std::size_t first = config.max_matured == 0 || config.max_matured >= matured.size()
                                  ? 0
                                  : matured.size() - config.max_matured;
    for (std::size_t i = first; i < matured.size(); ++i) {
        const std::size_t m = matured[i];
        const double w = config.weight_fn ? config.weight_fn(k, m)
                                          : std::pow(config.weight_decay, static_cast<double>(newest - m));
        if (!(w >= 0.0) || !std::isfinite(w)) throw ValidationError("matured weights must be finite and >= 0");
        if (w > 0.0) out.push_back({m, w});
    }
    return out;
}

}  // namespace

RunTrace run_protocol(const std::vector<RollingBatch>& batches, const ForecasterModel& model, AdapterState& state,
                      const ProtocolConfig& config) {
    if (config.steps_per_update == 0) throw ValidationError("steps_per_update must be >= 1");
    const auto run_start = Clock::now();
    RunTrace trace;
    trace.mode = config.mode;
    trace.lookback = model.lookback();
    trace.horizon = model.horizon();
    trace.channels = model.channels();
    trace.param_count = config.mode == ProtocolMode::frozen ? 0 : state.param_count();
    if (!batches.empty()) trace.nominal_batch = batches.front().size;

    const std::size_t H = model.horizon();
    MaturationLedger ledger(H);
    bool any_matured = false;

    for (std::size_t k = 0; k < batches.size(); ++k) {
        const RollingBatch& batch = batches[k];
        if (k > 0 && batch.anchor != batches[k - 1].anchor + static_cast<long>(batches[k - 1].size))
            throw ValidationError("run_protocol: batches are not consecutive (t_{k+1} != t_k + B_k)");
        BatchRecord rec;
        rec.index = k;
        rec.anchor = batch.anchor;
        rec.size = batch.size;
        rec.targets = batch.targets;
        rec.source = model.forward(batch.inputs);

        if (config.mode == ProtocolMode::frozen) {
            rec.pre = rec.post = rec.final = rec.source;
            ledger.record(batch.anchor, batch.size);
            trace.batches.push_back(std::move(rec));
            continue;
        }

        const auto t0 = Clock::now();
        double source_s = 0.0;
        auto [pre, pre_tape] = adapter_forward(state, model, batch.inputs, &source_s);
        rec.pre = std::move(pre);

        const auto selected = select_matured(ledger.matured(batch.anchor), k, config);
        if (!selected.empty()) any_matured = true;

        const bool mixed = config.mode == ProtocolMode::mixed_supervision;
        const std::size_t pogt = mixed ? std::min(batch.size - 1, H) : 0;
        if (mixed && pogt == 0)
            trace.notices.push_back("batch " + std::to_string(k) + ": B_k = 1, partial-target term is empty");

        const bool update = !selected.empty() || pogt > 0;
        if (update) {
            for (const auto& s : selected) {
                rec.supervised_batches.push_back(s.batch);
                log_span(trace.access_log, k, s.batch, batches[s.batch].span_first(), batches[s.batch].span_last());
            }
            if (pogt > 0) log_span(trace.access_log, k, k, batch.anchor + 1, batch.anchor + static_cast<long>(pogt));

            for (std::size_t step = 0; step < config.steps_per_update; ++step) {
                GradientBlock total;
                double loss = 0.0;
                for (const auto& s : selected) {
                    const RollingBatch& mb = batches[s.batch];
                    auto [pred, tape] = adapter_forward(state, model, mb.inputs, &source_s);
                    Tensor3 grad;
                    loss += mse_with_grad(pred, mb.targets, grad, s.weight);
                    accumulate(total, adapter_backward(state, model, tape, grad));
                }
                if (pogt > 0) {
                    // revealed values y_{t_k+1 .. t_k+B_k-1} against the first sample
                    const Tensor3 x0 = first_sample(batch.inputs);
                    auto [pred, tape] = adapter_forward(state, model, x0, &source_s);
                    Tensor3 grad(1, H, model.channels());
                    double l = 0.0;
                    const double n = static_cast<double>(pogt * model.channels());
                    for (std::size_t h = 0; h < pogt; ++h)
                        for (std::size_t c = 0; c < model.channels(); ++c) {
                            const double e = pred(0, h, c) - batch.targets(0, h, c);
                            l += e * e;
                            grad(0, h, c) = 2.0 * e / n;
                        }
                    loss += l / n;
                    accumulate(total, adapter_backward(state, model, tape, grad));
                }
                rec.losses.push_back(loss);
                if (!apply_gradients(state, total, config.optimizer)) {
                    ++rec.skipped_steps;
                    trace.notices.push_back("batch " + std::to_string(k) + ": non-finite gradient, step skipped");
                }
            }
            ++trace.updates;
        }

        rec.post = adapter_predict(state, model, batch.inputs, &source_s);
        rec.final = mixed ? stitch_predictions(rec.pre, rec.post, batch.size) : rec.post;
        rec.adapt_ms = std::max(0.0, ms_since(t0) - 1e3 * source_s);

        ledger.record(batch.anchor, batch.size);
        trace.batches.push_back(std::move(rec));
    }
    if (config.mode != ProtocolMode::frozen && !any_matured && config.mode == ProtocolMode::matured_only) {
        trace.notices.push_back("no mini-batch matured before the end of the series; results equal the frozen "
                                "forecaster");
    }
    trace.total_seconds = std::chrono::duration<double>(Clock::now() - run_start).count();
    return trace;
}

namespace {

RunTrace run_on_test(const TimeSeriesDataset& ds, const ForecasterModel& model, AdapterState& state,
                     const ProtocolConfig& config, std::size_t L, std::size_t H) {
    if (model.lookback() != L || model.horizon() != H || model.channels() != ds.channels())
        throw ShapeError("forecaster shape does not match L, H or the dataset channel count");
    const auto t0 = Clock::now();
    std::size_t nominal = 0;
    const auto batches = plan_batches(ds, Region::test, L, H, config.batch_rule, &nominal);
    const double period_ms = ms_since(t0);
    RunTrace trace = run_protocol(batches, model, state, config);
    trace.nominal_batch = nominal;
    trace.period_ms = config.batch_rule.kind == BatchSizeRule::Kind::fixed ? 0.0 : period_ms;
    return trace;
}

}  // namespace

RunTrace run_matured_only(const TimeSeriesDataset& ds, const ForecasterModel& model, AdapterState& state,
                          const ProtocolConfig& config, std::size_t L, std::size_t H) {
    if (config.mode != ProtocolMode::matured_only) throw ValidationError("run_matured_only needs mode matured_only");
    return run_on_test(ds, model, state, config, L, H);
}

RunTrace run_mixed_supervision(const TimeSeriesDataset& ds, const ForecasterModel& model, AdapterState& state,
                               const ProtocolConfig& config, std::size_t L, std::size_t H) {
    if (config.mode != ProtocolMode::mixed_supervision)
        throw ValidationError("run_mixed_supervision needs mode mixed_supervision");
    return run_on_test(ds, model, state, config, L, H);
}

RunTrace run_frozen(const TimeSeriesDataset& ds, const ForecasterModel& model, const ProtocolConfig& config,
                    std::size_t L, std::size_t H) {
    ProtocolConfig cfg = config;
    cfg.mode = ProtocolMode::frozen;
    AdapterState unused = make_adapter({}, ds.channels(), L, H);
    return run_on_test(ds, model, unused, cfg, L, H);
}

std::vector<SupervisionAccess> accesses_after_anchor(const RunTrace& trace) {
    std::vector<SupervisionAccess> out;
    for (const auto& a : trace.access_log)
        if (a.timestamp > trace.batches.at(a.step).anchor) out.push_back(a);
    return out;
}

}  // namespace fac
