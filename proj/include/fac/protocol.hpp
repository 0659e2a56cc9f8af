#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "fac/calibration.hpp"
#include "fac/forecaster.hpp"
#include "fac/optim.hpp"
#include "fac/timeseries.hpp"

namespace fac {

enum class ProtocolMode { frozen, matured_only, mixed_supervision };
enum class MaturedSelection { most_recent, all_with_weights };

const char* to_string(ProtocolMode m);
ProtocolMode protocol_mode_from_string(const std::string& s);
const char* to_string(MaturedSelection s);
MaturedSelection matured_selection_from_string(const std::string& s);

struct BatchSizeRule {
    /// paas: period over look-back-length slices of the train rows.
    /// paas_full: period over the whole train region.
    enum class Kind { paas, paas_full, fixed };
    Kind kind = Kind::paas;
    std::size_t fixed_size = 0;

    static BatchSizeRule paas() { return {Kind::paas, 0}; }
    static BatchSizeRule paas_full() { return {Kind::paas_full, 0}; }
    static BatchSizeRule fixed(std::size_t b) { return {Kind::fixed, b}; }
    std::string describe() const;
};

BatchSizeRule batch_size_rule_from_string(const std::string& s);

struct ProtocolConfig {
    ProtocolMode mode = ProtocolMode::matured_only;
    MaturedSelection selection = MaturedSelection::most_recent;
    /// all_with_weights: w(k, m) = weight_decay^(m(k) - m) over the newest
    /// `max_matured` matured batches (0 = all of them).
    double weight_decay = 1.0;
    std::size_t max_matured = 0;
    /// Overrides the decay rule when set. Must return values >= 0.
    std::function<double(std::size_t k, std::size_t m)> weight_fn;
    std::size_t steps_per_update = 1;
    AdamHyper optimizer;
    BatchSizeRule batch_rule = BatchSizeRule::paas();
};

/// Matured-batch bookkeeping: batch m is matured at anchor t_k once every one
/// of its targets is observed, t_m + B_m + H - 1 <= t_k.
class MaturationLedger {
public:
    explicit MaturationLedger(std::size_t horizon) : horizon_(horizon) {}

    struct Record {
        long anchor;
        std::size_t size;
        long last_target;  // anchor + size + H - 1
    };

    void record(long anchor, std::size_t size);
    std::size_t recorded() const { return records_.size(); }
    const Record& at(std::size_t m) const { return records_.at(m); }

    /// Indices of recorded batches (all strictly before the current one)
    /// whose targets are all <= `anchor`.
    std::vector<std::size_t> matured(long anchor) const;
    std::optional<std::size_t> most_recent(long anchor) const;

private:
    std::size_t horizon_;
    std::vector<Record> records_;
};

/// One consumed target value: at update step `step`, the loss read the target
/// at global index `timestamp` belonging to batch `batch`.
struct SupervisionAccess {
    std::size_t step;
    std::size_t batch;
    long timestamp;
};

struct BatchRecord {
    std::size_t index = 0;
    long anchor = 0;
    std::size_t size = 0;
    Tensor3 targets;
    Tensor3 source;  // frozen forecaster on raw inputs
    Tensor3 pre;     // calibrated with the adapter before this step's update
    Tensor3 post;    // re-forecast with the updated adapter
    Tensor3 final;   // evaluated prediction
    std::vector<std::size_t> supervised_batches;
    std::vector<double> losses;  // one per gradient step
    std::size_t skipped_steps = 0;  // non-finite gradients
    double adapt_ms = 0.0;
};

struct RunTrace {
    ProtocolMode mode = ProtocolMode::frozen;
    std::size_t lookback = 0;
    std::size_t horizon = 0;
    std::size_t channels = 0;
    std::size_t nominal_batch = 0;
    std::size_t param_count = 0;
    std::size_t updates = 0;
    double period_ms = 0.0;
    double total_seconds = 0.0;
    std::vector<BatchRecord> batches;
    std::vector<SupervisionAccess> access_log;
    std::vector<std::string> notices;

    std::size_t windows() const;
    /// Stacks one prediction field of every batch, [N x H x C].
    Tensor3 stacked(Tensor3 BatchRecord::*field) const;
};

/// Mini-batches of a region under a batch-size rule. PAAS uses the dominant
/// period of the train rows (B = P + 1); the last batch is truncated.
std::vector<RollingBatch> plan_batches(const TimeSeriesDataset& ds, Region region, std::size_t L, std::size_t H,
                                       const BatchSizeRule& rule, std::size_t* nominal = nullptr);

/// Runs the configured protocol over prepared batches; `state` is updated in
/// place and persists across batches.
RunTrace run_protocol(const std::vector<RollingBatch>& batches, const ForecasterModel& model, AdapterState& state,
                      const ProtocolConfig& config);

/// Convenience wrappers over the test region.
RunTrace run_matured_only(const TimeSeriesDataset& ds, const ForecasterModel& model, AdapterState& state,
                          const ProtocolConfig& config, std::size_t L, std::size_t H);
RunTrace run_mixed_supervision(const TimeSeriesDataset& ds, const ForecasterModel& model, AdapterState& state,
                               const ProtocolConfig& config, std::size_t L, std::size_t H);
RunTrace run_frozen(const TimeSeriesDataset& ds, const ForecasterModel& model, const ProtocolConfig& config,
                    std::size_t L, std::size_t H);

/// Log entries whose target timestamp lies after the anchor of the batch
/// being processed when it was read.
std::vector<SupervisionAccess> accesses_after_anchor(const RunTrace& trace);

/// Prefix stitching for one batch: sample j (0-based) keeps the first
/// B - 1 - j steps from `pre` and takes the rest from `post`.
Tensor3 stitch_predictions(const Tensor3& pre, const Tensor3& post, std::size_t batch_size);

}  // namespace fac
