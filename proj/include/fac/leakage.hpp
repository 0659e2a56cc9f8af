#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace fac {

struct PlanEntry {
    long anchor;       // t_k
    std::size_t size;  // B_k
};

/// Targets of `supervised_batch` are used in an update that takes effect for
/// predictions of batch `first_affected_batch` onwards.
struct SupervisionEvent {
    std::size_t supervised_batch;
    std::size_t first_affected_batch;
};

struct LeakageViolation {
    std::size_t supervised_batch;
    std::size_t predicted_batch;
    std::size_t sample;  // 0-based position in the predicted batch
    long overlap_first;
    long overlap_last;
};

struct LeakageReport {
    std::size_t horizon = 0;
    std::size_t batches = 0;
    std::size_t events = 0;
    std::size_t windows_checked = 0;
    std::size_t overlapping_timestamps = 0;
    /// Consecutive pairs (k, k+1) with H >= B_k + B_{k+1}.
    std::size_t sufficient_condition_pairs = 0;
    std::vector<LeakageViolation> violations;

    bool clean() const { return violations.empty(); }
    std::string to_json() const;
};

/// Throws ValidationError unless t_{k+1} = t_k + B_k throughout.
void validate_plan(const std::vector<PlanEntry>& plan);

/// Checks every supervision span [t_m+1, t_m+H+B_m-1] against the prediction
/// span [t_k'+1+j, t_k'+j+H] of every sample of every affected batch.
LeakageReport audit_supervision(const std::vector<PlanEntry>& plan, std::size_t horizon,
                                const std::vector<SupervisionEvent>& events);

/// Streaming adaptation: batch k's own targets update the adapter used from
/// batch k+1 on.
LeakageReport audit_streaming_leakage(const std::vector<PlanEntry>& plan, std::size_t horizon);

/// Matured-only adaptation: before predicting batch k the adapter is updated
/// on the most recent batch m with t_m + B_m + H - 1 <= t_k.
LeakageReport audit_matured_plan(const std::vector<PlanEntry>& plan, std::size_t horizon);

}  // namespace fac
