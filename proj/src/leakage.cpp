#include "fac/leakage.hpp"

#include <algorithm>
#include <optional>

#include "fac/error.hpp"
#include "json.hpp"

namespace fac {

void validate_plan(const std::vector<PlanEntry>& plan) {
    for (std::size_t k = 0; k < plan.size(); ++k) {
        if (plan[k].size == 0) throw ValidationError("batch plan: B_" + std::to_string(k) + " must be >= 1");
        if (k > 0 && plan[k].anchor != plan[k - 1].anchor + static_cast<long>(plan[k - 1].size)) {
            throw ValidationError("batch plan: t_" + std::to_string(k) + " = " + std::to_string(plan[k].anchor) +
                                  " but t_" + std::to_string(k - 1) + " + B_" + std::to_string(k - 1) + " = " +
                                  std::to_string(plan[k - 1].anchor + static_cast<long>(plan[k - 1].size)));
        }
    }
}

LeakageReport audit_supervision(const std::vector<PlanEntry>& plan, std::size_t horizon,
                                const std::vector<SupervisionEvent>& events) {
    validate_plan(plan);
    if (horizon == 0) throw ValidationError("audit: horizon must be >= 1");
    const long H = static_cast<long>(horizon);
    LeakageReport r;
    r.horizon = horizon;
    r.batches = plan.size();
    r.events = events.size();
    for (std::size_t k = 0; k + 1 < plan.size(); ++k)
        if (horizon >= plan[k].size + plan[k + 1].size) ++r.sufficient_condition_pairs;

    for (const auto& ev : events) {
        if (ev.supervised_batch >= plan.size()) throw ValidationError("audit: supervised batch out of range");
        const auto& sup = plan[ev.supervised_batch];
        const long sup_first = sup.anchor + 1;
        const long sup_last = sup.anchor + H + static_cast<long>(sup.size) - 1;
        for (std::size_t kp = ev.first_affected_batch; kp < plan.size(); ++kp) {
            const auto& pb = plan[kp];
            if (pb.anchor + 1 > sup_last) break;  // later spans start even later
            for (std::size_t j = 0; j < pb.size; ++j) {
                ++r.windows_checked;
                const long first = pb.anchor + 1 + static_cast<long>(j);
                const long last = first + H - 1;
                const long lo = std::max(first, sup_first);
                const long hi = std::min(last, sup_last);
                if (lo <= hi) {
                    r.violations.push_back({ev.supervised_batch, kp, j, lo, hi});
                    r.overlapping_timestamps += static_cast<std::size_t>(hi - lo + 1);
                }
            }
        }
    }
    return r;
}

LeakageReport audit_streaming_leakage(const std::vector<PlanEntry>& plan, std::size_t horizon) {
    std::vector<SupervisionEvent> events;
    for (std::size_t k = 0; k + 1 < plan.size(); ++k) events.push_back({k, k + 1});
    return audit_supervision(plan, horizon, events);
}

LeakageReport audit_matured_plan(const std::vector<PlanEntry>& plan, std::size_t horizon) {
    validate_plan(plan);
    std::vector<SupervisionEvent> events;
    for (std::size_t k = 0; k < plan.size(); ++k) {
        std::optional<std::size_t> newest;
        for (std::size_t m = 0; m < k; ++m) {
            const long last = plan[m].anchor + static_cast<long>(plan[m].size + horizon) - 1;
            if (last <= plan[k].anchor) newest = m;
        }
        if (newest) events.push_back({*newest, k});
    }
    return audit_supervision(plan, horizon, events);
}

std::string LeakageReport::to_json() const {
    nlohmann::json j;
    j["horizon"] = horizon;
    j["batches"] = batches;
    j["supervision_events"] = events;
    j["windows_checked"] = windows_checked;
    j["violations"] = violations.size();
    j["overlapping_timestamps"] = overlapping_timestamps;
    j["sufficient_condition_pairs"] = sufficient_condition_pairs;
    auto& list = j["violation_list"] = nlohmann::json::array();
    for (const auto& v : violations) {
        list.push_back({{"supervised_batch", v.supervised_batch},
                        {"predicted_batch", v.predicted_batch},
                        {"sample", v.sample},
                        {"overlap", {v.overlap_first, v.overlap_last}}});
    }
    return j.dump(2);
}

}  // namespace fac
