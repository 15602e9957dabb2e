#include "sparcl/ddr.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace sparcl {

void record_misclassifications(MisclassCounter& counter, std::span<const int> predictions,
                               std::span<const int> labels, std::span<const ExampleId> ids) {
    if (predictions.size() != labels.size() || labels.size() != ids.size()) {
        throw ShapeError("misclassification arrays must be aligned");
    }
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (predictions[i] != labels[i]) counter.record(ids[i]);
    }
}

void validate(const RemovalPolicy& policy) {
    if (policy.rho < 0.0 || policy.rho > 1.0) throw std::invalid_argument("rho must be in [0,1]");
    if (policy.cutoff < 1) throw std::invalid_argument("cutoff must be >= 1");
}

namespace {

// floor with a tiny nudge so exact products like 100*0.3 do not land one
// ulp below an integer
std::size_t cumulative_removed(const RemovalPolicy& p, int stage) {
    int effective = std::min(stage, p.cutoff);
    if (effective <= 0) return 0;
    double v = static_cast<double>(p.task_size) * p.rho * static_cast<double>(effective) /
               static_cast<double>(p.cutoff);
    return static_cast<std::size_t>(std::floor(v + 1e-9));
}

}  // namespace

std::size_t removal_quota(const RemovalPolicy& policy, int stage) {
    if (stage < 1) throw std::invalid_argument("stage index is 1-based");
    return cumulative_removed(policy, stage) - cumulative_removed(policy, stage - 1);
}

std::vector<ExampleId> remove_easiest(std::vector<ExampleId>& active_set,
                                      const MisclassCounter& counter, std::size_t quota) {
    if (quota > active_set.size()) {
        throw std::invalid_argument("removal quota exceeds the active set");
    }
    if (quota == 0) return {};
    std::vector<ExampleId> order = active_set;
    auto cmp = [&](ExampleId a, ExampleId b) {
        int ca = counter.count(a), cb = counter.count(b);
        if (ca != cb) return ca < cb;
        return a < b;
    };
    std::nth_element(order.begin(), order.begin() + static_cast<long>(quota), order.end(), cmp);
    std::vector<ExampleId> removed(order.begin(), order.begin() + static_cast<long>(quota));
    std::sort(removed.begin(), removed.end());
    std::vector<ExampleId> kept;
    kept.reserve(active_set.size() - quota);
    for (ExampleId id : active_set) {
        if (!std::binary_search(removed.begin(), removed.end(), id)) kept.push_back(id);
    }
    active_set = std::move(kept);
    return removed;
}

std::vector<ExampleId> one_shot_remove(std::vector<ExampleId>& active_set,
                                       const MisclassCounter& counter, double rho,
                                       std::size_t task_size) {
    std::size_t quota = static_cast<std::size_t>(
        std::floor(static_cast<double>(task_size) * rho + 1e-9));
    return remove_easiest(active_set, counter, quota);
}

}  // namespace sparcl
