#pragma once

#include <cstdint>
#include <span>
#include <unordered_map>
#include <vector>

#include "sparcl/common.hpp"

namespace sparcl {

using ExampleId = std::int64_t;

/// Per-example misclassification counts for the current stage. Reset at
/// every stage boundary.
class MisclassCounter {
public:
    void record(ExampleId id) { ++counts_[id]; }
    int count(ExampleId id) const {
        auto it = counts_.find(id);
        return it == counts_.end() ? 0 : it->second;
    }
    void reset() { counts_.clear(); }

private:
    std::unordered_map<ExampleId, int> counts_;
};

/// counter[id] += 1 for every id whose prediction disagrees with its label.
void record_misclassifications(MisclassCounter& counter, std::span<const int> predictions,
                               std::span<const int> labels, std::span<const ExampleId> ids);

/// Staged removal budget: a total fraction `rho` of the task's training set,
/// spread evenly over stages 1..cutoff and realized as integers by
/// cumulative flooring (exact total, no drift).
struct RemovalPolicy {
    double rho = 0.3;
    int cutoff = 4;
    std::size_t task_size = 0;  // n_t, the task's original training-set size
};

void validate(const RemovalPolicy& policy);

/// Examples to remove at the end of `stage` (1-based); 0 beyond the cutoff.
std::size_t removal_quota(const RemovalPolicy& policy, int stage);

/// Remove the `quota` examples with the fewest stage misclassifications,
/// ties broken by ascending id. Returns the removed ids.
std::vector<ExampleId> remove_easiest(std::vector<ExampleId>& active_set,
                                      const MisclassCounter& counter, std::size_t quota);

/// Comparator baseline: remove floor(task_size*rho) easiest examples in one
/// event.
std::vector<ExampleId> one_shot_remove(std::vector<ExampleId>& active_set,
                                       const MisclassCounter& counter, double rho,
                                       std::size_t task_size);

}  // namespace sparcl
