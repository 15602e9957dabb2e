#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sparcl/ddr.hpp"
#include "sparcl/tensor.hpp"

namespace sparcl {

/// Labelled example collection; images/inputs share dim 0 with labels.
struct Dataset {
    Tensor inputs;  // [n, ...]
    std::vector<int> labels;

    std::size_t size() const { return labels.size(); }
};

struct TaskData {
    Tensor inputs;
    std::vector<int> labels;
    std::vector<ExampleId> ids;  // unique across the whole stream

    std::size_t size() const { return labels.size(); }
};

struct Task {
    TaskData train;
    TaskData test;
    ClassRange classes;
};

/// Ordered task sequence with pairwise-disjoint class sets.
struct TaskStream {
    std::vector<Task> tasks;
    int class_count = 0;

    std::size_t task_count() const { return tasks.size(); }
};

/// Parse a big-endian IDX image/label pair (magic 0x00000803 / 0x00000801).
/// Images come out as [n,1,H,W] scaled to [0,1]. Malformed files raise
/// FormatError with the failing byte offset.
Dataset load_idx(const std::string& images_path, const std::string& labels_path);

/// Task t receives classes [t*classes_per_task, (t+1)*classes_per_task);
/// example order is shuffled within each task by `seed`.
TaskStream build_split_tasks(const Dataset& train, const Dataset& test, int task_count,
                             int classes_per_task, std::uint32_t seed);

/// Deterministic Gaussian-blob stream: one mean per class placed on the
/// scaled standard basis, 80/20 train/test split per class.
TaskStream build_synthetic_tasks(int task_count, int classes_per_task, std::size_t dim,
                                 std::size_t n_per_class, double separation, std::uint32_t seed);

}  // namespace sparcl
