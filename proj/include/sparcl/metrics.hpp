#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sparcl/data.hpp"
#include "sparcl/dgm.hpp"
#include "sparcl/nn_ops.hpp"

namespace sparcl {

/// Cumulative analytic training-FLOPs counter. The backward pass costs twice
/// the forward pass (one activation-gradient step plus one weight-gradient
/// step), so total == 3x forward when gradient masking is off.
struct FlopsLedger {
    std::int64_t forward = 0;
    std::int64_t backward = 0;

    struct LayerFlops {
        std::int64_t forward = 0;
        std::int64_t backward = 0;
    };
    std::vector<LayerFlops> per_layer;  // indexed by model layer

    std::int64_t total() const { return forward + backward; }
};

/// Forward multiply-add count for one layer at layer sparsity s_l:
///   linear: round(2*in*out*(1-s_l)) * batch
///   conv2d: round(2*k^2*C_in*C_out*H_out*W_out*(1-s_l)) * batch
///   relu/flatten: 0
/// `input_h`/`input_w` give the conv input feature size; ignored otherwise.
std::int64_t layer_forward_flops(const Layer& layer, double layer_sparsity, int batch,
                                 std::size_t input_h = 0, std::size_t input_w = 0);

/// Add one batch's forward + backward cost to the ledger. The
/// activation-gradient step always scales with the weight sparsity; with DGM
/// on, the weight-gradient step shrinks further to the gradient mask's keep
/// fraction (sparse gradient output).
void accumulate_training_flops(FlopsLedger& ledger, const Model& model,
                               const WeightMask* weight_mask, const GradientMask* gradient_mask,
                               int batch, bool dgm_on, std::size_t input_h = 0,
                               std::size_t input_w = 0);

/// Inputs to the training memory-footprint formula.
struct MemoryReport {
    int batch_size = 0;              // B
    std::int64_t activation_count = 0;  // sum over layers of O_l * H_l * W_l
    std::int64_t weight_count = 0;   // N, total maskable weights
    double weight_sparsity = 0.0;    // s
    double gradient_extra_sparsity = 0.0;  // q
    int bytes_per_value = 4;         // b_w
    std::int64_t footprint_bytes = 0;
};

/// (2*B*A + (1-s)*N + (1-(s+q))*N) * b_w, rounded to the nearest byte.
std::int64_t memory_footprint(int batch_size, std::int64_t activation_count,
                              std::int64_t weight_count, double weight_sparsity,
                              double gradient_extra_sparsity, int bytes_per_value);

MemoryReport make_memory_report(const Model& model, int batch_size, double weight_sparsity,
                                double gradient_extra_sparsity, int bytes_per_value,
                                std::size_t input_h = 0, std::size_t input_w = 0);

/// Per-layer output element count (conv/linear/relu outputs; flatten is a
/// view and contributes nothing).
std::int64_t activation_count(const Model& model, std::size_t input_h = 0,
                              std::size_t input_w = 0);

enum class EvalMode { class_il, task_il };

struct AccuracyTable {
    EvalMode mode = EvalMode::class_il;
    std::vector<double> per_task;  // percent, [0,100]
    double average = 0.0;
};

/// Test accuracy per task after training. Class-IL takes the argmax over all
/// classes; Task-IL restricts the argmax to the ground-truth task's range.
AccuracyTable evaluate(const Model& model, const TaskStream& stream, EvalMode mode,
                       int batch_size = 256);

}  // namespace sparcl
