#pragma once

#include <functional>

#include "sparcl/mask.hpp"
#include "sparcl/rehearsal.hpp"

namespace sparcl {

/// Stage schedule for the dynamic-mask adjustments. p_intra and p_inter are
/// fractions of the total maskable weight count.
struct TdmSchedule {
    int delta_k = 5;
    double p_intra = 0.005;
    double p_inter = 0.01;
    double target_sparsity = 0.0;
};

void validate(const TdmSchedule& schedule);

/// One labelled mini-batch used for importance scoring.
struct ScoreBatch {
    Tensor inputs;
    std::vector<int> labels;
};

/// Continual weight importance: |w| + alpha*|task gradient| + beta*|buffer
/// gradient|. The task gradient is single-head CE averaged over the sample
/// batches; the buffer gradient is full-head CE averaged over the entire
/// buffer (0 when the buffer is empty).
struct CwiScores {
    MaskScores scores;
    double alpha = 0.0;
    double beta = 0.0;
};

CwiScores compute_cwi(const Model& model, std::span<const ScoreBatch> task_sample,
                      ClassRange task_range, const RehearsalBuffer* buffer, double alpha,
                      double beta, std::size_t buffer_batch_size);

/// Same gradient terms without the magnitude term.
struct CgiScores {
    MaskScores scores;
    double alpha = 0.0;
    double beta = 0.0;
};

CgiScores compute_cgi(const Model& model, std::span<const ScoreBatch> task_sample,
                      ClassRange task_range, const RehearsalBuffer* buffer, double alpha,
                      double beta, std::size_t buffer_batch_size);

/// Which adjustments fire at (task, epoch); both 1-based.
struct TdmDispatch {
    bool inter_expand = false;
    bool inter_shrink = false;
    bool intra = false;

    bool any() const { return inter_expand || inter_shrink || intra; }
};

TdmDispatch tdm_action(int task_idx, int epoch, int delta_k);

struct TdmEventLog {
    std::size_t removed = 0;
    std::size_t grown = 0;
    bool did_expand = false;
    bool did_shrink = false;
    bool did_intra = false;

    bool changed_mask() const { return removed > 0 || grown > 0; }
};

std::size_t intra_count(const TdmSchedule& schedule, std::size_t total_weights);
std::size_t inter_count(const TdmSchedule& schedule, std::size_t total_weights);

/// Shrink round(p_intra*N) least-CWI weights, then grow the same count back
/// at random. Active count is conserved exactly.
TdmEventLog intra_adjust(WeightMask& mask, Model& model, const CwiScores& scores,
                         const TdmSchedule& schedule, std::mt19937& grow_rng);

/// Warm-up expansion at a task switch: grow round(p_inter*N) unused weights.
TdmEventLog inter_expand(WeightMask& mask, Model& model, const TdmSchedule& schedule,
                         std::mt19937& grow_rng);

/// End of warm-up: remove round(p_inter*N) least-CWI weights, restoring the
/// target sparsity. Throws std::logic_error when the mask is not in the
/// expanded state.
TdmEventLog inter_shrink(WeightMask& mask, Model& model, const CwiScores& scores,
                         const TdmSchedule& schedule);

/// Per-epoch dispatcher: inter_expand at (t>1, e=1), inter_shrink at
/// (t>1, e=delta_k), intra at every other e % delta_k == 0. `score_fn` is
/// invoked only when an event actually needs importance scores.
TdmEventLog tdm_step(int task_idx, int epoch, WeightMask& mask, Model& model,
                     const TdmSchedule& schedule, const std::function<CwiScores()>& score_fn,
                     std::mt19937& grow_rng);

}  // namespace sparcl
