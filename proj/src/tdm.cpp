#include "sparcl/tdm.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace sparcl {

void validate(const TdmSchedule& schedule) {
    if (schedule.delta_k < 1) throw std::invalid_argument("delta_k must be >= 1");
    if (schedule.p_intra < 0.0 || schedule.p_inter < 0.0) {
        throw std::invalid_argument("adjustment ratios must be non-negative");
    }
    if (schedule.p_inter > schedule.target_sparsity) {
        throw std::invalid_argument("p_inter must not exceed the target sparsity");
    }
}

namespace {

// Gradient-magnitude terms shared by CWI and CGI:
// alpha*|dL_single_head(task)/dw| + beta*|dL(buffer)/dw|, each an absolute
// value of the example-averaged gradient.
MaskScores gradient_importance_terms(const Model& model, const WeightMask& shape_like,
                                     std::span<const ScoreBatch> task_sample,
                                     ClassRange task_range, const RehearsalBuffer* buffer,
                                     double alpha, double beta, std::size_t buffer_batch_size) {
    MaskScores out;
    out.per_layer.resize(shape_like.layers.size());
    for (std::size_t l = 0; l < shape_like.layers.size(); ++l) {
        out.per_layer[l].assign(shape_like.layers[l].bits.size(), 0.0);
    }

    auto accumulate = [&](const GradientSetT<float>& grads, double coeff) {
        if (coeff == 0.0) return;
        for (std::size_t l = 0; l < shape_like.layers.size(); ++l) {
            std::size_t li = shape_like.layers[l].layer_index;
            const auto& gw = grads.weight_grads[li].data();
            auto& dst = out.per_layer[l];
            for (std::size_t i = 0; i < dst.size(); ++i) {
                dst[i] += coeff * std::abs(static_cast<double>(gw[i]));
            }
        }
    };

    if (alpha != 0.0 && !task_sample.empty()) {
        GradientSet task_grads = GradientSet::zeros_like(model);
        std::size_t total = 0;
        for (const ScoreBatch& batch : task_sample) total += batch.labels.size();
        for (const ScoreBatch& batch : task_sample) {
            auto cache = forward(model, batch.inputs);
            auto loss = single_head_cross_entropy(cache.logits, batch.labels, task_range);
            float w = static_cast<float>(batch.labels.size()) / static_cast<float>(total);
            task_grads.add_scaled(backward(model, cache, loss.dlogits), w);
        }
        accumulate(task_grads, alpha);
    }

    if (beta != 0.0 && buffer && !buffer->empty()) {
        GradientSet buf_grads = GradientSet::zeros_like(model);
        std::size_t total = buffer->size();
        std::size_t step = buffer_batch_size == 0 ? total : buffer_batch_size;
        for (std::size_t start = 0; start < total; start += step) {
            std::size_t count = std::min(step, total - start);
            std::vector<const BufferEntry*> chunk;
            chunk.reserve(count);
            for (std::size_t i = 0; i < count; ++i) chunk.push_back(&buffer->entry(start + i));
            std::vector<const Tensor*> rows;
            std::vector<int> labels;
            rows.reserve(count);
            labels.reserve(count);
            for (const BufferEntry* e : chunk) {
                rows.push_back(&e->input);
                labels.push_back(e->label);
            }
            Tensor inputs = stack_rows<float>(rows);
            auto cache = forward(model, inputs);
            auto loss = cross_entropy<float>(cache.logits, labels);
            buf_grads.add_scaled(backward(model, cache, loss.dlogits),
                                 static_cast<float>(count) / static_cast<float>(total));
        }
        accumulate(buf_grads, beta);
    }
    return out;
}

WeightMask mask_shape_for(const Model& model) {
    WeightMask shape;
    for (std::size_t li : model.maskable_layer_indices()) {
        MaskLayer ml;
        ml.layer_index = li;
        ml.bits.assign(model.layers[li].weights.numel(), 0);
        shape.layers.push_back(std::move(ml));
    }
    return shape;
}

}  // namespace

CwiScores compute_cwi(const Model& model, std::span<const ScoreBatch> task_sample,
                      ClassRange task_range, const RehearsalBuffer* buffer, double alpha,
                      double beta, std::size_t buffer_batch_size) {
    WeightMask shape = mask_shape_for(model);
    CwiScores cwi;
    cwi.alpha = alpha;
    cwi.beta = beta;
    cwi.scores = gradient_importance_terms(model, shape, task_sample, task_range, buffer, alpha,
                                           beta, buffer_batch_size);
    for (std::size_t l = 0; l < shape.layers.size(); ++l) {
        const auto& w = model.layers[shape.layers[l].layer_index].weights.data();
        auto& dst = cwi.scores.per_layer[l];
        for (std::size_t i = 0; i < dst.size(); ++i) {
            dst[i] += std::abs(static_cast<double>(w[i]));
        }
    }
    return cwi;
}

CgiScores compute_cgi(const Model& model, std::span<const ScoreBatch> task_sample,
                      ClassRange task_range, const RehearsalBuffer* buffer, double alpha,
                      double beta, std::size_t buffer_batch_size) {
    WeightMask shape = mask_shape_for(model);
    CgiScores cgi;
    cgi.alpha = alpha;
    cgi.beta = beta;
    cgi.scores = gradient_importance_terms(model, shape, task_sample, task_range, buffer, alpha,
                                           beta, buffer_batch_size);
    return cgi;
}

TdmDispatch tdm_action(int task_idx, int epoch, int delta_k) {
    TdmDispatch d;
    if (task_idx > 1 && epoch == 1) d.inter_expand = true;
    if (task_idx > 1 && epoch == delta_k) {
        d.inter_shrink = true;
    } else if (epoch % delta_k == 0) {
        d.intra = true;
    }
    return d;
}

std::size_t intra_count(const TdmSchedule& schedule, std::size_t total_weights) {
    return static_cast<std::size_t>(
        std::llround(schedule.p_intra * static_cast<double>(total_weights)));
}

std::size_t inter_count(const TdmSchedule& schedule, std::size_t total_weights) {
    return static_cast<std::size_t>(
        std::llround(schedule.p_inter * static_cast<double>(total_weights)));
}

TdmEventLog intra_adjust(WeightMask& mask, Model& model, const CwiScores& scores,
                         const TdmSchedule& schedule, std::mt19937& grow_rng) {
    TdmEventLog log;
    log.did_intra = true;
    std::size_t count = intra_count(schedule, mask.total_count());
    if (count == 0) return log;
    if (count > mask.active_count()) {
        throw std::invalid_argument("intra_adjust: shrink count exceeds active weights");
    }
    log.removed = shrink_by_scores(mask, model, scores.scores, count).size();
    log.grown = grow_random(mask, model, count, grow_rng).size();
    return log;
}

TdmEventLog inter_expand(WeightMask& mask, Model& model, const TdmSchedule& schedule,
                         std::mt19937& grow_rng) {
    TdmEventLog log;
    log.did_expand = true;
    std::size_t count = inter_count(schedule, mask.total_count());
    if (count == 0) return log;
    log.grown = grow_random(mask, model, count, grow_rng).size();
    return log;
}

TdmEventLog inter_shrink(WeightMask& mask, Model& model, const CwiScores& scores,
                         const TdmSchedule& schedule) {
    TdmEventLog log;
    log.did_shrink = true;
    std::size_t count = inter_count(schedule, mask.total_count());
    if (count == 0) return log;
    if (mask.active_count() != mask.steady_active_count() + count) {
        throw std::logic_error("inter_shrink invoked outside the warm-up phase");
    }
    log.removed = shrink_by_scores(mask, model, scores.scores, count).size();
    return log;
}

TdmEventLog tdm_step(int task_idx, int epoch, WeightMask& mask, Model& model,
                     const TdmSchedule& schedule, const std::function<CwiScores()>& score_fn,
                     std::mt19937& grow_rng) {
    TdmDispatch dispatch = tdm_action(task_idx, epoch, schedule.delta_k);
    TdmEventLog log;
    if (dispatch.inter_expand) {
        TdmEventLog e = inter_expand(mask, model, schedule, grow_rng);
        log.did_expand = true;
        log.grown += e.grown;
    }
    if (dispatch.inter_shrink) {
        log.did_shrink = true;
        if (inter_count(schedule, mask.total_count()) > 0) {
            TdmEventLog e = inter_shrink(mask, model, score_fn(), schedule);
            log.removed += e.removed;
        }
    } else if (dispatch.intra) {
        log.did_intra = true;
        if (intra_count(schedule, mask.total_count()) > 0) {
            TdmEventLog e = intra_adjust(mask, model, score_fn(), schedule, grow_rng);
            log.removed += e.removed;
            log.grown += e.grown;
        }
    }
    return log;
}

}  // namespace sparcl
