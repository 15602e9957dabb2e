#include "sparcl/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace sparcl {

namespace {

struct TracePoint {
    std::int64_t out_count = 0;   // elements per example at this layer's output
    std::size_t out_h = 0, out_w = 0;  // conv output feature size (conv layers only)
    bool is_view = false;         // flatten: no new activation storage
};

// Walk output shapes through the network. Conv layers need the input feature
// size; flat models never consult it.
std::vector<TracePoint> trace_shapes(const Model& model, std::size_t input_h,
                                     std::size_t input_w) {
    std::vector<TracePoint> out;
    out.reserve(model.layers.size());
    std::int64_t count = -1;  // unknown until the first weighted layer
    std::size_t h = input_h, w = input_w;
    for (const Layer& l : model.layers) {
        TracePoint tp;
        switch (l.kind) {
            case LayerKind::linear:
                count = static_cast<std::int64_t>(l.weights.dim(0));
                tp.out_count = count;
                break;
            case LayerKind::conv2d: {
                if (h == 0 || w == 0) {
                    throw std::invalid_argument(
                        "conv model needs the input feature size for shape tracing");
                }
                std::size_t k = l.weights.dim(2);
                std::size_t oh = (h + 2 * static_cast<std::size_t>(l.padding) - k) /
                                     static_cast<std::size_t>(l.stride) +
                                 1;
                std::size_t ow = (w + 2 * static_cast<std::size_t>(l.padding) - k) /
                                     static_cast<std::size_t>(l.stride) +
                                 1;
                count = static_cast<std::int64_t>(l.weights.dim(0) * oh * ow);
                h = oh;
                w = ow;
                tp.out_count = count;
                tp.out_h = oh;
                tp.out_w = ow;
                break;
            }
            case LayerKind::relu:
                tp.out_count = count > 0 ? count : 0;
                break;
            case LayerKind::flatten:
                tp.out_count = count > 0 ? count : 0;
                tp.is_view = true;
                break;
        }
        out.push_back(tp);
    }
    return out;
}

std::int64_t forward_flops_at(const Layer& layer, const TracePoint& tp, double layer_sparsity,
                              int batch) {
    double keep = 1.0 - layer_sparsity;
    switch (layer.kind) {
        case LayerKind::linear: {
            double macs = 2.0 * static_cast<double>(layer.weights.dim(0)) *
                          static_cast<double>(layer.weights.dim(1)) * keep;
            return std::llround(macs) * batch;
        }
        case LayerKind::conv2d: {
            double k2 = static_cast<double>(layer.weights.dim(2) * layer.weights.dim(3));
            double macs = 2.0 * k2 * static_cast<double>(layer.weights.dim(1)) *
                          static_cast<double>(layer.weights.dim(0)) *
                          static_cast<double>(tp.out_h * tp.out_w) * keep;
            return std::llround(macs) * batch;
        }
        case LayerKind::relu:
        case LayerKind::flatten:
            return 0;
    }
    return 0;
}

}  // namespace

std::int64_t layer_forward_flops(const Layer& layer, double layer_sparsity, int batch,
                                 std::size_t input_h, std::size_t input_w) {
    if (layer_sparsity < 0.0 || layer_sparsity > 1.0) {
        throw std::invalid_argument("layer sparsity must be in [0,1]");
    }
    TracePoint tp;
    if (layer.kind == LayerKind::conv2d) {
        if (input_h == 0 || input_w == 0) {
            throw std::invalid_argument("conv2d flops need the input feature size");
        }
        std::size_t k = layer.weights.dim(2);
        tp.out_h = (input_h + 2 * static_cast<std::size_t>(layer.padding) - k) /
                       static_cast<std::size_t>(layer.stride) +
                   1;
        tp.out_w = (input_w + 2 * static_cast<std::size_t>(layer.padding) - k) /
                       static_cast<std::size_t>(layer.stride) +
                   1;
    }
    return forward_flops_at(layer, tp, layer_sparsity, batch);
}

void accumulate_training_flops(FlopsLedger& ledger, const Model& model,
                               const WeightMask* weight_mask, const GradientMask* gradient_mask,
                               int batch, bool dgm_on, std::size_t input_h, std::size_t input_w) {
    if (batch <= 0) return;
    if (ledger.per_layer.size() != model.layers.size()) {
        ledger.per_layer.assign(model.layers.size(), {});
    }
    std::vector<TracePoint> trace = trace_shapes(model, input_h, input_w);
    for (std::size_t li = 0; li < model.layers.size(); ++li) {
        const Layer& l = model.layers[li];
        if (!l.has_weights()) continue;
        double s_l = weight_mask ? weight_mask->layer_sparsity(li) : 0.0;
        std::int64_t fwd = forward_flops_at(l, trace[li], s_l, batch);

        // activation-gradient step: same sparse weight matrix as forward;
        // weight-gradient step: sparse output when the gradient mask is on
        std::int64_t back = fwd;
        if (dgm_on && gradient_mask) {
            const MaskLayer* wl = weight_mask ? weight_mask->find(li) : nullptr;
            double w_keep = wl && !wl->bits.empty()
                                ? static_cast<double>(wl->active()) /
                                      static_cast<double>(wl->bits.size())
                                : 1.0;
            double g_keep = gradient_mask->layer_keep_fraction(li);
            double ratio = w_keep > 0.0 ? g_keep / w_keep : 0.0;
            back += std::llround(static_cast<double>(fwd) * ratio);
        } else {
            back += fwd;
        }
        ledger.forward += fwd;
        ledger.backward += back;
        ledger.per_layer[li].forward += fwd;
        ledger.per_layer[li].backward += back;
    }
}

std::int64_t memory_footprint(int batch_size, std::int64_t activation_count,
                              std::int64_t weight_count, double weight_sparsity,
                              double gradient_extra_sparsity, int bytes_per_value) {
    double activations = 2.0 * static_cast<double>(batch_size) *
                         static_cast<double>(activation_count);
    double weights = (1.0 - weight_sparsity) * static_cast<double>(weight_count);
    double grads = (1.0 - (weight_sparsity + gradient_extra_sparsity)) *
                   static_cast<double>(weight_count);
    return std::llround((activations + weights + grads) * static_cast<double>(bytes_per_value));
}

std::int64_t activation_count(const Model& model, std::size_t input_h, std::size_t input_w) {
    std::int64_t total = 0;
    for (const TracePoint& tp : trace_shapes(model, input_h, input_w)) {
        if (!tp.is_view) total += tp.out_count;
    }
    return total;
}

MemoryReport make_memory_report(const Model& model, int batch_size, double weight_sparsity,
                                double gradient_extra_sparsity, int bytes_per_value,
                                std::size_t input_h, std::size_t input_w) {
    MemoryReport r;
    r.batch_size = batch_size;
    r.activation_count = activation_count(model, input_h, input_w);
    r.weight_count = static_cast<std::int64_t>(model.maskable_weight_count());
    r.weight_sparsity = weight_sparsity;
    r.gradient_extra_sparsity = gradient_extra_sparsity;
    r.bytes_per_value = bytes_per_value;
    r.footprint_bytes = memory_footprint(batch_size, r.activation_count, r.weight_count,
                                         weight_sparsity, gradient_extra_sparsity,
                                         bytes_per_value);
    return r;
}

namespace {

int argmax_in_range(const Tensor& logits, std::size_t row, ClassRange range) {
    int best = range.begin;
    float best_v = logits.at(row, static_cast<std::size_t>(range.begin));
    for (int c = range.begin + 1; c < range.end; ++c) {
        float v = logits.at(row, static_cast<std::size_t>(c));
        if (v > best_v) {
            best_v = v;
            best = c;
        }
    }
    return best;
}

}  // namespace

AccuracyTable evaluate(const Model& model, const TaskStream& stream, EvalMode mode,
                       int batch_size) {
    if (stream.tasks.empty()) throw std::invalid_argument("evaluate needs at least one task");
    AccuracyTable table;
    table.mode = mode;
    ClassRange all{0, model.class_count};
    for (const Task& task : stream.tasks) {
        std::size_t n = task.test.size();
        std::size_t correct = 0;
        for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(batch_size)) {
            std::size_t count = std::min(static_cast<std::size_t>(batch_size), n - start);
            std::vector<std::size_t> idx(count);
            std::iota(idx.begin(), idx.end(), start);
            Tensor batch = gather_rows(task.test.inputs, idx);
            auto cache = forward(model, batch);
            ClassRange range = mode == EvalMode::task_il ? task.classes : all;
            for (std::size_t i = 0; i < count; ++i) {
                if (argmax_in_range(cache.logits, i, range) == task.test.labels[start + i]) {
                    ++correct;
                }
            }
        }
        table.per_task.push_back(n == 0 ? 0.0
                                        : 100.0 * static_cast<double>(correct) /
                                              static_cast<double>(n));
    }
    table.average = std::accumulate(table.per_task.begin(), table.per_task.end(), 0.0) /
                    static_cast<double>(table.per_task.size());
    return table;
}

}  // namespace sparcl
