#include "sparcl/mask.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace sparcl {

namespace {

std::size_t rounded_active(std::size_t n, double sparsity) {
    return static_cast<std::size_t>(std::llround((1.0 - sparsity) * static_cast<double>(n)));
}

Tensor& weights_of(Model& model, const MaskLayer& ml) {
    return model.layers.at(ml.layer_index).weights;
}

}  // namespace

std::size_t WeightMask::steady_active_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += rounded_active(l.bits.size(), target_sparsity);
    return n;
}

double sparsity(const WeightMask& mask) {
    std::size_t total = mask.total_count();
    if (total == 0) return 0.0;
    return 1.0 - static_cast<double>(mask.active_count()) / static_cast<double>(total);
}

WeightMask init_mask(const Model& model, double target_sparsity, std::uint32_t seed) {
    if (target_sparsity < 0.0 || target_sparsity >= 1.0) {
        throw std::invalid_argument("sparsity must lie in [0,1)");
    }
    WeightMask mask;
    mask.target_sparsity = target_sparsity;
    mask.seed = seed;
    std::mt19937 rng = make_rng(seed, rng_stream::kMaskInit);
    for (std::size_t li : model.maskable_layer_indices()) {
        MaskLayer ml;
        ml.layer_index = li;
        std::size_t n = model.layers[li].weights.numel();
        ml.bits.assign(n, 0);
        std::size_t active = rounded_active(n, target_sparsity);
        // partial Fisher-Yates: first `active` slots of a uniform permutation
        std::vector<std::size_t> idx(n);
        std::iota(idx.begin(), idx.end(), std::size_t{0});
        for (std::size_t i = 0; i < active; ++i) {
            std::uniform_int_distribution<std::size_t> d(i, n - 1);
            std::swap(idx[i], idx[d(rng)]);
            ml.bits[idx[i]] = 1;
        }
        mask.layers.push_back(std::move(ml));
    }
    return mask;
}

void zero_masked_weights(Model& model, const WeightMask& mask) {
    for (const auto& ml : mask.layers) {
        auto& w = weights_of(model, ml).data();
        if (w.size() != ml.bits.size()) {
            throw ShapeError("mask incongruent with layer " + std::to_string(ml.layer_index));
        }
        for (std::size_t i = 0; i < w.size(); ++i) {
            if (!ml.bits[i]) w[i] = 0.0f;
        }
    }
}

std::vector<MaskPosition> grow_random(WeightMask& mask, Model& model, std::size_t count,
                                      std::mt19937& rng) {
    std::vector<MaskPosition> inactive;
    for (std::size_t l = 0; l < mask.layers.size(); ++l) {
        const auto& bits = mask.layers[l].bits;
        for (std::size_t i = 0; i < bits.size(); ++i) {
            if (!bits[i]) inactive.emplace_back(l, i);
        }
    }
    if (count > inactive.size()) {
        throw std::invalid_argument("grow_random: count " + std::to_string(count) +
                                    " exceeds inactive positions " +
                                    std::to_string(inactive.size()));
    }
    std::vector<MaskPosition> grown;
    grown.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        std::uniform_int_distribution<std::size_t> d(i, inactive.size() - 1);
        std::swap(inactive[i], inactive[d(rng)]);
        grown.push_back(inactive[i]);
    }
    for (const auto& [l, i] : grown) {
        mask.layers[l].bits[i] = 1;
        weights_of(model, mask.layers[l]).data()[i] = 0.0f;  // grown weights start at 0
    }
    return grown;
}

std::vector<MaskPosition> shrink_by_scores(WeightMask& mask, Model& model,
                                           const MaskScores& scores, std::size_t count) {
    if (scores.per_layer.size() != mask.layers.size()) {
        throw ShapeError("scores do not cover every mask layer");
    }
    struct Ranked {
        double score;
        std::size_t layer;
        std::size_t index;
    };
    std::vector<Ranked> active;
    for (std::size_t l = 0; l < mask.layers.size(); ++l) {
        const auto& bits = mask.layers[l].bits;
        if (scores.per_layer[l].size() != bits.size()) {
            throw ShapeError("score vector incongruent with mask layer " + std::to_string(l));
        }
        for (std::size_t i = 0; i < bits.size(); ++i) {
            if (bits[i]) active.push_back({scores.per_layer[l][i], l, i});
        }
    }
    if (count > active.size()) {
        throw std::invalid_argument("shrink_by_scores: count exceeds active elements");
    }
    auto cmp = [](const Ranked& a, const Ranked& b) {
        if (a.score != b.score) return a.score < b.score;
        if (a.layer != b.layer) return a.layer < b.layer;
        return a.index < b.index;
    };
    std::nth_element(active.begin(), active.begin() + static_cast<long>(count), active.end(), cmp);
    std::sort(active.begin(), active.begin() + static_cast<long>(count), cmp);
    std::vector<MaskPosition> removed;
    removed.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        const Ranked& r = active[i];
        mask.layers[r.layer].bits[r.index] = 0;
        weights_of(model, mask.layers[r.layer]).data()[r.index] = 0.0f;
        removed.emplace_back(r.layer, r.index);
    }
    return removed;
}

CsrMatrix to_csr(const Tensor& weights, const std::vector<std::uint8_t>& bits) {
    if (weights.rank() != 2) throw ShapeError("to_csr expects a 2-d tensor");
    if (bits.size() != weights.numel()) throw ShapeError("mask bits incongruent with weights");
    CsrMatrix csr;
    csr.n_rows = weights.dim(0);
    csr.n_cols = weights.dim(1);
    csr.row_ptr.assign(csr.n_rows + 1, 0);
    for (std::size_t r = 0; r < csr.n_rows; ++r) {
        for (std::size_t c = 0; c < csr.n_cols; ++c) {
            std::size_t flat = r * csr.n_cols + c;
            if (bits[flat]) {
                csr.col_idx.push_back(c);
                csr.values.push_back(weights[flat]);
            }
        }
        csr.row_ptr[r + 1] = csr.values.size();
    }
    return csr;
}

Tensor csr_to_dense(const CsrMatrix& csr) {
    Tensor out({csr.n_rows, csr.n_cols});
    for (std::size_t r = 0; r < csr.n_rows; ++r) {
        for (std::size_t k = csr.row_ptr[r]; k < csr.row_ptr[r + 1]; ++k) {
            out.at(r, csr.col_idx[k]) = csr.values[k];
        }
    }
    return out;
}

CsrMatrix layer_to_csr(const Layer& layer, const MaskLayer& mask_layer) {
    if (!layer.has_weights()) throw std::invalid_argument("layer has no weights to export");
    const Tensor& w = layer.weights;
    Tensor view = layer.kind == LayerKind::conv2d
                      ? w.reshaped({w.dim(0), w.dim(1) * w.dim(2) * w.dim(3)})
                      : w;
    return to_csr(view, mask_layer.bits);
}

}  // namespace sparcl
