#pragma once

#include <cstdint>
#include <random>
#include <utility>
#include <vector>

#include "sparcl/model.hpp"

namespace sparcl {

/// Bit array congruent with one maskable layer's weight tensor.
struct MaskLayer {
    std::size_t layer_index = 0;  // index into Model::layers
    std::vector<std::uint8_t> bits;

    std::size_t active() const {
        std::size_t n = 0;
        for (std::uint8_t b : bits) n += b;
        return n;
    }
};

/// Position of one weight element: (mask-layer ordinal, flat index).
using MaskPosition = std::pair<std::size_t, std::size_t>;

/// Binary mask over all maskable (conv/linear) weight tensors of a model.
/// Masked-out weights are kept at exactly 0 in the owning model.
struct WeightMask {
    std::vector<MaskLayer> layers;
    double target_sparsity = 0.0;
    std::uint32_t seed = 0;

    std::size_t total_count() const {
        std::size_t n = 0;
        for (const auto& l : layers) n += l.bits.size();
        return n;
    }

    std::size_t active_count() const {
        std::size_t n = 0;
        for (const auto& l : layers) n += l.active();
        return n;
    }

    /// Active count right after init: sum of per-layer round((1-s)*N_l).
    /// Grow/shrink conserve it exactly, so this is the steady-state budget.
    std::size_t steady_active_count() const;

    const MaskLayer* find(std::size_t model_layer_index) const {
        for (const auto& l : layers) {
            if (l.layer_index == model_layer_index) return &l;
        }
        return nullptr;
    }

    double layer_sparsity(std::size_t model_layer_index) const {
        const MaskLayer* l = find(model_layer_index);
        if (!l || l->bits.empty()) return 0.0;
        return 1.0 - static_cast<double>(l->active()) / static_cast<double>(l->bits.size());
    }
};

/// 1 - active/N over all maskable layers.
double sparsity(const WeightMask& mask);

/// Uniform per-layer random mask: each maskable layer holds round((1-s)*N_l)
/// active bits. Requires 0 <= s < 1.
WeightMask init_mask(const Model& model, double target_sparsity, std::uint32_t seed);

/// Zero out every masked-out weight value. Call once after init; grow/shrink
/// maintain the coupling from then on.
void zero_masked_weights(Model& model, const WeightMask& mask);

/// Activate `count` bits chosen uniformly over the inactive positions of all
/// layers. Grown weights are (re)set to 0 in the model. Returns the grown
/// positions.
std::vector<MaskPosition> grow_random(WeightMask& mask, Model& model, std::size_t count,
                                      std::mt19937& rng);

/// Per-element scores aligned with WeightMask::layers; meaningful only at
/// active positions.
struct MaskScores {
    std::vector<std::vector<double>> per_layer;

    double at(const MaskPosition& p) const { return per_layer[p.first][p.second]; }
};

/// Deactivate the `count` active elements with smallest score and zero their
/// weights. Ties break by ascending (layer, flat index). Returns the removed
/// positions.
std::vector<MaskPosition> shrink_by_scores(WeightMask& mask, Model& model,
                                           const MaskScores& scores, std::size_t count);

/// Compressed sparse row storage of one 2-d weight matrix.
struct CsrMatrix {
    std::size_t n_rows = 0;
    std::size_t n_cols = 0;
    std::vector<std::size_t> row_ptr;
    std::vector<std::size_t> col_idx;
    std::vector<float> values;

    std::size_t nnz() const { return values.size(); }
};

/// CSR of the masked-in entries of a 2-d tensor, row-major. Entries whose
/// bit is set are stored even when the value is 0.
CsrMatrix to_csr(const Tensor& weights, const std::vector<std::uint8_t>& bits);

/// Dense [n_rows, n_cols] reconstruction; unset entries are 0.
Tensor csr_to_dense(const CsrMatrix& csr);

/// CSR of one maskable model layer; conv weights are viewed as
/// [out_ch, in_ch*k*k].
CsrMatrix layer_to_csr(const Layer& layer, const MaskLayer& mask_layer);

}  // namespace sparcl
