#pragma once

#include "sparcl/tdm.hpp"

namespace sparcl {

/// Binary mask over gradient entries, nested inside the weight mask. Holds
/// round((1-(s+q))*N) active bits where q is the extra gradient sparsity.
struct GradientMask {
    std::vector<MaskLayer> layers;  // aligned with the weight mask's layers
    double extra_sparsity = 0.0;

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

    double layer_keep_fraction(std::size_t model_layer_index) const {
        for (const auto& l : layers) {
            if (l.layer_index == model_layer_index && !l.bits.empty()) {
                return static_cast<double>(l.active()) / static_cast<double>(l.bits.size());
            }
        }
        return 0.0;
    }

    /// True when every active gradient bit is also active in `weight_mask`.
    bool nested_in(const WeightMask& weight_mask) const;
};

double sparsity(const GradientMask& mask);

/// Keep the round((1-(s+q))*N) highest-CGI positions among the weight-mask
/// active positions; on ties the lower (layer, index) is kept.
GradientMask build_gradient_mask(const WeightMask& weight_mask, const CgiScores& cgi, double q);

/// Zero every weight-gradient entry outside the gradient mask. Bias
/// gradients are untouched.
void apply_gradient_mask(GradientSet& grads, const GradientMask& g_mask);

}  // namespace sparcl
