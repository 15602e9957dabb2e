#include "sparcl/dgm.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace sparcl {

bool GradientMask::nested_in(const WeightMask& weight_mask) const {
    if (layers.size() != weight_mask.layers.size()) return false;
    for (std::size_t l = 0; l < layers.size(); ++l) {
        if (layers[l].bits.size() != weight_mask.layers[l].bits.size()) return false;
        for (std::size_t i = 0; i < layers[l].bits.size(); ++i) {
            if (layers[l].bits[i] && !weight_mask.layers[l].bits[i]) return false;
        }
    }
    return true;
}

double sparsity(const GradientMask& mask) {
    std::size_t total = mask.total_count();
    if (total == 0) return 0.0;
    return 1.0 - static_cast<double>(mask.active_count()) / static_cast<double>(total);
}

GradientMask build_gradient_mask(const WeightMask& weight_mask, const CgiScores& cgi, double q) {
    double s = weight_mask.target_sparsity;
    if (q < 0.0) throw std::invalid_argument("gradient extra sparsity must be non-negative");
    if (s + q >= 1.0) {
        throw std::invalid_argument("combined sparsity s+q must stay below 1");
    }
    GradientMask out;
    out.extra_sparsity = q;
    out.layers.reserve(weight_mask.layers.size());
    for (const auto& ml : weight_mask.layers) {
        MaskLayer gl;
        gl.layer_index = ml.layer_index;
        gl.bits.assign(ml.bits.size(), 0);
        out.layers.push_back(std::move(gl));
    }
    std::size_t total = weight_mask.total_count();
    std::size_t keep = static_cast<std::size_t>(
        std::llround((1.0 - (s + q)) * static_cast<double>(total)));
    if (q == 0.0) {
        // gradient mask coincides with the weight mask
        for (std::size_t l = 0; l < weight_mask.layers.size(); ++l) {
            out.layers[l].bits = weight_mask.layers[l].bits;
        }
        return out;
    }
    if (cgi.scores.per_layer.size() != weight_mask.layers.size()) {
        throw ShapeError("CGI scores do not cover every mask layer");
    }
    struct Ranked {
        double score;
        std::size_t layer;
        std::size_t index;
    };
    std::vector<Ranked> active;
    for (std::size_t l = 0; l < weight_mask.layers.size(); ++l) {
        const auto& bits = weight_mask.layers[l].bits;
        const auto& sc = cgi.scores.per_layer[l];
        if (sc.size() != bits.size()) {
            throw ShapeError("CGI score vector incongruent with mask layer");
        }
        for (std::size_t i = 0; i < bits.size(); ++i) {
            if (bits[i]) active.push_back({sc[i], l, i});
        }
    }
    keep = std::min(keep, active.size());
    auto cmp = [](const Ranked& a, const Ranked& b) {
        if (a.score != b.score) return a.score > b.score;
        if (a.layer != b.layer) return a.layer < b.layer;
        return a.index < b.index;
    };
    std::nth_element(active.begin(), active.begin() + static_cast<long>(keep), active.end(), cmp);
    for (std::size_t i = 0; i < keep; ++i) {
        out.layers[active[i].layer].bits[active[i].index] = 1;
    }
    return out;
}

void apply_gradient_mask(GradientSet& grads, const GradientMask& g_mask) {
    for (const auto& gl : g_mask.layers) {
        auto& gw = grads.weight_grads.at(gl.layer_index).data();
        if (gw.size() != gl.bits.size()) {
            throw ShapeError("gradient mask incongruent with gradient set");
        }
        for (std::size_t i = 0; i < gw.size(); ++i) {
            if (!gl.bits[i]) gw[i] = 0.0f;
        }
    }
}

}  // namespace sparcl
