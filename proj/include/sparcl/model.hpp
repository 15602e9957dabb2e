#pragma once

#include <random>
#include <string>
#include <vector>

#include "sparcl/tensor.hpp"

namespace sparcl {

enum class LayerKind { linear, conv2d, relu, flatten };

inline const char* layer_kind_name(LayerKind k) {
    switch (k) {
        case LayerKind::linear: return "linear";
        case LayerKind::conv2d: return "conv2d";
        case LayerKind::relu: return "relu";
        case LayerKind::flatten: return "flatten";
    }
    return "?";
}

template <class T>
struct LayerT {
    LayerKind kind = LayerKind::relu;
    TensorT<T> weights;  // linear: [out, in]; conv2d: [out_ch, in_ch, k, k]
    TensorT<T> bias;     // dense, never masked
    int stride = 1;      // conv2d only
    int padding = 0;     // conv2d only

    bool has_weights() const { return kind == LayerKind::linear || kind == LayerKind::conv2d; }

    static LayerT make_linear(std::size_t in, std::size_t out) {
        LayerT l;
        l.kind = LayerKind::linear;
        l.weights = TensorT<T>({out, in});
        l.bias = TensorT<T>({out});
        return l;
    }

    static LayerT make_conv2d(std::size_t in_ch, std::size_t out_ch, std::size_t kernel,
                              int stride = 1, int padding = 0) {
        LayerT l;
        l.kind = LayerKind::conv2d;
        l.weights = TensorT<T>({out_ch, in_ch, kernel, kernel});
        l.bias = TensorT<T>({out_ch});
        l.stride = stride;
        l.padding = padding;
        return l;
    }

    static LayerT make_relu() {
        LayerT l;
        l.kind = LayerKind::relu;
        return l;
    }

    static LayerT make_flatten() {
        LayerT l;
        l.kind = LayerKind::flatten;
        return l;
    }
};

template <class T>
struct ModelT {
    std::vector<LayerT<T>> layers;
    int class_count = 0;
    std::vector<ClassRange> task_class_ranges;

    std::vector<std::size_t> maskable_layer_indices() const {
        std::vector<std::size_t> out;
        for (std::size_t i = 0; i < layers.size(); ++i) {
            if (layers[i].has_weights()) out.push_back(i);
        }
        return out;
    }

    std::size_t maskable_weight_count() const {
        std::size_t n = 0;
        for (const auto& l : layers) {
            if (l.has_weights()) n += l.weights.numel();
        }
        return n;
    }
};

using Layer = LayerT<float>;
using Model = ModelT<float>;

/// Per-layer gradients, shape-congruent with the owning model. Non-weighted
/// layers hold empty tensors.
template <class T>
struct GradientSetT {
    std::vector<TensorT<T>> weight_grads;
    std::vector<TensorT<T>> bias_grads;

    static GradientSetT zeros_like(const ModelT<T>& m) {
        GradientSetT g;
        g.weight_grads.reserve(m.layers.size());
        g.bias_grads.reserve(m.layers.size());
        for (const auto& l : m.layers) {
            g.weight_grads.push_back(l.has_weights() ? TensorT<T>(l.weights.shape()) : TensorT<T>());
            g.bias_grads.push_back(l.has_weights() ? TensorT<T>(l.bias.shape()) : TensorT<T>());
        }
        return g;
    }

    void add_scaled(const GradientSetT& other, T scale) {
        for (std::size_t l = 0; l < weight_grads.size(); ++l) {
            auto& w = weight_grads[l].data();
            const auto& ow = other.weight_grads[l].data();
            for (std::size_t i = 0; i < w.size(); ++i) w[i] += scale * ow[i];
            auto& b = bias_grads[l].data();
            const auto& ob = other.bias_grads[l].data();
            for (std::size_t i = 0; i < b.size(); ++i) b[i] += scale * ob[i];
        }
    }
};

using GradientSet = GradientSetT<float>;

/// He-style uniform fan-in init for weights, zero biases.
template <class T>
void init_weights(ModelT<T>& model, std::mt19937& rng) {
    for (auto& layer : model.layers) {
        if (!layer.has_weights()) continue;
        std::size_t fan_in = layer.kind == LayerKind::linear
                                 ? layer.weights.dim(1)
                                 : layer.weights.dim(1) * layer.weights.dim(2) * layer.weights.dim(3);
        T bound = static_cast<T>(std::sqrt(6.0 / static_cast<double>(fan_in)));
        std::uniform_real_distribution<double> dist(-bound, bound);
        for (T& w : layer.weights.data()) w = static_cast<T>(dist(rng));
        for (T& b : layer.bias.data()) b = T(0);
    }
}

/// flatten -> linear(hidden) -> relu -> linear(classes). The leading flatten
/// makes the same model accept flat vectors and image tensors.
template <class T>
ModelT<T> make_mlp(std::size_t input_dim, std::size_t hidden, int class_count) {
    ModelT<T> m;
    m.class_count = class_count;
    m.layers.push_back(LayerT<T>::make_flatten());
    m.layers.push_back(LayerT<T>::make_linear(input_dim, hidden));
    m.layers.push_back(LayerT<T>::make_relu());
    m.layers.push_back(LayerT<T>::make_linear(hidden, static_cast<std::size_t>(class_count)));
    return m;
}

/// conv(in->8, k3, pad 1) -> relu -> flatten -> linear(classes).
template <class T>
ModelT<T> make_small_cnn(std::size_t in_ch, std::size_t height, std::size_t width, int class_count) {
    ModelT<T> m;
    m.class_count = class_count;
    m.layers.push_back(LayerT<T>::make_conv2d(in_ch, 8, 3, /*stride=*/1, /*padding=*/1));
    m.layers.push_back(LayerT<T>::make_relu());
    m.layers.push_back(LayerT<T>::make_flatten());
    m.layers.push_back(LayerT<T>::make_linear(8 * height * width, static_cast<std::size_t>(class_count)));
    return m;
}

template <class U, class T>
ModelT<U> cast_model(const ModelT<T>& m) {
    ModelT<U> out;
    out.class_count = m.class_count;
    out.task_class_ranges = m.task_class_ranges;
    out.layers.reserve(m.layers.size());
    for (const auto& l : m.layers) {
        LayerT<U> nl;
        nl.kind = l.kind;
        nl.stride = l.stride;
        nl.padding = l.padding;
        nl.weights = l.weights.template cast<U>();
        nl.bias = l.bias.template cast<U>();
        out.layers.push_back(std::move(nl));
    }
    return out;
}

}  // namespace sparcl
