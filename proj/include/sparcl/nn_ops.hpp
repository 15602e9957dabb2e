#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <random>
#include <span>

#include "sparcl/mask.hpp"
#include "sparcl/model.hpp"

namespace sparcl {

template <class T>
struct ForwardCacheT {
    std::vector<TensorT<T>> inputs;  // inputs[l] is the tensor entering layer l
    TensorT<T> logits;
};

using ForwardCache = ForwardCacheT<float>;

namespace detail {

template <class T>
void conv_out_dims(const LayerT<T>& l, std::size_t h, std::size_t w, std::size_t& oh,
                   std::size_t& ow) {
    long hh = (static_cast<long>(h) + 2 * l.padding - static_cast<long>(l.weights.dim(2)));
    long ww = (static_cast<long>(w) + 2 * l.padding - static_cast<long>(l.weights.dim(3)));
    if (hh < 0 || ww < 0) throw ShapeError("conv2d kernel larger than padded input");
    oh = static_cast<std::size_t>(hh / l.stride + 1);
    ow = static_cast<std::size_t>(ww / l.stride + 1);
}

template <class T>
TensorT<T> apply_layer(const LayerT<T>& l, const TensorT<T>& x) {
    switch (l.kind) {
        case LayerKind::linear: {
            if (x.rank() != 2 || x.dim(1) != l.weights.dim(1)) {
                throw ShapeError("linear layer expects [B," + std::to_string(l.weights.dim(1)) +
                                 "], got " + x.shape_str());
            }
            std::size_t batch = x.dim(0), in = l.weights.dim(1), out = l.weights.dim(0);
            TensorT<T> y({batch, out});
            for (std::size_t b = 0; b < batch; ++b) {
                const T* xb = x.data().data() + b * in;
                T* yb = y.data().data() + b * out;
                for (std::size_t o = 0; o < out; ++o) {
                    const T* wrow = l.weights.data().data() + o * in;
                    T acc = l.bias[o];
                    for (std::size_t i = 0; i < in; ++i) acc += wrow[i] * xb[i];
                    yb[o] = acc;
                }
            }
            return y;
        }
        case LayerKind::conv2d: {
            if (x.rank() != 4 || x.dim(1) != l.weights.dim(1)) {
                throw ShapeError("conv2d layer expects [B,C,H,W] with C=" +
                                 std::to_string(l.weights.dim(1)) + ", got " + x.shape_str());
            }
            std::size_t batch = x.dim(0), in_ch = x.dim(1), h = x.dim(2), w = x.dim(3);
            std::size_t out_ch = l.weights.dim(0), k = l.weights.dim(2);
            std::size_t oh, ow;
            conv_out_dims(l, h, w, oh, ow);
            TensorT<T> y({batch, out_ch, oh, ow});
            for (std::size_t b = 0; b < batch; ++b)
                for (std::size_t oc = 0; oc < out_ch; ++oc)
                    for (std::size_t yy = 0; yy < oh; ++yy)
                        for (std::size_t xx = 0; xx < ow; ++xx) {
                            T acc = l.bias[oc];
                            for (std::size_t ic = 0; ic < in_ch; ++ic)
                                for (std::size_t kh = 0; kh < k; ++kh) {
                                    long ih = static_cast<long>(yy) * l.stride +
                                              static_cast<long>(kh) - l.padding;
                                    if (ih < 0 || ih >= static_cast<long>(h)) continue;
                                    for (std::size_t kw = 0; kw < k; ++kw) {
                                        long iw = static_cast<long>(xx) * l.stride +
                                                  static_cast<long>(kw) - l.padding;
                                        if (iw < 0 || iw >= static_cast<long>(w)) continue;
                                        acc += x.at(b, ic, static_cast<std::size_t>(ih),
                                                    static_cast<std::size_t>(iw)) *
                                               l.weights.at(oc, ic, kh, kw);
                                    }
                                }
                            y.at(b, oc, yy, xx) = acc;
                        }
            return y;
        }
        case LayerKind::relu: {
            TensorT<T> y = x;
            for (T& v : y.data()) v = v > T(0) ? v : T(0);
            return y;
        }
        case LayerKind::flatten: {
            if (x.rank() < 2) throw ShapeError("flatten expects a batched tensor");
            return x.reshaped({x.dim(0), row_numel(x)});
        }
    }
    throw ShapeError("unknown layer kind");
}

}  // namespace detail

/// Forward pass over all layers; caches per-layer inputs for backward.
template <class T>
ForwardCacheT<T> forward(const ModelT<T>& model, const TensorT<T>& batch) {
    ForwardCacheT<T> cache;
    cache.inputs.reserve(model.layers.size());
    TensorT<T> cur = batch;
    for (const auto& layer : model.layers) {
        cache.inputs.push_back(cur);
        cur = detail::apply_layer(layer, cur);
    }
    if (cur.rank() != 2 || cur.dim(1) != static_cast<std::size_t>(model.class_count)) {
        throw ShapeError("model output is " + cur.shape_str() + ", expected [B," +
                         std::to_string(model.class_count) + "]");
    }
    if (!cur.all_finite()) throw NumericError("non-finite logits in forward pass");
    cache.logits = std::move(cur);
    return cache;
}

template <class T>
struct LossResultT {
    double loss = 0.0;
    TensorT<T> dlogits;
};

using LossResult = LossResultT<float>;

/// Softmax cross-entropy, mean over the batch. Gradient rows sum to 0.
template <class T>
LossResultT<T> cross_entropy(const TensorT<T>& logits, std::span<const int> labels) {
    if (logits.rank() != 2) throw ShapeError("cross_entropy expects [B,C] logits");
    std::size_t batch = logits.dim(0), classes = logits.dim(1);
    if (labels.size() != batch) throw ShapeError("labels/logits batch mismatch");
    LossResultT<T> res;
    res.dlogits = TensorT<T>(logits.shape());
    double loss = 0.0;
    for (std::size_t b = 0; b < batch; ++b) {
        int y = labels[b];
        if (y < 0 || static_cast<std::size_t>(y) >= classes) {
            throw std::invalid_argument("label " + std::to_string(y) + " out of range [0," +
                                        std::to_string(classes) + ")");
        }
        const T* row = logits.data().data() + b * classes;
        T mx = *std::max_element(row, row + classes);
        double denom = 0.0;
        for (std::size_t c = 0; c < classes; ++c) denom += std::exp(static_cast<double>(row[c] - mx));
        loss += std::log(denom) - static_cast<double>(row[y] - mx);
        T* grow = res.dlogits.data().data() + b * classes;
        for (std::size_t c = 0; c < classes; ++c) {
            double p = std::exp(static_cast<double>(row[c] - mx)) / denom;
            grow[c] = static_cast<T>((p - (static_cast<std::size_t>(y) == c ? 1.0 : 0.0)) /
                                     static_cast<double>(batch));
        }
    }
    res.loss = loss / static_cast<double>(batch);
    if (!std::isfinite(res.loss)) throw NumericError("non-finite cross-entropy loss");
    return res;
}

/// Cross-entropy over the columns of `range` only. Gradients outside the
/// range are exactly zero.
template <class T>
LossResultT<T> single_head_cross_entropy(const TensorT<T>& logits, std::span<const int> labels,
                                         ClassRange range) {
    if (logits.rank() != 2) throw ShapeError("single_head_cross_entropy expects [B,C] logits");
    std::size_t batch = logits.dim(0), classes = logits.dim(1);
    if (range.begin < 0 || range.end > static_cast<int>(classes) || range.size() <= 0) {
        throw std::invalid_argument("class range outside logits width");
    }
    std::size_t width = static_cast<std::size_t>(range.size());
    TensorT<T> sliced({batch, width});
    std::vector<int> shifted(batch);
    for (std::size_t b = 0; b < batch; ++b) {
        if (!range.contains(labels[b])) {
            throw std::invalid_argument("label " + std::to_string(labels[b]) +
                                        " outside task class range");
        }
        shifted[b] = labels[b] - range.begin;
        for (std::size_t c = 0; c < width; ++c) {
            sliced.at(b, c) = logits.at(b, static_cast<std::size_t>(range.begin) + c);
        }
    }
    LossResultT<T> inner = cross_entropy<T>(sliced, shifted);
    LossResultT<T> res;
    res.loss = inner.loss;
    res.dlogits = TensorT<T>(logits.shape());
    for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t c = 0; c < width; ++c)
            res.dlogits.at(b, static_cast<std::size_t>(range.begin) + c) = inner.dlogits.at(b, c);
    return res;
}

/// Mean squared error against fixed targets, averaged over batch*classes.
template <class T>
LossResultT<T> mse_to_targets(const TensorT<T>& logits, const TensorT<T>& targets) {
    if (logits.shape() != targets.shape()) throw ShapeError("mse targets shape mismatch");
    LossResultT<T> res;
    res.dlogits = TensorT<T>(logits.shape());
    double n = static_cast<double>(logits.numel());
    double acc = 0.0;
    for (std::size_t i = 0; i < logits.numel(); ++i) {
        double d = static_cast<double>(logits[i]) - static_cast<double>(targets[i]);
        acc += d * d;
        res.dlogits[i] = static_cast<T>(2.0 * d / n);
    }
    res.loss = acc / n;
    return res;
}

/// Exact backprop through the cached forward pass.
template <class T>
GradientSetT<T> backward(const ModelT<T>& model, const ForwardCacheT<T>& cache,
                         const TensorT<T>& dlogits) {
    if (cache.inputs.size() != model.layers.size() || cache.logits.empty()) {
        throw std::logic_error("backward called with a stale or missing forward cache");
    }
    if (dlogits.shape() != cache.logits.shape()) {
        throw ShapeError("dlogits shape does not match cached logits");
    }
    GradientSetT<T> grads = GradientSetT<T>::zeros_like(model);
    TensorT<T> delta = dlogits;
    for (std::size_t li = model.layers.size(); li-- > 0;) {
        const LayerT<T>& l = model.layers[li];
        const TensorT<T>& x = cache.inputs[li];
        switch (l.kind) {
            case LayerKind::linear: {
                std::size_t batch = x.dim(0), in = l.weights.dim(1), out = l.weights.dim(0);
                TensorT<T>& dw = grads.weight_grads[li];
                TensorT<T>& db = grads.bias_grads[li];
                TensorT<T> dx({batch, in});
                for (std::size_t b = 0; b < batch; ++b) {
                    const T* xb = x.data().data() + b * in;
                    const T* gy = delta.data().data() + b * out;
                    T* dxb = dx.data().data() + b * in;
                    for (std::size_t o = 0; o < out; ++o) {
                        T g = gy[o];
                        db[o] += g;
                        const T* wrow = l.weights.data().data() + o * in;
                        T* dwrow = dw.data().data() + o * in;
                        for (std::size_t i = 0; i < in; ++i) {
                            dwrow[i] += g * xb[i];
                            dxb[i] += g * wrow[i];
                        }
                    }
                }
                delta = std::move(dx);
                break;
            }
            case LayerKind::conv2d: {
                std::size_t batch = x.dim(0), in_ch = x.dim(1), h = x.dim(2), w = x.dim(3);
                std::size_t out_ch = l.weights.dim(0), k = l.weights.dim(2);
                std::size_t oh = delta.dim(2), ow = delta.dim(3);
                TensorT<T>& dw = grads.weight_grads[li];
                TensorT<T>& db = grads.bias_grads[li];
                TensorT<T> dx(x.shape());
                for (std::size_t b = 0; b < batch; ++b)
                    for (std::size_t oc = 0; oc < out_ch; ++oc)
                        for (std::size_t yy = 0; yy < oh; ++yy)
                            for (std::size_t xx = 0; xx < ow; ++xx) {
                                T g = delta.at(b, oc, yy, xx);
                                db[oc] += g;
                                for (std::size_t ic = 0; ic < in_ch; ++ic)
                                    for (std::size_t kh = 0; kh < k; ++kh) {
                                        long ih = static_cast<long>(yy) * l.stride +
                                                  static_cast<long>(kh) - l.padding;
                                        if (ih < 0 || ih >= static_cast<long>(h)) continue;
                                        for (std::size_t kw = 0; kw < k; ++kw) {
                                            long iw = static_cast<long>(xx) * l.stride +
                                                      static_cast<long>(kw) - l.padding;
                                            if (iw < 0 || iw >= static_cast<long>(w)) continue;
                                            dw.at(oc, ic, kh, kw) +=
                                                g * x.at(b, ic, static_cast<std::size_t>(ih),
                                                         static_cast<std::size_t>(iw));
                                            dx.at(b, ic, static_cast<std::size_t>(ih),
                                                  static_cast<std::size_t>(iw)) +=
                                                g * l.weights.at(oc, ic, kh, kw);
                                        }
                                    }
                            }
                delta = std::move(dx);
                break;
            }
            case LayerKind::relu: {
                TensorT<T> dx(x.shape());
                for (std::size_t i = 0; i < x.numel(); ++i) {
                    dx[i] = x[i] > T(0) ? delta[i] : T(0);
                }
                delta = std::move(dx);
                break;
            }
            case LayerKind::flatten: {
                delta = delta.reshaped(x.shape());
                break;
            }
        }
    }
    return grads;
}

/// SGD update. Weights with a cleared mask bit stay exactly 0; biases are
/// always updated. Pass mask = nullptr for a dense update.
template <class T>
void sgd_step(ModelT<T>& model, const GradientSetT<T>& grads, double lr,
              const WeightMask* mask) {
    if (lr <= 0.0) throw std::invalid_argument("learning rate must be positive");
    if (grads.weight_grads.size() != model.layers.size()) {
        throw ShapeError("gradient set does not match model layer count");
    }
    T step = static_cast<T>(lr);
    for (std::size_t li = 0; li < model.layers.size(); ++li) {
        LayerT<T>& l = model.layers[li];
        if (!l.has_weights()) continue;
        if (grads.weight_grads[li].shape() != l.weights.shape()) {
            throw ShapeError("weight gradient shape mismatch at layer " + std::to_string(li));
        }
        const MaskLayer* ml = mask ? mask->find(li) : nullptr;
        auto& w = l.weights.data();
        const auto& gw = grads.weight_grads[li].data();
        if (ml) {
            if (ml->bits.size() != w.size()) {
                throw ShapeError("mask bits do not match layer " + std::to_string(li));
            }
            for (std::size_t i = 0; i < w.size(); ++i) {
                if (ml->bits[i]) w[i] -= step * gw[i];
            }
        } else {
            for (std::size_t i = 0; i < w.size(); ++i) w[i] -= step * gw[i];
        }
        auto& b = l.bias.data();
        const auto& gb = grads.bias_grads[li].data();
        for (std::size_t i = 0; i < b.size(); ++i) b[i] -= step * gb[i];
    }
}

struct GradCheckEntry {
    std::size_t layer = 0;
    bool bias = false;
    std::size_t index = 0;
    double analytic = 0.0;
    double numeric = 0.0;
    double rel_error = 0.0;
};

struct GradCheckReport {
    double max_rel_error = 0.0;
    GradCheckEntry worst;
    int samples = 0;
    double tol = 0.0;
    bool passed = false;
};

namespace detail {

// |a-n| relative to the larger magnitude, floored at 1 so near-zero
// gradients are held to an absolute tolerance of the same size.
inline double grad_rel_error(double analytic, double numeric) {
    double denom = std::max({std::abs(analytic), std::abs(numeric), 1.0});
    return std::abs(analytic - numeric) / denom;
}

}  // namespace detail

/// Check a supplied gradient set against central finite differences of the
/// full-head cross-entropy. The difference quotient is evaluated on a
/// double-precision copy of the model so the oracle's own rounding stays
/// well below the tolerance.
template <class T>
GradCheckReport check_gradients(const ModelT<T>& model, const TensorT<T>& batch,
                                std::span<const int> labels, const GradientSetT<T>& analytic,
                                int n_samples, double tol, std::mt19937& rng) {
    if (n_samples < 1) throw std::invalid_argument("n_samples must be >= 1");
    struct ParamRef {
        std::size_t layer;
        bool bias;
        std::size_t index;
    };
    std::vector<ParamRef> all;
    for (std::size_t li = 0; li < model.layers.size(); ++li) {
        if (!model.layers[li].has_weights()) continue;
        for (std::size_t i = 0; i < model.layers[li].weights.numel(); ++i)
            all.push_back({li, false, i});
        for (std::size_t i = 0; i < model.layers[li].bias.numel(); ++i)
            all.push_back({li, true, i});
    }
    std::vector<ParamRef> picked;
    if (static_cast<std::size_t>(n_samples) >= all.size()) {
        picked = all;
    } else {
        std::vector<std::size_t> idx(all.size());
        std::iota(idx.begin(), idx.end(), 0);
        for (int i = 0; i < n_samples; ++i) {
            std::uniform_int_distribution<std::size_t> d(i, idx.size() - 1);
            std::swap(idx[static_cast<std::size_t>(i)], idx[d(rng)]);
            picked.push_back(all[idx[static_cast<std::size_t>(i)]]);
        }
    }

    ModelT<double> dm = cast_model<double>(model);
    TensorT<double> dbatch = batch.template cast<double>();
    double h = sizeof(T) == sizeof(float) ? 1e-3 : 1e-5;
    auto loss_at = [&]() {
        auto cache = forward(dm, dbatch);
        return cross_entropy<double>(cache.logits, labels).loss;
    };

    GradCheckReport report;
    report.samples = static_cast<int>(picked.size());
    report.tol = tol;
    for (const ParamRef& p : picked) {
        double* slot = p.bias ? &dm.layers[p.layer].bias[p.index]
                              : &dm.layers[p.layer].weights[p.index];
        double orig = *slot;
        *slot = orig + h;
        double lp = loss_at();
        *slot = orig - h;
        double lm = loss_at();
        *slot = orig;
        double numeric = (lp - lm) / (2.0 * h);
        double a = p.bias ? static_cast<double>(analytic.bias_grads[p.layer][p.index])
                          : static_cast<double>(analytic.weight_grads[p.layer][p.index]);
        double err = detail::grad_rel_error(a, numeric);
        if (err >= report.max_rel_error) {
            report.max_rel_error = err;
            report.worst = {p.layer, p.bias, p.index, a, numeric, err};
        }
    }
    report.passed = report.max_rel_error <= tol;
    return report;
}

/// Backprop self-check: compares the model's own analytic gradients against
/// finite differences on `n_samples` randomly chosen parameters.
template <class T>
GradCheckReport numeric_grad_check(const ModelT<T>& model, const TensorT<T>& batch,
                                   std::span<const int> labels, int n_samples, double tol,
                                   std::mt19937& rng) {
    auto cache = forward(model, batch);
    auto loss = cross_entropy<T>(cache.logits, labels);
    GradientSetT<T> analytic = backward(model, cache, loss.dlogits);
    return check_gradients(model, batch, labels, analytic, n_samples, tol, rng);
}

}  // namespace sparcl
