#include <cmath>
#include <random>

#include "doctest.h"
#include "sparcl/nn_ops.hpp"

using namespace sparcl;

namespace {

Model identity_linear_model(std::size_t dim) {
    Model m;
    m.class_count = static_cast<int>(dim);
    Layer l = Layer::make_linear(dim, dim);
    for (std::size_t i = 0; i < dim; ++i) l.weights.at(i, i) = 1.0f;
    m.layers.push_back(std::move(l));
    return m;
}

Tensor random_tensor(std::vector<std::size_t> shape, std::mt19937& rng, double scale = 1.0) {
    std::normal_distribution<double> dist(0.0, scale);
    Tensor t(std::move(shape));
    for (auto& v : t.data()) v = static_cast<float>(dist(rng));
    return t;
}

}  // namespace

TEST_CASE("forward: identity linear layer returns its input") {
    Model m = identity_linear_model(3);
    Tensor x({2, 3}, {1.0f, -2.0f, 0.5f, 4.0f, 0.0f, -1.0f});
    auto cache = forward(m, x);
    for (std::size_t i = 0; i < x.numel(); ++i) CHECK(cache.logits[i] == x[i]);
}

TEST_CASE("forward: all-zero weights give all-zero logits") {
    std::mt19937 rng(1);
    Model m = make_mlp<float>(5, 4, 3);
    Tensor x = random_tensor({2, 5}, rng);
    auto cache = forward(m, x);
    for (float v : cache.logits.data()) CHECK(v == 0.0f);
}

TEST_CASE("forward: matches a straight-line scratch recomputation") {
    // independent oracle: the affine+ReLU chain written out longhand in
    // double precision
    std::mt19937 rng(7);
    Model m = make_mlp<float>(6, 5, 4);
    init_weights(m, rng);
    Tensor x = random_tensor({1, 6}, rng);
    auto cache = forward(m, x);

    const Layer& l1 = m.layers[1];
    const Layer& l2 = m.layers[3];
    std::vector<double> h(5), out(4);
    for (std::size_t o = 0; o < 5; ++o) {
        double acc = l1.bias[o];
        for (std::size_t i = 0; i < 6; ++i) acc += double(l1.weights.at(o, i)) * double(x[i]);
        h[o] = acc > 0.0 ? acc : 0.0;
    }
    for (std::size_t o = 0; o < 4; ++o) {
        double acc = l2.bias[o];
        for (std::size_t i = 0; i < 5; ++i) acc += double(l2.weights.at(o, i)) * h[i];
        out[o] = acc;
    }
    for (std::size_t o = 0; o < 4; ++o) {
        CHECK(cache.logits[o] == doctest::Approx(out[o]).epsilon(1e-5));
    }
}

TEST_CASE("forward: deterministic bit-identical logits") {
    std::mt19937 rng(3);
    Model m = make_mlp<float>(8, 6, 3);
    init_weights(m, rng);
    Tensor x = random_tensor({4, 8}, rng);
    auto a = forward(m, x);
    auto b = forward(m, x);
    for (std::size_t i = 0; i < a.logits.numel(); ++i) CHECK(a.logits[i] == b.logits[i]);
}

TEST_CASE("forward: shape mismatch raises a dimension error") {
    Model m = make_mlp<float>(6, 5, 4);
    Tensor bad({2, 7});
    CHECK_THROWS_AS(forward(m, bad), ShapeError);
}

TEST_CASE("cross_entropy: uniform logits over C classes give ln C") {
    Tensor logits({1, 4}, {0.3f, 0.3f, 0.3f, 0.3f});
    std::vector<int> labels{2};
    auto res = cross_entropy<float>(logits, labels);
    CHECK(res.loss == doctest::Approx(std::log(4.0)).epsilon(1e-6));
}

TEST_CASE("cross_entropy: confident correct logits drive the loss to 0") {
    std::vector<int> labels{1};
    double prev = 1e9;
    for (float margin : {2.0f, 6.0f, 12.0f}) {
        Tensor logits({1, 3}, {0.0f, margin, 0.0f});
        auto res = cross_entropy<float>(logits, labels);
        CHECK(res.loss < prev);
        prev = res.loss;
    }
    CHECK(prev < 1e-4);
}

TEST_CASE("cross_entropy: gradient rows sum to zero") {
    std::mt19937 rng(11);
    Tensor logits = random_tensor({6, 5}, rng, 2.0);
    std::vector<int> labels{0, 4, 2, 1, 3, 2};
    auto res = cross_entropy<float>(logits, labels);
    for (std::size_t b = 0; b < 6; ++b) {
        double sum = 0.0;
        for (std::size_t c = 0; c < 5; ++c) sum += res.dlogits.at(b, c);
        CHECK(std::abs(sum) < 1e-6);
    }
}

TEST_CASE("cross_entropy: gradient matches central finite differences") {
    std::mt19937 rng(13);
    Tensor logits = random_tensor({2, 3}, rng);
    std::vector<int> labels{1, 2};
    auto res = cross_entropy<float>(logits, labels);
    TensorD dl = logits.cast<double>();
    const double h = 1e-5;
    for (std::size_t i = 0; i < dl.numel(); ++i) {
        double orig = dl[i];
        dl[i] = orig + h;
        double lp = cross_entropy<double>(dl, labels).loss;
        dl[i] = orig - h;
        double lm = cross_entropy<double>(dl, labels).loss;
        dl[i] = orig;
        double numeric = (lp - lm) / (2.0 * h);
        CHECK(res.dlogits[i] == doctest::Approx(numeric).epsilon(1e-4));
    }
}

TEST_CASE("cross_entropy: label out of range is an argument error") {
    Tensor logits({1, 3});
    std::vector<int> labels{3};
    CHECK_THROWS_AS(cross_entropy<float>(logits, labels), std::invalid_argument);
}

TEST_CASE("single_head: equal logits over a 2-class range give ln 2") {
    Tensor logits({1, 4}, {5.0f, -3.0f, 0.7f, 0.7f});
    std::vector<int> labels{3};
    auto res = single_head_cross_entropy<float>(logits, labels, {2, 4});
    CHECK(res.loss == doctest::Approx(std::log(2.0)).epsilon(1e-6));
}

TEST_CASE("single_head: gradient outside the range is exactly zero") {
    std::mt19937 rng(17);
    Tensor logits = random_tensor({3, 6}, rng, 3.0);
    std::vector<int> labels{2, 3, 2};
    auto res = single_head_cross_entropy<float>(logits, labels, {2, 4});
    for (std::size_t b = 0; b < 3; ++b) {
        CHECK(res.dlogits.at(b, 0) == 0.0f);
        CHECK(res.dlogits.at(b, 1) == 0.0f);
        CHECK(res.dlogits.at(b, 4) == 0.0f);
        CHECK(res.dlogits.at(b, 5) == 0.0f);
    }
}

TEST_CASE("single_head: equals cross_entropy on the sliced sub-tensor") {
    std::mt19937 rng(19);
    Tensor logits = random_tensor({4, 6}, rng);
    std::vector<int> labels{3, 4, 2, 3};
    ClassRange range{2, 5};
    auto res = single_head_cross_entropy<float>(logits, labels, range);

    Tensor sliced({4, 3});
    std::vector<int> shifted(4);
    for (std::size_t b = 0; b < 4; ++b) {
        shifted[b] = labels[b] - range.begin;
        for (std::size_t c = 0; c < 3; ++c) sliced.at(b, c) = logits.at(b, c + 2);
    }
    auto oracle = cross_entropy<float>(sliced, shifted);
    CHECK(res.loss == doctest::Approx(oracle.loss).epsilon(1e-9));
    for (std::size_t b = 0; b < 4; ++b)
        for (std::size_t c = 0; c < 3; ++c)
            CHECK(res.dlogits.at(b, c + 2) == oracle.dlogits.at(b, c));
}

TEST_CASE("single_head: label outside the range is an argument error") {
    Tensor logits({1, 4});
    std::vector<int> labels{0};
    CHECK_THROWS_AS(single_head_cross_entropy<float>(logits, labels, {2, 4}),
                    std::invalid_argument);
}

TEST_CASE("backward: zero loss gradient gives an all-zero gradient set") {
    std::mt19937 rng(23);
    Model m = make_mlp<float>(5, 4, 3);
    init_weights(m, rng);
    Tensor x = random_tensor({2, 5}, rng);
    auto cache = forward(m, x);
    Tensor zero(cache.logits.shape());
    auto grads = backward(m, cache, zero);
    for (const auto& g : grads.weight_grads)
        for (float v : g.data()) CHECK(v == 0.0f);
    for (const auto& g : grads.bias_grads)
        for (float v : g.data()) CHECK(v == 0.0f);
}

TEST_CASE("backward: single linear layer, B=1, dW is the outer product") {
    std::mt19937 rng(29);
    Model m;
    m.class_count = 3;
    Layer l = Layer::make_linear(4, 3);
    m.layers.push_back(std::move(l));
    init_weights(m, rng);
    Tensor x = random_tensor({1, 4}, rng);
    auto cache = forward(m, x);
    Tensor dl = random_tensor({1, 3}, rng);
    auto grads = backward(m, cache, dl);
    for (std::size_t o = 0; o < 3; ++o)
        for (std::size_t i = 0; i < 4; ++i)
            CHECK(grads.weight_grads[0].at(o, i) ==
                  doctest::Approx(double(dl[o]) * double(x[i])).epsilon(1e-6));
    for (std::size_t o = 0; o < 3; ++o) CHECK(grads.bias_grads[0][o] == dl[o]);
}

TEST_CASE("backward: stale cache is a state error") {
    Model m = make_mlp<float>(5, 4, 3);
    ForwardCache cache;  // never filled
    Tensor dl({2, 3});
    CHECK_THROWS_AS(backward(m, cache, dl), std::logic_error);
}

TEST_CASE("numeric_grad_check: mlp passes at f32 and f64 tolerances") {
    std::mt19937 rng(31);
    Model m = make_mlp<float>(10, 8, 4);
    init_weights(m, rng);
    Tensor x = random_tensor({4, 10}, rng);
    std::vector<int> labels{0, 2, 1, 3};
    std::mt19937 pick(5);
    auto report = numeric_grad_check(m, x, labels, 120, 1e-4, pick);
    CHECK(report.passed);

    ModelT<double> md = cast_model<double>(m);
    TensorD xd = x.cast<double>();
    std::mt19937 pick2(5);
    auto report64 = numeric_grad_check(md, xd, labels, 120, 1e-6, pick2);
    CHECK(report64.passed);
}

TEST_CASE("numeric_grad_check: small cnn passes with conv gradients") {
    std::mt19937 rng(37);
    Model m = make_small_cnn<float>(1, 6, 6, 3);
    init_weights(m, rng);
    Tensor x = random_tensor({3, 1, 6, 6}, rng);
    std::vector<int> labels{0, 2, 1};
    std::mt19937 pick(9);
    auto report = numeric_grad_check(m, x, labels, 150, 1e-4, pick);
    CHECK(report.passed);
}

TEST_CASE("numeric_grad_check: corrupted gradient entry is identified") {
    std::mt19937 rng(41);
    Model m = make_mlp<float>(6, 5, 3);
    init_weights(m, rng);
    Tensor x = random_tensor({2, 6}, rng);
    std::vector<int> labels{1, 2};
    auto cache = forward(m, x);
    auto loss = cross_entropy<float>(cache.logits, labels);
    GradientSet grads = backward(m, cache, loss.dlogits);
    grads.weight_grads[1].at(2, 3) += 1.0f;  // inject the fault
    std::mt19937 pick(3);
    int total = 0;
    for (const auto& l : m.layers)
        if (l.has_weights()) total += int(l.weights.numel() + l.bias.numel());
    auto report = check_gradients(m, x, labels, grads, total, 1e-4, pick);
    CHECK_FALSE(report.passed);
    CHECK(report.worst.layer == 1);
    CHECK_FALSE(report.worst.bias);
    CHECK(report.worst.index == 2 * 6 + 3);
}

TEST_CASE("numeric_grad_check: zero input batch still validates bias gradients") {
    std::mt19937 rng(43);
    Model m = make_mlp<float>(5, 4, 3);
    init_weights(m, rng);
    Tensor x({2, 5});  // all zeros
    std::vector<int> labels{0, 2};
    std::mt19937 pick(7);
    auto report = numeric_grad_check(m, x, labels, 60, 1e-4, pick);
    CHECK(report.passed);
    // first-layer weight gradients vanish with zero inputs
    auto cache = forward(m, x);
    auto loss = cross_entropy<float>(cache.logits, labels);
    auto grads = backward(m, cache, loss.dlogits);
    for (float v : grads.weight_grads[1].data()) CHECK(v == 0.0f);
}

TEST_CASE("sgd_step: plain update follows w -= lr*g") {
    Model m;
    m.class_count = 1;
    Layer l = Layer::make_linear(1, 1);
    l.weights[0] = 1.0f;
    m.layers.push_back(std::move(l));
    GradientSet g = GradientSet::zeros_like(m);
    g.weight_grads[0][0] = 0.5f;
    sgd_step(m, g, 0.1, nullptr);
    CHECK(m.layers[0].weights[0] == doctest::Approx(0.95).epsilon(1e-7));
}

TEST_CASE("sgd_step: masked-out weights stay exactly zero, biases move") {
    std::mt19937 rng(47);
    Model m = make_mlp<float>(6, 4, 3);
    init_weights(m, rng);
    WeightMask mask = init_mask(m, 0.5, 21);
    zero_masked_weights(m, mask);

    GradientSet g = GradientSet::zeros_like(m);
    for (auto& t : g.weight_grads)
        for (auto& v : t.data()) v = 1.0f;
    for (auto& t : g.bias_grads)
        for (auto& v : t.data()) v = 1.0f;

    Model before = m;
    sgd_step(m, g, 0.1, &mask);

    // independent scalar-loop oracle over every element
    for (const MaskLayer& ml : mask.layers) {
        const auto& w = m.layers[ml.layer_index].weights.data();
        const auto& w0 = before.layers[ml.layer_index].weights.data();
        for (std::size_t i = 0; i < w.size(); ++i) {
            float expected = ml.bits[i] ? w0[i] - 0.1f * 1.0f : 0.0f;
            CHECK(w[i] == expected);
        }
        const auto& b = m.layers[ml.layer_index].bias.data();
        const auto& b0 = before.layers[ml.layer_index].bias.data();
        for (std::size_t i = 0; i < b.size(); ++i) CHECK(b[i] == b0[i] - 0.1f);
    }
}

TEST_CASE("sgd_step: non-positive learning rate is rejected") {
    Model m = make_mlp<float>(4, 3, 2);
    GradientSet g = GradientSet::zeros_like(m);
    CHECK_THROWS_AS(sgd_step(m, g, 0.0, nullptr), std::invalid_argument);
}

TEST_CASE("composition: loss decreases over 50 SGD steps on a separable toy set") {
    std::mt19937 rng(53);
    Model m = make_mlp<float>(2, 8, 2);
    init_weights(m, rng);
    // two linearly separable blobs
    std::vector<float> xs;
    std::vector<int> ys;
    std::normal_distribution<double> noise(0.0, 0.3);
    for (int i = 0; i < 32; ++i) {
        int label = i % 2;
        double cx = label == 0 ? -2.0 : 2.0;
        xs.push_back(static_cast<float>(cx + noise(rng)));
        xs.push_back(static_cast<float>(cx + noise(rng)));
        ys.push_back(label);
    }
    Tensor x({32, 2}, xs);
    double first = 0.0, last = 0.0;
    for (int it = 0; it < 50; ++it) {
        auto cache = forward(m, x);
        auto loss = cross_entropy<float>(cache.logits, ys);
        if (it == 0) first = loss.loss;
        last = loss.loss;
        auto grads = backward(m, cache, loss.dlogits);
        sgd_step(m, grads, 0.1, nullptr);
    }
    CHECK(last < 0.5 * first);
}
