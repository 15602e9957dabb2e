#include <random>

#include "doctest.h"
#include "sparcl/mask.hpp"
#include "sparcl/nn_ops.hpp"

using namespace sparcl;

namespace {

// two linear layers, 100 and 60 maskable weights
Model two_layer_model() {
    Model m;
    m.class_count = 6;
    m.layers.push_back(Layer::make_linear(10, 10));
    m.layers.push_back(Layer::make_relu());
    m.layers.push_back(Layer::make_linear(10, 6));
    std::mt19937 rng(2);
    init_weights(m, rng);
    return m;
}

bool mask_weight_coupling_holds(const Model& m, const WeightMask& mask) {
    for (const MaskLayer& ml : mask.layers) {
        const auto& w = m.layers[ml.layer_index].weights.data();
        for (std::size_t i = 0; i < w.size(); ++i) {
            if (!ml.bits[i] && w[i] != 0.0f) return false;
        }
    }
    return true;
}

}  // namespace

TEST_CASE("init_mask: s=0 sets every bit") {
    Model m = two_layer_model();
    WeightMask mask = init_mask(m, 0.0, 1);
    CHECK(mask.active_count() == mask.total_count());
    CHECK(sparsity(mask) == 0.0);
}

TEST_CASE("init_mask: per-layer active counts are round((1-s)*N)") {
    Model m = two_layer_model();
    WeightMask mask = init_mask(m, 0.9, 1);
    CHECK(mask.layers[0].active() == 10);  // round(0.1 * 100)
    CHECK(mask.layers[1].active() == 6);   // round(0.1 * 60)
}

TEST_CASE("init_mask: same seed reproduces the same mask") {
    Model m = two_layer_model();
    WeightMask a = init_mask(m, 0.7, 42);
    WeightMask b = init_mask(m, 0.7, 42);
    for (std::size_t l = 0; l < a.layers.size(); ++l) {
        CHECK(a.layers[l].bits == b.layers[l].bits);
    }
}

TEST_CASE("init_mask: s >= 1 is an argument error") {
    Model m = two_layer_model();
    CHECK_THROWS_AS(init_mask(m, 1.0, 1), std::invalid_argument);
}

TEST_CASE("sparsity: arithmetic on hand-built masks") {
    WeightMask mask;
    MaskLayer ml;
    ml.layer_index = 0;
    ml.bits.assign(100, 0);
    for (std::size_t i = 0; i < 25; ++i) ml.bits[i] = 1;
    mask.layers.push_back(ml);
    CHECK(sparsity(mask) == doctest::Approx(0.75));

    for (auto& b : mask.layers[0].bits) b = 1;
    CHECK(sparsity(mask) == 0.0);
    for (auto& b : mask.layers[0].bits) b = 0;
    CHECK(sparsity(mask) == 1.0);
}

TEST_CASE("grow_random: count conservation via popcount") {
    Model m = two_layer_model();
    WeightMask mask = init_mask(m, 0.9, 3);
    zero_masked_weights(m, mask);
    std::size_t before = mask.active_count();
    std::mt19937 rng(5);
    auto grown = grow_random(mask, m, 10, rng);
    CHECK(grown.size() == 10);
    CHECK(mask.active_count() == before + 10);
    CHECK(mask_weight_coupling_holds(m, mask));
    for (const auto& [l, i] : grown) {
        CHECK(mask.layers[l].bits[i] == 1);
        CHECK(m.layers[mask.layers[l].layer_index].weights.data()[i] == 0.0f);
    }
}

TEST_CASE("grow_random: count 0 changes nothing; over-count is an error") {
    Model m = two_layer_model();
    WeightMask mask = init_mask(m, 0.0, 3);  // fully dense: only count=0 legal
    WeightMask copy = mask;
    std::mt19937 rng(5);
    CHECK(grow_random(mask, m, 0, rng).empty());
    for (std::size_t l = 0; l < mask.layers.size(); ++l) {
        CHECK(mask.layers[l].bits == copy.layers[l].bits);
    }
    CHECK_THROWS_AS(grow_random(mask, m, 1, rng), std::invalid_argument);
}

TEST_CASE("shrink_by_scores: full-sort oracle on increasing scores") {
    Model m = two_layer_model();
    WeightMask mask = init_mask(m, 0.0, 1);
    MaskScores scores;
    double v = 0.0;
    for (const MaskLayer& ml : mask.layers) {
        std::vector<double> s(ml.bits.size());
        for (auto& x : s) x = v++;
        scores.per_layer.push_back(std::move(s));
    }
    auto removed = shrink_by_scores(mask, m, scores, 3);
    REQUIRE(removed.size() == 3);
    CHECK(removed[0] == MaskPosition{0, 0});
    CHECK(removed[1] == MaskPosition{0, 1});
    CHECK(removed[2] == MaskPosition{0, 2});
    CHECK(mask_weight_coupling_holds(m, mask));
}

TEST_CASE("shrink_by_scores: equal scores remove the lowest (layer, index) positions") {
    Model m = two_layer_model();
    WeightMask mask = init_mask(m, 0.0, 1);
    MaskScores scores;
    for (const MaskLayer& ml : mask.layers) {
        scores.per_layer.emplace_back(ml.bits.size(), 1.0);
    }
    std::size_t n0 = mask.layers[0].bits.size();
    auto removed = shrink_by_scores(mask, m, scores, n0 + 2);
    for (std::size_t i = 0; i < n0; ++i) CHECK(removed[i] == MaskPosition{0, i});
    CHECK(removed[n0] == MaskPosition{1, 0});
    CHECK(removed[n0 + 1] == MaskPosition{1, 1});
}

TEST_CASE("shrink_by_scores: count 0 is a no-op, over-count errors") {
    Model m = two_layer_model();
    WeightMask mask = init_mask(m, 0.5, 9);
    MaskScores scores;
    for (const MaskLayer& ml : mask.layers) scores.per_layer.emplace_back(ml.bits.size(), 0.0);
    WeightMask copy = mask;
    CHECK(shrink_by_scores(mask, m, scores, 0).empty());
    for (std::size_t l = 0; l < mask.layers.size(); ++l)
        CHECK(mask.layers[l].bits == copy.layers[l].bits);
    CHECK_THROWS_AS(shrink_by_scores(mask, m, scores, mask.active_count() + 1),
                    std::invalid_argument);
}

TEST_CASE("shrink property: min survivor score >= max removed score") {
    Model m = two_layer_model();
    WeightMask mask = init_mask(m, 0.4, 77);
    std::mt19937 rng(13);
    std::uniform_real_distribution<double> dist(0.0, 1.0);
    MaskScores scores;
    for (const MaskLayer& ml : mask.layers) {
        std::vector<double> s(ml.bits.size());
        for (auto& x : s) x = dist(rng);
        scores.per_layer.push_back(std::move(s));
    }
    MaskScores snapshot = scores;
    auto removed = shrink_by_scores(mask, m, scores, 30);
    double max_removed = 0.0;
    for (const auto& p : removed) max_removed = std::max(max_removed, snapshot.at(p));
    double min_survivor = 1e18;
    for (std::size_t l = 0; l < mask.layers.size(); ++l)
        for (std::size_t i = 0; i < mask.layers[l].bits.size(); ++i)
            if (mask.layers[l].bits[i])
                min_survivor = std::min(min_survivor, snapshot.per_layer[l][i]);
    CHECK(min_survivor >= max_removed);
}

TEST_CASE("grow/shrink conserve counts exactly") {
    Model m = two_layer_model();
    WeightMask mask = init_mask(m, 0.5, 31);
    zero_masked_weights(m, mask);
    std::size_t start = mask.active_count();
    std::mt19937 rng(3);
    MaskScores scores;
    for (const MaskLayer& ml : mask.layers) scores.per_layer.emplace_back(ml.bits.size(), 0.5);
    for (int round = 0; round < 5; ++round) {
        auto removed = shrink_by_scores(mask, m, scores, 7);
        auto grown = grow_random(mask, m, 7, rng);
        CHECK(mask.active_count() == start);
        CHECK(removed.size() == grown.size());
        CHECK(mask_weight_coupling_holds(m, mask));
    }
}

TEST_CASE("to_csr: fixture [[0,5],[3,0]]") {
    Tensor w({2, 2}, {0.0f, 5.0f, 3.0f, 0.0f});
    std::vector<std::uint8_t> bits{0, 1, 1, 0};
    CsrMatrix csr = to_csr(w, bits);
    CHECK(csr.n_rows == 2);
    CHECK(csr.n_cols == 2);
    CHECK(csr.values == std::vector<float>{5.0f, 3.0f});
    CHECK(csr.col_idx == std::vector<std::size_t>{1, 0});
    CHECK(csr.row_ptr == std::vector<std::size_t>{0, 1, 2});
}

TEST_CASE("to_csr: all-zero mask gives empty values and zero row_ptr") {
    Tensor w({3, 2}, {1.0f, 2.0f, 3.0f, 4.0f, 5.0f, 6.0f});
    std::vector<std::uint8_t> bits(6, 0);
    CsrMatrix csr = to_csr(w, bits);
    CHECK(csr.values.empty());
    CHECK(csr.row_ptr == std::vector<std::size_t>{0, 0, 0, 0});
}

TEST_CASE("to_csr: round-trip equals the masked dense tensor exactly") {
    std::mt19937 rng(71);
    std::normal_distribution<double> dist(0.0, 1.0);
    std::bernoulli_distribution flip(0.5);
    Tensor w({8, 8});
    std::vector<std::uint8_t> bits(64);
    for (std::size_t i = 0; i < 64; ++i) {
        w[i] = static_cast<float>(dist(rng));
        bits[i] = flip(rng) ? 1 : 0;
    }
    Tensor dense = csr_to_dense(to_csr(w, bits));
    for (std::size_t i = 0; i < 64; ++i) {
        float expected = bits[i] ? w[i] : 0.0f;
        CHECK(dense[i] == expected);
    }
}

TEST_CASE("to_csr: column indices strictly increase within each row") {
    std::mt19937 rng(73);
    std::bernoulli_distribution flip(0.35);
    Tensor w({5, 7});
    std::vector<std::uint8_t> bits(35);
    for (std::size_t i = 0; i < 35; ++i) {
        w[i] = static_cast<float>(i);
        bits[i] = flip(rng) ? 1 : 0;
    }
    CsrMatrix csr = to_csr(w, bits);
    for (std::size_t r = 0; r < csr.n_rows; ++r) {
        for (std::size_t k = csr.row_ptr[r] + 1; k < csr.row_ptr[r + 1]; ++k) {
            CHECK(csr.col_idx[k] > csr.col_idx[k - 1]);
        }
    }
    CHECK(csr.row_ptr.back() == csr.nnz());
}

TEST_CASE("layer_to_csr: conv weights export as [out_ch, in_ch*k*k]") {
    Layer conv = Layer::make_conv2d(2, 3, 2);
    for (std::size_t i = 0; i < conv.weights.numel(); ++i)
        conv.weights[i] = static_cast<float>(i + 1);
    MaskLayer ml;
    ml.layer_index = 0;
    ml.bits.assign(conv.weights.numel(), 1);
    CsrMatrix csr = layer_to_csr(conv, ml);
    CHECK(csr.n_rows == 3);
    CHECK(csr.n_cols == 8);
    CHECK(csr.nnz() == 24);
}
