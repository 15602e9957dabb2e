#include "sparcl/rehearsal.hpp"

#include <stdexcept>

namespace sparcl {

void reservoir_insert(RehearsalBuffer& buffer, BufferEntry candidate, std::mt19937& rng) {
    if (buffer.capacity_ == 0) {
        ++buffer.seen_;
        return;
    }
    if (buffer.entries_.size() < buffer.capacity_) {
        buffer.entries_.push_back(std::move(candidate));
    } else {
        // slot j < capacity with probability capacity/(seen+1), uniform slot
        std::uniform_int_distribution<std::int64_t> d(0, buffer.seen_);
        std::int64_t j = d(rng);
        if (j < static_cast<std::int64_t>(buffer.capacity_)) {
            buffer.entries_[static_cast<std::size_t>(j)] = std::move(candidate);
        }
    }
    ++buffer.seen_;
}

std::vector<const BufferEntry*> sample_batch(const RehearsalBuffer& buffer, std::size_t n,
                                             std::mt19937& rng) {
    if (n == 0) return {};
    if (buffer.empty()) throw std::logic_error("sample_batch on an empty buffer");
    std::uniform_int_distribution<std::size_t> d(0, buffer.size() - 1);
    std::vector<const BufferEntry*> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) out.push_back(&buffer.entry(d(rng)));
    return out;
}

namespace {

Tensor stack_inputs(std::span<const BufferEntry* const> entries) {
    std::vector<const Tensor*> rows;
    rows.reserve(entries.size());
    for (const BufferEntry* e : entries) rows.push_back(&e->input);
    return stack_rows<float>(rows);
}

std::vector<int> gather_labels(std::span<const BufferEntry* const> entries) {
    std::vector<int> out;
    out.reserve(entries.size());
    for (const BufferEntry* e : entries) out.push_back(e->label);
    return out;
}

Tensor stack_stored_logits(std::span<const BufferEntry* const> entries) {
    std::vector<const Tensor*> rows;
    rows.reserve(entries.size());
    for (const BufferEntry* e : entries) rows.push_back(&e->stored_logits);
    return stack_rows<float>(rows);
}

}  // namespace

ReplayLossResult plain_loss(const Model& model, const Tensor& inputs, std::span<const int> labels,
                            ClassRange task_range) {
    ReplayLossResult res;
    auto cache = forward(model, inputs);
    auto loss = single_head_cross_entropy(cache.logits, labels, task_range);
    res.current_term = loss.loss;
    res.loss = loss.loss;
    res.grads = backward(model, cache, loss.dlogits);
    res.current_logits = std::move(cache.logits);
    return res;
}

ReplayLossResult er_loss(const Model& model, const Tensor& inputs, std::span<const int> labels,
                         std::span<const BufferEntry* const> replay, ClassRange task_range) {
    ReplayLossResult res = plain_loss(model, inputs, labels, task_range);
    if (replay.empty()) return res;
    Tensor rx = stack_inputs(replay);
    std::vector<int> ry = gather_labels(replay);
    auto cache = forward(model, rx);
    auto loss = cross_entropy<float>(cache.logits, ry);
    res.replay_ce_term = loss.loss;
    res.loss += loss.loss;
    res.grads.add_scaled(backward(model, cache, loss.dlogits), 1.0f);
    return res;
}

ReplayLossResult derpp_loss(const Model& model, const Tensor& inputs, std::span<const int> labels,
                            std::span<const BufferEntry* const> replay_a,
                            std::span<const BufferEntry* const> replay_b, double coeff_mse,
                            double coeff_ce, ClassRange task_range) {
    if (coeff_mse < 0.0 || coeff_ce < 0.0) {
        throw std::invalid_argument("replay coefficients must be non-negative");
    }
    ReplayLossResult res = plain_loss(model, inputs, labels, task_range);
    if (!replay_a.empty() && coeff_mse > 0.0) {
        Tensor ax = stack_inputs(replay_a);
        Tensor targets = stack_stored_logits(replay_a);
        auto cache = forward(model, ax);
        auto loss = mse_to_targets(cache.logits, targets);
        res.replay_mse_term = coeff_mse * loss.loss;
        res.loss += res.replay_mse_term;
        res.grads.add_scaled(backward(model, cache, loss.dlogits), static_cast<float>(coeff_mse));
    }
    if (!replay_b.empty() && coeff_ce > 0.0) {
        Tensor bx = stack_inputs(replay_b);
        std::vector<int> by = gather_labels(replay_b);
        auto cache = forward(model, bx);
        auto loss = cross_entropy<float>(cache.logits, by);
        res.replay_ce_term = coeff_ce * loss.loss;
        res.loss += res.replay_ce_term;
        res.grads.add_scaled(backward(model, cache, loss.dlogits), static_cast<float>(coeff_ce));
    }
    return res;
}

}  // namespace sparcl
