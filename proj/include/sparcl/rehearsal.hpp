#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "sparcl/nn_ops.hpp"

namespace sparcl {

struct BufferEntry {
    Tensor input;          // one example, no batch dim
    int label = 0;
    Tensor stored_logits;  // model output captured at insertion time
    int task_id = 0;
    std::int64_t insertion_id = 0;
};

/// Fixed-capacity episodic memory fed by one reservoir stream that spans the
/// whole task sequence.
class RehearsalBuffer {
public:
    explicit RehearsalBuffer(std::size_t capacity) : capacity_(capacity) {}

    std::size_t capacity() const { return capacity_; }
    std::size_t size() const { return entries_.size(); }
    bool empty() const { return entries_.empty(); }
    std::int64_t seen_count() const { return seen_; }

    const BufferEntry& entry(std::size_t i) const { return entries_.at(i); }
    const std::vector<BufferEntry>& entries() const { return entries_; }

    friend void reservoir_insert(RehearsalBuffer&, BufferEntry, std::mt19937&);

private:
    std::size_t capacity_;
    std::vector<BufferEntry> entries_;
    std::int64_t seen_ = 0;
};

/// Reservoir step: the candidate ends up stored with probability
/// capacity/(seen_count+1); the stream position advances regardless.
void reservoir_insert(RehearsalBuffer& buffer, BufferEntry candidate, std::mt19937& rng);

/// `n` entries drawn uniformly with replacement. Empty buffer is a caller
/// error.
std::vector<const BufferEntry*> sample_batch(const RehearsalBuffer& buffer, std::size_t n,
                                             std::mt19937& rng);

/// Loss evaluation plus the parameter gradients it induces. The current-batch
/// logits are returned so the caller can stash them into buffer entries.
struct ReplayLossResult {
    double loss = 0.0;
    double current_term = 0.0;
    double replay_ce_term = 0.0;
    double replay_mse_term = 0.0;
    GradientSet grads;
    Tensor current_logits;
};

/// Single-head CE on the current batch only (no replay).
ReplayLossResult plain_loss(const Model& model, const Tensor& inputs, std::span<const int> labels,
                            ClassRange task_range);

/// Single-head CE on the current batch + full-head CE on the replay batch.
ReplayLossResult er_loss(const Model& model, const Tensor& inputs, std::span<const int> labels,
                         std::span<const BufferEntry* const> replay, ClassRange task_range);

/// Single-head CE + coeff_mse * MSE(logits(batch_a), stored logits)
/// + coeff_ce * full-head CE(batch_b).
ReplayLossResult derpp_loss(const Model& model, const Tensor& inputs, std::span<const int> labels,
                            std::span<const BufferEntry* const> replay_a,
                            std::span<const BufferEntry* const> replay_b, double coeff_mse,
                            double coeff_ce, ClassRange task_range);

}  // namespace sparcl
