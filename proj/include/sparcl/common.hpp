#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace sparcl {

/// Shape or dimension mismatch between tensors, layers, or masks.
class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A NaN or Inf appeared where only finite values are valid.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed input file (bad magic, truncation, count mismatch).
class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Half-open class interval [begin, end).
struct ClassRange {
    int begin = 0;
    int end = 0;

    int size() const { return end - begin; }
    bool contains(int c) const { return c >= begin && c < end; }
    bool operator==(const ClassRange&) const = default;
};

// Named sub-streams derived from the single run seed. Every consumer of
// randomness owns one stream, so the draw order inside one stream is fixed
// by the training loop alone.
namespace rng_stream {
inline constexpr std::uint32_t kWeightInit = 1;
inline constexpr std::uint32_t kMaskInit = 2;
inline constexpr std::uint32_t kShuffle = 3;
inline constexpr std::uint32_t kReservoir = 4;
inline constexpr std::uint32_t kMaskGrow = 5;
inline constexpr std::uint32_t kScoreSample = 6;
inline constexpr std::uint32_t kReplaySample = 7;
inline constexpr std::uint32_t kData = 8;
}  // namespace rng_stream

inline std::mt19937 make_rng(std::uint32_t seed, std::uint32_t stream) {
    std::seed_seq seq{seed, stream};
    return std::mt19937(seq);
}

}  // namespace sparcl
