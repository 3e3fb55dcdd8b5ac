#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace mirc {

/// Half-open frame range [start, end).
struct FrameBlock {
  std::size_t start = 0;
  std::size_t end = 0;
  std::size_t size() const { return end - start; }
  friend bool operator==(const FrameBlock&, const FrameBlock&) = default;
};

struct ScramblePlan {
  std::size_t frame_count = 0;
  int n_blocks = 5;
  std::vector<FrameBlock> blocks;
  /// 1-based original block indices in output order.
  std::vector<int> permutation;
  std::uint64_t seed = 0;

  friend bool operator==(const ScramblePlan&, const ScramblePlan&) = default;
};

/// The first (frame_count mod n) blocks get one extra frame.
/// Throws Error(TooShortClip) when frame_count < n, Error(Usage) when n < 2.
std::vector<FrameBlock> partition_blocks(std::size_t frame_count, int n);

/// (i) block 1 moved off position 1; (ii) block n in a middle position 2..n-1;
/// (iii) no originally adjacent blocks consecutive in either order.
bool is_valid_permutation(std::span<const int> perm, int n);

/// Every valid permutation of 1..n in lexicographic order.
const std::vector<std::vector<int>>& valid_permutations(int n);

/// Uniform draw from the valid set. Deterministic in (frame_count, seed, n).
ScramblePlan sample_scramble(std::size_t frame_count, std::uint64_t seed, int n = 5);

/// Builds a plan around an explicit permutation. `validate` = false only for tests.
ScramblePlan make_plan(std::size_t frame_count, std::vector<int> permutation, std::uint64_t seed = 0,
                       bool validate = true);

/// Scrambled playback order: output blocks in plan order, frames ascending within each.
/// Throws Error(Integrity) if the plan was built for a different frame count.
std::vector<std::size_t> materialize(std::size_t frame_count, const ScramblePlan& plan);

}  // namespace mirc
