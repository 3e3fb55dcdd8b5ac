#include "mirc/scramble.hpp"

#include <algorithm>
#include <cstdlib>
#include <map>
#include <mutex>
#include <numeric>
#include <string>

#include "mirc/error.hpp"
#include "mirc/rng.hpp"

namespace mirc {

std::vector<FrameBlock> partition_blocks(std::size_t frame_count, int n) {
  if (n < 2) throw Error(ErrorKind::Usage, "scramble: need at least 2 blocks");
  const auto blocks = static_cast<std::size_t>(n);
  if (frame_count < blocks) {
    throw Error(ErrorKind::TooShortClip, "scramble: " + std::to_string(frame_count) + " frames cannot form " +
                                             std::to_string(n) + " blocks");
  }
  const std::size_t base = frame_count / blocks;
  const std::size_t extra = frame_count % blocks;
  std::vector<FrameBlock> out;
  out.reserve(blocks);
  std::size_t start = 0;
  for (std::size_t b = 0; b < blocks; ++b) {
    const std::size_t len = base + (b < extra ? 1 : 0);
    out.push_back({start, start + len});
    start += len;
  }
  return out;
}

bool is_valid_permutation(std::span<const int> perm, int n) {
  if (static_cast<int>(perm.size()) != n || n < 1) return false;
  if (perm.front() == 1) return false;
  const auto last = std::find(perm.begin(), perm.end(), n);
  const auto pos = last - perm.begin();  // 0-based
  if (pos == 0 || pos == n - 1) return false;
  for (std::size_t i = 1; i < perm.size(); ++i)
    if (std::abs(perm[i] - perm[i - 1]) == 1) return false;
  return true;
}

const std::vector<std::vector<int>>& valid_permutations(int n) {
  static std::mutex mu;
  static std::map<int, std::vector<std::vector<int>>> cache;
  std::lock_guard lock(mu);
  auto it = cache.find(n);
  if (it != cache.end()) return it->second;
  std::vector<std::vector<int>> valid;
  std::vector<int> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), 1);
  do {
    if (is_valid_permutation(perm, n)) valid.push_back(perm);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return cache.emplace(n, std::move(valid)).first->second;
}

ScramblePlan make_plan(std::size_t frame_count, std::vector<int> permutation, std::uint64_t seed, bool validate) {
  const int n = static_cast<int>(permutation.size());
  ScramblePlan plan;
  plan.frame_count = frame_count;
  plan.n_blocks = n;
  plan.blocks = partition_blocks(frame_count, n);
  plan.seed = seed;
  std::vector<int> sorted = permutation;
  std::sort(sorted.begin(), sorted.end());
  for (int i = 0; i < n; ++i)
    if (sorted[static_cast<std::size_t>(i)] != i + 1) throw Error(ErrorKind::Integrity, "scramble: permutation is not a bijection on 1..n");
  if (validate && !is_valid_permutation(permutation, n))
    throw Error(ErrorKind::Integrity, "scramble: permutation violates the ordering constraints");
  plan.permutation = std::move(permutation);
  return plan;
}

ScramblePlan sample_scramble(std::size_t frame_count, std::uint64_t seed, int n) {
  // Partition first so short clips fail before the validity check.
  partition_blocks(frame_count, n);
  const auto& valid = valid_permutations(n);
  if (valid.empty()) {
    throw Error(ErrorKind::NoValidPermutation,
                "scramble: no permutation of " + std::to_string(n) + " blocks satisfies the constraints");
  }
  Rng rng(seed);
  const auto pick = rng.below(valid.size());
  return make_plan(frame_count, valid[pick], seed);
}

std::vector<std::size_t> materialize(std::size_t frame_count, const ScramblePlan& plan) {
  if (plan.frame_count != frame_count || plan.blocks.empty() || plan.blocks.back().end != frame_count) {
    throw Error(ErrorKind::Integrity, "scramble: plan built for " + std::to_string(plan.frame_count) +
                                          " frames applied to a " + std::to_string(frame_count) + "-frame clip");
  }
  std::vector<std::size_t> order;
  order.reserve(frame_count);
  for (int b : plan.permutation) {
    const FrameBlock& blk = plan.blocks.at(static_cast<std::size_t>(b - 1));
    for (std::size_t f = blk.start; f < blk.end; ++f) order.push_back(f);
  }
  return order;
}

}  // namespace mirc
