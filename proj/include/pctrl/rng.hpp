#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace pctrl {

using Rng = std::mt19937_64;

// Stream purposes. Mixed into derived seeds so e.g. the evaluation channels
// never share a stream with training rollouts.
enum class Stream : std::uint64_t {
  init = 1,
  rollout = 2,
  critic = 3,
  normalization = 4,
  eval_channel = 5,
  eval_policy = 6,
  baseline = 7,
  timing = 8,
  solver_instance = 9,
};

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Deterministic seed for (master, purpose, indices...).
inline std::uint64_t derive_seed(std::uint64_t master, Stream purpose,
                                 std::initializer_list<std::uint64_t> indices = {}) {
  std::uint64_t h = splitmix64(master ^ splitmix64(static_cast<std::uint64_t>(purpose)));
  for (auto i : indices) h = splitmix64(h ^ splitmix64(i + 0x632be59bd9b4e019ULL));
  return h;
}

inline Rng make_rng(std::uint64_t master, Stream purpose,
                    std::initializer_list<std::uint64_t> indices = {}) {
  return Rng(derive_seed(master, purpose, indices));
}

}  // namespace pctrl
