#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <vector>

namespace coride {

using Rng = std::mt19937_64;

/// Independent generator for a tuple of stream ids, e.g. (seed, episode, step, grid).
/// The same ids always give the same stream regardless of call order.
inline Rng make_stream(std::initializer_list<std::uint64_t> ids) {
  std::vector<std::uint32_t> words;
  words.reserve(ids.size() * 2);
  for (std::uint64_t id : ids) {
    words.push_back(static_cast<std::uint32_t>(id & 0xffffffffu));
    words.push_back(static_cast<std::uint32_t>(id >> 32));
  }
  std::seed_seq seq(words.begin(), words.end());
  return Rng(seq);
}

// Uniform in [0, 1) from the top 53 bits; stable across standard libraries.
inline double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline int uniform_index(Rng& rng, int n) {
  return static_cast<int>(uniform01(rng) * n);
}

// Stream tags keep order generation and policy sampling on disjoint streams.
enum class StreamTag : std::uint64_t {
  Orders = 1,
  Selection = 2,
  Policy = 3,
  Churn = 4,
  Init = 5,
  Replay = 6,
  Trace = 7,
};

inline std::uint64_t tag(StreamTag t) { return static_cast<std::uint64_t>(t); }

}  // namespace coride
