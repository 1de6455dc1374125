#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace fedpca {

using Rng = std::mt19937_64;

// splitmix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Derives an independent stream seed from a base seed and a path of
// integers, e.g. (seed, round, client, purpose). Order-sensitive.
constexpr std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> path) {
  std::uint64_t h = mix64(base);
  for (std::uint64_t p : path) h = mix64(h ^ mix64(p + 0x632be59bd9b4e019ULL));
  return h;
}

// Stream purposes, so two uses of the same (round, client) never share bits.
enum class Stream : std::uint64_t {
  kModelInit = 1,
  kLocalTrain = 2,
  kClientKMeans = 3,
  kGmm = 4,
  kBaseData = 5,
  kCorruption = 6,
  kLabelFlip = 7,
  kPartition = 8,
  kTestCommon = 9,
  kTestRare = 10,
  kNoisePlacement = 11,
};

inline Rng make_rng(std::uint64_t base, Stream purpose, std::initializer_list<std::uint64_t> path = {}) {
  std::uint64_t h = derive_seed(base, {static_cast<std::uint64_t>(purpose)});
  for (std::uint64_t p : path) h = mix64(h ^ mix64(p + 0x632be59bd9b4e019ULL));
  return Rng(h);
}

}  // namespace fedpca
