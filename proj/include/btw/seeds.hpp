// Copyright 2026 The btw Authors
// SPDX-License-Identifier: Apache-2.0
//
// Every random consumer derives its seed from one experiment seed plus a fixed
// stream tag and an optional index, mixed with splitmix64.

#pragma once

#include <cstdint>

namespace btw {

enum class SeedStream : std::uint64_t {
  kSignal = 1,
  kProjection = 2,
  kModalityNoise = 3,
  kObservationNoise = 4,
  kClassPriors = 5,
  kSplit = 6,
  kInit = 7,
  kTrainShuffle = 8,
  kWeightedShuffle = 9,
  kMiJitter = 10,
};

constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t seed, SeedStream stream, std::uint64_t index = 0) {
  return splitmix64(splitmix64(seed ^ (static_cast<std::uint64_t>(stream) << 48)) + index);
}

}  // namespace btw
