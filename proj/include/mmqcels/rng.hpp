// Copyright 2026 The mmqcels Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef MMQCELS_RNG_HPP_
#define MMQCELS_RNG_HPP_

#include <cmath>
#include <cstdint>

namespace mmqcels {

// Splitmix64 stream with cheap keyed substreams.  Every sample in a dataset
// gets its own substream keyed by (seed, sample index), so generation order
// never affects the draws and results are bit-reproducible for a given seed.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed) : root_(seed), state_(seed) {}

  // Derives an independent stream; does not depend on draws made so far.
  RngStream substream(std::uint64_t key) const {
    return RngStream(mix(root_, key));
  }

  static std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
    std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 0x632be59bd9b4e019ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  std::uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Standard normal via Marsaglia's polar method (no cached second value, so
  // the draw sequence is a pure function of call order).
  double normal() {
    for (;;) {
      double u = 2.0 * uniform() - 1.0;
      double v = 2.0 * uniform() - 1.0;
      double s = u * u + v * v;
      if (s > 0.0 && s < 1.0) return u * std::sqrt(-2.0 * std::log(s) / s);
    }
  }

 private:
  std::uint64_t root_;
  std::uint64_t state_;
};

}  // namespace mmqcels

#endif  // MMQCELS_RNG_HPP_
