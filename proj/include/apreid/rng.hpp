// Copyright (C) 2026 the apreid authors. All rights reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License"); you may not use this file except in compliance
// with the License. You may obtain a copy of the License at
//
// http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software distributed under the License
// is distributed on an "AS IS" BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express
// or implied. See the License for the specific language governing permissions and limitations under the License.

#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace apreid {

// All randomness in the project flows through this header. Distributions are
// implemented by hand on top of the mt19937_64 bit stream because the standard
// library distribution objects are implementation-defined; every draw here is
// reproducible for a fixed seed.

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Named sub-seed derivation: one top-level seed fans out into independent
// streams ("train", "synth", "shuffle", "distractor-order", ...), optionally
// indexed (epoch number, sample ordinal, ...).
inline std::uint64_t derive_seed(std::uint64_t base, std::string_view label) {
  return splitmix64(base ^ fnv1a64(label));
}

inline std::uint64_t derive_seed(std::uint64_t base, std::string_view label,
                                 std::uint64_t index) {
  return splitmix64(derive_seed(base, label) ^ splitmix64(index));
}

inline std::uint64_t derive_seed(std::uint64_t base, std::string_view label,
                                 std::uint64_t i, std::uint64_t j) {
  return splitmix64(derive_seed(base, label, i) ^ splitmix64(j ^ 0x5851f42d4c957f2dULL));
}

// Inverse standard normal CDF (Acklam's rational approximation, |rel err| < 1.2e-9).
double inverse_normal_cdf(double p);

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t next_u64() { return gen_(); }

  // Uniform on the open interval (0, 1); never returns an exact endpoint.
  double uniform01() {
    return (static_cast<double>(gen_() >> 11) + 0.5) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // Standard normal via inverse-transform sampling; exactly one draw consumed.
  double normal() { return inverse_normal_cdf(uniform01()); }

  std::uint64_t bounded(std::uint64_t n) { return n == 0 ? 0 : gen_() % n; }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(bounded(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::mt19937_64 gen_;
};

}  // namespace apreid
