// Copyright 2026 The NIRec Lab Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef NIREC_COMMON_H_
#define NIREC_COMMON_H_

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace nirec {

using UserId = std::int32_t;
using ItemId = std::int32_t;
using RawId = std::int64_t;

// Bad or missing input: files, configs, out-of-range ids. Maps to CLI exit 2.
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A numerical procedure failed to converge or produced non-finite values.
// Maps to CLI exit 3.
class ConvergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline double Sigmoid(double x) {
  if (x >= 0) {
    const double z = std::exp(-x);
    return 1.0 / (1.0 + z);
  }
  const double z = std::exp(x);
  return z / (1.0 + z);
}

// log(sigmoid(x)) without overflow.
inline double LogSigmoid(double x) {
  return x >= 0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x));
}

inline std::uint64_t PackPair(std::int32_t a, std::int32_t b) {
  return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(a)) << 32) |
         static_cast<std::uint32_t>(b);
}

using Rng = std::mt19937_64;

inline double Uniform01(Rng& rng) {
  return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

// Uniform integer in [0, n).
inline std::uint64_t UniformIndex(Rng& rng, std::uint64_t n) {
  return n <= 1 ? 0 : std::uniform_int_distribution<std::uint64_t>(0, n - 1)(rng);
}

// Derives an independent stream seed from a base seed and a stream tag.
std::uint64_t DeriveSeed(std::uint64_t seed, std::uint64_t tag);

}  // namespace nirec

#endif  // NIREC_COMMON_H_
