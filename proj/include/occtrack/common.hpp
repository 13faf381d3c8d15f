// Copyright 2026 The occtrack Authors
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

#ifndef OCCTRACK_COMMON_HPP_
#define OCCTRACK_COMMON_HPP_

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace occtrack {

inline constexpr double kPi = std::numbers::pi;

using Rng = std::mt19937_64;

// Error classes. The numeric value doubles as the CLI exit code.
enum class ErrorCode : int {
  kUsage = 2,
  kInfeasibleGeometry = 10,
  kDegenerateSum = 11,
  kZeroVector = 12,
  kAssumptionViolated = 13,
  kSingularInnovation = 20,
  kEmptyLogs = 30,
  kNoEligibleSteps = 31,
  kSamplingExhausted = 40,
  kNoPath = 41,
  kNonFiniteLoss = 50,
  kNonFiniteOutput = 51,
  kFormat = 60,
  kIo = 61,
};

const char* to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what),
        code_(code) {}

  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

// Derives an independent stream seed from a base seed and a salt
// (splitmix64 finalizer).
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t salt) {
  std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (salt + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

template <typename Scalar>
Scalar wrap_angle(Scalar a) {
  const Scalar two_pi = Scalar(2) * Scalar(kPi);
  a = std::fmod(a + Scalar(kPi), two_pi);
  if (a < Scalar(0)) a += two_pi;
  return a - Scalar(kPi);
}

inline double standard_normal(Rng& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  return n(rng);
}

inline double uniform(Rng& rng, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  return u(rng);
}

inline Eigen::VectorXd gaussian_vector(Rng& rng, Eigen::Index n) {
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = standard_normal(rng);
  return v;
}

}  // namespace occtrack

#endif  // OCCTRACK_COMMON_HPP_
