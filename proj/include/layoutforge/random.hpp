// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <random>

namespace layoutforge {

/// Standard normal draws from a seeded mt19937_64 via Box-Muller.
/// std::normal_distribution is implementation-defined, this is not, so
/// seeded outputs match across standard libraries.
class NormalStream {
 public:
  explicit NormalStream(std::uint64_t seed) : engine_(seed) {}

  double next();
  double uniform();  // [0, 1)

 private:
  std::mt19937_64 engine_;
  std::optional<double> spare_;
};

}  // namespace layoutforge
