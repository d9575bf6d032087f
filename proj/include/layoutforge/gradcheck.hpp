// SPDX-License-Identifier: Apache-2.0
//
// Built-in finite-difference verification of the analytic gradients, used by
// the `gradcheck` command. Coordinates whose +/- eps perturbation switches a
// discrete choice of the phase-one loss (peak cell, dilation source, norm
// indicator) lie on a kink and are skipped.
#pragma once

#include <cstddef>
#include <cstdint>

namespace layoutforge {

struct GradcheckOptions {
  int side = 16;
  int tokens = 6;
  int subjects = 3;
  int instances = 5;
  std::uint64_t seed = 0;
  double epsilon = 1e-4;
  /// Latent-side grid for the composite check through the toy model.
  int composite_side = 8;
  /// Sampled latent coordinates per composite instance.
  int composite_coords = 128;
  /// Negative control: perturb the analytic gradients before comparing.
  bool corrupt_gradient = false;
};

inline constexpr double kLossGradTolerance = 1e-4;
inline constexpr double kCompositeGradTolerance = 1e-3;

struct GradcheckReport {
  double max_rel_phase1 = 0.0;
  double max_rel_phase3 = 0.0;
  double max_rel_composite = 0.0;
  std::size_t checked = 0;
  std::size_t skipped = 0;
  bool pass = false;
};

/// |a - f| / max(|a|, |f|, 1e-6).
double gradient_relative_error(double analytic, double numeric);

GradcheckReport run_gradcheck(const GradcheckOptions& options);

}  // namespace layoutforge
