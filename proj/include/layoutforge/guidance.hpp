// SPDX-License-Identifier: Apache-2.0
//
// Three-phase guidance over a synthetic reverse-diffusion schedule. A small
// differentiable attention model stands in for the denoiser's cross-attention
// so the latent can be driven by the phase losses end to end.
#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "layoutforge/phase1.hpp"
#include "layoutforge/phase2.hpp"
#include "layoutforge/phase3.hpp"
#include "layoutforge/tensor.hpp"

namespace layoutforge {

struct PhaseSchedule {
  int total_steps = 50;  // T
  int tau = 15;          // phase-one length
  int iters_per_step = 1;
  double alpha = 0.1;    // latent step size
  /// Step size for the mask-following steps; 0 reuses alpha.
  double alpha_follow = 100.0;

  double follow_step() const { return alpha_follow > 0.0 ? alpha_follow : alpha; }

  /// Step at which the layout is rearranged (T - tau).
  int rearrange_step() const { return total_steps - tau; }
  void validate() const;
};

struct AblationFlags {
  bool enable_be = true;
  bool enable_ol = true;
  bool enable_norm = true;
  bool enable_inside = true;
  bool enable_fill = true;
  bool enable_pixel_realloc = true;
  bool enable_restart = true;

  static AblationFlags all_off();
  /// Weights with disabled terms zeroed.
  LossWeights filter(const LossWeights& w) const;
};

/// Per-patch dot-product attention: for each non-overlapping 4x4 latent
/// block, logits[n] = <K_n, block> over all channels, softmax over tokens.
class ToyAttentionModel {
 public:
  static constexpr double kDefaultKeyScale = 0.5;

  ToyAttentionModel(int tokens, int channels, std::uint64_t seed, double key_scale = kDefaultKeyScale);
  /// Explicit keys, each of length channels * 16 (channel, row, col order).
  ToyAttentionModel(std::vector<std::vector<double>> keys, int channels);

  int tokens() const { return static_cast<int>(keys_.size()); }
  int channels() const { return channels_; }
  const std::vector<std::vector<double>>& keys() const { return keys_; }

  AttentionMaps forward(const LatentGrid& z) const;

  /// Vector-Jacobian product: maps dL/dA at `maps = forward(z)` to dL/dz.
  LatentGrid backward(const LatentGrid& z, const AttentionMaps& maps, const TokenStack& grad) const;

 private:
  void require_latent(const LatentGrid& z) const;

  int channels_;
  std::vector<std::vector<double>> keys_;
};

AttentionMaps toy_attention(const LatentGrid& z, const ToyAttentionModel& model);

struct GuidanceConfig {
  PhaseSchedule schedule;
  AblationFlags flags;
  LossWeights weights;
  GammaConfig gamma;
  ImputationConfig imputation;
  /// Smooth maps with a 3x3 Gaussian (sigma 0.5) before thresholding masks.
  bool smooth_masks = false;
};

enum class Phase { excite = 1, rearrange = 2, follow = 3 };

struct Phase1Losses {
  double be = 0.0;
  double ol_total = 0.0;
  double norm_total = 0.0;
  double total = 0.0;  // flag-filtered weighted sum
};

struct Phase3Losses {
  double inside = 0.0;
  double fill = 0.0;
  double total = 0.0;  // flag-filtered weighted sum
};

/// One record per diffusion step, losses measured before that step's update.
struct StepRecord {
  int t = 0;
  Phase phase = Phase::excite;
  std::optional<Phase1Losses> phase1;
  std::optional<Phase3Losses> phase3;
  std::vector<double> max_attention;  // per subject
};

struct GuidanceTrace {
  std::vector<StepRecord> records;
  LatentGrid final_latent;
  std::optional<AttentionMaps> final_attention;
  std::optional<LayoutPlan> plan;
  /// Weighted phase-three loss right after rearrangement and at the end.
  double loss3_after_rearrange = 0.0;
  double loss3_final = 0.0;
};

/// Shift and scale each channel so its mean and variance equal `reference`'s.
LatentGrid restandardize_channels(const LatentGrid& z, const LatentGrid& reference);

/// z_T ~ N(0, 1), C x 4P x 4P.
LatentGrid random_latent(int channels, int side, std::uint64_t seed);

GuidanceTrace run_guidance(const LatentGrid& z_T, const ToyAttentionModel& model, const SubjectSet& subjects,
                           const GuidanceConfig& cfg);

}  // namespace layoutforge
