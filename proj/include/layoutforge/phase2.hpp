// SPDX-License-Identifier: Apache-2.0
//
// One-shot layout rearrangement: threshold the attention maps into subject
// masks, move the two most overlapped subjects to the least overlapping
// position (never upward), and migrate the matching latent patches.
#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "layoutforge/tensor.hpp"

namespace layoutforge {

/// Latent pixels per attention patch along each axis.
inline constexpr int kLatentScale = 4;

struct GammaConfig {
  static constexpr double kLower = 0.2;
  static constexpr double kUpper = 0.8;

  double gamma0 = 0.2;
  double step = 0.05;
  /// Target mask-area bounds in patches; 0 picks the default for (P, |S|).
  std::size_t area_lo = 0;
  std::size_t area_hi = 0;

  /// Copy with area bounds filled in: lo = ceil(P^2 / (4|S|)),
  /// hi = min(P^2, floor(2 P^2 / |S|)).
  GammaConfig resolved(int side, std::size_t subject_count) const;
  void validate(int side) const;
};

struct Shift {
  int dy = 0;  // rows, positive is downward
  int dx = 0;
  bool operator==(const Shift&) const = default;
};

struct Mover {
  std::size_t subject = 0;  // index into SubjectSet::tokens()
  double ratio = 0.0;
  Shift shift;
};

struct LayoutPlan {
  std::vector<double> gammas;
  std::vector<BinaryGrid> initial_masks;
  std::vector<BinaryGrid> final_masks;
  std::vector<Mover> movers;  // application order
  std::size_t overlap_before = 0;
  std::size_t overlap_after = 0;

  bool is_identity() const;
};

enum class ImputationMode {
  automatic,  // background copy when a background token exists, else random normal
  random_normal,
  background_copy,
};

struct ImputationConfig {
  ImputationMode mode = ImputationMode::automatic;
  int k = 4;
  std::uint64_t seed = 0;
};

/// Bit set where a > gamma * max(a).
BinaryGrid threshold_mask(const Grid& a, double gamma);

/// Moves gamma from gamma0 in `step` increments inside [0.2, 0.8) until the
/// mask area falls within [area_lo, area_hi]. When stepping overshoots the
/// band the first gamma past the violated bound is returned; when the range
/// runs out, the last gamma inside it.
double adapt_gamma(const Grid& a, const GammaConfig& cfg, std::size_t subject_count);

/// Overlap with the other masks divided by the mask's own area.
double mover_ratio(const std::vector<BinaryGrid>& masks, std::size_t s);

/// Up to two subjects by descending mover ratio (ties: lower index first).
/// Empty when fewer than two subjects or nothing overlaps.
std::vector<std::size_t> select_movers(const std::vector<BinaryGrid>& masks);

/// Sum over unordered pairs of intersection areas.
std::size_t total_overlap(const std::vector<BinaryGrid>& masks);

/// Sum over `others` of area(translate(mask, shift) & other).
std::size_t shift_overlap(const BinaryGrid& mask, Shift shift, const std::vector<BinaryGrid>& others);

/// Exhaustive search over in-grid shifts with dy >= 0. Ties prefer the
/// smallest |dy|+|dx|, then dy, then dx.
Shift search_shift(const BinaryGrid& mask, const std::vector<BinaryGrid>& others);

/// Mover selection and sequential shift search on given initial masks.
LayoutPlan plan_from_masks(std::vector<BinaryGrid> initial_masks);

/// Threshold with adapted gamma per subject, then plan_from_masks.
LayoutPlan plan_layout(const AttentionMaps& maps, const SubjectSet& subjects, const GammaConfig& cfg);

/// Nearest-neighbour expansion: each bit becomes a factor x factor block.
BinaryGrid upscale_mask(const BinaryGrid& mask, int factor = kLatentScale);

/// Latent-resolution footprint of a plan.
struct MigrationRegions {
  BinaryGrid sources;       // union of upscaled initial mover masks
  BinaryGrid destinations;  // union of their translates
  BinaryGrid vacated;       // sources minus destinations
};

MigrationRegions migration_regions(const LayoutPlan& plan, int side);

/// Copies every mover's latent pixels (all channels) to its shifted location,
/// reading from the input latent; later movers overwrite earlier ones.
/// Vacated pixels, visited row-major with channels innermost, get standard
/// normal draws or, in background mode, the patches of the k highest
/// background-attention cells, cycled in descending order per vacated patch.
LatentGrid migrate_latent(const LatentGrid& z, const LayoutPlan& plan, const AttentionMaps& maps,
                          const SubjectSet& subjects, const ImputationConfig& cfg);

}  // namespace layoutforge
