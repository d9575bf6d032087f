// SPDX-License-Identifier: Apache-2.0
//
// Excite-and-distinguish objectives applied during the first guidance steps:
// blocking masks, the blocked excitation loss, the dilated overlap loss and
// the conditional norm penalty, with gradients with respect to the maps.
#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "layoutforge/tensor.hpp"

namespace layoutforge {

/// Scaling factors for every guidance loss plus the blocking rectangle size.
struct LossWeights {
  double be = 1.0;
  double ol = 0.5;
  double norm = 0.1;
  double inside = 1.0;
  double fill = 1.0;
  /// Blocking rectangle side in patches; 0 selects default_rect_side(P).
  int rect_side = 0;

  int rect_side_for(int side) const;
  void validate(int side) const;
};

/// max(3, P/4), capped at P.
int default_rect_side(int side);

/// Subject tokens by descending peak attention, ties by ascending token index.
std::vector<int> sort_tokens_by_max(const AttentionMaps& maps, const SubjectSet& subjects);

/// Axis-aligned square of `rect_side` cells around `center`, clipped to the grid.
/// Even sides extend one cell further up/left than down/right.
BinaryGrid rectangle_around(int side, Cell center, int rect_side);

/// Cumulative blocking masks. masks[i] covers every rectangle placed for
/// order[0..i]; token order[i] is filtered with masks[i-1] (empty for i = 0).
struct BlockingSequence {
  std::vector<int> order;
  std::vector<BinaryGrid> masks;
  /// Peak of the filtered map for order[i]; empty only when masks[i-1]
  /// already covers the whole grid.
  std::vector<std::optional<Cell>> peaks;
  /// Max of the filtered map for order[i].
  std::vector<double> filtered_max;
};

BlockingSequence build_blocking_sequence(const AttentionMaps& maps, const SubjectSet& subjects,
                                         const LossWeights& weights);

double loss_be(const AttentionMaps& maps, const SubjectSet& subjects, const BlockingSequence& seq);

struct OverlapLoss {
  std::vector<double> per_subject;  // same order as SubjectSet::tokens()
  double total = 0.0;
};

OverlapLoss loss_overlap(const AttentionMaps& maps, const SubjectSet& subjects);

/// C = P^2 / |S|.
double norm_threshold(int side, std::size_t subject_count);

/// ||A^s||_F when it exceeds C, else 0. Same order as SubjectSet::tokens().
std::vector<double> loss_norm(const AttentionMaps& maps, const SubjectSet& subjects);

/// Every discrete choice taken while evaluating the phase-one loss. Two
/// evaluations with equal branches lie on the same smooth piece.
struct Phase1Branch {
  std::vector<int> order;
  std::vector<std::optional<Cell>> peaks;
  std::size_t be_winner = 0;  // index into order
  std::vector<std::vector<std::size_t>> dilation_sources;
  std::vector<bool> norm_active;

  bool operator==(const Phase1Branch&) const = default;
};

struct Phase1Result {
  double total = 0.0;
  double be = 0.0;
  OverlapLoss overlap;
  std::vector<double> norm;
  TokenStack gradient;  // d total / d A, P x P x N
  Phase1Branch branch;
};

/// lambda_be * L_be + sum_s (lambda_ol * L_ol^s + lambda_norm * L_norm^s).
/// Max operators send gradient to their tie-broken arg-max only; blocking
/// masks and the norm indicator are constants under differentiation.
Phase1Result loss_phase1(const AttentionMaps& maps, const SubjectSet& subjects, const LossWeights& weights);

}  // namespace layoutforge
