// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "layoutforge/phase1.hpp"
#include "layoutforge/tensor.hpp"

namespace layoutforge {

/// One nonempty P x P mask per subject, in SubjectSet::tokens() order.
using MaskSet = std::vector<BinaryGrid>;

/// Mean over subjects of (1 - <A^s, M^s> / ||A^s||_1)^2.
double loss_inside(const AttentionMaps& maps, const SubjectSet& subjects, const MaskSet& masks);

/// Mean over subjects of (1 - <A^s, M^s> / ||M^s||_1)^2.
double loss_fill(const AttentionMaps& maps, const SubjectSet& subjects, const MaskSet& masks);

struct Phase3Result {
  double total = 0.0;
  double inside = 0.0;
  double fill = 0.0;
  TokenStack gradient;
};

/// lambda_inside * L_inside + lambda_fill * L_fill with the full gradient,
/// including the ||A^s||_1 denominator.
Phase3Result loss_phase3(const AttentionMaps& maps, const SubjectSet& subjects, const MaskSet& masks,
                         const LossWeights& weights);

}  // namespace layoutforge
