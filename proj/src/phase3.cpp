// SPDX-License-Identifier: Apache-2.0
#include "layoutforge/phase3.hpp"

#include <string>

#include "layoutforge/errors.hpp"

namespace layoutforge {

namespace {

struct SubjectTerms {
  double mass = 0.0;    // ||A^s||_1
  double inside = 0.0;  // <A^s, M^s>
  double area = 0.0;    // ||M^s||_1
};

void require_masks(const AttentionMaps& maps, const SubjectSet& subjects, const MaskSet& masks) {
  if (subjects.empty()) throw ArgumentError("subject set is empty");
  subjects.validate(maps.tokens());
  if (masks.size() != subjects.size()) {
    throw DimensionError("expected " + std::to_string(subjects.size()) + " masks, got " + std::to_string(masks.size()));
  }
  for (const auto& m : masks) {
    if (m.side() != maps.side()) throw DimensionError("mask side does not match attention maps");
  }
}

SubjectTerms terms_for(const AttentionMaps& maps, int token, const BinaryGrid& mask) {
  SubjectTerms t;
  auto a = maps.slice(token);
  auto bits = mask.bits();
  for (std::size_t i = 0; i < a.size(); ++i) {
    t.mass += a[i];
    if (bits[i]) {
      t.inside += a[i];
      t.area += 1.0;
    }
  }
  return t;
}

double inside_term(const SubjectTerms& t) {
  if (!(t.mass > 0.0)) throw DegenerateError("attention map has zero mass");
  const double d = 1.0 - t.inside / t.mass;
  return d * d;
}

double fill_term(const SubjectTerms& t) {
  if (!(t.area > 0.0)) throw DegenerateError("subject mask is empty");
  const double d = 1.0 - t.inside / t.area;
  return d * d;
}

}  // namespace

double loss_inside(const AttentionMaps& maps, const SubjectSet& subjects, const MaskSet& masks) {
  require_masks(maps, subjects, masks);
  double acc = 0.0;
  for (std::size_t i = 0; i < subjects.size(); ++i) acc += inside_term(terms_for(maps, subjects.tokens()[i], masks[i]));
  return acc / static_cast<double>(subjects.size());
}

double loss_fill(const AttentionMaps& maps, const SubjectSet& subjects, const MaskSet& masks) {
  require_masks(maps, subjects, masks);
  double acc = 0.0;
  for (std::size_t i = 0; i < subjects.size(); ++i) acc += fill_term(terms_for(maps, subjects.tokens()[i], masks[i]));
  return acc / static_cast<double>(subjects.size());
}

Phase3Result loss_phase3(const AttentionMaps& maps, const SubjectSet& subjects, const MaskSet& masks,
                         const LossWeights& weights) {
  require_masks(maps, subjects, masks);
  const double inv_k = 1.0 / static_cast<double>(subjects.size());

  Phase3Result res;
  res.gradient = TokenStack(maps.side(), maps.tokens());
  for (std::size_t i = 0; i < subjects.size(); ++i) {
    const int token = subjects.tokens()[i];
    const SubjectTerms t = terms_for(maps, token, masks[i]);
    res.inside += inside_term(t);
    res.fill += fill_term(t);

    // ratio r = in / mass:  d(1-r)^2/dA_j = -2 (1-r) (M_j - r) / mass
    // ratio q = in / area:  d(1-q)^2/dA_j = -2 (1-q) M_j / area
    const double r = t.inside / t.mass;
    const double q = t.inside / t.area;
    const double gi = -2.0 * (1.0 - r) / t.mass * weights.inside * inv_k;
    const double gf = -2.0 * (1.0 - q) / t.area * weights.fill * inv_k;
    auto g = res.gradient.slice(token);
    auto bits = masks[i].bits();
    for (std::size_t j = 0; j < g.size(); ++j) {
      const double m = bits[j] ? 1.0 : 0.0;
      g[j] += gi * (m - r) + gf * m;
    }
  }
  res.inside *= inv_k;
  res.fill *= inv_k;
  res.total = weights.inside * res.inside + weights.fill * res.fill;
  return res;
}

}  // namespace layoutforge
