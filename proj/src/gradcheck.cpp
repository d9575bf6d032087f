// SPDX-License-Identifier: Apache-2.0
#include "layoutforge/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "layoutforge/errors.hpp"
#include "layoutforge/guidance.hpp"
#include "layoutforge/phase1.hpp"
#include "layoutforge/phase3.hpp"
#include "layoutforge/random.hpp"

namespace layoutforge {

namespace {

constexpr double kCorruption = 1.01;

TokenStack random_stack(NormalStream& rng, int side, int tokens, double lo, double hi) {
  TokenStack s(side, tokens);
  for (double& v : s.values()) v = lo + (hi - lo) * rng.uniform();
  return s;
}

SubjectSet random_subjects(NormalStream& rng, int tokens, int count) {
  std::vector<int> pool(static_cast<std::size_t>(tokens));
  std::iota(pool.begin(), pool.end(), 0);
  for (std::size_t i = pool.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.uniform() * static_cast<double>(i));
    std::swap(pool[i - 1], pool[std::min(j, i - 1)]);
  }
  pool.resize(static_cast<std::size_t>(count));
  return SubjectSet(pool);
}

MaskSet random_masks(NormalStream& rng, int side, std::size_t count) {
  MaskSet masks;
  for (std::size_t i = 0; i < count; ++i) {
    BinaryGrid m(side);
    for (int r = 0; r < side; ++r) {
      for (int c = 0; c < side; ++c) m.set(r, c, rng.uniform() < 0.3);
    }
    m.set(static_cast<int>(rng.uniform() * side), static_cast<int>(rng.uniform() * side));
    masks.push_back(std::move(m));
  }
  return masks;
}

void track(double& worst, double analytic, double numeric, bool corrupt) {
  worst = std::max(worst, gradient_relative_error(corrupt ? analytic * kCorruption : analytic, numeric));
}

}  // namespace

double gradient_relative_error(double analytic, double numeric) {
  const double scale = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
  return std::abs(analytic - numeric) / scale;
}

GradcheckReport run_gradcheck(const GradcheckOptions& o) {
  if (o.subjects < 1 || o.subjects > o.tokens) throw ConfigError("gradcheck needs 1 <= subjects <= tokens");
  if (o.side < 2 || o.composite_side < 2) throw ConfigError("gradcheck needs grid side >= 2");
  if (!(o.epsilon > 0.0)) throw ConfigError("gradcheck epsilon must be positive");

  NormalStream rng(o.seed);
  GradcheckReport rep;
  const LossWeights weights;
  const double eps = o.epsilon;

  for (int inst = 0; inst < o.instances; ++inst) {
    const SubjectSet subjects = random_subjects(rng, o.tokens, o.subjects);

    // Phase one on A directly; every other instance is scaled so the norm
    // penalty is active.
    {
      TokenStack a = random_stack(rng, o.side, o.tokens, 0.0, 1.0);
      if (inst % 2 == 1) {
        for (double& v : a.values()) v *= 1.5 * static_cast<double>(o.side) / static_cast<double>(o.subjects);
      }
      const Phase1Result base = loss_phase1(AttentionMaps(a), subjects, weights);
      for (std::size_t j = 0; j < a.values().size(); ++j) {
        TokenStack plus = a;
        TokenStack minus = a;
        plus.values()[j] += eps;
        minus.values()[j] = std::max(0.0, minus.values()[j] - eps);
        const double h = plus.values()[j] - minus.values()[j];
        const Phase1Result rp = loss_phase1(AttentionMaps(std::move(plus)), subjects, weights);
        const Phase1Result rm = loss_phase1(AttentionMaps(std::move(minus)), subjects, weights);
        if (!(rp.branch == base.branch) || !(rm.branch == base.branch)) {
          ++rep.skipped;
          continue;
        }
        track(rep.max_rel_phase1, base.gradient.values()[j], (rp.total - rm.total) / h, o.corrupt_gradient);
        ++rep.checked;
      }
    }

    // Phase three on A directly.
    {
      const TokenStack a = random_stack(rng, o.side, o.tokens, 0.05, 1.0);
      const MaskSet masks = random_masks(rng, o.side, subjects.size());
      const Phase3Result base = loss_phase3(AttentionMaps(a), subjects, masks, weights);
      for (std::size_t j = 0; j < a.values().size(); ++j) {
        TokenStack plus = a;
        TokenStack minus = a;
        plus.values()[j] += eps;
        minus.values()[j] -= eps;
        const double fp = loss_phase3(AttentionMaps(std::move(plus)), subjects, masks, weights).total;
        const double fm = loss_phase3(AttentionMaps(std::move(minus)), subjects, masks, weights).total;
        track(rep.max_rel_phase3, base.gradient.values()[j], (fp - fm) / (2.0 * eps), o.corrupt_gradient);
        ++rep.checked;
      }
    }

    // Composite through the toy model, sampled latent coordinates.
    {
      const ToyAttentionModel model(o.tokens, 4, o.seed + 7919u * static_cast<unsigned>(inst + 1));
      const LatentGrid z = random_latent(4, o.composite_side, o.seed + 1000u + static_cast<unsigned>(inst));
      const MaskSet masks = random_masks(rng, o.composite_side, subjects.size());
      const AttentionMaps a = model.forward(z);
      const Phase1Result p1 = loss_phase1(a, subjects, weights);
      const Phase3Result p3 = loss_phase3(a, subjects, masks, weights);
      const LatentGrid g1 = model.backward(z, a, p1.gradient);
      const LatentGrid g3 = model.backward(z, a, p3.gradient);
      for (int k = 0; k < o.composite_coords; ++k) {
        const auto j = std::min(z.values().size() - 1,
                                static_cast<std::size_t>(rng.uniform() * static_cast<double>(z.values().size())));
        LatentGrid plus = z;
        LatentGrid minus = z;
        plus.values()[j] += eps;
        minus.values()[j] -= eps;
        const AttentionMaps ap = model.forward(plus);
        const AttentionMaps am = model.forward(minus);
        const Phase1Result rp = loss_phase1(ap, subjects, weights);
        const Phase1Result rm = loss_phase1(am, subjects, weights);
        if (rp.branch == p1.branch && rm.branch == p1.branch) {
          track(rep.max_rel_composite, g1.values()[j], (rp.total - rm.total) / (2.0 * eps), o.corrupt_gradient);
          ++rep.checked;
        } else {
          ++rep.skipped;
        }
        const double fp = loss_phase3(ap, subjects, masks, weights).total;
        const double fm = loss_phase3(am, subjects, masks, weights).total;
        track(rep.max_rel_composite, g3.values()[j], (fp - fm) / (2.0 * eps), o.corrupt_gradient);
        ++rep.checked;
      }
    }
  }

  rep.pass = rep.max_rel_phase1 < kLossGradTolerance && rep.max_rel_phase3 < kLossGradTolerance &&
             rep.max_rel_composite < kCompositeGradTolerance;
  return rep;
}

}  // namespace layoutforge
