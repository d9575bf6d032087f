// SPDX-License-Identifier: Apache-2.0
#include "layoutforge/guidance.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "layoutforge/errors.hpp"
#include "layoutforge/random.hpp"

namespace layoutforge {

namespace {

constexpr int kBlock = kLatentScale * kLatentScale;

std::vector<double> subject_maxima(const AttentionMaps& maps, const SubjectSet& subjects) {
  std::vector<double> out;
  for (int t : subjects.tokens()) {
    auto s = maps.slice(t);
    out.push_back(*std::max_element(s.begin(), s.end()));
  }
  return out;
}

bool any_positive(const LossWeights& w, bool phase_one) {
  return phase_one ? (w.be > 0.0 || w.ol > 0.0 || w.norm > 0.0) : (w.inside > 0.0 || w.fill > 0.0);
}

void descend(LatentGrid& z, const LatentGrid& grad, double alpha) {
  auto v = z.values();
  auto g = grad.values();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] -= alpha * g[i];
}

}  // namespace

void PhaseSchedule::validate() const {
  if (!(tau > 0 && tau < total_steps)) throw ConfigError("schedule needs 0 < tau < T");
  if (iters_per_step < 1) throw ConfigError("iters_per_step must be >= 1");
  if (!(alpha > 0.0) || !std::isfinite(alpha)) throw ConfigError("alpha must be positive");
  if (!(alpha_follow >= 0.0) || !std::isfinite(alpha_follow)) throw ConfigError("alpha_follow must be nonnegative");
}

AblationFlags AblationFlags::all_off() { return AblationFlags{false, false, false, false, false, false, false}; }

LossWeights AblationFlags::filter(const LossWeights& w) const {
  LossWeights out = w;
  if (!enable_be) out.be = 0.0;
  if (!enable_ol) out.ol = 0.0;
  if (!enable_norm) out.norm = 0.0;
  if (!enable_inside) out.inside = 0.0;
  if (!enable_fill) out.fill = 0.0;
  return out;
}

// ---------------------------------------------------------------- toy model

ToyAttentionModel::ToyAttentionModel(int tokens, int channels, std::uint64_t seed, double key_scale)
    : channels_(channels) {
  if (tokens < 1 || channels < 1) throw ArgumentError("toy model needs tokens >= 1 and channels >= 1");
  NormalStream rng(seed);
  keys_.assign(static_cast<std::size_t>(tokens), std::vector<double>(static_cast<std::size_t>(channels * kBlock)));
  for (auto& k : keys_) {
    for (double& v : k) v = key_scale * rng.next();
  }
}

ToyAttentionModel::ToyAttentionModel(std::vector<std::vector<double>> keys, int channels)
    : channels_(channels), keys_(std::move(keys)) {
  if (keys_.empty() || channels < 1) throw ArgumentError("toy model needs tokens >= 1 and channels >= 1");
  for (const auto& k : keys_) {
    if (k.size() != static_cast<std::size_t>(channels * kBlock)) throw DimensionError("toy model key length");
  }
}

void ToyAttentionModel::require_latent(const LatentGrid& z) const {
  if (z.channels() != channels_) throw DimensionError("latent channel count does not match toy model");
  if (z.height() != z.width() || z.height() % kLatentScale != 0 || z.height() / kLatentScale < 2) {
    throw DimensionError("latent must be square with side 4P, P >= 2");
  }
}

AttentionMaps ToyAttentionModel::forward(const LatentGrid& z) const {
  require_latent(z);
  const int p = z.height() / kLatentScale;
  const int n_tok = tokens();
  TokenStack out(p, n_tok);
  std::vector<double> logits(static_cast<std::size_t>(n_tok));
  for (int pr = 0; pr < p; ++pr) {
    for (int pc = 0; pc < p; ++pc) {
      for (int n = 0; n < n_tok; ++n) {
        const auto& key = keys_[static_cast<std::size_t>(n)];
        double acc = 0.0;
        std::size_t i = 0;
        for (int c = 0; c < channels_; ++c) {
          for (int oy = 0; oy < kLatentScale; ++oy) {
            for (int ox = 0; ox < kLatentScale; ++ox) {
              acc += key[i++] * z.at(c, pr * kLatentScale + oy, pc * kLatentScale + ox);
            }
          }
        }
        logits[static_cast<std::size_t>(n)] = acc;
      }
      const double top = *std::max_element(logits.begin(), logits.end());
      double denom = 0.0;
      for (double& l : logits) {
        l = std::exp(l - top);
        denom += l;
      }
      for (int n = 0; n < n_tok; ++n) out.at(pr, pc, n) = logits[static_cast<std::size_t>(n)] / denom;
    }
  }
  return AttentionMaps(std::move(out));
}

LatentGrid ToyAttentionModel::backward(const LatentGrid& z, const AttentionMaps& maps, const TokenStack& grad) const {
  require_latent(z);
  const int p = z.height() / kLatentScale;
  const int n_tok = tokens();
  if (maps.side() != p || maps.tokens() != n_tok || grad.side() != p || grad.tokens() != n_tok) {
    throw DimensionError("backward: attention/gradient shape does not match latent");
  }
  LatentGrid dz(z.channels(), z.height(), z.width());
  std::vector<double> dlogit(static_cast<std::size_t>(n_tok));
  for (int pr = 0; pr < p; ++pr) {
    for (int pc = 0; pc < p; ++pc) {
      // softmax VJP: dlogit_n = a_n (g_n - sum_m a_m g_m)
      double mean = 0.0;
      for (int n = 0; n < n_tok; ++n) mean += maps.stack().at(pr, pc, n) * grad.at(pr, pc, n);
      bool any = false;
      for (int n = 0; n < n_tok; ++n) {
        dlogit[static_cast<std::size_t>(n)] = maps.stack().at(pr, pc, n) * (grad.at(pr, pc, n) - mean);
        any = any || dlogit[static_cast<std::size_t>(n)] != 0.0;
      }
      if (!any) continue;
      for (int n = 0; n < n_tok; ++n) {
        const double d = dlogit[static_cast<std::size_t>(n)];
        const auto& key = keys_[static_cast<std::size_t>(n)];
        std::size_t i = 0;
        for (int c = 0; c < channels_; ++c) {
          for (int oy = 0; oy < kLatentScale; ++oy) {
            for (int ox = 0; ox < kLatentScale; ++ox) {
              dz.at(c, pr * kLatentScale + oy, pc * kLatentScale + ox) += d * key[i++];
            }
          }
        }
      }
    }
  }
  return dz;
}

AttentionMaps toy_attention(const LatentGrid& z, const ToyAttentionModel& model) { return model.forward(z); }

// ---------------------------------------------------------------- helpers

LatentGrid restandardize_channels(const LatentGrid& z, const LatentGrid& reference) {
  if (z.channels() != reference.channels() || z.height() != reference.height() || z.width() != reference.width()) {
    throw DimensionError("restandardize: shape mismatch");
  }
  const std::size_t plane = static_cast<std::size_t>(z.height()) * static_cast<std::size_t>(z.width());
  auto moments = [plane](std::span<const double> v) {
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(plane);
    double var = 0.0;
    for (double x : v) var += (x - mean) * (x - mean);
    return std::pair{mean, var / static_cast<double>(plane)};
  };
  LatentGrid out = z;
  for (int c = 0; c < z.channels(); ++c) {
    const auto offset = static_cast<std::size_t>(c) * plane;
    const auto [ref_mean, ref_var] = moments(reference.values().subspan(offset, plane));
    const auto [cur_mean, cur_var] = moments(z.values().subspan(offset, plane));
    const double scale = cur_var > 0.0 ? std::sqrt(ref_var / cur_var) : 1.0;
    auto dst = out.values().subspan(offset, plane);
    for (double& x : dst) x = (x - cur_mean) * scale + ref_mean;
  }
  return out;
}

LatentGrid random_latent(int channels, int side, std::uint64_t seed) {
  LatentGrid z(channels, side * kLatentScale, side * kLatentScale);
  NormalStream rng(seed);
  for (double& v : z.values()) v = rng.next();
  return z;
}

// ---------------------------------------------------------------- driver

GuidanceTrace run_guidance(const LatentGrid& z_T, const ToyAttentionModel& model, const SubjectSet& subjects,
                           const GuidanceConfig& cfg) {
  cfg.schedule.validate();
  if (subjects.empty()) throw ArgumentError("subject set is empty");
  subjects.validate(model.tokens());
  const LossWeights weights = cfg.flags.filter(cfg.weights);
  const PhaseSchedule& sched = cfg.schedule;

  GuidanceTrace trace;
  LatentGrid z = z_T;
  {
    const AttentionMaps probe = model.forward(z);
    weights.validate(probe.side());
  }

  auto record_phase1 = [&](int t, const AttentionMaps& a, const Phase1Result& r) {
    StepRecord rec;
    rec.t = t;
    rec.phase = Phase::excite;
    double norm_total = 0.0;
    for (double v : r.norm) norm_total += v;
    rec.phase1 = Phase1Losses{r.be, r.overlap.total, norm_total, r.total};
    rec.max_attention = subject_maxima(a, subjects);
    trace.records.push_back(std::move(rec));
  };

  for (int t = sched.total_steps; t > sched.rearrange_step(); --t) {
    for (int it = 0; it < sched.iters_per_step; ++it) {
      const AttentionMaps a = model.forward(z);
      const Phase1Result r = loss_phase1(a, subjects, weights);
      if (it == 0) record_phase1(t, a, r);
      if (any_positive(weights, true)) descend(z, model.backward(z, a, r.gradient), sched.alpha);
    }
  }

  // Rearrangement.
  {
    const AttentionMaps a = model.forward(z);
    AttentionMaps for_masks = a;
    if (cfg.smooth_masks) {
      TokenStack smoothed = a.stack();
      for (int n = 0; n < a.tokens(); ++n) smoothed.set_grid(n, gaussian_smooth3x3(a.grid(n)));
      for_masks = AttentionMaps(std::move(smoothed));
    }
    trace.plan = plan_layout(for_masks, subjects, cfg.gamma);
    if (cfg.flags.enable_pixel_realloc) {
      const LatentGrid before = z;
      z = migrate_latent(z, *trace.plan, a, subjects, cfg.imputation);
      if (cfg.flags.enable_restart) z = restandardize_channels(z, before);
    }
  }

  const MaskSet& masks = trace.plan->final_masks;
  for (int t = sched.rearrange_step(); t >= 1; --t) {
    for (int it = 0; it < sched.iters_per_step; ++it) {
      const AttentionMaps a = model.forward(z);
      const Phase3Result r = loss_phase3(a, subjects, masks, weights);
      if (it == 0) {
        StepRecord rec;
        rec.t = t;
        rec.phase = t == sched.rearrange_step() ? Phase::rearrange : Phase::follow;
        rec.phase3 = Phase3Losses{r.inside, r.fill, r.total};
        rec.max_attention = subject_maxima(a, subjects);
        trace.records.push_back(std::move(rec));
        if (t == sched.rearrange_step()) trace.loss3_after_rearrange = r.total;
      }
      if (any_positive(weights, false)) descend(z, model.backward(z, a, r.gradient), sched.follow_step());
    }
  }

  const AttentionMaps final_maps = model.forward(z);
  trace.loss3_final = loss_phase3(final_maps, subjects, masks, weights).total;
  trace.final_attention = final_maps;
  trace.final_latent = std::move(z);
  return trace;
}

}  // namespace layoutforge
