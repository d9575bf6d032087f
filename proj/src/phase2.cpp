// SPDX-License-Identifier: Apache-2.0
#include "layoutforge/phase2.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <tuple>

#include "layoutforge/errors.hpp"
#include "layoutforge/random.hpp"

namespace layoutforge {

// ---------------------------------------------------------------- gamma

GammaConfig GammaConfig::resolved(int side, std::size_t subject_count) const {
  GammaConfig out = *this;
  const std::size_t cells = static_cast<std::size_t>(side) * static_cast<std::size_t>(side);
  const std::size_t k = std::max<std::size_t>(1, subject_count);
  if (out.area_lo == 0) out.area_lo = std::max<std::size_t>(1, (cells + 4 * k - 1) / (4 * k));
  if (out.area_hi == 0) out.area_hi = std::min(cells, std::max(out.area_lo + 1, 2 * cells / k));
  return out;
}

void GammaConfig::validate(int side) const {
  if (!(gamma0 >= kLower && gamma0 < kUpper)) throw ConfigError("gamma0 must lie in [0.2, 0.8)");
  if (!(step > 0.0)) throw ConfigError("gamma step must be positive");
  const std::size_t cells = static_cast<std::size_t>(side) * static_cast<std::size_t>(side);
  if (!(area_lo > 0 && area_lo < area_hi && area_hi <= cells)) {
    throw ConfigError("mask area bounds must satisfy 0 < lo < hi <= P^2");
  }
}

BinaryGrid threshold_mask(const Grid& a, double gamma) {
  if (!(gamma > 0.0 && gamma < 1.0)) throw ArgumentError("gamma must lie in (0, 1)");
  const double peak = a.max();
  if (!(peak > 0.0)) throw DegenerateError("cannot threshold an attention map without positive mass");
  const double cut = gamma * peak;
  BinaryGrid mask(a.side());
  for (int r = 0; r < a.side(); ++r) {
    for (int c = 0; c < a.side(); ++c) {
      if (a(r, c) > cut) mask.set(r, c);
    }
  }
  return mask;
}

double adapt_gamma(const Grid& a, const GammaConfig& cfg, std::size_t subject_count) {
  const GammaConfig g = cfg.resolved(a.side(), subject_count);
  g.validate(a.side());
  constexpr double kSlack = 1e-12;
  auto gamma_at = [&](int k) { return g.gamma0 + k * g.step; };

  const std::size_t area0 = threshold_mask(a, g.gamma0).area();
  if (area0 > g.area_hi) {
    for (int k = 1;; ++k) {
      const double gamma = gamma_at(k);
      if (gamma >= GammaConfig::kUpper - kSlack) return gamma_at(k - 1);
      if (threshold_mask(a, gamma).area() <= g.area_hi) return gamma;
    }
  }
  if (area0 < g.area_lo) {
    for (int k = 1;; ++k) {
      const double gamma = gamma_at(-k);
      if (gamma < GammaConfig::kLower - kSlack) return gamma_at(-(k - 1));
      if (threshold_mask(a, gamma).area() >= g.area_lo) return gamma;
    }
  }
  return g.gamma0;
}

// ---------------------------------------------------------------- movers

double mover_ratio(const std::vector<BinaryGrid>& masks, std::size_t s) {
  if (s >= masks.size()) throw ArgumentError("mover index out of range");
  const std::size_t own = masks[s].area();
  if (own == 0) throw DegenerateError("mask " + std::to_string(s) + " has zero area");
  std::size_t shared = 0;
  for (std::size_t o = 0; o < masks.size(); ++o) {
    if (o != s) shared += intersection_area(masks[s], masks[o]);
  }
  return static_cast<double>(shared) / static_cast<double>(own);
}

std::vector<std::size_t> select_movers(const std::vector<BinaryGrid>& masks) {
  if (masks.size() < 2) return {};
  std::vector<std::size_t> idx(masks.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::vector<double> ratio(masks.size());
  for (std::size_t s = 0; s < masks.size(); ++s) ratio[s] = mover_ratio(masks, s);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return ratio[a] > ratio[b]; });
  if (ratio[idx[0]] <= 0.0) return {};
  return {idx[0], idx[1]};
}

std::size_t total_overlap(const std::vector<BinaryGrid>& masks) {
  std::size_t total = 0;
  for (std::size_t a = 0; a < masks.size(); ++a) {
    for (std::size_t b = a + 1; b < masks.size(); ++b) total += intersection_area(masks[a], masks[b]);
  }
  return total;
}

std::size_t shift_overlap(const BinaryGrid& mask, Shift shift, const std::vector<BinaryGrid>& others) {
  const BinaryGrid moved = mask.translated(shift.dy, shift.dx);
  std::size_t total = 0;
  for (const auto& o : others) total += intersection_area(moved, o);
  return total;
}

Shift search_shift(const BinaryGrid& mask, const std::vector<BinaryGrid>& others) {
  const int p = mask.side();
  const auto box = mask.bounds();
  if (!box) return {};

  // Coverage count: how many other masks contain each cell.
  std::vector<int> cover(static_cast<std::size_t>(p * p), 0);
  for (const auto& o : others) {
    if (o.side() != p) throw DimensionError("search_shift: mask side mismatch");
    auto bits = o.bits();
    for (std::size_t i = 0; i < bits.size(); ++i) cover[i] += bits[i];
  }
  std::vector<Cell> cells;
  for (int r = box->min_row; r <= box->max_row; ++r) {
    for (int c = box->min_col; c <= box->max_col; ++c) {
      if (mask.get(r, c)) cells.push_back({r, c});
    }
  }

  Shift best;
  auto best_key = std::make_tuple(std::numeric_limits<long>::max(), 0, 0, 0);
  for (int dy = 0; dy <= p - 1 - box->max_row; ++dy) {
    for (int dx = -box->min_col; dx <= p - 1 - box->max_col; ++dx) {
      long overlap = 0;
      for (const Cell& cell : cells) overlap += cover[static_cast<std::size_t>((cell.row + dy) * p + cell.col + dx)];
      const auto key = std::make_tuple(overlap, dy + std::abs(dx), dy, dx);
      if (key < best_key) {
        best_key = key;
        best = Shift{dy, dx};
      }
    }
  }
  return best;
}

bool LayoutPlan::is_identity() const {
  return std::all_of(movers.begin(), movers.end(), [](const Mover& m) { return m.shift == Shift{}; });
}

LayoutPlan plan_from_masks(std::vector<BinaryGrid> initial_masks) {
  LayoutPlan plan;
  plan.initial_masks = std::move(initial_masks);
  plan.final_masks = plan.initial_masks;
  plan.overlap_before = total_overlap(plan.initial_masks);

  for (std::size_t s : select_movers(plan.initial_masks)) {
    Mover m;
    m.subject = s;
    m.ratio = mover_ratio(plan.initial_masks, s);
    std::vector<BinaryGrid> others;
    for (std::size_t o = 0; o < plan.final_masks.size(); ++o) {
      if (o != s) others.push_back(plan.final_masks[o]);
    }
    m.shift = search_shift(plan.initial_masks[s], others);
    plan.final_masks[s] = plan.initial_masks[s].translated(m.shift.dy, m.shift.dx);
    plan.movers.push_back(m);
  }
  plan.overlap_after = total_overlap(plan.final_masks);
  return plan;
}

LayoutPlan plan_layout(const AttentionMaps& maps, const SubjectSet& subjects, const GammaConfig& cfg) {
  if (subjects.empty()) throw ArgumentError("subject set is empty");
  subjects.validate(maps.tokens());
  std::vector<BinaryGrid> masks;
  std::vector<double> gammas;
  for (int token : subjects.tokens()) {
    const Grid a = maps.grid(token);
    const double gamma = adapt_gamma(a, cfg, subjects.size());
    gammas.push_back(gamma);
    masks.push_back(threshold_mask(a, gamma));
  }
  LayoutPlan plan = plan_from_masks(std::move(masks));
  plan.gammas = std::move(gammas);
  return plan;
}

// ---------------------------------------------------------------- latent migration

BinaryGrid upscale_mask(const BinaryGrid& mask, int factor) {
  if (factor < 1) throw ArgumentError("upscale factor must be positive");
  BinaryGrid out(mask.side() * factor);
  for (int r = 0; r < out.side(); ++r) {
    for (int c = 0; c < out.side(); ++c) {
      if (mask.get(r / factor, c / factor)) out.set(r, c);
    }
  }
  return out;
}

MigrationRegions migration_regions(const LayoutPlan& plan, int side) {
  const int latent = side * kLatentScale;
  MigrationRegions out{BinaryGrid(latent), BinaryGrid(latent), BinaryGrid(latent)};
  for (const Mover& m : plan.movers) {
    const BinaryGrid src = upscale_mask(plan.initial_masks.at(m.subject));
    out.sources = out.sources | src;
    out.destinations = out.destinations | src.translated(m.shift.dy * kLatentScale, m.shift.dx * kLatentScale);
  }
  out.vacated = out.sources & out.destinations.complement();
  return out;
}

namespace {

// Patch cells sorted by descending value, ties in row-major order.
std::vector<Cell> top_cells(const Grid& a, std::size_t k) {
  std::vector<std::size_t> idx(a.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  auto v = a.values();
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t x, std::size_t y) { return v[x] > v[y]; });
  idx.resize(std::min(k, idx.size()));
  std::vector<Cell> out;
  for (std::size_t i : idx) out.push_back({static_cast<int>(i) / a.side(), static_cast<int>(i) % a.side()});
  return out;
}

}  // namespace

LatentGrid migrate_latent(const LatentGrid& z, const LayoutPlan& plan, const AttentionMaps& maps,
                          const SubjectSet& subjects, const ImputationConfig& cfg) {
  const int p = maps.side();
  const int latent = p * kLatentScale;
  if (z.height() != latent || z.width() != latent) {
    throw DimensionError("latent is " + std::to_string(z.height()) + "x" + std::to_string(z.width()) + ", expected " +
                         std::to_string(latent) + "x" + std::to_string(latent));
  }
  for (const auto& m : plan.initial_masks) {
    if (m.side() != p) throw DimensionError("plan masks do not match attention grid");
  }

  ImputationMode mode = cfg.mode;
  if (mode == ImputationMode::automatic) {
    mode = subjects.background() ? ImputationMode::background_copy : ImputationMode::random_normal;
  }
  if (mode == ImputationMode::background_copy) {
    if (!subjects.background()) throw ConfigError("background-copy imputation needs a background token");
    if (cfg.k < 1) throw ConfigError("background-copy imputation needs k >= 1");
    subjects.validate(maps.tokens());
  }

  LatentGrid out = z;
  if (plan.movers.empty()) return out;

  for (const Mover& m : plan.movers) {
    const BinaryGrid src = upscale_mask(plan.initial_masks.at(m.subject));
    const int dy = m.shift.dy * kLatentScale;
    const int dx = m.shift.dx * kLatentScale;
    for (int y = 0; y < latent; ++y) {
      for (int x = 0; x < latent; ++x) {
        if (!src.get(y, x)) continue;
        for (int c = 0; c < z.channels(); ++c) out.at(c, y + dy, x + dx) = z.at(c, y, x);
      }
    }
  }

  const MigrationRegions regions = migration_regions(plan, p);
  if (mode == ImputationMode::random_normal) {
    NormalStream rng(cfg.seed);
    for (int y = 0; y < latent; ++y) {
      for (int x = 0; x < latent; ++x) {
        if (!regions.vacated.get(y, x)) continue;
        for (int c = 0; c < z.channels(); ++c) out.at(c, y, x) = rng.next();
      }
    }
    return out;
  }

  const auto donors = top_cells(maps.grid(*subjects.background()), static_cast<std::size_t>(cfg.k));
  std::size_t next = 0;
  for (int pr = 0; pr < p; ++pr) {
    for (int pc = 0; pc < p; ++pc) {
      if (!regions.vacated.get(pr * kLatentScale, pc * kLatentScale)) continue;
      const Cell donor = donors[next++ % donors.size()];
      for (int c = 0; c < z.channels(); ++c) {
        for (int oy = 0; oy < kLatentScale; ++oy) {
          for (int ox = 0; ox < kLatentScale; ++ox) {
            out.at(c, pr * kLatentScale + oy, pc * kLatentScale + ox) =
                z.at(c, donor.row * kLatentScale + oy, donor.col * kLatentScale + ox);
          }
        }
      }
    }
  }
  return out;
}

}  // namespace layoutforge
