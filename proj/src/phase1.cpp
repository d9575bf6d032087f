// SPDX-License-Identifier: Apache-2.0
#include "layoutforge/phase1.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "layoutforge/errors.hpp"

namespace layoutforge {

namespace {

void require_subjects(const AttentionMaps& maps, const SubjectSet& subjects) {
  if (subjects.empty()) throw ArgumentError("subject set is empty");
  subjects.validate(maps.tokens());
}

double slice_max(const AttentionMaps& maps, int token) {
  auto s = maps.slice(token);
  return *std::max_element(s.begin(), s.end());
}

struct FilteredPeak {
  std::optional<Cell> cell;
  double value = 0.0;
};

// Max of A^token * (1 - blocked), searched over unblocked cells so the chosen
// position always lies outside the blocked region.
FilteredPeak filtered_peak(const AttentionMaps& maps, int token, const BinaryGrid& blocked) {
  const int p = maps.side();
  auto s = maps.slice(token);
  FilteredPeak best;
  for (int r = 0; r < p; ++r) {
    for (int c = 0; c < p; ++c) {
      if (blocked.get(r, c)) continue;
      const double v = s[static_cast<std::size_t>(r * p + c)];
      if (!best.cell || v > best.value) {
        best.cell = Cell{r, c};
        best.value = v;
      }
    }
  }
  return best;
}

}  // namespace

int default_rect_side(int side) { return std::min(side, std::max(3, side / 4)); }

int LossWeights::rect_side_for(int side) const { return rect_side == 0 ? default_rect_side(side) : rect_side; }

void LossWeights::validate(int side) const {
  for (double l : {be, ol, norm, inside, fill}) {
    if (!(l >= 0.0) || !std::isfinite(l)) throw ConfigError("loss weights must be finite and nonnegative");
  }
  const int r = rect_side_for(side);
  if (r < 1 || r > side) {
    throw ConfigError("rect_side " + std::to_string(r) + " outside [1, " + std::to_string(side) + "]");
  }
}

std::vector<int> sort_tokens_by_max(const AttentionMaps& maps, const SubjectSet& subjects) {
  require_subjects(maps, subjects);
  struct Entry {
    int token;
    double peak;
  };
  std::vector<Entry> entries;
  entries.reserve(subjects.size());
  for (int t : subjects.tokens()) entries.push_back({t, slice_max(maps, t)});
  std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
    if (a.peak != b.peak) return a.peak > b.peak;
    return a.token < b.token;
  });
  std::vector<int> order;
  order.reserve(entries.size());
  for (const auto& e : entries) order.push_back(e.token);
  return order;
}

BinaryGrid rectangle_around(int side, Cell center, int rect_side) {
  BinaryGrid out(side);
  const int r0 = center.row - rect_side / 2;
  const int c0 = center.col - rect_side / 2;
  for (int r = std::max(0, r0); r < std::min(side, r0 + rect_side); ++r) {
    for (int c = std::max(0, c0); c < std::min(side, c0 + rect_side); ++c) out.set(r, c);
  }
  return out;
}

BlockingSequence build_blocking_sequence(const AttentionMaps& maps, const SubjectSet& subjects,
                                         const LossWeights& weights) {
  const int p = maps.side();
  weights.validate(p);
  const int rect = weights.rect_side_for(p);

  BlockingSequence seq;
  seq.order = sort_tokens_by_max(maps, subjects);
  BinaryGrid blocked(p);
  for (int token : seq.order) {
    const FilteredPeak peak = filtered_peak(maps, token, blocked);
    if (peak.cell) blocked = blocked | rectangle_around(p, *peak.cell, rect);
    seq.peaks.push_back(peak.cell);
    seq.filtered_max.push_back(peak.value);
    seq.masks.push_back(blocked);
  }
  return seq;
}

double loss_be(const AttentionMaps& maps, const SubjectSet& subjects, const BlockingSequence& seq) {
  require_subjects(maps, subjects);
  if (seq.order.size() != subjects.size() || seq.masks.size() != subjects.size()) {
    throw ArgumentError("blocking sequence does not match subject set");
  }
  double worst = 0.0;
  BinaryGrid none(maps.side());
  for (std::size_t i = 0; i < seq.order.size(); ++i) {
    const BinaryGrid& blocked = i == 0 ? none : seq.masks[i - 1];
    const double term = 1.0 - filtered_peak(maps, seq.order[i], blocked).value;
    if (i == 0 || term > worst) worst = term;
  }
  return worst;
}

OverlapLoss loss_overlap(const AttentionMaps& maps, const SubjectSet& subjects) {
  require_subjects(maps, subjects);
  const std::size_t k = subjects.size();
  OverlapLoss out;
  out.per_subject.assign(k, 0.0);
  if (k < 2) return out;

  std::vector<Grid> dilated;
  dilated.reserve(k);
  for (int t : subjects.tokens()) dilated.push_back(grayscale_dilate3x3(maps.grid(t)));

  for (std::size_t a = 0; a < k; ++a) {
    for (std::size_t b = a + 1; b < k; ++b) {
      const double ip = frobenius_inner(dilated[a], dilated[b]);
      out.per_subject[a] += ip;
      out.per_subject[b] += ip;
    }
  }
  for (double& v : out.per_subject) {
    v /= static_cast<double>(k - 1);
    out.total += v;
  }
  return out;
}

double norm_threshold(int side, std::size_t subject_count) {
  return static_cast<double>(side) * static_cast<double>(side) / static_cast<double>(subject_count);
}

namespace {

double frobenius_norm(std::span<const double> values) {
  double acc = 0.0;
  for (double v : values) acc += v * v;
  return std::sqrt(acc);
}

}  // namespace

std::vector<double> loss_norm(const AttentionMaps& maps, const SubjectSet& subjects) {
  require_subjects(maps, subjects);
  const double c = norm_threshold(maps.side(), subjects.size());
  std::vector<double> out;
  out.reserve(subjects.size());
  for (int t : subjects.tokens()) {
    const double n = frobenius_norm(maps.slice(t));
    out.push_back(n > c ? n : 0.0);
  }
  return out;
}

Phase1Result loss_phase1(const AttentionMaps& maps, const SubjectSet& subjects, const LossWeights& weights) {
  require_subjects(maps, subjects);
  const int p = maps.side();
  const std::size_t k = subjects.size();
  const auto& tokens = subjects.tokens();

  Phase1Result res;
  res.gradient = TokenStack(p, maps.tokens());

  // Blocked excitation.
  const BlockingSequence seq = build_blocking_sequence(maps, subjects, weights);
  res.branch.order = seq.order;
  res.branch.peaks = seq.peaks;
  for (std::size_t i = 0; i < seq.order.size(); ++i) {
    const double term = 1.0 - seq.filtered_max[i];
    if (i == 0 || term > res.be) {
      res.be = term;
      res.branch.be_winner = i;
    }
  }
  if (const auto& peak = seq.peaks[res.branch.be_winner]) {
    res.gradient.at(peak->row, peak->col, seq.order[res.branch.be_winner]) -= weights.be;
  }

  // Dilated overlap.
  res.overlap.per_subject.assign(k, 0.0);
  if (k >= 2) {
    std::vector<Grid> dilated;
    dilated.reserve(k);
    for (int t : tokens) {
      const Grid g = maps.grid(t);
      res.branch.dilation_sources.push_back(dilate3x3_sources(g));
      dilated.push_back(grayscale_dilate3x3(g));
    }
    Grid sum_dilated(p);
    for (const auto& d : dilated) {
      for (std::size_t i = 0; i < d.size(); ++i) sum_dilated.values()[i] += d.values()[i];
    }
    for (std::size_t a = 0; a < k; ++a) {
      for (std::size_t b = a + 1; b < k; ++b) {
        const double ip = frobenius_inner(dilated[a], dilated[b]);
        res.overlap.per_subject[a] += ip;
        res.overlap.per_subject[b] += ip;
      }
    }
    const double inv = 1.0 / static_cast<double>(k - 1);
    for (double& v : res.overlap.per_subject) {
      v *= inv;
      res.overlap.total += v;
    }
    // d total / d dilated[a] = 2/(k-1) * sum_{b != a} dilated[b], routed back
    // to the cell each dilated value was copied from.
    const double scale = weights.ol * 2.0 * inv;
    for (std::size_t a = 0; a < k; ++a) {
      auto g = res.gradient.slice(tokens[a]);
      const auto& src = res.branch.dilation_sources[a];
      for (std::size_t i = 0; i < src.size(); ++i) {
        g[src[i]] += scale * (sum_dilated.values()[i] - dilated[a].values()[i]);
      }
    }
  }

  // Conditional norm.
  const double c = norm_threshold(p, k);
  res.norm.assign(k, 0.0);
  res.branch.norm_active.assign(k, false);
  for (std::size_t a = 0; a < k; ++a) {
    auto s = maps.slice(tokens[a]);
    const double n = frobenius_norm(s);
    if (n > c) {
      res.norm[a] = n;
      res.branch.norm_active[a] = true;
      auto g = res.gradient.slice(tokens[a]);
      for (std::size_t i = 0; i < s.size(); ++i) g[i] += weights.norm * s[i] / n;
    }
  }

  res.total = weights.be * res.be;
  for (std::size_t a = 0; a < k; ++a) res.total += weights.ol * res.overlap.per_subject[a] + weights.norm * res.norm[a];
  return res;
}

}  // namespace layoutforge
