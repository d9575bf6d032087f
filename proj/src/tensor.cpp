// SPDX-License-Identifier: Apache-2.0
#include "layoutforge/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "layoutforge/errors.hpp"

namespace layoutforge {

namespace {

std::size_t square(int side) { return static_cast<std::size_t>(side) * static_cast<std::size_t>(side); }

void require_side(int side) {
  if (side < 1) throw DimensionError("grid side must be positive, got " + std::to_string(side));
}

}  // namespace

// ---------------------------------------------------------------- Grid

Grid::Grid(int side, double fill) : side_(side) {
  require_side(side);
  values_.assign(square(side), fill);
}

Grid::Grid(int side, std::vector<double> values) : side_(side), values_(std::move(values)) {
  require_side(side);
  if (values_.size() != square(side)) {
    throw DimensionError("grid of side " + std::to_string(side) + " needs " + std::to_string(square(side)) +
                         " values, got " + std::to_string(values_.size()));
  }
}

double Grid::max() const { return *std::max_element(values_.begin(), values_.end()); }

double Grid::sum() const { return std::accumulate(values_.begin(), values_.end(), 0.0); }

// ---------------------------------------------------------------- TokenStack

TokenStack::TokenStack(int side, int tokens, double fill) : side_(side), tokens_(tokens) {
  require_side(side);
  if (tokens < 1) throw DimensionError("token count must be positive");
  values_.assign(square(side) * static_cast<std::size_t>(tokens), fill);
}

TokenStack::TokenStack(int side, int tokens, std::vector<double> token_major)
    : side_(side), tokens_(tokens), values_(std::move(token_major)) {
  require_side(side);
  if (tokens < 1) throw DimensionError("token count must be positive");
  if (values_.size() != square(side) * static_cast<std::size_t>(tokens)) {
    throw DimensionError("token stack size mismatch");
  }
}

std::span<const double> TokenStack::slice(int token) const {
  return std::span<const double>(values_).subspan(static_cast<std::size_t>(token) * slice_size(), slice_size());
}

std::span<double> TokenStack::slice(int token) {
  return std::span<double>(values_).subspan(static_cast<std::size_t>(token) * slice_size(), slice_size());
}

Grid TokenStack::grid(int token) const {
  auto s = slice(token);
  return Grid(side_, std::vector<double>(s.begin(), s.end()));
}

void TokenStack::set_grid(int token, const Grid& grid) {
  if (grid.side() != side_) throw DimensionError("grid side does not match token stack");
  std::copy(grid.values().begin(), grid.values().end(), slice(token).begin());
}

// ---------------------------------------------------------------- AttentionMaps

AttentionMaps::AttentionMaps(TokenStack stack) : stack_(std::move(stack)) {
  if (stack_.side() < 2) throw DimensionError("attention maps need P >= 2");
  for (double v : stack_.values()) {
    if (!std::isfinite(v)) throw NumericError("attention maps contain a non-finite value");
    if (v < 0.0) throw ArgumentError("attention maps must be nonnegative");
  }
}

AttentionMaps AttentionMaps::from_grids(const std::vector<Grid>& grids) {
  if (grids.empty()) throw DimensionError("no token grids");
  TokenStack stack(grids.front().side(), static_cast<int>(grids.size()));
  for (std::size_t n = 0; n < grids.size(); ++n) stack.set_grid(static_cast<int>(n), grids[n]);
  return AttentionMaps(std::move(stack));
}

// ---------------------------------------------------------------- SubjectSet

SubjectSet::SubjectSet(std::vector<int> tokens, std::optional<int> background)
    : tokens_(std::move(tokens)), background_(background) {
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (tokens_[i] < 0) throw ArgumentError("negative subject token index");
    for (std::size_t j = 0; j < i; ++j) {
      if (tokens_[i] == tokens_[j]) throw ArgumentError("duplicate subject token " + std::to_string(tokens_[i]));
    }
    if (background_ && *background_ == tokens_[i]) {
      throw ArgumentError("background token coincides with subject token " + std::to_string(tokens_[i]));
    }
  }
  if (background_ && *background_ < 0) throw ArgumentError("negative background token index");
}

void SubjectSet::validate(int token_count) const {
  for (int t : tokens_) {
    if (t >= token_count) {
      throw ArgumentError("subject token " + std::to_string(t) + " out of range for N=" + std::to_string(token_count));
    }
  }
  if (background_ && *background_ >= token_count) {
    throw ArgumentError("background token out of range for N=" + std::to_string(token_count));
  }
}

// ---------------------------------------------------------------- BinaryGrid

BinaryGrid::BinaryGrid(int side, bool fill) : side_(side) {
  require_side(side);
  bits_.assign(square(side), fill ? 1 : 0);
}

std::size_t BinaryGrid::area() const {
  return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
}

BinaryGrid BinaryGrid::complement() const {
  BinaryGrid out = *this;
  for (auto& b : out.bits_) b = b ? 0 : 1;
  return out;
}

BinaryGrid BinaryGrid::operator|(const BinaryGrid& other) const {
  if (other.side_ != side_) throw DimensionError("binary grid side mismatch");
  BinaryGrid out = *this;
  for (std::size_t i = 0; i < bits_.size(); ++i) out.bits_[i] = (bits_[i] | other.bits_[i]);
  return out;
}

BinaryGrid BinaryGrid::operator&(const BinaryGrid& other) const {
  if (other.side_ != side_) throw DimensionError("binary grid side mismatch");
  BinaryGrid out = *this;
  for (std::size_t i = 0; i < bits_.size(); ++i) out.bits_[i] = (bits_[i] & other.bits_[i]);
  return out;
}

bool BinaryGrid::contains(const BinaryGrid& other) const {
  if (other.side_ != side_) throw DimensionError("binary grid side mismatch");
  for (std::size_t i = 0; i < bits_.size(); ++i) {
    if (other.bits_[i] && !bits_[i]) return false;
  }
  return true;
}

BinaryGrid BinaryGrid::translated(int dy, int dx) const {
  BinaryGrid out(side_);
  for (int r = 0; r < side_; ++r) {
    for (int c = 0; c < side_; ++c) {
      if (!get(r, c)) continue;
      const int nr = r + dy;
      const int nc = c + dx;
      if (nr >= 0 && nr < side_ && nc >= 0 && nc < side_) out.set(nr, nc);
    }
  }
  return out;
}

std::optional<BinaryGrid::Bounds> BinaryGrid::bounds() const {
  std::optional<Bounds> b;
  for (int r = 0; r < side_; ++r) {
    for (int c = 0; c < side_; ++c) {
      if (!get(r, c)) continue;
      if (!b) {
        b = Bounds{r, r, c, c};
      } else {
        b->min_row = std::min(b->min_row, r);
        b->max_row = std::max(b->max_row, r);
        b->min_col = std::min(b->min_col, c);
        b->max_col = std::max(b->max_col, c);
      }
    }
  }
  return b;
}

Grid BinaryGrid::to_grid() const {
  std::vector<double> v(bits_.begin(), bits_.end());
  return Grid(side_, std::move(v));
}

std::size_t intersection_area(const BinaryGrid& a, const BinaryGrid& b) {
  if (a.side() != b.side()) throw DimensionError("binary grid side mismatch");
  std::size_t n = 0;
  auto x = a.bits();
  auto y = b.bits();
  for (std::size_t i = 0; i < x.size(); ++i) n += static_cast<std::size_t>(x[i] & y[i]);
  return n;
}

// ---------------------------------------------------------------- LatentGrid

LatentGrid::LatentGrid(int channels, int height, int width, double fill)
    : channels_(channels), height_(height), width_(width) {
  if (channels < 1 || height < 1 || width < 1) throw DimensionError("latent extents must be positive");
  values_.assign(static_cast<std::size_t>(channels) * static_cast<std::size_t>(height) * static_cast<std::size_t>(width),
                 fill);
}

LatentGrid::LatentGrid(int channels, int height, int width, std::vector<double> values)
    : channels_(channels), height_(height), width_(width), values_(std::move(values)) {
  if (channels < 1 || height < 1 || width < 1) throw DimensionError("latent extents must be positive");
  if (values_.size() !=
      static_cast<std::size_t>(channels) * static_cast<std::size_t>(height) * static_cast<std::size_t>(width)) {
    throw DimensionError("latent value count does not match C x H x W");
  }
  for (double v : values_) {
    if (!std::isfinite(v)) throw NumericError("latent contains a non-finite value");
  }
}

// ---------------------------------------------------------------- operations

double frobenius_inner(const Grid& a, const Grid& b) {
  if (a.side() != b.side()) {
    throw DimensionError("frobenius_inner: side " + std::to_string(a.side()) + " vs " + std::to_string(b.side()));
  }
  double acc = 0.0;
  auto x = a.values();
  auto y = b.values();
  for (std::size_t i = 0; i < x.size(); ++i) acc += x[i] * y[i];
  return acc;
}

std::vector<std::size_t> dilate3x3_sources(const Grid& a) {
  const int p = a.side();
  std::vector<std::size_t> src(a.size());
  for (int r = 0; r < p; ++r) {
    for (int c = 0; c < p; ++c) {
      int best_r = -1;
      int best_c = -1;
      for (int wr = std::max(0, r - 1); wr <= std::min(p - 1, r + 1); ++wr) {
        for (int wc = std::max(0, c - 1); wc <= std::min(p - 1, c + 1); ++wc) {
          if (best_r < 0 || a(wr, wc) > a(best_r, best_c)) {
            best_r = wr;
            best_c = wc;
          }
        }
      }
      src[static_cast<std::size_t>(r * p + c)] = static_cast<std::size_t>(best_r * p + best_c);
    }
  }
  return src;
}

Grid grayscale_dilate3x3(const Grid& a) {
  const auto src = dilate3x3_sources(a);
  Grid out(a.side());
  auto in = a.values();
  auto o = out.values();
  for (std::size_t i = 0; i < src.size(); ++i) o[i] = in[src[i]];
  return out;
}

Cell spatial_argmax(const Grid& a) {
  auto v = a.values();
  const auto it = std::max_element(v.begin(), v.end());  // first occurrence on ties
  const auto idx = static_cast<int>(std::distance(v.begin(), it));
  return Cell{idx / a.side(), idx % a.side()};
}

AttentionMaps normalize_over_tokens(const AttentionMaps& maps) {
  TokenStack out = maps.stack();
  const auto cells = out.slice_size();
  for (std::size_t i = 0; i < cells; ++i) {
    double total = 0.0;
    for (int n = 0; n < out.tokens(); ++n) total += out.slice(n)[i];
    if (total <= 0.0) continue;
    for (int n = 0; n < out.tokens(); ++n) out.slice(n)[i] /= total;
  }
  return AttentionMaps(std::move(out));
}

Grid gaussian_smooth3x3(const Grid& a, double sigma) {
  if (!(sigma > 0.0)) throw ArgumentError("gaussian sigma must be positive");
  const int p = a.side();
  double kernel[3];
  for (int k = -1; k <= 1; ++k) kernel[k + 1] = std::exp(-0.5 * k * k / (sigma * sigma));
  Grid out(p);
  for (int r = 0; r < p; ++r) {
    for (int c = 0; c < p; ++c) {
      double acc = 0.0;
      double weight = 0.0;
      for (int dr = -1; dr <= 1; ++dr) {
        for (int dc = -1; dc <= 1; ++dc) {
          const int rr = r + dr;
          const int cc = c + dc;
          if (rr < 0 || rr >= p || cc < 0 || cc >= p) continue;
          const double w = kernel[dr + 1] * kernel[dc + 1];
          acc += w * a(rr, cc);
          weight += w;
        }
      }
      out(r, c) = acc / weight;
    }
  }
  return out;
}

}  // namespace layoutforge
