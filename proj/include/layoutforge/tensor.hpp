// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace layoutforge {

/// Row/column position on a patch grid.
struct Cell {
  int row = 0;
  int col = 0;
  auto operator<=>(const Cell&) const = default;
};

/// Square real-valued grid, row-major.
class Grid {
 public:
  Grid() = default;
  explicit Grid(int side, double fill = 0.0);
  Grid(int side, std::vector<double> values);

  int side() const { return side_; }
  std::size_t size() const { return values_.size(); }

  double operator()(int row, int col) const { return values_[index(row, col)]; }
  double& operator()(int row, int col) { return values_[index(row, col)]; }

  std::span<const double> values() const { return values_; }
  std::span<double> values() { return values_; }

  double max() const;
  double sum() const;

  bool operator==(const Grid&) const = default;

 private:
  std::size_t index(int row, int col) const {
    return static_cast<std::size_t>(row) * static_cast<std::size_t>(side_) + static_cast<std::size_t>(col);
  }

  int side_ = 0;
  std::vector<double> values_;
};

/// P x P x N real values stored token-major: slice n is a contiguous P*P block.
/// Used for attention maps and for gradients with respect to them.
class TokenStack {
 public:
  TokenStack() = default;
  TokenStack(int side, int tokens, double fill = 0.0);
  TokenStack(int side, int tokens, std::vector<double> token_major);

  int side() const { return side_; }
  int tokens() const { return tokens_; }
  std::size_t slice_size() const { return static_cast<std::size_t>(side_) * static_cast<std::size_t>(side_); }

  std::span<const double> slice(int token) const;
  std::span<double> slice(int token);
  Grid grid(int token) const;
  void set_grid(int token, const Grid& grid);

  double at(int row, int col, int token) const { return slice(token)[static_cast<std::size_t>(row * side_ + col)]; }
  double& at(int row, int col, int token) { return slice(token)[static_cast<std::size_t>(row * side_ + col)]; }

  std::span<const double> values() const { return values_; }
  std::span<double> values() { return values_; }

  bool operator==(const TokenStack&) const = default;

 private:
  int side_ = 0;
  int tokens_ = 0;
  std::vector<double> values_;
};

/// Per-token cross-attention maps A (P x P x N). Entries are finite and
/// nonnegative, P >= 2 and N >= 1; the constructor enforces all three.
class AttentionMaps {
 public:
  explicit AttentionMaps(TokenStack stack);
  static AttentionMaps from_grids(const std::vector<Grid>& grids);

  int side() const { return stack_.side(); }
  int tokens() const { return stack_.tokens(); }
  std::span<const double> slice(int token) const { return stack_.slice(token); }
  Grid grid(int token) const { return stack_.grid(token); }
  const TokenStack& stack() const { return stack_; }

 private:
  TokenStack stack_;
};

/// Ordered subject tokens plus an optional background token.
class SubjectSet {
 public:
  SubjectSet() = default;
  explicit SubjectSet(std::vector<int> tokens, std::optional<int> background = std::nullopt);

  const std::vector<int>& tokens() const { return tokens_; }
  std::optional<int> background() const { return background_; }
  std::size_t size() const { return tokens_.size(); }
  bool empty() const { return tokens_.empty(); }

  // Throws ArgumentError if any index is outside [0, token_count).
  void validate(int token_count) const;

 private:
  std::vector<int> tokens_;
  std::optional<int> background_;
};

/// Square binary grid (blocking masks, subject masks).
class BinaryGrid {
 public:
  BinaryGrid() = default;
  explicit BinaryGrid(int side, bool fill = false);

  int side() const { return side_; }
  bool get(int row, int col) const { return bits_[index(row, col)] != 0; }
  void set(int row, int col, bool value = true) { bits_[index(row, col)] = value ? 1 : 0; }

  std::size_t area() const;
  bool empty() const { return area() == 0; }
  BinaryGrid complement() const;
  BinaryGrid operator|(const BinaryGrid& other) const;
  BinaryGrid operator&(const BinaryGrid& other) const;
  bool contains(const BinaryGrid& other) const;

  /// Translate by (dy, dx); bits leaving the grid are dropped.
  BinaryGrid translated(int dy, int dx) const;

  struct Bounds {
    int min_row, max_row, min_col, max_col;
  };
  std::optional<Bounds> bounds() const;

  Grid to_grid() const;
  std::span<const std::uint8_t> bits() const { return bits_; }

  bool operator==(const BinaryGrid&) const = default;

 private:
  std::size_t index(int row, int col) const {
    return static_cast<std::size_t>(row) * static_cast<std::size_t>(side_) + static_cast<std::size_t>(col);
  }

  int side_ = 0;
  std::vector<std::uint8_t> bits_;
};

std::size_t intersection_area(const BinaryGrid& a, const BinaryGrid& b);

/// Latent map z (C x H x W), channel-major then row-major.
class LatentGrid {
 public:
  LatentGrid() = default;
  LatentGrid(int channels, int height, int width, double fill = 0.0);
  LatentGrid(int channels, int height, int width, std::vector<double> values);

  int channels() const { return channels_; }
  int height() const { return height_; }
  int width() const { return width_; }

  double at(int c, int y, int x) const { return values_[index(c, y, x)]; }
  double& at(int c, int y, int x) { return values_[index(c, y, x)]; }

  std::span<const double> values() const { return values_; }
  std::span<double> values() { return values_; }

  bool operator==(const LatentGrid&) const = default;

 private:
  std::size_t index(int c, int y, int x) const {
    return (static_cast<std::size_t>(c) * static_cast<std::size_t>(height_) + static_cast<std::size_t>(y)) *
               static_cast<std::size_t>(width_) +
           static_cast<std::size_t>(x);
  }

  int channels_ = 0;
  int height_ = 0;
  int width_ = 0;
  std::vector<double> values_;
};

double frobenius_inner(const Grid& a, const Grid& b);

/// Local max over the 3x3 neighborhood; the window is clipped at borders.
Grid grayscale_dilate3x3(const Grid& a);

/// Flat index of the cell each dilated output was taken from
/// (first maximum of the clipped window in row-major order).
std::vector<std::size_t> dilate3x3_sources(const Grid& a);

/// Position of the maximum, first occurrence in row-major order.
Cell spatial_argmax(const Grid& a);

// Optional preprocessing, both off unless requested.
AttentionMaps normalize_over_tokens(const AttentionMaps& maps);
Grid gaussian_smooth3x3(const Grid& a, double sigma = 0.5);

}  // namespace layoutforge
