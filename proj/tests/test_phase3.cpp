// SPDX-License-Identifier: Apache-2.0
#include <cmath>

#include "doctest.h"
#include "layoutforge/errors.hpp"
#include "layoutforge/phase3.hpp"
#include "support/oracles.hpp"

using namespace layoutforge;

namespace {

BinaryGrid rect(int side, int r0, int c0, int h, int w) {
  BinaryGrid m(side);
  for (int r = r0; r < r0 + h; ++r)
    for (int c = c0; c < c0 + w; ++c) m.set(r, c);
  return m;
}

Grid scaled(const BinaryGrid& m, double v) {
  Grid g(m.side());
  for (int r = 0; r < m.side(); ++r)
    for (int c = 0; c < m.side(); ++c) g(r, c) = m.get(r, c) ? v : 0.0;
  return g;
}

/// Direct evaluation of the weighted mask-following loss.
double naive_phase3(const AttentionMaps& a, const SubjectSet& s, const MaskSet& m, double wi, double wf) {
  double inside = 0, fill = 0;
  for (std::size_t k = 0; k < s.size(); ++k) {
    const Grid g = a.grid(s.tokens()[k]);
    double in = 0, mass = 0, area = 0;
    for (int r = 0; r < g.side(); ++r)
      for (int c = 0; c < g.side(); ++c) {
        mass += g(r, c);
        if (m[k].get(r, c)) {
          in += g(r, c);
          area += 1;
        }
      }
    inside += (1 - in / mass) * (1 - in / mass);
    fill += (1 - in / area) * (1 - in / area);
  }
  const double n = static_cast<double>(s.size());
  return wi * inside / n + wf * fill / n;
}

}  // namespace

TEST_CASE("inside loss") {
  const BinaryGrid m = rect(4, 0, 0, 2, 4);
  const SubjectSet s({0});
  CHECK(loss_inside(AttentionMaps::from_grids({scaled(m, 0.7)}), s, {m}) == 0.0);
  CHECK(loss_inside(AttentionMaps::from_grids({scaled(m.complement(), 0.7)}), s, {m}) == 1.0);
  CHECK(loss_inside(AttentionMaps::from_grids({Grid(4, 0.3)}), s, {m}) == doctest::Approx(0.25).epsilon(1e-15));
  CHECK_THROWS_AS(loss_inside(AttentionMaps::from_grids({Grid(4, 0.0)}), s, {m}), DegenerateError);
}

TEST_CASE("fill loss") {
  const BinaryGrid m = rect(4, 1, 1, 2, 2);
  const SubjectSet s({0});
  CHECK(loss_fill(AttentionMaps::from_grids({m.to_grid()}), s, {m}) == 0.0);
  CHECK(loss_fill(AttentionMaps::from_grids({Grid(4, 0.0)}), s, {m}) == 1.0);
  CHECK(loss_fill(AttentionMaps::from_grids({scaled(m, 0.5)}), s, {m}) == 0.25);
  CHECK_THROWS_AS(loss_fill(AttentionMaps::from_grids({Grid(4, 0.5)}), s, {BinaryGrid(4)}), DegenerateError);
}

TEST_CASE("mask set must match the subjects") {
  const AttentionMaps a = AttentionMaps::from_grids({Grid(4, 0.5), Grid(4, 0.5)});
  CHECK_THROWS_AS(loss_phase3(a, SubjectSet({0, 1}), {rect(4, 0, 0, 1, 1)}, LossWeights{}), DimensionError);
  CHECK_THROWS_AS(loss_phase3(a, SubjectSet({0}), {rect(5, 0, 0, 1, 1)}, LossWeights{}), DimensionError);
}

TEST_CASE("combined mask-following loss") {
  oracle::Rng rng(41);
  const AttentionMaps a(oracle::random_stack(rng, 6, 3, 0.05, 1.0));
  const SubjectSet s({2, 0});
  const MaskSet m{rect(6, 0, 0, 3, 3), rect(6, 2, 2, 4, 3)};

  SUBCASE("zero weights") {
    LossWeights w;
    w.inside = w.fill = 0;
    const Phase3Result r = loss_phase3(a, s, m, w);
    CHECK(r.total == 0.0);
    for (double g : r.gradient.values()) CHECK(g == 0.0);
  }
  SUBCASE("optimum") {
    const AttentionMaps exact = AttentionMaps::from_grids({m[1].to_grid(), Grid(6, 0.2), m[0].to_grid()});
    const Phase3Result r = loss_phase3(exact, s, m, LossWeights{});
    CHECK(r.total == 0.0);
    for (int k = 0; k < 2; ++k) {
      const int tok = s.tokens()[static_cast<std::size_t>(k)];
      for (int row = 0; row < 6; ++row)
        for (int col = 0; col < 6; ++col)
          if (m[static_cast<std::size_t>(k)].get(row, col)) CHECK(r.gradient.at(row, col, tok) == 0.0);
    }
  }
  SUBCASE("value matches direct evaluation") {
    LossWeights w;
    w.inside = 0.7;
    w.fill = 1.3;
    const Phase3Result r = loss_phase3(a, s, m, w);
    CHECK(r.total == doctest::Approx(naive_phase3(a, s, m, 0.7, 1.3)).epsilon(1e-14));
  }
}

TEST_CASE("mask-following loss properties") {
  oracle::Rng rng(42);
  for (int i = 0; i < 50; ++i) {
    const int p = rng.integer(2, 10);
    const AttentionMaps a(oracle::random_stack(rng, p, 2, 0.0, 2.0));
    BinaryGrid m = oracle::random_blob_mask(rng, p);
    const SubjectSet s({1});
    const double in = loss_inside(a, s, {m});
    const double fill = loss_fill(a, s, {m});
    CHECK(in >= 0.0);
    CHECK(in <= 1.0);
    CHECK(fill >= 0.0);
    const double c = rng.uniform(0.1, 10.0);
    TokenStack scaled_stack = a.stack();
    for (double& v : scaled_stack.values()) v *= c;
    CHECK(loss_inside(AttentionMaps(scaled_stack), s, {m}) == doctest::Approx(in).epsilon(1e-12));

    const double cf = rng.uniform(0.0, 1.0);
    const AttentionMaps am = AttentionMaps::from_grids({Grid(p, 0.0), scaled(m, cf)});
    CHECK(loss_fill(am, s, {m}) == doctest::Approx((1 - cf) * (1 - cf)).epsilon(1e-12));
  }
}

TEST_CASE("mask-following gradient matches central differences") {
  oracle::Rng rng(43);
  const double eps = 1e-4;
  LossWeights w;
  w.inside = 1.0;
  w.fill = 1.0;
  for (int inst = 0; inst < 4; ++inst) {
    const TokenStack st = oracle::random_stack(rng, 16, 6, 0.05, 1.0);
    const SubjectSet s(oracle::random_tokens(rng, 6, 3));
    MaskSet m;
    for (int k = 0; k < 3; ++k) m.push_back(oracle::random_blob_mask(rng, 16));
    const Phase3Result r = loss_phase3(AttentionMaps(st), s, m, w);
    std::vector<double> x(st.values().begin(), st.values().end());
    double worst = 0;
    for (std::size_t j = 0; j < x.size(); ++j) {
      const double fd = oracle::central_difference(x, j, eps, [&](const std::vector<double>& v) {
        return naive_phase3(AttentionMaps(TokenStack(16, 6, v)), s, m, 1.0, 1.0);
      });
      const double an = r.gradient.values()[j];
      worst = std::max(worst, std::abs(an - fd) / std::max({std::abs(an), std::abs(fd), 1e-6}));
    }
    CHECK(worst < 1e-4);
  }
}
