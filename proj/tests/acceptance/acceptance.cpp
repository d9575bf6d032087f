// SPDX-License-Identifier: Apache-2.0
//
// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fail.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>

#include "layoutforge/cli.hpp"
#include "layoutforge/exchange.hpp"
#include "layoutforge/gradcheck.hpp"
#include "layoutforge/guidance.hpp"
#include "support/oracles.hpp"

using namespace layoutforge;
namespace fs = std::filesystem;

namespace {

// Pinned tolerances and sizes.
constexpr double kGradTolLoss = 1e-4;
constexpr double kGradTolComposite = 1e-3;
constexpr double kGradBudgetSeconds = 30.0;
constexpr int kBlockingInstances = 200;
constexpr int kOverlapInstances = 200;
constexpr double kOverlapTol = 1e-12;
constexpr int kNormInstances = 200;
constexpr double kNormBoundary = 1e-6;
constexpr int kShiftLayouts = 100;
constexpr double kShiftBudgetSeconds = 10.0;
constexpr int kLayoutInstances = 500;
constexpr int kMigrations = 100;
constexpr int kSeeds = 20;
constexpr double kFollowRatio = 0.1;
constexpr double kFollowFraction = 0.9;
constexpr double kRunBudgetSeconds = 60.0;
constexpr std::uint64_t kModelSeedMix = 0x9E3779B97F4A7C15ull;

const fs::path kData = LAYOUTFORGE_TEST_DATA;

int failures = 0;

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void report(const char* name, bool ok, const std::string& detail) {
  std::printf("%s %s: %s\n", ok ? "PASS" : "FAIL", name, detail.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

template <typename... Args>
std::string fmt(const char* f, Args... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void gradient_fidelity() {
  GradcheckOptions opt;
  opt.side = 16;
  opt.tokens = 6;
  opt.subjects = 3;
  opt.instances = 50;
  opt.epsilon = 1e-4;
  const auto t0 = std::chrono::steady_clock::now();
  const GradcheckReport r = run_gradcheck(opt);
  const double secs = seconds_since(t0);
  const bool ok = r.max_rel_phase1 < kGradTolLoss && r.max_rel_phase3 < kGradTolLoss &&
                  r.max_rel_composite < kGradTolComposite && secs < kGradBudgetSeconds && r.checked > 0;
  report("gradient-fidelity", ok,
         fmt("loss1 %.3g, loss3 %.3g, composite %.3g, %zu checked, %zu skipped, %.1f s", r.max_rel_phase1,
             r.max_rel_phase3, r.max_rel_composite, r.checked, r.skipped, secs));
}

void blocking_suite() {
  oracle::Rng rng(1001);
  int bad = 0, singles = 0;
  for (int i = 0; i < kBlockingInstances; ++i) {
    const int p = rng.integer(4, 16);
    const int n = rng.integer(2, 7);
    const AttentionMaps a = i % 2 ? oracle::peaked_maps(rng, p, n) : AttentionMaps(oracle::random_stack(rng, p, n));
    const int count = i % 4 == 0 ? 1 : rng.integer(1, n);
    const SubjectSet s(oracle::random_tokens(rng, n, count));
    LossWeights w;
    w.rect_side = i % 3 == 0 ? 0 : rng.integer(1, p);
    const int side = w.rect_side_for(p);
    const BlockingSequence seq = build_blocking_sequence(a, s, w);
    const oracle::BlockingOracle ref = oracle::naive_blocking(a, s, side);
    if (seq.order != ref.order || seq.masks != ref.masks) ++bad;
    for (std::size_t k = 0; k < seq.masks.size(); ++k) {
      const BinaryGrid prior = k == 0 ? BinaryGrid(p) : seq.masks[k - 1];
      if (!seq.masks[k].contains(prior)) ++bad;
      if (!seq.peaks[k]) continue;
      const Cell pk = *seq.peaks[k];
      if (prior.get(pk.row, pk.col)) ++bad;
      const Grid g = a.grid(seq.order[k]);
      for (int r = 0; r < p; ++r)
        for (int c = 0; c < p; ++c)
          if (!prior.get(r, c) && g(r, c) > g(pk.row, pk.col)) ++bad;
      BinaryGrid expect = prior;
      const BinaryGrid rectangle = rectangle_around(p, pk, side);
      for (int r = 0; r < p; ++r)
        for (int c = 0; c < p; ++c)
          if (rectangle.get(r, c)) expect.set(r, c);
      if (!(expect == seq.masks[k])) ++bad;
      // The rectangle is centred on the peak, extending up/left on even sides.
      const int top = pk.row - side / 2, left = pk.col - side / 2;
      for (int r = 0; r < p; ++r)
        for (int c = 0; c < p; ++c) {
          const bool in = r >= top && r < top + side && c >= left && c < left + side;
          if (rectangle.get(r, c) != in) ++bad;
        }
    }
    if (s.size() == 1) {
      ++singles;
      if (loss_be(a, s, seq) != 1.0 - oracle::naive_max(a.grid(s.tokens()[0]))) ++bad;
    }
  }
  report("blocking-masks", bad == 0 && singles > 0,
         fmt("%d instances, %d single-subject, %d violations", kBlockingInstances, singles, bad));
}

void overlap_correctness() {
  oracle::Rng rng(1002);
  int bad = 0, zero_cases = 0, touching_cases = 0;
  // Sparse maps: each subject lights a few cells, so disjointness varies.
  for (int i = 0; i < kOverlapInstances; ++i) {
    const int p = rng.integer(5, 12);
    const int k = rng.integer(2, 4);
    std::vector<Grid> grids;
    for (int j = 0; j < k; ++j) {
      Grid g(p);
      const int cells = rng.integer(1, 3);
      for (int c = 0; c < cells; ++c) g(rng.integer(0, p - 1), rng.integer(0, p - 1)) = rng.uniform(0.1, 1.0);
      grids.push_back(g);
    }
    std::vector<int> toks(static_cast<std::size_t>(k));
    for (int j = 0; j < k; ++j) toks[static_cast<std::size_t>(j)] = j;
    const SubjectSet s(toks);
    bool disjoint = true;
    for (int x = 0; x < k; ++x)
      for (int y = x + 1; y < k; ++y) {
        const Grid dx = oracle::naive_dilate(grids[static_cast<std::size_t>(x)]);
        const Grid dy = oracle::naive_dilate(grids[static_cast<std::size_t>(y)]);
        for (int r = 0; r < p; ++r)
          for (int c = 0; c < p; ++c)
            if (dx(r, c) > 0 && dy(r, c) > 0) disjoint = false;
      }
    const double total = loss_overlap(AttentionMaps::from_grids(grids), s).total;
    (disjoint ? zero_cases : touching_cases) += 1;
    if ((total == 0.0) != disjoint) ++bad;
  }
  // Values reach the hundreds on 16x16 grids, so the bound scales with them.
  double worst = 0, worst_abs = 0, largest = 0;
  for (int i = 0; i < kOverlapInstances; ++i) {
    const int p = rng.integer(3, 16);
    const int n = rng.integer(2, 6);
    const AttentionMaps a(oracle::random_stack(rng, p, n));
    const SubjectSet s(oracle::random_tokens(rng, n, rng.integer(2, n)));
    const OverlapLoss l = loss_overlap(a, s);
    const auto ref = oracle::naive_overlap(a, s);
    double sum = 0;
    auto track = [&](double got, double want) {
      worst = std::max(worst, std::abs(got - want) / std::max(1.0, std::abs(want)));
      worst_abs = std::max(worst_abs, std::abs(got - want));
      largest = std::max(largest, std::abs(want));
    };
    for (std::size_t k = 0; k < ref.size(); ++k) {
      track(l.per_subject[k], ref[k]);
      sum += ref[k];
    }
    track(l.total, sum);
  }
  const bool ok = bad == 0 && zero_cases > 0 && touching_cases > 0 && worst <= kOverlapTol;
  report("overlap-loss", ok,
         fmt("%d disjoint and %d touching constructed cases, %d mismatches, oracle error %.3g scaled "
             "(%.3g absolute, values up to %.1f)",
             zero_cases, touching_cases, bad, worst, worst_abs, largest));
}

void norm_loss() {
  oracle::Rng rng(1003);
  int bad = 0, active = 0;
  for (int i = 0; i < kNormInstances; ++i) {
    const int p = rng.integer(2, 16);
    const int k = rng.integer(1, 5);
    const AttentionMaps a(oracle::random_stack(rng, p, k, 0.0, rng.uniform(0.1, 3.0 * p)));
    std::vector<int> toks(static_cast<std::size_t>(k));
    for (int j = 0; j < k; ++j) toks[static_cast<std::size_t>(j)] = j;
    const double c = norm_threshold(p, static_cast<std::size_t>(k));
    for (double v : loss_norm(a, SubjectSet(toks))) {
      if (!(v == 0.0 || v >= c)) ++bad;
      if (v > 0.0) ++active;
    }
  }
  // Constant 4x4 maps with one subject: C = 16 and the norm is 4v.
  auto norm_of = [](double target) {
    return loss_norm(AttentionMaps::from_grids({Grid(4, target / 4.0)}), SubjectSet({0}))[0];
  };
  const double c = norm_threshold(4, 1);
  const double above = norm_of(c + kNormBoundary);
  const bool boundary = norm_of(c) == 0.0 && norm_of(c - kNormBoundary) == 0.0 &&
                        std::abs(above - (c + kNormBoundary)) < 1e-12;
  report("norm-loss", bad == 0 && active > 0 && boundary,
         fmt("%d instances, %d active penalties, %d out of range, boundary %s", kNormInstances, active, bad,
             boundary ? "ok" : "wrong"));
}

void shift_search() {
  oracle::Rng rng(1004);
  int bad = 0;
  const auto t0 = std::chrono::steady_clock::now();
  for (int i = 0; i < kShiftLayouts; ++i) {
    std::vector<BinaryGrid> masks;
    for (int k = 0; k < 3; ++k)
      masks.push_back(i % 2 ? oracle::random_blob_mask(rng, 16) : oracle::random_rect_mask(rng, 16, 9));
    const std::size_t who = static_cast<std::size_t>(rng.integer(0, 2));
    std::vector<BinaryGrid> others;
    for (std::size_t k = 0; k < 3; ++k)
      if (k != who) others.push_back(masks[k]);
    const Shift s = search_shift(masks[who], others);
    const oracle::ShiftChoice ref = oracle::brute_force_shift(masks[who], others);
    if (shift_overlap(masks[who], s, others) != ref.overlap) ++bad;
    if (s.dy < 0 || !oracle::shifted_inside(masks[who], s.dy, s.dx)) ++bad;
  }
  const double secs = seconds_since(t0);
  report("shift-search", bad == 0 && secs < kShiftBudgetSeconds,
         fmt("%d layouts, %d mismatches, %.2f s", kShiftLayouts, bad, secs));
}

void layout_monotonicity() {
  oracle::Rng rng(1005);
  int bad = 0, improvable = 0;
  for (int i = 0; i < kLayoutInstances; ++i) {
    const int n = rng.integer(3, 8);
    const AttentionMaps a = oracle::peaked_maps(rng, 16, n);
    const SubjectSet s(oracle::random_tokens(rng, n, rng.integer(2, std::min(n, 4))));
    const LayoutPlan plan = plan_layout(a, s, GammaConfig{});
    const auto& init = plan.initial_masks;
    if (plan.overlap_before != oracle::naive_total_overlap(init)) ++bad;
    if (plan.overlap_after != oracle::naive_total_overlap(plan.final_masks)) ++bad;
    if (plan.overlap_after > plan.overlap_before) ++bad;
    // First mover per the oracle: highest overlap ratio, lowest index on ties.
    std::size_t first = 0;
    double best = -1;
    for (std::size_t k = 0; k < init.size(); ++k) {
      const double r = oracle::naive_ratio(init, k);
      if (r > best) best = r, first = k;
    }
    if (best <= 0) continue;
    std::vector<BinaryGrid> others;
    std::size_t current = 0;
    for (std::size_t k = 0; k < init.size(); ++k)
      if (k != first) {
        others.push_back(init[k]);
        current += oracle::naive_pair_overlap(init[first], init[k]);
      }
    if (oracle::brute_force_shift(init[first], others).overlap < current) {
      ++improvable;
      if (!(plan.overlap_after < plan.overlap_before)) ++bad;
    }
  }
  report("layout-monotonicity", bad == 0 && improvable > 0,
         fmt("%d instances, %d with an improving shift, %d violations", kLayoutInstances, improvable, bad));
}

void migration_conservation() {
  oracle::Rng rng(1006);
  int bad = 0, moved = 0;
  for (int i = 0; i < kMigrations; ++i) {
    const int p = rng.integer(3, 10);
    std::vector<BinaryGrid> initial;
    for (int s = 0; s < 3; ++s) initial.push_back(oracle::random_blob_mask(rng, p));
    const LayoutPlan plan = plan_from_masks(initial);
    const AttentionMaps a(oracle::random_stack(rng, p, 4, 0.01, 1.0));
    const SubjectSet s = i % 2 ? SubjectSet({0, 1, 2}, 3) : SubjectSet({0, 1, 2});
    LatentGrid z(3, 4 * p, 4 * p);
    for (double& v : z.values()) v = rng.uniform(-2, 2);
    ImputationConfig icfg;
    icfg.seed = static_cast<std::uint64_t>(1000 + i);
    icfg.k = rng.integer(1, 6);
    if (i % 3 == 0) icfg.mode = ImputationMode::random_normal;
    const LatentGrid out = migrate_latent(z, plan, a, s, icfg);
    if (!(out == oracle::naive_migrate(z, plan, a, s, icfg))) ++bad;
    if (!(out == migrate_latent(z, plan, a, s, icfg))) ++bad;

    const MigrationRegions reg = migration_regions(plan, p);
    for (int y = 0; y < 4 * p; ++y)
      for (int x = 0; x < 4 * p; ++x)
        if (!reg.destinations.get(y, x) && !reg.vacated.get(y, x))
          for (int c = 0; c < 3; ++c)
            if (out.at(c, y, x) != z.at(c, y, x)) ++bad;

    // Each mover alone carries its region's values intact.
    for (const Mover& mv : plan.movers) {
      ++moved;
      LayoutPlan one = plan;
      one.movers = {mv};
      const LatentGrid o1 = migrate_latent(z, one, a, s, icfg);
      const BinaryGrid src = upscale_mask(initial[mv.subject]);
      std::vector<double> before, after;
      for (int y = 0; y < 4 * p; ++y)
        for (int x = 0; x < 4 * p; ++x)
          if (src.get(y, x))
            for (int c = 0; c < 3; ++c) {
              before.push_back(z.at(c, y, x));
              after.push_back(o1.at(c, y + 4 * mv.shift.dy, x + 4 * mv.shift.dx));
            }
      std::sort(before.begin(), before.end());
      std::sort(after.begin(), after.end());
      if (before != after) ++bad;
    }
  }
  report("migration-conservation", bad == 0 && moved > 0,
         fmt("%d migrations, %d movers, %d violations", kMigrations, moved, bad));
}

struct EndToEnd {
  GuidanceTrace trace;
  double seconds = 0;
};

EndToEnd toy_run(std::uint64_t seed, const AblationFlags& flags) {
  GuidanceConfig cfg;
  cfg.flags = flags;
  cfg.imputation.seed = seed;
  const ToyAttentionModel model(8, 4, seed ^ kModelSeedMix);
  const auto t0 = std::chrono::steady_clock::now();
  EndToEnd r{run_guidance(random_latent(4, 16, seed), model, SubjectSet({1, 3, 5}), cfg), 0};
  r.seconds = seconds_since(t0);
  return r;
}

std::size_t final_mask_overlap(const GuidanceTrace& t) {
  const AttentionMaps& a = *t.final_attention;
  const GammaConfig g = GammaConfig{}.resolved(a.side(), 3);
  std::vector<BinaryGrid> masks;
  for (int tok : {1, 3, 5}) {
    const Grid grid = a.grid(tok);
    masks.push_back(threshold_mask(grid, adapt_gamma(grid, g, 3)));
  }
  return total_overlap(masks);
}

void end_to_end_and_ablation() {
  int converged = 0, monotone = 0;
  double slowest = 0, full_overlap = 0, ablated_overlap = 0;
  AblationFlags ablated;
  ablated.enable_be = ablated.enable_ol = false;
  for (int seed = 0; seed < kSeeds; ++seed) {
    const EndToEnd full = toy_run(static_cast<std::uint64_t>(seed), AblationFlags{});
    slowest = std::max(slowest, full.seconds);
    if (full.trace.loss3_final < kFollowRatio * full.trace.loss3_after_rearrange) ++converged;
    if (full.trace.plan && full.trace.plan->overlap_after <= full.trace.plan->overlap_before) ++monotone;
    full_overlap += static_cast<double>(final_mask_overlap(full.trace));
    const EndToEnd off = toy_run(static_cast<std::uint64_t>(seed), ablated);
    ablated_overlap += static_cast<double>(final_mask_overlap(off.trace));
  }
  const bool ok = converged >= static_cast<int>(std::ceil(kFollowFraction * kSeeds)) && monotone == kSeeds &&
                  slowest < kRunBudgetSeconds;
  report("end-to-end-guidance", ok,
         fmt("%d/%d seeds below %.2f of the post-rearrangement loss, %d/%d monotone layouts, slowest run %.2f s",
             converged, kSeeds, kFollowRatio, monotone, kSeeds, slowest));
  full_overlap /= kSeeds;
  ablated_overlap /= kSeeds;
  report("ablation-direction", ablated_overlap > full_overlap,
         fmt("mean final mask overlap %.2f without excitation and overlap losses, %.2f with them", ablated_overlap,
             full_overlap));
}

void exchange_and_golden() {
  int tensors = 0, bad = 0;
  for (const auto& entry : fs::directory_iterator(kData / "fixtures")) {
    if (entry.path().extension() != ".xamt") continue;
    const std::string bytes = slurp(entry.path());
    const std::vector<std::uint8_t> raw(bytes.begin(), bytes.end());
    ExchangeTensor t;
    try {
      t = decode_tensor(raw);
    } catch (const std::exception&) {
      continue;  // the malformed fixtures
    }
    ++tensors;
    if (encode_tensor(t) != raw) ++bad;
  }
  struct Golden {
    const char* command;
    const char* manifest;
    const char* file;
  };
  const Golden goldens[] = {{"loss1", "loss1.json", "loss1_report.txt"},
                            {"masks", "masks.json", "masks_report.txt"},
                            {"loss3", "loss3.json", "loss3_report.txt"},
                            {"rearrange", "rearrange_disjoint.json", "rearrange_disjoint_report.txt"},
                            {"rearrange", "rearrange.json", "rearrange/rearrange_report.txt"},
                            {"guide", "guide_demo.json", "guide/guide_report.txt"}};
  int reports = 0;
  const fs::path out = fs::temp_directory_path() / "layoutforge_acceptance";
  for (const Golden& g : goldens) {
    for (int pass = 0; pass < 2; ++pass) {
      std::ostringstream o, e;
      const int code = run_cli({g.command, "--manifest", (kData / "fixtures" / g.manifest).string(), "--out",
                                out.string()},
                               o, e);
      ++reports;
      if (code != kExitOk || o.str() != slurp(kData / "golden" / g.file)) ++bad;
    }
  }
  if (slurp(out / "trace.txt") != slurp(kData / "golden" / "guide" / "trace.txt")) ++bad;
  report("exchange-format", bad == 0 && tensors > 0,
         fmt("%d fixtures round-tripped, %d golden report runs, %d mismatches", tensors, reports, bad));
}

}  // namespace

int main() {
  gradient_fidelity();
  blocking_suite();
  overlap_correctness();
  norm_loss();
  shift_search();
  layout_monotonicity();
  migration_conservation();
  end_to_end_and_ablation();
  exchange_and_golden();
  std::printf("%s: %d failing criteria\n", failures ? "FAIL" : "PASS", failures);
  return failures ? 1 : 0;
}
