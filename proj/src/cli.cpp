// SPDX-License-Identifier: Apache-2.0
#include "layoutforge/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <optional>

#include "CLI11.hpp"
#include "layoutforge/errors.hpp"
#include "layoutforge/exchange.hpp"
#include "layoutforge/gradcheck.hpp"
#include "layoutforge/guidance.hpp"
#include "layoutforge/log.hpp"
#include "layoutforge/manifest.hpp"
#include "layoutforge/phase1.hpp"
#include "layoutforge/phase2.hpp"
#include "layoutforge/phase3.hpp"
#include "layoutforge/report.hpp"

namespace layoutforge {

namespace {

namespace fs = std::filesystem;

constexpr std::uint64_t kModelSeedMix = 0x9E3779B97F4A7C15ull;

struct Options {
  std::string manifest;
  std::string out = ".";
  std::optional<std::uint64_t> seed;
  bool emit_grad = false;
};

RunManifest load(const Options& o) {
  if (!fs::exists(o.manifest)) throw ConfigError("manifest not found: " + o.manifest);
  RunManifest m = load_manifest(o.manifest);
  if (o.seed) {
    m.seed = *o.seed;
    m.seed_given = true;
    m.guidance.imputation.seed = *o.seed;
  }
  log_message(LogLevel::info, "loaded manifest " + o.manifest);
  return m;
}

fs::path out_dir(const Options& o) {
  fs::path dir(o.out);
  fs::create_directories(dir);
  return dir;
}

void check_grid(const RunManifest& m, int side, int tokens) {
  if (m.grid && *m.grid != side) {
    throw DimensionError("attention grid is " + std::to_string(side) + ", manifest says " + std::to_string(*m.grid));
  }
  if (m.tokens && *m.tokens != tokens) {
    throw DimensionError("attention has " + std::to_string(tokens) + " tokens, manifest says " +
                         std::to_string(*m.tokens));
  }
  m.subjects.validate(tokens);
}

AttentionMaps load_attention(const RunManifest& m) {
  if (!m.attention) throw ConfigError("manifest has no 'attention' path");
  AttentionMaps a = attention_from_exchange(read_tensor(*m.attention));
  check_grid(m, a.side(), a.tokens());
  if (m.normalize_tokens) a = normalize_over_tokens(a);
  if (m.smooth) {
    TokenStack s = a.stack();
    for (int n = 0; n < a.tokens(); ++n) s.set_grid(n, gaussian_smooth3x3(a.grid(n)));
    a = AttentionMaps(std::move(s));
  }
  log_message(LogLevel::debug, "attention " + std::to_string(a.side()) + "x" + std::to_string(a.side()) + "x" +
                                   std::to_string(a.tokens()));
  return a;
}

LatentGrid load_latent(const RunManifest& m) {
  if (!m.latent) throw ConfigError("manifest has no 'latent' path");
  return latent_from_exchange(read_tensor(*m.latent));
}

void require_seed(const RunManifest& m) {
  if (!m.seed_given) throw ConfigError("manifest needs 'seed' (or pass --seed)");
}

std::vector<double> subject_maxima(const AttentionMaps& a, const SubjectSet& s) {
  std::vector<double> out;
  for (int tok : s.tokens()) out.push_back(a.grid(tok).max());
  return out;
}

void write_report(const Options& o, const std::string& name, const Report& r, std::ostream& out) {
  out << r.str();
  std::ofstream f(out_dir(o) / (name + "_report.txt"), std::ios::trunc);
  if (!f) throw Error("cannot write report to " + o.out);
  f << r.str();
}

void add_masks(Report& r, const std::string& key, const std::vector<BinaryGrid>& masks) {
  std::vector<int> areas;
  for (const auto& m : masks) areas.push_back(static_cast<int>(m.area()));
  r.add(key, format_list(areas));
}

std::string mask_file(const std::string& prefix, int token) { return prefix + "_" + std::to_string(token) + ".xamt"; }

int cmd_loss1(const Options& o, std::ostream& out) {
  const RunManifest m = load(o);
  const AttentionMaps a = load_attention(m);
  const LossWeights w = m.guidance.flags.filter(m.guidance.weights);
  const Phase1Result r = loss_phase1(a, m.subjects, w);

  Report rep;
  rep.add("command", std::string_view("loss1"));
  rep.add("grid", a.side());
  rep.add("tokens", a.tokens());
  rep.add("subjects", format_list(m.subjects.tokens()));
  rep.add("block_order", format_list(r.branch.order));
  rep.add("max_attention_per_subject", format_list(subject_maxima(a, m.subjects)));
  rep.add("loss_be", r.be);
  rep.add("loss_ol_per_subject", format_list(r.overlap.per_subject));
  rep.add("loss_ol_total", r.overlap.total);
  rep.add("loss_norm_threshold", norm_threshold(a.side(), m.subjects.size()));
  rep.add("loss_norm_per_subject", format_list(r.norm));
  rep.add("loss_total", r.total);
  if (o.emit_grad) {
    write_tensor(out_dir(o) / "grad_loss1.xamt", to_exchange(r.gradient));
    rep.add("gradient_file", std::string_view("grad_loss1.xamt"));
  }
  write_report(o, "loss1", rep, out);
  return kExitOk;
}

int cmd_masks(const Options& o, std::ostream& out) {
  const RunManifest m = load(o);
  const AttentionMaps a = load_attention(m);
  const GammaConfig g = m.guidance.gamma.resolved(a.side(), m.subjects.size());
  g.validate(a.side());
  const fs::path dir = out_dir(o);

  Report rep;
  rep.add("command", std::string_view("masks"));
  rep.add("grid", a.side());
  rep.add("subjects", format_list(m.subjects.tokens()));
  rep.add("area_bounds", std::to_string(g.area_lo) + "," + std::to_string(g.area_hi));
  std::vector<double> gammas;
  std::vector<BinaryGrid> masks;
  for (int tok : m.subjects.tokens()) {
    const double gamma = adapt_gamma(a.grid(tok), g, m.subjects.size());
    gammas.push_back(gamma);
    masks.push_back(threshold_mask(a.grid(tok), gamma));
    write_tensor(dir / mask_file("mask", tok), to_exchange(masks.back()));
  }
  rep.add("gamma_per_subject", format_list(gammas));
  add_masks(rep, "area_per_subject", masks);
  rep.add("overlap", total_overlap(masks));
  write_report(o, "masks", rep, out);
  return kExitOk;
}

int cmd_rearrange(const Options& o, std::ostream& out) {
  const RunManifest m = load(o);
  const AttentionMaps a = load_attention(m);
  const LatentGrid z = load_latent(m);
  const int expect = kLatentScale * a.side();
  if (z.height() != expect || z.width() != expect) {
    throw DimensionError("latent is " + std::to_string(z.height()) + "x" + std::to_string(z.width()) +
                         ", expected " + std::to_string(expect) + "x" + std::to_string(expect));
  }
  const LayoutPlan plan = plan_layout(a, m.subjects, m.guidance.gamma);
  const LatentGrid moved = migrate_latent(z, plan, a, m.subjects, m.guidance.imputation);
  const fs::path dir = out_dir(o);

  Report rep;
  rep.add("command", std::string_view("rearrange"));
  rep.add("grid", a.side());
  rep.add("subjects", format_list(m.subjects.tokens()));
  rep.add("gamma_per_subject", format_list(plan.gammas));
  add_masks(rep, "area_per_subject", plan.initial_masks);
  rep.add("mover_count", plan.movers.size());
  for (const Mover& mv : plan.movers) {
    const int tok = m.subjects.tokens()[mv.subject];
    rep.add("mover", "token=" + std::to_string(tok) + " ratio=" + format_number(mv.ratio) +
                         " dy=" + std::to_string(mv.shift.dy) + " dx=" + std::to_string(mv.shift.dx));
  }
  rep.add("overlap_before", plan.overlap_before);
  rep.add("overlap_after", plan.overlap_after);
  rep.add("identity", plan.is_identity());
  for (std::size_t i = 0; i < m.subjects.size(); ++i) {
    const int tok = m.subjects.tokens()[i];
    write_tensor(dir / mask_file("mask_initial", tok), to_exchange(plan.initial_masks[i]));
    write_tensor(dir / mask_file("mask_final", tok), to_exchange(plan.final_masks[i]));
  }
  write_tensor(dir / "latent_rearranged.xamt", to_exchange(moved));
  write_report(o, "rearrange", rep, out);
  return kExitOk;
}

int cmd_loss3(const Options& o, std::ostream& out) {
  const RunManifest m = load(o);
  const AttentionMaps a = load_attention(m);
  if (m.masks.empty()) throw ConfigError("manifest has no 'masks' paths");
  MaskSet masks;
  for (const auto& p : m.masks) masks.push_back(mask_from_exchange(read_tensor(p)));
  const LossWeights w = m.guidance.flags.filter(m.guidance.weights);
  const Phase3Result r = loss_phase3(a, m.subjects, masks, w);

  Report rep;
  rep.add("command", std::string_view("loss3"));
  rep.add("grid", a.side());
  rep.add("subjects", format_list(m.subjects.tokens()));
  add_masks(rep, "mask_area_per_subject", masks);
  rep.add("loss_inside", r.inside);
  rep.add("loss_fill", r.fill);
  rep.add("loss_total", r.total);
  if (o.emit_grad) {
    write_tensor(out_dir(o) / "grad_loss3.xamt", to_exchange(r.gradient));
    rep.add("gradient_file", std::string_view("grad_loss3.xamt"));
  }
  write_report(o, "loss3", rep, out);
  return kExitOk;
}

int cmd_guide(const Options& o, std::ostream& out) {
  const RunManifest m = load(o);
  require_seed(m);
  if (!m.tokens) throw ConfigError("manifest needs 'tokens' for guide");
  std::optional<LatentGrid> z0;
  if (m.latent) {
    z0 = load_latent(m);
  } else {
    if (!m.grid) throw ConfigError("manifest needs 'grid' or 'latent' for guide");
    z0 = random_latent(m.channels, *m.grid, m.seed);
  }
  if (m.grid && z0->height() != kLatentScale * *m.grid) throw DimensionError("latent does not match grid");
  const ToyAttentionModel model(*m.tokens, z0->channels(), m.seed ^ kModelSeedMix, m.key_scale);
  log_message(LogLevel::info, "guide: T=" + std::to_string(m.guidance.schedule.total_steps) +
                                  " tau=" + std::to_string(m.guidance.schedule.tau));
  const GuidanceTrace trace = run_guidance(*z0, model, m.subjects, m.guidance);
  const fs::path dir = out_dir(o);

  {
    std::ofstream f(dir / "trace.txt", std::ios::trunc);
    if (!f) throw Error("cannot write trace to " + o.out);
    f << format_trace(trace);
  }
  write_tensor(dir / "latent_final.xamt", to_exchange(trace.final_latent));
  if (trace.final_attention) write_tensor(dir / "attention_final.xamt", to_exchange(trace.final_attention->stack()));
  for (std::size_t i = 0; i < m.subjects.size(); ++i) {
    write_tensor(dir / mask_file("mask_final", m.subjects.tokens()[i]), to_exchange(trace.plan->final_masks[i]));
  }

  Report rep;
  rep.add("command", std::string_view("guide"));
  rep.add("seed", std::to_string(m.seed));
  rep.add("total_steps", m.guidance.schedule.total_steps);
  rep.add("rearrange_step", m.guidance.schedule.rearrange_step());
  rep.add("records", trace.records.size());
  rep.add("overlap_before", trace.plan->overlap_before);
  rep.add("overlap_after", trace.plan->overlap_after);
  rep.add("mover_count", trace.plan->movers.size());
  rep.add("loss3_after_rearrange", trace.loss3_after_rearrange);
  rep.add("loss3_final", trace.loss3_final);
  write_report(o, "guide", rep, out);
  return kExitOk;
}

int cmd_gradcheck(const Options& o, std::ostream& out) {
  const RunManifest m = load(o);
  require_seed(m);
  GradcheckOptions g;
  g.seed = m.seed;
  g.instances = m.gradcheck_instances;
  g.corrupt_gradient = m.corrupt_gradient;
  if (m.grid) g.side = *m.grid;
  if (m.tokens) g.tokens = *m.tokens;
  g.subjects = static_cast<int>(m.subjects.size());
  g.composite_side = std::min(g.side, g.composite_side);
  const GradcheckReport r = run_gradcheck(g);

  Report rep;
  rep.add("command", std::string_view("gradcheck"));
  rep.add("instances", g.instances);
  rep.add("checked", r.checked);
  rep.add("skipped", r.skipped);
  rep.add("max_rel_error_loss1", r.max_rel_phase1);
  rep.add("max_rel_error_loss3", r.max_rel_phase3);
  rep.add("max_rel_error_composite", r.max_rel_composite);
  rep.add("tolerance_loss", kLossGradTolerance);
  rep.add("tolerance_composite", kCompositeGradTolerance);
  rep.add("result", std::string_view(r.pass ? "pass" : "fail"));
  write_report(o, "gradcheck", rep, out);
  return r.pass ? kExitOk : kExitGradcheck;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Three-phase cross-attention layout guidance"};
  app.set_version_flag("--version", std::string("layoutforge ") + kVersion);
  app.require_subcommand(1);

  Options opts;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--manifest", opts.manifest, "Run manifest (JSON)")->required();
    sub->add_option("--out", opts.out, "Output directory");
    sub->add_option("--seed", opts.seed, "Override the manifest seed");
  };

  struct Entry {
    CLI::App* app;
    int (*fn)(const Options&, std::ostream&);
  };
  std::vector<Entry> commands;
  auto sub = [&](const char* name, const char* help, int (*fn)(const Options&, std::ostream&), bool grad) {
    CLI::App* s = app.add_subcommand(name, help);
    add_common(s);
    if (grad) s->add_flag("--emit-grad", opts.emit_grad, "Also write the gradient tensor");
    commands.push_back({s, fn});
  };
  sub("loss1", "Phase-one losses on an attention tensor", cmd_loss1, true);
  sub("masks", "Threshold subject masks with adaptive gamma", cmd_masks, false);
  sub("rearrange", "Plan shifts and migrate the latent", cmd_rearrange, false);
  sub("loss3", "Mask-following losses", cmd_loss3, true);
  sub("guide", "Full three-phase run on the toy model", cmd_guide, false);
  sub("gradcheck", "Finite-difference check of the analytic gradients", cmd_gradcheck, false);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForVersion&) {
    out << app.version() << '\n';
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }

  try {
    for (const Entry& c : commands) {
      if (c.app->parsed()) return c.fn(opts, out);
    }
    err << "error: no command given\n";
    return kExitUsage;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ArgumentError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const FormatError& e) {
    err << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const DimensionError& e) {
    err << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const DegenerateError& e) {
    err << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const NumericError& e) {
    err << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }
}

}  // namespace layoutforge
