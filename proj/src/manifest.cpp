// SPDX-License-Identifier: Apache-2.0
#include "layoutforge/manifest.hpp"

#include <fstream>
#include <sstream>

#include "json.hpp"
#include "layoutforge/errors.hpp"

namespace layoutforge {

namespace {

using nlohmann::json;

template <typename T>
void read_opt(const json& obj, const char* key, T& out) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("manifest field '") + key + "': " + e.what());
  }
}

const json& section(const json& root, const char* key) {
  static const json empty = json::object();
  if (!root.contains(key)) return empty;
  const json& s = root.at(key);
  if (!s.is_object()) throw ConfigError(std::string("manifest section '") + key + "' must be an object");
  return s;
}

std::filesystem::path existing_path(const json& value, const std::filesystem::path& base, const char* what) {
  if (!value.is_string()) throw ConfigError(std::string("manifest field '") + what + "' must be a path string");
  std::filesystem::path p = value.get<std::string>();
  if (p.is_relative()) p = base / p;
  if (!std::filesystem::exists(p)) throw ConfigError(std::string(what) + " file not found: " + p.string());
  return p;
}

ImputationMode parse_mode(const std::string& s) {
  if (s == "auto") return ImputationMode::automatic;
  if (s == "random-normal") return ImputationMode::random_normal;
  if (s == "background-copy") return ImputationMode::background_copy;
  throw ConfigError("unknown imputation mode '" + s + "'");
}

}  // namespace

RunManifest parse_manifest(const std::string& text, const std::filesystem::path& base_dir) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("manifest is not valid JSON: ") + e.what());
  }
  if (!root.is_object()) throw ConfigError("manifest must be a JSON object");

  RunManifest m;
  try {
    if (!root.contains("subjects")) throw ConfigError("manifest needs 'subjects'");
    std::vector<int> subjects;
    read_opt(root, "subjects", subjects);
    std::optional<int> background;
    if (root.contains("background") && !root.at("background").is_null()) {
      int b = 0;
      read_opt(root, "background", b);
      background = b;
    }
    m.subjects = SubjectSet(subjects, background);
  } catch (const ArgumentError& e) {
    throw ConfigError(e.what());
  }
  if (m.subjects.empty()) throw ConfigError("manifest 'subjects' is empty");

  if (root.contains("grid")) {
    int p = 0;
    read_opt(root, "grid", p);
    m.grid = p;
  }
  if (root.contains("tokens")) {
    int n = 0;
    read_opt(root, "tokens", n);
    m.tokens = n;
    try {
      m.subjects.validate(n);
    } catch (const ArgumentError& e) {
      throw ConfigError(e.what());
    }
  }
  read_opt(root, "channels", m.channels);
  read_opt(root, "seed", m.seed);
  m.seed_given = root.contains("seed");
  read_opt(root, "key_scale", m.key_scale);
  if (m.channels < 1) throw ConfigError("channels must be positive");

  LossWeights& w = m.guidance.weights;
  const json& jw = section(root, "weights");
  read_opt(jw, "be", w.be);
  read_opt(jw, "ol", w.ol);
  read_opt(jw, "norm", w.norm);
  read_opt(jw, "inside", w.inside);
  read_opt(jw, "fill", w.fill);
  read_opt(jw, "rect_side", w.rect_side);

  PhaseSchedule& s = m.guidance.schedule;
  const json& js = section(root, "schedule");
  read_opt(js, "T", s.total_steps);
  read_opt(js, "tau", s.tau);
  read_opt(js, "iters_per_step", s.iters_per_step);
  read_opt(js, "alpha", s.alpha);
  read_opt(js, "alpha_follow", s.alpha_follow);
  s.validate();

  GammaConfig& g = m.guidance.gamma;
  const json& jg = section(root, "gamma");
  read_opt(jg, "gamma0", g.gamma0);
  read_opt(jg, "step", g.step);
  read_opt(jg, "area_lo", g.area_lo);
  read_opt(jg, "area_hi", g.area_hi);

  ImputationConfig& ic = m.guidance.imputation;
  const json& ji = section(root, "imputation");
  std::string mode = "auto";
  read_opt(ji, "mode", mode);
  ic.mode = parse_mode(mode);
  read_opt(ji, "k", ic.k);
  ic.seed = m.seed;
  read_opt(ji, "seed", ic.seed);
  if (ic.mode == ImputationMode::background_copy) {
    if (!m.subjects.background()) throw ConfigError("background-copy imputation needs 'background'");
    if (ic.k < 1) throw ConfigError("imputation k must be >= 1");
  }

  AblationFlags& f = m.guidance.flags;
  const json& jf = section(root, "flags");
  read_opt(jf, "be", f.enable_be);
  read_opt(jf, "ol", f.enable_ol);
  read_opt(jf, "norm", f.enable_norm);
  read_opt(jf, "inside", f.enable_inside);
  read_opt(jf, "fill", f.enable_fill);
  read_opt(jf, "pixel_realloc", f.enable_pixel_realloc);
  read_opt(jf, "restart", f.enable_restart);

  const json& jp = section(root, "preprocess");
  read_opt(jp, "normalize_tokens", m.normalize_tokens);
  read_opt(jp, "smooth", m.smooth);
  m.guidance.smooth_masks = m.smooth;

  const json& jc = section(root, "gradcheck");
  read_opt(jc, "instances", m.gradcheck_instances);
  read_opt(jc, "corrupt_gradient", m.corrupt_gradient);

  if (root.contains("attention")) m.attention = existing_path(root.at("attention"), base_dir, "attention");
  if (root.contains("latent")) m.latent = existing_path(root.at("latent"), base_dir, "latent");
  if (root.contains("masks")) {
    const json& jm = root.at("masks");
    if (!jm.is_array()) throw ConfigError("manifest 'masks' must be an array of paths");
    for (const auto& p : jm) m.masks.push_back(existing_path(p, base_dir, "mask"));
  }

  if (m.grid) {
    if (*m.grid < 2) throw ConfigError("grid must be >= 2");
    w.validate(*m.grid);
    g.resolved(*m.grid, m.subjects.size()).validate(*m.grid);
  }
  return m;
}

RunManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read manifest " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  RunManifest m = parse_manifest(text.str(), path.parent_path());
  m.source = path;
  return m;
}

}  // namespace layoutforge
