// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "layoutforge/guidance.hpp"
#include "layoutforge/tensor.hpp"

namespace layoutforge {

/// Parsed JSON run manifest. Relative paths resolve against the manifest's
/// directory; every referenced file must exist.
struct RunManifest {
  std::filesystem::path source;
  SubjectSet subjects;
  std::optional<int> grid;    // P
  std::optional<int> tokens;  // N
  int channels = 4;
  std::uint64_t seed = 0;
  bool seed_given = false;

  GuidanceConfig guidance;  // weights, schedule, gamma, imputation, flags
  double key_scale = ToyAttentionModel::kDefaultKeyScale;

  bool normalize_tokens = false;
  bool smooth = false;

  std::optional<std::filesystem::path> attention;
  std::optional<std::filesystem::path> latent;
  std::vector<std::filesystem::path> masks;

  // gradcheck
  int gradcheck_instances = 5;
  bool corrupt_gradient = false;
};

/// Throws ConfigError on malformed or inconsistent manifests.
RunManifest parse_manifest(const std::string& text, const std::filesystem::path& base_dir);
RunManifest load_manifest(const std::filesystem::path& path);

}  // namespace layoutforge
