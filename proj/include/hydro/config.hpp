// SPDX-License-Identifier: Apache-2.0
//
// Run configuration: TOML on disk, canonical JSON for hashing.
#pragma once

#include <filesystem>
#include <string>

#include "hydro/distill.hpp"

namespace hydro::config {

struct RunConfig {
  std::string dataset;  // dataset directory
  std::string output;   // artifact directory
  distill::DistillConfig distill;
};

/// Reads a TOML file. Unknown keys and wrongly typed values are ConfigErrors.
RunConfig load(const std::filesystem::path& path);
void save(const RunConfig& cfg, const std::filesystem::path& path);

/// Applies a single `key = value` override using the same key names as the
/// TOML file (e.g. "epochs", "lr_feat").
void set_field(RunConfig& cfg, const std::string& key, const std::string& value);

/// Sorted-key JSON of every field that influences the artifact (the output
/// directory is excluded), numbers with 17 significant digits.
std::string canonical_json(const RunConfig& cfg);
std::string sha256_hex(const std::string& data);
std::string config_hash(const RunConfig& cfg);

}  // namespace hydro::config
