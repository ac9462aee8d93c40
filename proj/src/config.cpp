// SPDX-License-Identifier: Apache-2.0
#include "hydro/config.hpp"

#include <fmt/format.h>
#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#define TOML_EXCEPTIONS 1
#include <toml.hpp>

#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>
#include <variant>

#include "hydro/errors.hpp"
#include "hydro/graph.hpp"

namespace hydro::config {

namespace {

using distill::DistillConfig;
using Member = std::variant<double DistillConfig::*, int DistillConfig::*, std::uint64_t DistillConfig::*>;

// Sorted by name so iteration order is canonical.
const std::map<std::string, Member>& fields() {
  static const std::map<std::string, Member> table = {
      {"beta", &DistillConfig::beta},
      {"curvature", &DistillConfig::curvature},
      {"epochs", &DistillConfig::epochs},
      {"gap_floor", &DistillConfig::gap_floor},
      {"gap_weight", &DistillConfig::gap_weight},
      {"hidden", &DistillConfig::hidden},
      {"inner", &DistillConfig::inner},
      {"layers", &DistillConfig::layers},
      {"lr_feat", &DistillConfig::lr_feat},
      {"lr_model", &DistillConfig::lr_model},
      {"lr_struct", &DistillConfig::lr_struct},
      {"momentum", &DistillConfig::momentum},
      {"outer", &DistillConfig::outer},
      {"probe_epochs", &DistillConfig::probe_epochs},
      {"probe_every", &DistillConfig::probe_every},
      {"ratio", &DistillConfig::ratio},
      {"sample_size", &DistillConfig::sample_size},
      {"seed", &DistillConfig::seed},
      {"sgc_hops", &DistillConfig::sgc_hops},
      {"weight_decay", &DistillConfig::weight_decay},
  };
  return table;
}

template <typename T>
T parse_exact(const std::string& key, const std::string& text) {
  T v{};
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw ConfigError(fmt::format("{}: cannot parse '{}'", key, text));
  }
  return v;
}

}  // namespace

void set_field(RunConfig& cfg, const std::string& key, const std::string& value) {
  if (key == "dataset") {
    cfg.dataset = value;
    return;
  }
  if (key == "output") {
    cfg.output = value;
    return;
  }
  const auto it = fields().find(key);
  if (it == fields().end()) throw ConfigError(fmt::format("unknown configuration key '{}'", key));
  std::visit(
      [&](auto member) {
        using T = std::remove_reference_t<decltype(cfg.distill.*member)>;
        cfg.distill.*member = parse_exact<T>(key, value);
      },
      it->second);
}

RunConfig load(const std::filesystem::path& path) {
  toml::table doc;
  try {
    doc = toml::parse_file(path.string());
  } catch (const toml::parse_error& e) {
    throw ConfigError(fmt::format("{}: {}", path.string(), e.description()));
  }
  RunConfig cfg;
  for (const auto& [k, node] : doc) {
    const std::string key(k.str());
    if (key == "dataset" || key == "output") {
      const auto s = node.value<std::string>();
      if (!s) throw ConfigError(fmt::format("{}: '{}' must be a string", path.string(), key));
      (key == "dataset" ? cfg.dataset : cfg.output) = *s;
    } else if (key == "distill") {
      const auto* table = node.as_table();
      if (!table) throw ConfigError(fmt::format("{}: [distill] must be a table", path.string()));
      for (const auto& [dk, dnode] : *table) {
        const std::string name(dk.str());
        const auto it = fields().find(name);
        if (it == fields().end()) throw ConfigError(fmt::format("{}: unknown key distill.{}", path.string(), name));
        std::visit(
            [&](auto member) {
              using T = std::remove_reference_t<decltype(cfg.distill.*member)>;
              if constexpr (std::is_floating_point_v<T>) {
                const auto v = dnode.value<double>();
                if (!v) throw ConfigError(fmt::format("distill.{} must be a number", name));
                cfg.distill.*member = *v;
              } else {
                const auto* iv = dnode.as_integer();
                if (!iv || iv->get() < 0) throw ConfigError(fmt::format("distill.{} must be a nonnegative integer", name));
                cfg.distill.*member = static_cast<T>(iv->get());
              }
            },
            it->second);
      }
    } else {
      throw ConfigError(fmt::format("{}: unknown key '{}'", path.string(), key));
    }
  }
  return cfg;
}

void save(const RunConfig& cfg, const std::filesystem::path& path) {
  toml::table distill_table;
  for (const auto& [name, member] : fields()) {
    std::visit(
        [&](auto m) {
          using T = std::remove_reference_t<decltype(cfg.distill.*m)>;
          if constexpr (std::is_floating_point_v<T>) {
            distill_table.insert(name, cfg.distill.*m);
          } else {
            distill_table.insert(name, static_cast<std::int64_t>(cfg.distill.*m));
          }
        },
        member);
  }
  toml::table doc;
  doc.insert("dataset", cfg.dataset);
  doc.insert("output", cfg.output);
  doc.insert("distill", std::move(distill_table));
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << doc << '\n';
}

std::string canonical_json(const RunConfig& cfg) {
  std::string body;
  for (const auto& [name, member] : fields()) {
    std::visit(
        [&](auto m) {
          using T = std::remove_reference_t<decltype(cfg.distill.*m)>;
          std::string value;
          if constexpr (std::is_floating_point_v<T>) {
            value = format_double(cfg.distill.*m);
          } else {
            value = std::to_string(cfg.distill.*m);
          }
          body += fmt::format("{}{}:{}", body.empty() ? "" : ",", nlohmann::json(name).dump(), value);
        },
        member);
  }
  return fmt::format("{{\"dataset\":{},\"distill\":{{{}}}}}", nlohmann::json(cfg.dataset).dump(), body);
}

std::string sha256_hex(const std::string& data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw Error("sha256 failed");
  }
  std::string hex;
  for (unsigned int i = 0; i < len; ++i) hex += fmt::format("{:02x}", digest[i]);
  return hex;
}

std::string config_hash(const RunConfig& cfg) { return sha256_hex(canonical_json(cfg)); }

}  // namespace hydro::config
