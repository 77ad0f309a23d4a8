#pragma once

#include <cstdio>
#include <filesystem>
#include <string>
#include <string_view>

#include <json.hpp>

#include "lareqa/error.hpp"
#include "lareqa/io.hpp"
#include "lareqa/rng.hpp"

namespace lareqa::config {

/// Every recognised key with its default. Keys whose default is null accept
/// any value.
inline nlohmann::json defaults() {
  return nlohmann::json::parse(R"({
    "task": {
      "inputs": [],
      "languages": null,
      "file": null,
      "translation_table": null
    },
    "embeddings": {
      "source": "toy",
      "toy": {"dim": 64, "seed": 0, "strength": 0.0},
      "file": {"questions": null, "candidates": null},
      "remote": {"url": null, "batch_size": 32, "timeout_ms": 30000, "retries": 2, "parallelism": 1}
    },
    "seeds": {"remove_one": 0, "batches": 0, "probe": 0, "pca": 24301},
    "output_dir": "out",
    "eval": {"rankings": false, "top_k": null},
    "bias": {"top_k": 100},
    "training": {
      "base": null,
      "translations": null,
      "strategy": "XXmono",
      "languages": ["ar", "de", "el", "en", "es", "hi", "ru", "th", "tr", "vi", "zh"],
      "sub_batch_size": 64,
      "max_batches": null
    },
    "loss_check": {"trials": 50, "size": 8, "scale": 1.0, "step": 0.0001, "threshold": 1e-05, "seed": 0},
    "probe": {"languages": ["en", "zh"], "epochs": 500, "learning_rate": 1.0, "train_fraction": 0.6666666666666666},
    "report": {"matrices": [], "remove_one": {}}
  })");
}

namespace detail {

inline void check_known(const nlohmann::json& schema, const nlohmann::json& value, const std::string& where) {
  if (schema.is_null() || !schema.is_object()) return;
  if (!value.is_object()) throw ValidationError("config key '" + where + "' must be an object");
  for (const auto& [key, v] : value.items()) {
    const std::string path = where.empty() ? key : where + "." + key;
    if (!schema.contains(key)) throw ValidationError("unknown config key '" + path + "'");
    check_known(schema[key], v, path);
  }
}

inline void restore_nulls(const nlohmann::json& schema, nlohmann::json& cfg) {
  if (!schema.is_object() || !cfg.is_object()) return;
  for (const auto& [key, v] : schema.items()) {
    if (!cfg.contains(key)) {
      cfg[key] = nullptr;
    } else {
      restore_nulls(v, cfg[key]);
    }
  }
}

}  // namespace detail

/// Defaults with `user` merged over them (RFC 7386 merge patch).
inline nlohmann::json resolve(const nlohmann::json& user) {
  const auto schema = defaults();
  detail::check_known(schema, user, "");
  nlohmann::json cfg = schema;
  cfg.merge_patch(user);
  // merge_patch deletes keys set to null; put them back
  detail::restore_nulls(schema, cfg);
  return cfg;
}

inline nlohmann::json load(const std::filesystem::path& path) {
  try {
    return resolve(nlohmann::json::parse(io::read_file(path)));
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

/// Applies "a.b.c=value". The value is read as JSON when it parses, otherwise
/// as a plain string.
inline void apply_override(nlohmann::json& cfg, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos || eq == 0) {
    throw ValidationError("override '" + std::string(assignment) + "' is not key=value");
  }
  const std::string key(assignment.substr(0, eq));
  const std::string raw(assignment.substr(eq + 1));
  nlohmann::json value = nlohmann::json::parse(raw, nullptr, false);
  if (value.is_discarded()) value = raw;

  nlohmann::json patch = value;
  std::string rest = key;
  while (true) {
    const auto dot = rest.rfind('.');
    const std::string leaf = dot == std::string::npos ? rest : rest.substr(dot + 1);
    if (leaf.empty()) throw ValidationError("override key '" + key + "' is malformed");
    patch = nlohmann::json{{leaf, patch}};
    if (dot == std::string::npos) break;
    rest = rest.substr(0, dot);
  }
  detail::check_known(defaults(), patch, "");
  // set directly so that null values survive
  nlohmann::json* node = &cfg;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (dot == std::string::npos) {
      (*node)[part] = value;
      break;
    }
    node = &(*node)[part];
    start = dot + 1;
  }
}

/// 16 hex digits identifying the effective configuration.
inline std::string hash(const nlohmann::json& cfg) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(rng::fnv1a(cfg.dump())));
  return buf;
}

}  // namespace lareqa::config
