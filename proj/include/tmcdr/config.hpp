#pragma once

// Run configuration: one JSON document with a section per pipeline stage.
// Every section is optional and falls back to defaults; unknown keys are
// rejected so misspelled hyperparameters fail loudly.

#include <cstdint>
#include <fstream>
#include <set>
#include <string>

#include <json.hpp>

#include "tmcdr/error.hpp"
#include "tmcdr/mapping.hpp"
#include "tmcdr/meta.hpp"
#include "tmcdr/pretrain.hpp"
#include "tmcdr/synth.hpp"

namespace tmcdr {

struct DataConfig {
  /// Empty paths default to the synthetic files inside the output directory.
  std::string source_path;
  std::string target_path;
  std::string format = "auto";  // auto, tsv, csv
};

struct SplitConfig {
  double ratio = 0.2;
  std::uint64_t seed = 42;
  /// Drop test users' target interactions before target pretraining.
  bool holdout_target = false;
};

struct RunConfig {
  std::string out_dir = "tmcdr_out";
  DataConfig data;
  SplitConfig split;
  PretrainConfig pretrain_source;
  PretrainConfig pretrain_target;
  MetaConfig meta;
  MappingConfig mapping;
  std::size_t eval_k = 10;
  SynthConfig synth;

  RunConfig() { override_seed(42); }

  void validate() const {
    if (!(split.ratio > 0.0 && split.ratio < 1.0)) throw ConfigError("split.ratio must lie in (0, 1)");
    pretrain_source.validate();
    pretrain_target.validate();
    if (pretrain_source.dim != pretrain_target.dim) {
      throw ConfigError("pretrain.source.dim and pretrain.target.dim must be equal");
    }
    meta.validate();
    mapping.validate();
    if (eval_k < 1) throw ConfigError("eval.k must be >= 1");
    synth.validate();
    if (data.format != "auto" && data.format != "tsv" && data.format != "csv") {
      throw ConfigError("data.format must be auto, tsv or csv");
    }
  }

  /// Replaces every seed in the configuration.
  void override_seed(std::uint64_t seed) {
    split.seed = seed;
    pretrain_source.seed = seed;
    pretrain_target.seed = seed + 1;
    meta.seed = seed;
    mapping.seed = seed;
    synth.seed = seed;
  }
};

namespace detail {

using json = nlohmann::json;

inline void check_keys(const json& obj, const std::string& where, const std::set<std::string>& allowed) {
  if (!obj.is_object()) throw ConfigError(where + ": expected an object");
  for (const auto& [key, _] : obj.items()) {
    if (!allowed.contains(key)) throw ConfigError(where + ": unknown key '" + key + "'");
  }
}

template <typename T>
void read(const json& obj, const char* key, T& out, const std::string& where) {
  if (!obj.contains(key)) return;
  try {
    if constexpr (std::is_same_v<T, std::size_t> || std::is_same_v<T, std::uint64_t>) {
      if (!obj.at(key).is_number_unsigned() && !(obj.at(key).is_number_integer() && obj.at(key).get<long long>() >= 0)) {
        throw ConfigError(where + "." + key + ": expected a non-negative integer");
      }
    }
    out = obj.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(where + "." + key + ": " + e.what());
  }
}

inline void read_pretrain(const json& j, PretrainConfig& c, const std::string& where) {
  check_keys(j, where, {"kind", "margin", "dim", "epochs", "batch_size", "lr", "l2", "negatives", "init_std", "seed"});
  if (j.contains("kind")) {
    std::string kind;
    read(j, "kind", kind, where);
    c.model.kind = parse_model_kind(kind);
  }
  read(j, "margin", c.model.margin, where);
  read(j, "dim", c.dim, where);
  read(j, "epochs", c.epochs, where);
  read(j, "batch_size", c.batch_size, where);
  read(j, "lr", c.lr, where);
  read(j, "l2", c.l2, where);
  read(j, "negatives", c.negatives_per_positive, where);
  read(j, "init_std", c.init_std, where);
  read(j, "seed", c.seed, where);
}

}  // namespace detail

inline RunConfig parse_run_config(const nlohmann::json& j) {
  using detail::check_keys;
  using detail::read;
  RunConfig c;
  check_keys(j, "config", {"out", "data", "split", "pretrain", "meta", "mapping", "eval", "synth"});
  read(j, "out", c.out_dir, "config");
  if (j.contains("data")) {
    const auto& d = j["data"];
    check_keys(d, "data", {"source", "target", "format"});
    read(d, "source", c.data.source_path, "data");
    read(d, "target", c.data.target_path, "data");
    read(d, "format", c.data.format, "data");
  }
  if (j.contains("split")) {
    const auto& s = j["split"];
    check_keys(s, "split", {"ratio", "seed", "holdout_target"});
    read(s, "ratio", c.split.ratio, "split");
    read(s, "seed", c.split.seed, "split");
    read(s, "holdout_target", c.split.holdout_target, "split");
  }
  if (j.contains("pretrain")) {
    const auto& p = j["pretrain"];
    check_keys(p, "pretrain", {"source", "target"});
    if (p.contains("source")) detail::read_pretrain(p["source"], c.pretrain_source, "pretrain.source");
    if (p.contains("target")) detail::read_pretrain(p["target"], c.pretrain_target, "pretrain.target");
  }
  if (j.contains("meta")) {
    const auto& m = j["meta"];
    check_keys(m, "meta", {"inner_lr", "outer_lr", "group_size", "groups_per_batch", "iterations", "inner_steps",
                           "negatives", "order", "reduction", "optimizer", "init_noise", "hvp_eps", "check_invariants", "seed"});
    read(m, "inner_lr", c.meta.inner_lr, "meta");
    read(m, "outer_lr", c.meta.outer_lr, "meta");
    read(m, "group_size", c.meta.group_size, "meta");
    read(m, "groups_per_batch", c.meta.groups_per_batch, "meta");
    read(m, "iterations", c.meta.iterations, "meta");
    read(m, "inner_steps", c.meta.inner_steps, "meta");
    read(m, "negatives", c.meta.negatives_per_positive, "meta");
    if (m.contains("order")) {
      std::string o;
      read(m, "order", o, "meta");
      if (o == "first") c.meta.order = MetaOrder::first;
      else if (o == "second") c.meta.order = MetaOrder::second;
      else throw ConfigError("meta.order must be 'first' or 'second'");
    }
    if (m.contains("reduction")) {
      std::string o;
      read(m, "reduction", o, "meta");
      if (o == "sum") c.meta.reduction = PhaseReduction::sum;
      else if (o == "mean") c.meta.reduction = PhaseReduction::mean;
      else throw ConfigError("meta.reduction must be 'sum' or 'mean'");
    }
    if (m.contains("optimizer")) {
      std::string o;
      read(m, "optimizer", o, "meta");
      if (o == "adam") c.meta.optimizer = OuterOptimizer::adam;
      else if (o == "sgd") c.meta.optimizer = OuterOptimizer::sgd;
      else throw ConfigError("meta.optimizer must be 'adam' or 'sgd'");
    }
    read(m, "init_noise", c.meta.init_noise, "meta");
    read(m, "hvp_eps", c.meta.hvp_eps, "meta");
    read(m, "check_invariants", c.meta.check_invariants, "meta");
    read(m, "seed", c.meta.seed, "meta");
  }
  if (j.contains("mapping")) {
    const auto& m = j["mapping"];
    check_keys(m, "mapping", {"epochs", "lr", "batch_size", "init_noise", "seed"});
    read(m, "epochs", c.mapping.epochs, "mapping");
    read(m, "lr", c.mapping.lr, "mapping");
    read(m, "batch_size", c.mapping.batch_size, "mapping");
    read(m, "init_noise", c.mapping.init_noise, "mapping");
    read(m, "seed", c.mapping.seed, "mapping");
  }
  if (j.contains("eval")) {
    const auto& e = j["eval"];
    check_keys(e, "eval", {"k"});
    read(e, "k", c.eval_k, "eval");
  }
  if (j.contains("synth")) {
    const auto& s = j["synth"];
    check_keys(s, "synth", {"users", "items", "overlap", "dim", "noise", "shift_std", "logit_scale", "logit_offset", "seed"});
    read(s, "users", c.synth.users_per_domain, "synth");
    read(s, "items", c.synth.items_per_domain, "synth");
    read(s, "overlap", c.synth.overlap, "synth");
    read(s, "dim", c.synth.dim, "synth");
    read(s, "noise", c.synth.noise, "synth");
    read(s, "shift_std", c.synth.shift_std, "synth");
    read(s, "logit_scale", c.synth.logit_scale, "synth");
    read(s, "logit_offset", c.synth.logit_offset, "synth");
    read(s, "seed", c.synth.seed, "synth");
  }
  c.validate();
  return c;
}

inline RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return parse_run_config(j);
}

}  // namespace tmcdr
