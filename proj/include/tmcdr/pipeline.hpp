#pragma once

// End-to-end commands. Every stage reads its inputs from and writes its
// outputs to the run's output directory, so stages can run as separate
// processes and reruns with the same configuration reproduce every file.

#include <filesystem>
#include <string>
#include <unordered_set>
#include <vector>

#include "tmcdr/config.hpp"
#include "tmcdr/dataset.hpp"
#include "tmcdr/error.hpp"
#include "tmcdr/eval.hpp"
#include "tmcdr/io.hpp"
#include "tmcdr/mapping.hpp"
#include "tmcdr/meta.hpp"
#include "tmcdr/pretrain.hpp"
#include "tmcdr/synth.hpp"

namespace tmcdr {

enum class Domain { source, target };
enum class EvalMethod { tmcdr, emcdr, target_oracle };

inline std::string to_string(Domain d) { return d == Domain::source ? "source" : "target"; }

inline std::string to_string(EvalMethod m) {
  switch (m) {
    case EvalMethod::tmcdr: return "tmcdr";
    case EvalMethod::emcdr: return "emcdr";
    case EvalMethod::target_oracle: return "target_oracle";
  }
  return "?";
}

inline EvalMethod parse_eval_method(const std::string& s) {
  if (s == "tmcdr") return EvalMethod::tmcdr;
  if (s == "emcdr") return EvalMethod::emcdr;
  if (s == "target_oracle") return EvalMethod::target_oracle;
  throw ArgumentError("unknown method '" + s + "' (expected tmcdr, emcdr, target_oracle)");
}

struct RunPaths {
  std::filesystem::path dir;

  std::string synth_data(Domain d) const { return (dir / (to_string(d) + ".tsv")).string(); }
  std::string manifest() const { return (dir / "split.txt").string(); }
  std::string meta_net() const { return (dir / "meta_net.tmce").string(); }
  std::string map_net() const { return (dir / "map_net.tmce").string(); }
  std::string report(EvalMethod m) const { return (dir / ("report_" + to_string(m) + ".txt")).string(); }
};

inline RunPaths run_paths(const RunConfig& cfg) {
  std::filesystem::create_directories(cfg.out_dir);
  return {cfg.out_dir};
}

inline std::string data_path(const RunConfig& cfg, Domain d) {
  const auto& p = d == Domain::source ? cfg.data.source_path : cfg.data.target_path;
  return p.empty() ? RunPaths{cfg.out_dir}.synth_data(d) : p;
}

inline InteractionDataset load_domain(const RunConfig& cfg, Domain d) {
  const std::string path = data_path(cfg, d);
  const FileFormat fmt = cfg.data.format == "auto" ? format_from_path(path)
                         : cfg.data.format == "csv" ? FileFormat::csv
                                                    : FileFormat::tsv;
  if (!std::filesystem::exists(path)) {
    throw IoError("file not found: " + path + " (set data." + to_string(d) + " or run 'synth' first)");
  }
  return load_interactions(path, fmt, to_string(d));
}

inline SynthWorld cmd_synth(const RunConfig& cfg) {
  const RunPaths paths = run_paths(cfg);
  SynthWorld world = generate_synthetic(cfg.synth);
  save_interactions(paths.synth_data(Domain::source), world.source.data, FileFormat::tsv);
  save_interactions(paths.synth_data(Domain::target), world.target.data, FileFormat::tsv);
  return world;
}

inline ColdStartSplit cmd_split(const RunConfig& cfg) {
  const RunPaths paths = run_paths(cfg);
  const auto source = load_domain(cfg, Domain::source);
  const auto target = load_domain(cfg, Domain::target);
  const ColdStartSplit split = split_cold_start(find_overlap(source, target), cfg.split.ratio, cfg.split.seed);
  save_doc(paths.manifest(), manifest_doc(split));
  return split;
}

inline ColdStartSplit load_split(const RunConfig& cfg, const InteractionDataset& source,
                                 const InteractionDataset& target) {
  const SplitManifest m = load_manifest(RunPaths{cfg.out_dir}.manifest());
  return {resolve_overlap(m.train_ids, source, target), resolve_overlap(m.test_ids, source, target), m.seed, m.ratio};
}

inline PretrainResult cmd_pretrain(const RunConfig& cfg, Domain domain) {
  const RunPaths paths = run_paths(cfg);
  InteractionDataset data = load_domain(cfg, domain);
  if (domain == Domain::target && cfg.split.holdout_target) {
    const auto split = load_split(cfg, load_domain(cfg, Domain::source), data);
    std::unordered_set<std::string> drop;
    for (const auto& u : split.test_overlap.users) drop.insert(u.external_id);
    data = without_user_interactions(data, drop);
  }
  const PretrainConfig& pc = domain == Domain::source ? cfg.pretrain_source : cfg.pretrain_target;
  PretrainResult result = train_base_model(data, pc);
  save_model(paths.dir, to_string(domain), result.model, data, {pc.seed, result.loss_curve});
  return result;
}

/// Loads a persisted base model and checks it was trained on `data`.
inline BaseModel load_domain_model(const RunConfig& cfg, Domain domain, const InteractionDataset& data) {
  LoadedModel lm = load_model(cfg.out_dir, to_string(domain));
  if (lm.user_ids != data.users().ids() || lm.item_ids != data.items().ids()) {
    throw DataError("persisted " + to_string(domain) + " model does not match " + data_path(cfg, domain) +
                    " (rerun 'pretrain --domain " + to_string(domain) + "')");
  }
  return std::move(lm.model);
}

inline void require_network_dim(const AffineMap& net, const BaseModel& model, const std::string& what) {
  if (net.dim != model.dim()) {
    throw DataError(what + ": network dim " + std::to_string(net.dim) + " does not match model dim " +
                    std::to_string(model.dim()));
  }
}

inline MetaTrainResult cmd_meta_train(const RunConfig& cfg) {
  const RunPaths paths = run_paths(cfg);
  const auto source = load_domain(cfg, Domain::source);
  const auto target = load_domain(cfg, Domain::target);
  const auto split = load_split(cfg, source, target);
  const BaseModel source_model = load_domain_model(cfg, Domain::source, source);
  const BaseModel target_model = load_domain_model(cfg, Domain::target, target);
  MetaTrainResult result = meta_train(source_model, target_model, split.train_overlap, target, cfg.meta);
  KeyValueDoc doc;
  doc.set("kind", "meta");
  doc.set("dim", std::to_string(result.network.dim));
  doc.set("seed", std::to_string(cfg.meta.seed));
  doc.set("iterations", std::to_string(cfg.meta.iterations));
  doc.set("order", cfg.meta.order == MetaOrder::second ? "second" : "first");
  doc.set("inner_lr", format_double(cfg.meta.inner_lr));
  doc.set("loss_curve", join_doubles(result.loss_curve));
  save_network(paths.meta_net(), result.network, doc);
  return result;
}

inline MappingResult cmd_map_train(const RunConfig& cfg) {
  const RunPaths paths = run_paths(cfg);
  const auto source = load_domain(cfg, Domain::source);
  const auto target = load_domain(cfg, Domain::target);
  const auto split = load_split(cfg, source, target);
  const BaseModel source_model = load_domain_model(cfg, Domain::source, source);
  const BaseModel target_model = load_domain_model(cfg, Domain::target, target);
  MappingResult result = train_mapping(source_model, target_model, split.train_overlap, cfg.mapping);
  KeyValueDoc doc;
  doc.set("kind", "mapping");
  doc.set("dim", std::to_string(result.network.dim));
  doc.set("seed", std::to_string(cfg.mapping.seed));
  doc.set("epochs", std::to_string(cfg.mapping.epochs));
  doc.set("final_loss", format_double(result.final_loss));
  doc.set("loss_curve", join_doubles(result.loss_curve));
  save_network(paths.map_net(), result.network, doc);
  return result;
}

inline EvalReport cmd_evaluate(const RunConfig& cfg, EvalMethod method) {
  const RunPaths paths = run_paths(cfg);
  const auto source = load_domain(cfg, Domain::source);
  const auto target = load_domain(cfg, Domain::target);
  const auto split = load_split(cfg, source, target);
  const BaseModel target_model = load_domain_model(cfg, Domain::target, target);

  EvalReport report;
  if (method == EvalMethod::target_oracle) {
    report = evaluate_cold_start(
        split.test_overlap,
        [&](const OverlapUser& u) { return to_vector(target_model.user_embeddings.row(u.target_index)); },
        target_model, target, cfg.eval_k);
  } else {
    const BaseModel source_model = load_domain_model(cfg, Domain::source, source);
    const AffineMap net = load_network(method == EvalMethod::tmcdr ? paths.meta_net() : paths.map_net());
    require_network_dim(net, source_model, to_string(method));
    require_network_dim(net, target_model, to_string(method));
    report = evaluate_cold_start(
        split.test_overlap, [&](const OverlapUser& u) { return cold_start_embed(net, source_model, u.source_index); },
        target_model, target, cfg.eval_k);
  }
  const KeyValueDoc doc = report_doc(to_string(method), report,
                                     {{"target_kind", std::string(to_string(target_model.spec.kind))},
                                      {"split_seed", std::to_string(cfg.split.seed)},
                                      {"pretrain_source_seed", std::to_string(cfg.pretrain_source.seed)},
                                      {"pretrain_target_seed", std::to_string(cfg.pretrain_target.seed)},
                                      {"meta_seed", std::to_string(cfg.meta.seed)},
                                      {"mapping_seed", std::to_string(cfg.mapping.seed)}});
  save_doc(paths.report(method), doc);
  return report;
}

}  // namespace tmcdr
