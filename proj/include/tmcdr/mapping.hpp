#pragma once

// Embedding-and-mapping baseline: an affine map fitted by mean squared error
// between mapped source embeddings and target embeddings of overlapping users.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include "tmcdr/dataset.hpp"
#include "tmcdr/error.hpp"
#include "tmcdr/meta.hpp"
#include "tmcdr/models.hpp"
#include "tmcdr/optim.hpp"

namespace tmcdr {

struct MappingConfig {
  std::size_t epochs = 500;
  double lr = 0.001;
  /// 0 means full batch.
  std::size_t batch_size = 0;
  double init_noise = 0.01;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(lr > 0.0)) throw ConfigError("mapping: lr must be > 0");
    if (!(init_noise >= 0.0)) throw ConfigError("mapping: init_noise must be >= 0");
  }
};

struct MappingResult {
  MappingNetwork network;
  /// Full-data MSE before training followed by one entry per epoch.
  std::vector<double> loss_curve;
  double final_loss = 0.0;
};

struct MappingPair {
  std::span<const double> source;
  std::span<const double> target;
};

/// (1/|U|) sum_u |W u^s + b - u^t|^2 and its gradient over the given pairs.
inline PhaseLoss mapping_loss(std::span<const double> theta, std::size_t d, std::span<const MappingPair> pairs) {
  PhaseLoss out;
  out.grad.assign(d * d + d, 0.0);
  const double inv_n = 1.0 / static_cast<double>(pairs.size());
  for (const auto& p : pairs) {
    const Vector mapped = affine_apply(theta, d, p.source);
    for (std::size_t i = 0; i < d; ++i) {
      const double r = mapped[i] - p.target[i];
      out.value += r * r * inv_n;
      const double g = 2.0 * r * inv_n;
      for (std::size_t j = 0; j < d; ++j) out.grad[i * d + j] += g * p.source[j];
      out.grad[d * d + i] += g;
    }
  }
  return out;
}

inline MappingResult train_mapping(const BaseModel& source_model, const BaseModel& target_model,
                                   const OverlapSet& train_overlap, const MappingConfig& config) {
  config.validate();
  const std::size_t d = source_model.dim();
  if (target_model.dim() != d) throw ArgumentError("train_mapping: source and target dims differ");
  if (train_overlap.empty()) throw EmptyOverlapError("train_mapping: empty overlap");

  std::vector<MappingPair> pairs;
  for (const auto& u : train_overlap.users) {
    if (u.source_index >= source_model.user_embeddings.rows() ||
        u.target_index >= target_model.user_embeddings.rows()) {
      throw LookupError("train_mapping: user '" + u.external_id + "' missing from a model");
    }
    pairs.push_back({source_model.user_embeddings.row(u.source_index), target_model.user_embeddings.row(u.target_index)});
  }

  MappingResult result{init_meta_network(d, config.seed, config.init_noise), {}, 0.0};
  FlatParams& theta = result.network.params;
  AdamState adam(theta.size(), AdamOptions{.lr = config.lr});
  Rng rng(config.seed ^ 0x2545f4914f6cdd1dULL);
  const std::size_t batch = config.batch_size == 0 ? pairs.size() : std::min(config.batch_size, pairs.size());
  std::vector<MappingPair> shuffled = pairs;

  result.loss_curve.push_back(mapping_loss(theta.values(), d, pairs).value);
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    if (batch < pairs.size()) std::shuffle(shuffled.begin(), shuffled.end(), rng);
    for (std::size_t start = 0; start < shuffled.size(); start += batch) {
      const std::size_t n = std::min(batch, shuffled.size() - start);
      const PhaseLoss l = mapping_loss(theta.values(), d, std::span(shuffled).subspan(start, n));
      auto [state, next] = adam_step(std::move(adam), std::move(theta), l.grad);
      adam = std::move(state);
      theta = std::move(next);
    }
    const double loss = mapping_loss(theta.values(), d, pairs).value;
    if (!std::isfinite(loss) || !all_finite(theta.values())) {
      throw DivergenceError("train_mapping: non-finite loss at epoch " + std::to_string(epoch + 1));
    }
    result.loss_curve.push_back(loss);
  }
  result.final_loss = result.loss_curve.back();
  return result;
}

inline Vector map_cold_user(const MappingNetwork& net, const BaseModel& source_model, std::size_t source_index) {
  return cold_start_embed(net, source_model, source_index);
}

}  // namespace tmcdr
