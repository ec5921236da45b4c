#pragma once

// Transfer stage: one embedding model per domain trained on all of its data.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "tmcdr/dataset.hpp"
#include "tmcdr/error.hpp"
#include "tmcdr/models.hpp"
#include "tmcdr/optim.hpp"

namespace tmcdr {

struct PretrainConfig {
  ModelSpec model;
  std::size_t dim = 16;
  std::size_t epochs = 20;
  std::size_t batch_size = 256;
  double lr = 0.01;
  double l2 = 1e-5;
  std::size_t negatives_per_positive = 4;
  double init_std = 0.1;
  std::uint64_t seed = 0;

  void validate() const {
    model.validate();
    if (dim < 1) throw ConfigError("pretrain: dim must be >= 1");
    if (epochs < 1) throw ConfigError("pretrain: epochs must be >= 1");
    if (batch_size < 1) throw ConfigError("pretrain: batch_size must be >= 1");
    if (negatives_per_positive < 1) throw ConfigError("pretrain: negatives_per_positive must be >= 1");
    if (!(lr > 0.0)) throw ConfigError("pretrain: lr must be positive");
    if (l2 < 0.0) throw ConfigError("pretrain: l2 must be non-negative");
    if (!(init_std >= 0.0)) throw ConfigError("pretrain: init_std must be non-negative");
  }
};

struct PretrainResult {
  BaseModel model;
  /// Mean per-sample training loss of each epoch.
  std::vector<double> loss_curve;
};

/// Normal(0, init_std^2) embeddings; CML rows projected into the unit ball.
inline BaseModel init_model(const InteractionDataset& dataset, const PretrainConfig& config) {
  if (dataset.num_users() == 0 || dataset.num_items() == 0) {
    throw EmptyDatasetError("init_model: dataset '" + dataset.domain_id() + "' is empty");
  }
  config.validate();
  BaseModel m;
  m.spec = config.model;
  m.user_embeddings = Matrix(dataset.num_users(), config.dim);
  m.item_embeddings = Matrix(dataset.num_items(), config.dim);
  Rng rng(config.seed);
  std::normal_distribution<double> normal(0.0, config.init_std);
  for (double& x : m.user_embeddings.data()) x = normal(rng);
  for (double& x : m.item_embeddings.data()) x = normal(rng);
  if (m.spec.kind == ModelKind::CML) {
    for (std::size_t i = 0; i < m.user_embeddings.rows(); ++i) project_unit_ball_inplace(m.user_embeddings.row(i));
    for (std::size_t i = 0; i < m.item_embeddings.rows(); ++i) project_unit_ball_inplace(m.item_embeddings.row(i));
  }
  return m;
}

/// Minibatch Adam over shuffled positives with fresh negatives every epoch.
/// User and item tables share one optimizer state; each step touches only
/// the rows that appear in the batch.
inline PretrainResult train_base_model(const InteractionDataset& dataset, const PretrainConfig& config) {
  if (dataset.empty()) throw EmptyDatasetError("train_base_model: dataset '" + dataset.domain_id() + "' is empty");
  PretrainResult result{init_model(dataset, config), {}};
  BaseModel& model = result.model;
  const std::size_t d = config.dim;
  const std::size_t n_users = dataset.num_users();
  const std::size_t user_block = n_users * d;

  // Flattened [users; items] view over one contiguous buffer.
  Vector params;
  params.reserve(user_block + dataset.num_items() * d);
  params.insert(params.end(), model.user_embeddings.data().begin(), model.user_embeddings.data().end());
  params.insert(params.end(), model.item_embeddings.data().begin(), model.item_embeddings.data().end());
  const std::size_t n_rows = n_users + dataset.num_items();

  AdamState adam(params.size(), AdamOptions{.lr = config.lr});
  Vector grad(params.size(), 0.0);
  std::vector<char> touched(n_rows, 0);
  std::vector<std::size_t> touched_rows;

  // The sampler stream is independent of the initialization stream.
  Rng rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<std::size_t> order(dataset.interactions().size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  auto row_span = [&](std::size_t r) { return std::span<double>(params.data() + r * d, d); };

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    for (std::size_t start = 0, batch = 0; start < order.size(); start += config.batch_size, ++batch) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      const double inv_b = 1.0 / static_cast<double>(end - start);
      double batch_loss = 0.0;
      auto mark = [&](std::size_t r) {
        if (!touched[r]) {
          touched[r] = 1;
          touched_rows.push_back(r);
        }
      };
      for (std::size_t k = start; k < end; ++k) {
        const auto& x = dataset.interactions()[order[k]];
        TrainingSample sample{x.user, x.item,
                              sample_negatives(dataset, x.user, config.negatives_per_positive, rng)};
        const auto u = std::span<const double>(params.data() + x.user * d, d);
        const RowsView items(std::span<const double>(params.data() + user_block, dataset.num_items() * d), d);
        const LossGradient lg = sample_loss(model.spec, u, items, sample);
        batch_loss += lg.value;
        axpy(inv_b, lg.d_user, std::span<double>(grad.data() + x.user * d, d));
        mark(x.user);
        for (const auto& [item, g] : lg.d_items) {
          const std::size_t r = n_users + item;
          axpy(inv_b, g, std::span<double>(grad.data() + r * d, d));
          mark(r);
        }
      }
      if (!std::isfinite(batch_loss)) {
        throw DivergenceError("pretrain '" + dataset.domain_id() + "': non-finite loss at epoch " +
                              std::to_string(epoch + 1) + ", batch " + std::to_string(batch + 1));
      }
      epoch_loss += batch_loss;
      if (config.l2 > 0.0) {
        for (auto r : touched_rows) {
          axpy(config.l2, row_span(r), std::span<double>(grad.data() + r * d, d));
        }
      }
      std::sort(touched_rows.begin(), touched_rows.end());
      adam_step_rows(adam, params, grad, touched_rows, d);
      for (auto r : touched_rows) {
        auto row = row_span(r);
        if (model.spec.kind == ModelKind::CML) project_unit_ball_inplace(row);
        if (!all_finite(row)) {
          throw DivergenceError("pretrain '" + dataset.domain_id() + "': non-finite parameters at epoch " +
                                std::to_string(epoch + 1) + ", batch " + std::to_string(batch + 1));
        }
        std::fill(grad.begin() + r * d, grad.begin() + (r + 1) * d, 0.0);
        touched[r] = 0;
      }
      touched_rows.clear();
    }
    result.loss_curve.push_back(epoch_loss / static_cast<double>(order.size()));
  }

  std::copy(params.begin(), params.begin() + user_block, model.user_embeddings.data().begin());
  std::copy(params.begin() + user_block, params.end(), model.item_embeddings.data().begin());
  return result;
}

}  // namespace tmcdr
