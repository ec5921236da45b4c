#pragma once

// Meta stage: an affine network f(u) = W u + b trained MAML-style on
// simulated cold-start tasks built from overlapping users. The loss of each
// phase is the base model's own loss with the transformed source embedding
// standing in for the target user embedding. Target item embeddings and both
// base models stay fixed.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <unordered_set>
#include <vector>

#include "tmcdr/dataset.hpp"
#include "tmcdr/error.hpp"
#include "tmcdr/linalg.hpp"
#include "tmcdr/models.hpp"
#include "tmcdr/optim.hpp"

namespace tmcdr {

/// Affine map over d-dimensional vectors, packed as segments "W" (row-major
/// d x d) and "b" (d). Used both by the meta network and the mapping baseline.
struct AffineMap {
  std::size_t dim = 0;
  FlatParams params;

  static AffineMap zeros(std::size_t d) {
    return {d, FlatParams::zeros({{"W", d * d}, {"b", d}})};
  }

  static AffineMap identity(std::size_t d) {
    AffineMap m = zeros(d);
    auto w = m.params.segment("W");
    for (std::size_t i = 0; i < d; ++i) w[i * d + i] = 1.0;
    return m;
  }

  std::span<const double> W() const { return params.segment("W"); }
  std::span<const double> b() const { return params.segment("b"); }
  std::span<double> W() { return params.segment("W"); }
  std::span<double> b() { return params.segment("b"); }

  bool operator==(const AffineMap&) const = default;
};

using MetaNetwork = AffineMap;
using MappingNetwork = AffineMap;

/// W u + b for parameters laid out as in AffineMap.
inline Vector affine_apply(std::span<const double> theta, std::size_t d, std::span<const double> u) {
  require_same_dim(u.size(), d, "transform");
  require_same_dim(theta.size(), d * d + d, "transform");
  Vector out(d);
  for (std::size_t i = 0; i < d; ++i) {
    double s = theta[d * d + i];
    for (std::size_t j = 0; j < d; ++j) s += theta[i * d + j] * u[j];
    out[i] = s;
  }
  return out;
}

inline Vector transform(const AffineMap& net, std::span<const double> u_source) {
  return affine_apply(net.params.values(), net.dim, u_source);
}

/// W = I + Normal(0, noise_std^2), b = 0.
inline MetaNetwork init_meta_network(std::size_t d, std::uint64_t seed, double noise_std = 0.01) {
  if (d < 1) throw ArgumentError("init_meta_network: dimension must be >= 1");
  MetaNetwork net = AffineMap::identity(d);
  if (noise_std > 0.0) {
    Rng rng(seed);
    std::normal_distribution<double> normal(0.0, noise_std);
    for (double& w : net.W()) w += normal(rng);
  }
  return net;
}

enum class MetaOrder { first, second };
/// How a phase loss combines its samples: the plain sum, or the per-sample mean.
enum class PhaseReduction { sum, mean };
enum class OuterOptimizer { adam, sgd };

struct MetaConfig {
  double inner_lr = 0.005;  // lambda
  double outer_lr = 0.01;   // alpha; Adam learning rate or plain step
  std::size_t group_size = 8;
  std::size_t groups_per_batch = 4;
  std::size_t iterations = 500;
  std::size_t inner_steps = 1;
  std::size_t negatives_per_positive = 4;
  MetaOrder order = MetaOrder::second;
  PhaseReduction reduction = PhaseReduction::sum;
  OuterOptimizer optimizer = OuterOptimizer::adam;
  double init_noise = 0.01;
  double hvp_eps = 1e-4;
  /// Verifies group disjointness and sample ownership on every batch.
  bool check_invariants = false;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(inner_lr >= 0.0)) throw ConfigError("meta: inner_lr must be >= 0");
    if (!(outer_lr > 0.0)) throw ConfigError("meta: outer_lr must be > 0");
    if (group_size < 1) throw ConfigError("meta: group_size must be >= 1");
    if (groups_per_batch < 1) throw ConfigError("meta: groups_per_batch must be >= 1");
    if (inner_steps < 1) throw ConfigError("meta: inner_steps must be >= 1");
    if (negatives_per_positive < 1) throw ConfigError("meta: negatives_per_positive must be >= 1");
    if (order == MetaOrder::second && inner_steps > 1) {
      throw ConfigError("meta: second-order gradients support a single inner step only");
    }
    if (!(hvp_eps > 0.0)) throw ConfigError("meta: hvp_eps must be > 0");
  }
};

/// One simulated task. In data_a/data_b, `user` is the source-domain row and
/// items index the target domain.
struct TaskGroup {
  std::vector<OverlapUser> users_a;
  std::vector<OverlapUser> users_b;
  std::vector<TrainingSample> data_a;
  std::vector<TrainingSample> data_b;
};

struct TaskBatch {
  std::vector<TaskGroup> groups;
};

/// Overlap users with at least one target-domain positive.
inline std::vector<OverlapUser> eligible_users(const OverlapSet& overlap, const InteractionDataset& target) {
  std::vector<OverlapUser> out;
  for (const auto& u : overlap.users) {
    if (!target.user_items(u.target_index).empty()) out.push_back(u);
  }
  return out;
}

namespace detail {

inline std::vector<TrainingSample> phase_samples(const std::vector<OverlapUser>& users,
                                                 const InteractionDataset& target, std::size_t k, Rng& rng) {
  std::vector<TrainingSample> out;
  for (const auto& u : users) {
    for (auto item : target.user_items(u.target_index)) {
      out.push_back({u.source_index, item, sample_negatives(target, u.target_index, k, rng)});
    }
  }
  return out;
}

}  // namespace detail

inline TaskBatch sample_task_batch(const std::vector<OverlapUser>& eligible, const InteractionDataset& target,
                                   const MetaConfig& config, Rng& rng) {
  const std::size_t need = 2 * config.group_size;
  if (eligible.size() < need) {
    throw SamplingError("meta: " + std::to_string(eligible.size()) + " eligible overlap users, need " +
                        std::to_string(need) + " per group");
  }
  TaskBatch batch;
  std::vector<std::size_t> pool(eligible.size());
  for (std::size_t g = 0; g < config.groups_per_batch; ++g) {
    for (std::size_t i = 0; i < pool.size(); ++i) pool[i] = i;
    for (std::size_t i = 0; i < need; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
      std::swap(pool[i], pool[pick(rng)]);
    }
    TaskGroup group;
    for (std::size_t i = 0; i < need; ++i) {
      (i < config.group_size ? group.users_a : group.users_b).push_back(eligible[pool[i]]);
    }
    group.data_a = detail::phase_samples(group.users_a, target, config.negatives_per_positive, rng);
    group.data_b = detail::phase_samples(group.users_b, target, config.negatives_per_positive, rng);
    batch.groups.push_back(std::move(group));
  }
  return batch;
}

inline TaskBatch sample_task_batch(const OverlapSet& train_overlap, const InteractionDataset& target,
                                   const MetaConfig& config, Rng& rng) {
  return sample_task_batch(eligible_users(train_overlap, target), target, config, rng);
}

/// Throws if a group's phases share a user or a sample belongs to the wrong phase.
inline void check_task_group(const TaskGroup& group) {
  std::unordered_set<std::size_t> a, b;
  for (const auto& u : group.users_a) a.insert(u.source_index);
  for (const auto& u : group.users_b) {
    if (a.contains(u.source_index)) throw Error("meta invariant: user '" + u.external_id + "' in both phases");
    b.insert(u.source_index);
  }
  for (const auto& s : group.data_a) {
    if (!a.contains(s.user)) throw Error("meta invariant: learning-phase sample of a foreign user");
  }
  for (const auto& s : group.data_b) {
    if (!b.contains(s.user)) throw Error("meta invariant: cold-start-phase sample of a foreign user");
  }
}

/// Read-only inputs of a phase loss.
struct PhaseContext {
  ModelSpec model;
  RowsView source_users;
  RowsView target_items;
  PhaseReduction reduction = PhaseReduction::sum;
};

struct PhaseLoss {
  double value = 0.0;
  Vector grad;
};

/// Task loss summed (or averaged) over the phase with u replaced by W u^s + b,
/// and its gradient with respect to (W, b).
inline PhaseLoss phase_loss(std::span<const double> theta, std::span<const TrainingSample> data,
                            const PhaseContext& ctx) {
  if (data.empty()) throw ArgumentError("phase_loss: empty phase data");
  const std::size_t d = ctx.source_users.cols();
  require_same_dim(ctx.target_items.cols(), d, "phase_loss");
  PhaseLoss out;
  out.grad.assign(d * d + d, 0.0);
  for (const auto& s : data) {
    if (s.user >= ctx.source_users.rows()) throw ArgumentError("phase_loss: user index out of range");
    const auto us = ctx.source_users.row(s.user);
    const Vector u = affine_apply(theta, d, us);
    const LossGradient lg = sample_loss(ctx.model, u, ctx.target_items, s);
    out.value += lg.value;
    for (std::size_t i = 0; i < d; ++i) {
      const double g = lg.d_user[i];
      if (g == 0.0) continue;
      for (std::size_t j = 0; j < d; ++j) out.grad[i * d + j] += g * us[j];
      out.grad[d * d + i] += g;
    }
  }
  if (ctx.reduction == PhaseReduction::mean) {
    const double inv_n = 1.0 / static_cast<double>(data.size());
    out.value *= inv_n;
    for (double& g : out.grad) g *= inv_n;
  }
  return out;
}

inline PhaseLoss phase_loss(const FlatParams& theta, std::span<const TrainingSample> data, const PhaseContext& ctx) {
  return phase_loss(theta.values(), data, ctx);
}

/// theta' after `steps` plain gradient steps of size lambda on any loss.
inline FlatParams inner_update(const FlatParams& theta, const GradientFn& grad_a, double lambda,
                               std::size_t steps = 1) {
  if (lambda < 0.0) throw ArgumentError("inner_update: lambda must be >= 0");
  FlatParams current = theta;
  for (std::size_t s = 0; s < steps; ++s) {
    const Vector g = grad_a(current);
    if (!all_finite(g)) throw DivergenceError("inner_update: non-finite gradient");
    current = sgd_step(current, g, lambda);
  }
  return current;
}

/// Learning-phase adaptation of the meta network.
inline FlatParams inner_update(const FlatParams& theta, std::span<const TrainingSample> data_a,
                               const PhaseContext& ctx, double lambda, std::size_t steps = 1) {
  return inner_update(
      theta, [&](const FlatParams& p) { return phase_loss(p, data_a, ctx).grad; }, lambda, steps);
}

/// Gradient of L_b(theta') with respect to theta, where theta' is one inner
/// step from theta. First order: g_b = grad L_b(theta'). Second order:
/// (I - lambda H_a) g_b with H_a the Hessian of L_a at theta, realized by one
/// Hessian-vector product.
inline Vector outer_gradient(const FlatParams& theta, const FlatParams& theta_prime, const GradientFn& grad_a,
                             const GradientFn& grad_b, double lambda, MetaOrder order, double hvp_eps = 1e-4) {
  Vector g_b = grad_b(theta_prime);
  if (order == MetaOrder::first || lambda == 0.0) return g_b;
  const Vector hg = hessian_vector_product(grad_a, theta, g_b, hvp_eps);
  for (std::size_t i = 0; i < g_b.size(); ++i) g_b[i] -= lambda * hg[i];
  return g_b;
}

inline Vector outer_gradient(const FlatParams& theta, const FlatParams& theta_prime,
                             std::span<const TrainingSample> data_a, std::span<const TrainingSample> data_b,
                             const PhaseContext& ctx, double lambda, MetaOrder order, double hvp_eps = 1e-4) {
  return outer_gradient(
      theta, theta_prime, [&](const FlatParams& p) { return phase_loss(p, data_a, ctx).grad; },
      [&](const FlatParams& p) { return phase_loss(p, data_b, ctx).grad; }, lambda, order, hvp_eps);
}

struct MetaTrainResult {
  MetaNetwork network;
  /// Mean cold-start-phase loss (per sample, at theta') of each iteration.
  std::vector<double> loss_curve;
};

/// Called after every outer gradient with (iteration, group index, gradient).
using OuterGradientObserver = std::function<void(std::size_t, std::size_t, const Vector&)>;

inline MetaTrainResult meta_train(const BaseModel& source_model, const BaseModel& target_model,
                                  const OverlapSet& train_overlap, const InteractionDataset& target_data,
                                  const MetaConfig& config, const OuterGradientObserver& observer = {}) {
  config.validate();
  const std::size_t d = source_model.dim();
  if (target_model.dim() != d) {
    throw ArgumentError("meta_train: source dim " + std::to_string(d) + " != target dim " +
                        std::to_string(target_model.dim()));
  }
  if (target_model.item_embeddings.rows() != target_data.num_items()) {
    throw ArgumentError("meta_train: target model does not match the target dataset");
  }
  const auto eligible = eligible_users(train_overlap, target_data);
  if (eligible.empty()) throw EmptyOverlapError("meta_train: no eligible overlapping users");

  MetaTrainResult result{init_meta_network(d, config.seed, config.init_noise), {}};
  FlatParams& theta = result.network.params;
  const PhaseContext ctx{target_model.spec, source_model.user_embeddings, target_model.item_embeddings,
                         config.reduction};
  AdamState adam(theta.size(), AdamOptions{.lr = config.outer_lr});
  Rng rng(config.seed ^ 0xda942042e4dd58b5ULL);

  for (std::size_t it = 0; it < config.iterations; ++it) {
    const TaskBatch batch = sample_task_batch(eligible, target_data, config, rng);
    Vector total(theta.size(), 0.0);
    double loss_b = 0.0;
    std::size_t n_b = 0;
    PhaseContext sum_ctx = ctx;
    sum_ctx.reduction = PhaseReduction::sum;
    for (std::size_t g = 0; g < batch.groups.size(); ++g) {
      const auto& group = batch.groups[g];
      if (config.check_invariants) check_task_group(group);
      const FlatParams theta_prime = inner_update(theta, group.data_a, ctx, config.inner_lr, config.inner_steps);
      const Vector grad = outer_gradient(theta, theta_prime, group.data_a, group.data_b, ctx, config.inner_lr,
                                         config.order, config.hvp_eps);
      if (observer) observer(it, g, grad);
      axpy(1.0, grad, total);
      loss_b += phase_loss(theta_prime, group.data_b, sum_ctx).value;
      n_b += group.data_b.size();
    }
    if (!all_finite(total) || !std::isfinite(loss_b)) {
      throw DivergenceError("meta_train: non-finite gradient at iteration " + std::to_string(it + 1));
    }
    if (config.optimizer == OuterOptimizer::adam) {
      auto [state, next] = adam_step(std::move(adam), std::move(theta), total);
      adam = std::move(state);
      theta = std::move(next);
    } else {
      theta = sgd_step(theta, total, config.outer_lr);
    }
    if (!all_finite(theta.values())) {
      throw DivergenceError("meta_train: non-finite parameters at iteration " + std::to_string(it + 1));
    }
    result.loss_curve.push_back(loss_b / static_cast<double>(n_b));
  }
  return result;
}

/// Target-space embedding of a cold-start user: f(u^s).
inline Vector cold_start_embed(const AffineMap& net, const BaseModel& source_model, std::size_t source_index) {
  if (source_index >= source_model.user_embeddings.rows()) {
    throw LookupError("cold_start_embed: unknown source user " + std::to_string(source_index));
  }
  return transform(net, source_model.user_embeddings.row(source_index));
}

}  // namespace tmcdr
