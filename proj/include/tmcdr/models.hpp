#pragma once

// Scoring functions and losses of the four base embedding models, with
// analytic gradients for the user vector and every item vector involved.

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "tmcdr/dataset.hpp"
#include "tmcdr/error.hpp"
#include "tmcdr/linalg.hpp"

namespace tmcdr {

enum class ModelKind { MF, BPR, ListRankMF, CML };

inline constexpr double kDefaultCmlMargin = 0.5;

inline std::string_view to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::MF: return "mf";
    case ModelKind::BPR: return "bpr";
    case ModelKind::ListRankMF: return "listrank";
    case ModelKind::CML: return "cml";
  }
  return "?";
}

inline ModelKind parse_model_kind(std::string_view name) {
  if (name == "mf") return ModelKind::MF;
  if (name == "bpr") return ModelKind::BPR;
  if (name == "listrank") return ModelKind::ListRankMF;
  if (name == "cml") return ModelKind::CML;
  throw ArgumentError("unknown model kind '" + std::string(name) + "' (expected mf, bpr, listrank, cml)");
}

/// Model kind plus its hyperparameters that affect scoring or loss.
struct ModelSpec {
  ModelKind kind = ModelKind::MF;
  double margin = kDefaultCmlMargin;  // CML only

  void validate() const {
    if (kind == ModelKind::CML && !(std::isfinite(margin) && margin > 0.0)) {
      throw ArgumentError("CML margin must be finite and positive");
    }
  }
  bool operator==(const ModelSpec&) const = default;
};

struct BaseModel {
  ModelSpec spec;
  Matrix user_embeddings;
  Matrix item_embeddings;

  std::size_t dim() const noexcept { return user_embeddings.cols(); }
  bool operator==(const BaseModel&) const = default;
};

/// Loss value with gradients. Item indices in d_items are whatever the caller
/// passed in: list positions for the raw losses, dataset indices for sample_loss.
struct LossGradient {
  double value = 0.0;
  Vector d_user;
  std::vector<std::pair<std::size_t, Vector>> d_items;
};

inline double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

/// log(1 + exp(x)) without overflow.
inline double softplus(double x) {
  if (x > 0) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

/// Higher is better for every kind.
inline double score(ModelKind kind, std::span<const double> u, std::span<const double> v) {
  if (kind == ModelKind::CML) return -squared_distance(u, v);
  return dot(u, v);
}

/// Logistic matrix factorization term.
inline LossGradient loss_mf(std::span<const double> u, std::span<const double> v, int label) {
  require_same_dim(u.size(), v.size(), "loss_mf");
  const double y = label ? 1.0 : 0.0;
  const double s = dot(u, v);
  LossGradient out;
  out.value = softplus(s) - y * s;
  const double coef = sigmoid(s) - y;
  out.d_user.resize(u.size());
  Vector dv(u.size());
  for (std::size_t i = 0; i < u.size(); ++i) {
    out.d_user[i] = coef * v[i];
    dv[i] = coef * u[i];
  }
  out.d_items.emplace_back(0, std::move(dv));
  return out;
}

/// -ln sigmoid(u . (v_pos - v_neg)). d_items: 0 = positive, 1 = negative.
inline LossGradient loss_bpr(std::span<const double> u, std::span<const double> v_pos,
                             std::span<const double> v_neg) {
  require_same_dim(u.size(), v_pos.size(), "loss_bpr");
  require_same_dim(u.size(), v_neg.size(), "loss_bpr");
  const std::size_t d = u.size();
  double diff = 0.0;
  for (std::size_t i = 0; i < d; ++i) diff += u[i] * (v_pos[i] - v_neg[i]);
  LossGradient out;
  out.value = softplus(-diff);
  const double coef = -sigmoid(-diff);
  out.d_user.resize(d);
  Vector dp(d), dn(d);
  for (std::size_t i = 0; i < d; ++i) {
    out.d_user[i] = coef * (v_pos[i] - v_neg[i]);
    dp[i] = coef * u[i];
    dn[i] = -coef * u[i];
  }
  out.d_items.emplace_back(0, std::move(dp));
  out.d_items.emplace_back(1, std::move(dn));
  return out;
}

struct LabeledItem {
  std::span<const double> v;
  int label;
};

/// Top-one probability cross entropy between the softmax of labels and the
/// softmax of dot-product scores.
inline LossGradient loss_listrank(std::span<const double> u, std::span<const LabeledItem> items) {
  if (items.empty()) throw ArgumentError("loss_listrank: empty list");
  if (std::none_of(items.begin(), items.end(), [](const LabeledItem& x) { return x.label != 0; })) {
    throw ArgumentError("loss_listrank: list needs at least one positive label");
  }
  const std::size_t n = items.size();
  const std::size_t d = u.size();
  std::vector<double> s(n), py(n), ps(n);
  double max_s = -INFINITY;
  for (std::size_t i = 0; i < n; ++i) {
    s[i] = dot(u, items[i].v);
    max_s = std::max(max_s, s[i]);
  }
  double zy = 0.0, zs = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    py[i] = std::exp(items[i].label ? 1.0 : 0.0);
    zy += py[i];
    ps[i] = std::exp(s[i] - max_s);
    zs += ps[i];
  }
  const double log_zs = std::log(zs);
  LossGradient out;
  out.d_user.assign(d, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    py[i] /= zy;
    const double log_ps = s[i] - max_s - log_zs;
    out.value -= py[i] * log_ps;
    ps[i] = std::exp(log_ps);
  }
  // Cross entropy is >= 0 analytically; clamp rounding noise at the optimum.
  out.value = std::max(out.value, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double coef = ps[i] - py[i];
    axpy(coef, items[i].v, out.d_user);
    Vector dv(d);
    for (std::size_t j = 0; j < d; ++j) dv[j] = coef * u[j];
    out.d_items.emplace_back(i, std::move(dv));
  }
  return out;
}

/// Hinge on squared distances. d_items: 0 = positive, 1 = negative.
inline LossGradient loss_cml(std::span<const double> u, std::span<const double> v_pos,
                             std::span<const double> v_neg, double margin) {
  if (!(margin > 0.0)) throw ArgumentError("loss_cml: margin must be positive");
  require_same_dim(u.size(), v_pos.size(), "loss_cml");
  require_same_dim(u.size(), v_neg.size(), "loss_cml");
  const std::size_t d = u.size();
  const double raw = margin + squared_distance(u, v_pos) - squared_distance(u, v_neg);
  LossGradient out;
  out.d_user.assign(d, 0.0);
  Vector dp(d, 0.0), dn(d, 0.0);
  if (raw > 0.0) {
    out.value = raw;
    for (std::size_t i = 0; i < d; ++i) {
      out.d_user[i] = 2.0 * (v_neg[i] - v_pos[i]);
      dp[i] = -2.0 * (u[i] - v_pos[i]);
      dn[i] = 2.0 * (u[i] - v_neg[i]);
    }
  }
  out.d_items.emplace_back(0, std::move(dp));
  out.d_items.emplace_back(1, std::move(dn));
  return out;
}

inline Vector project_unit_ball(std::span<const double> x) {
  Vector out = to_vector(x);
  const double n = norm(x);
  if (n > 1.0) {
    for (double& v : out) v /= n;
  }
  return out;
}

inline void project_unit_ball_inplace(std::span<double> x) {
  const double n = norm(x);
  if (n > 1.0) {
    for (double& v : x) v /= n;
  }
}

/// Loss of one training sample for user vector `u` against rows of `items`.
/// MF: one label-1 term plus one label-0 term per negative. BPR and CML: one
/// pair term per negative. ListRank: one list of the positive and its negatives.
/// d_items are keyed by item index and may repeat an index.
inline LossGradient sample_loss(const ModelSpec& spec, std::span<const double> u, RowsView items,
                                const TrainingSample& sample) {
  const std::size_t d = u.size();
  require_same_dim(d, items.cols(), "sample_loss");
  if (sample.pos_item >= items.rows()) throw ArgumentError("sample_loss: item index out of range");
  for (auto j : sample.neg_items) {
    if (j >= items.rows()) throw ArgumentError("sample_loss: item index out of range");
  }
  LossGradient out;
  out.d_user.assign(d, 0.0);
  auto absorb = [&](LossGradient&& term, auto&& index_of) {
    out.value += term.value;
    axpy(1.0, term.d_user, out.d_user);
    for (auto& [pos, g] : term.d_items) out.d_items.emplace_back(index_of(pos), std::move(g));
  };
  const auto vpos = items.row(sample.pos_item);
  switch (spec.kind) {
    case ModelKind::MF: {
      absorb(loss_mf(u, vpos, 1), [&](std::size_t) { return sample.pos_item; });
      for (auto j : sample.neg_items) {
        absorb(loss_mf(u, items.row(j), 0), [&](std::size_t) { return j; });
      }
      break;
    }
    case ModelKind::BPR:
    case ModelKind::CML: {
      for (auto j : sample.neg_items) {
        auto term = spec.kind == ModelKind::BPR ? loss_bpr(u, vpos, items.row(j))
                                                : loss_cml(u, vpos, items.row(j), spec.margin);
        absorb(std::move(term), [&](std::size_t pos) { return pos == 0 ? sample.pos_item : j; });
      }
      break;
    }
    case ModelKind::ListRankMF: {
      std::vector<LabeledItem> list;
      list.reserve(1 + sample.neg_items.size());
      list.push_back({vpos, 1});
      for (auto j : sample.neg_items) list.push_back({items.row(j), 0});
      absorb(loss_listrank(u, list),
             [&](std::size_t pos) { return pos == 0 ? sample.pos_item : sample.neg_items[pos - 1]; });
      break;
    }
  }
  return out;
}

}  // namespace tmcdr
