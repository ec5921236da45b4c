#pragma once

// Synthetic two-domain world with a planted affine relation between the
// source and target factors of overlapping users.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "tmcdr/dataset.hpp"
#include "tmcdr/error.hpp"
#include "tmcdr/linalg.hpp"
#include "tmcdr/models.hpp"

namespace tmcdr {

struct SynthConfig {
  std::size_t users_per_domain = 400;
  std::size_t items_per_domain = 200;
  std::size_t overlap = 120;
  std::size_t dim = 8;
  /// Std of the Gaussian noise added to A u^s + c.
  double noise = 0.05;
  double shift_std = 0.1;
  /// Logit of an interaction is logit_scale * u.v / sqrt(dim) + logit_offset.
  double logit_scale = 3.0;
  double logit_offset = -3.0;
  std::uint64_t seed = 42;

  void validate() const {
    if (users_per_domain < 1 || items_per_domain < 1 || dim < 1) {
      throw ConfigError("synth: users, items and dim must be >= 1");
    }
    if (overlap > users_per_domain) throw ConfigError("synth: overlap exceeds users_per_domain");
    if (noise < 0.0 || shift_std < 0.0) throw ConfigError("synth: noise scales must be >= 0");
  }
};

/// Ground-truth factors of one domain, keyed by external id through the
/// dataset's own index (rows follow dataset.users() / dataset.items()).
struct SynthDomain {
  InteractionDataset data;
  Matrix user_factors;
  Matrix item_factors;
};

struct SynthWorld {
  SynthDomain source;
  SynthDomain target;
  Matrix transform;  // A
  Vector shift;      // c
};

namespace detail {

inline Matrix gaussian_matrix(std::size_t rows, std::size_t cols, double std_dev, Rng& rng) {
  Matrix m(rows, cols);
  std::normal_distribution<double> normal(0.0, std_dev);
  for (double& x : m.data()) x = normal(rng);
  return m;
}

/// Bernoulli interactions through the logistic link. Every user and every
/// item receives at least one interaction.
inline SynthDomain sample_domain(const std::string& name, const std::vector<std::string>& user_ids,
                                 const Matrix& users, const std::string& item_prefix, const Matrix& items,
                                 const SynthConfig& cfg, Rng& rng) {
  const std::size_t n_u = users.rows(), n_i = items.rows();
  const double norm_c = 1.0 / std::sqrt(static_cast<double>(cfg.dim));
  std::vector<std::vector<char>> hit(n_u, std::vector<char>(n_i, 0));
  std::vector<std::size_t> item_count(n_i, 0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  auto logit = [&](std::size_t u, std::size_t i) {
    return cfg.logit_scale * dot(users.row(u), items.row(i)) * norm_c + cfg.logit_offset;
  };
  for (std::size_t u = 0; u < n_u; ++u) {
    std::size_t count = 0;
    for (std::size_t i = 0; i < n_i; ++i) {
      if (unif(rng) < sigmoid(logit(u, i))) {
        hit[u][i] = 1;
        ++count;
        ++item_count[i];
      }
    }
    if (count == 0) {
      std::size_t best = 0;
      for (std::size_t i = 1; i < n_i; ++i) {
        if (logit(u, i) > logit(u, best)) best = i;
      }
      hit[u][best] = 1;
      ++item_count[best];
    }
  }
  for (std::size_t i = 0; i < n_i; ++i) {
    if (item_count[i] > 0) continue;
    std::size_t best = 0;
    for (std::size_t u = 1; u < n_u; ++u) {
      if (logit(u, i) > logit(best, i)) best = u;
    }
    hit[best][i] = 1;
  }

  // Indices follow first appearance in the written rows, so a reload of the
  // saved file reproduces this dataset exactly.
  SynthDomain out{InteractionDataset(name), Matrix(n_u, cfg.dim), Matrix(n_i, cfg.dim)};
  for (std::size_t u = 0; u < n_u; ++u) {
    for (std::size_t i = 0; i < n_i; ++i) {
      if (hit[u][i]) out.data.add(user_ids[u], item_prefix + std::to_string(i));
    }
  }
  for (std::size_t u = 0; u < n_u; ++u) {
    const std::size_t row = out.data.users().find(user_ids[u]);
    std::copy(users.row(u).begin(), users.row(u).end(), out.user_factors.row(row).begin());
  }
  for (std::size_t i = 0; i < n_i; ++i) {
    const std::size_t row = out.data.items().find(item_prefix + std::to_string(i));
    std::copy(items.row(i).begin(), items.row(i).end(), out.item_factors.row(row).begin());
  }
  return out;
}

}  // namespace detail

/// Overlap users are "o<k>", domain-only users "s<k>"/"t<k>", items
/// "si<k>"/"ti<k>". For overlap users u^t = A u^s + c + noise.
inline SynthWorld generate_synthetic(const SynthConfig& cfg) {
  cfg.validate();
  const std::size_t d = cfg.dim;
  Rng rng(cfg.seed);
  SynthWorld w;
  w.transform = detail::gaussian_matrix(d, d, 1.0 / std::sqrt(static_cast<double>(d)), rng);
  w.shift = detail::gaussian_matrix(1, d, cfg.shift_std, rng).data();

  const std::size_t n = cfg.users_per_domain;
  std::vector<std::string> source_ids, target_ids;
  for (std::size_t k = 0; k < cfg.overlap; ++k) {
    source_ids.push_back("o" + std::to_string(k));
    target_ids.push_back("o" + std::to_string(k));
  }
  for (std::size_t k = 0; k < n - cfg.overlap; ++k) {
    source_ids.push_back("s" + std::to_string(k));
    target_ids.push_back("t" + std::to_string(k));
  }

  const Matrix source_users = detail::gaussian_matrix(n, d, 1.0, rng);
  Matrix target_users = detail::gaussian_matrix(n, d, 1.0, rng);
  std::normal_distribution<double> noise(0.0, cfg.noise);
  for (std::size_t u = 0; u < cfg.overlap; ++u) {
    const auto us = source_users.row(u);
    auto ut = target_users.row(u);
    for (std::size_t i = 0; i < d; ++i) {
      double s = w.shift[i];
      for (std::size_t j = 0; j < d; ++j) s += w.transform(i, j) * us[j];
      ut[i] = s + (cfg.noise > 0.0 ? noise(rng) : 0.0);
    }
  }
  const Matrix source_items = detail::gaussian_matrix(cfg.items_per_domain, d, 1.0, rng);
  const Matrix target_items = detail::gaussian_matrix(cfg.items_per_domain, d, 1.0, rng);

  w.source = detail::sample_domain("source", source_ids, source_users, "si", source_items, cfg, rng);
  w.target = detail::sample_domain("target", target_ids, target_users, "ti", target_items, cfg, rng);
  return w;
}

}  // namespace tmcdr
