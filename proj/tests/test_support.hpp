#pragma once

// Shared generators and comparison helpers for the test suites.

#include <algorithm>
#include <cmath>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "tmcdr/dataset.hpp"
#include "tmcdr/linalg.hpp"
#include "tmcdr/models.hpp"
#include "tmcdr/synth.hpp"

namespace tmcdr::testing {

inline Vector random_vector(std::size_t d, Rng& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Vector v(d);
  for (double& x : v) x = n(rng);
  return v;
}

inline Matrix random_matrix(std::size_t rows, std::size_t cols, Rng& rng, double scale = 1.0) {
  Matrix m(rows, cols);
  std::normal_distribution<double> n(0.0, scale);
  for (double& x : m.data()) x = n(rng);
  return m;
}

/// |a - b| / max(|a|, |b|, floor). The floor keeps near-zero entries from
/// turning roundoff into large relative errors.
inline double rel_err(double a, double b, double floor = 1e-3) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

inline double max_rel_err(std::span<const double> a, std::span<const double> b, double floor = 1e-3) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, rel_err(a[i], b[i], floor));
  return worst;
}

/// Elementwise gradient agreement: rel_err ≤ tol everywhere, and ≤ tight_tol
/// where the larger magnitude exceeds 1e-3.
inline ::testing::AssertionResult gradients_agree(std::span<const double> analytic, std::span<const double> numeric,
                                                  double tol = 1e-4, double tight_tol = 1e-6) {
  if (analytic.size() != numeric.size()) return ::testing::AssertionFailure() << "size mismatch";
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double a = analytic[i], n = numeric[i];
    const double mag = std::max(std::abs(a), std::abs(n));
    const double err = rel_err(a, n);
    const double limit = mag > 1e-3 ? tight_tol : tol;
    if (!(err <= limit)) {
      return ::testing::AssertionFailure() << "coordinate " << i << ": analytic " << a << " vs numeric " << n
                                           << " (rel err " << err << " > " << limit << ")";
    }
  }
  return ::testing::AssertionSuccess();
}

/// Random dataset where every user has at least one interaction and at
/// least one non-interacted item.
inline InteractionDataset random_dataset(std::size_t users, std::size_t items, double density, Rng& rng) {
  InteractionDataset ds("random");
  std::bernoulli_distribution coin(density);
  std::uniform_int_distribution<std::size_t> pick(0, items - 1);
  for (std::size_t i = 0; i < items; ++i) ds.add_item("i" + std::to_string(i));
  for (std::size_t u = 0; u < users; ++u) {
    const std::string uid = "u" + std::to_string(u);
    const std::size_t skip = pick(rng);
    bool any = false;
    for (std::size_t i = 0; i < items; ++i) {
      if (i != skip && coin(rng)) {
        ds.add(uid, "i" + std::to_string(i));
        any = true;
      }
    }
    if (!any) ds.add(uid, "i" + std::to_string((skip + 1) % items));
  }
  return ds;
}

/// Base model holding given factors.
inline BaseModel model_from(ModelKind kind, Matrix users, Matrix items) {
  BaseModel m;
  m.spec.kind = kind;
  m.user_embeddings = std::move(users);
  m.item_embeddings = std::move(items);
  return m;
}

/// Small synthetic world whose true factors serve as pretrained models.
struct TruthWorld {
  SynthWorld world;
  BaseModel source;
  BaseModel target;
  OverlapSet overlap;
};

inline TruthWorld truth_world(const SynthConfig& cfg) {
  TruthWorld t{generate_synthetic(cfg), {}, {}, {}};
  t.source = model_from(ModelKind::MF, t.world.source.user_factors, t.world.source.item_factors);
  t.target = model_from(ModelKind::MF, t.world.target.user_factors, t.world.target.item_factors);
  t.overlap = find_overlap(t.world.source.data, t.world.target.data);
  return t;
}

}  // namespace tmcdr::testing
