#pragma once

// Cold-start ranking evaluation: per-user AUC and NDCG@K over the full
// target catalog, macro-averaged across users.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tmcdr/dataset.hpp"
#include "tmcdr/error.hpp"
#include "tmcdr/models.hpp"

namespace tmcdr {

struct ScoredItem {
  std::size_t item;
  double score;
};

/// Orders by descending score, ties by ascending item index.
inline void sort_ranking(std::vector<ScoredItem>& scores) {
  std::sort(scores.begin(), scores.end(), [](const ScoredItem& a, const ScoredItem& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.item < b.item;
  });
}

/// Fraction of (positive, negative) pairs ordered correctly, ties counting one
/// half. `positives` must be sorted. nullopt when either class is empty.
inline std::optional<double> auc_per_user(std::span<const ScoredItem> scores,
                                          std::span<const std::size_t> positives) {
  std::vector<std::pair<double, bool>> xs;
  xs.reserve(scores.size());
  std::uint64_t n_pos = 0;
  for (const auto& s : scores) {
    const bool pos = std::binary_search(positives.begin(), positives.end(), s.item);
    n_pos += pos;
    xs.emplace_back(s.score, pos);
  }
  const std::uint64_t n_neg = xs.size() - n_pos;
  if (n_pos == 0 || n_neg == 0) return std::nullopt;
  std::sort(xs.begin(), xs.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  // Twice the number of correctly ordered pairs, in exact integer arithmetic.
  std::uint64_t correct2 = 0;
  std::uint64_t neg_below = 0;
  for (std::size_t i = 0; i < xs.size();) {
    std::size_t j = i;
    std::uint64_t p = 0, q = 0;
    while (j < xs.size() && xs[j].first == xs[i].first) {
      (xs[j].second ? p : q) += 1;
      ++j;
    }
    correct2 += 2 * p * neg_below + p * q;
    neg_below += q;
    i = j;
  }
  return static_cast<double>(correct2) / (2.0 * static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

/// Binary-gain NDCG over the first k entries of `ranking`. `positives` must be sorted.
inline double ndcg_at_k(std::span<const std::size_t> ranking, std::span<const std::size_t> positives, std::size_t k) {
  if (k < 1) throw ArgumentError("ndcg_at_k: k must be >= 1");
  if (positives.empty()) throw ArgumentError("ndcg_at_k: need at least one positive");
  double dcg = 0.0;
  const std::size_t top = std::min(k, ranking.size());
  for (std::size_t r = 0; r < top; ++r) {
    if (std::binary_search(positives.begin(), positives.end(), ranking[r])) dcg += 1.0 / std::log2(r + 2.0);
  }
  double idcg = 0.0;
  const std::size_t ideal = std::min(k, positives.size());
  for (std::size_t r = 0; r < ideal; ++r) idcg += 1.0 / std::log2(r + 2.0);
  return dcg / idcg;
}

struct UserMetrics {
  std::string user;
  double auc;
  double ndcg;
};

struct EvalReport {
  double auc = 0.0;
  double ndcg_at_k = 0.0;
  std::size_t k = 10;
  std::vector<UserMetrics> per_user;
  std::size_t num_users = 0;
  std::size_t num_skipped = 0;
  std::vector<std::string> errors;
};

/// Scores every item of `items` for user vector u and returns them ranked.
inline std::vector<ScoredItem> rank_items(ModelKind kind, std::span<const double> u, RowsView items) {
  std::vector<ScoredItem> scores(items.rows());
  for (std::size_t i = 0; i < items.rows(); ++i) scores[i] = {i, score(kind, u, items.row(i))};
  sort_ranking(scores);
  return scores;
}

/// `embed(user)` returns the target-space vector of an overlap user, or
/// throws LookupError. Such users are recorded in errors and skipped.
template <typename Embedder>
EvalReport evaluate_cold_start(const OverlapSet& test_overlap, Embedder&& embed, const BaseModel& target_model,
                               const InteractionDataset& target_data, std::size_t k) {
  if (k < 1) throw ArgumentError("evaluate_cold_start: k must be >= 1");
  if (target_model.item_embeddings.rows() != target_data.num_items()) {
    throw ArgumentError("evaluate_cold_start: target model does not match the target dataset");
  }
  EvalReport report;
  report.k = k;
  std::vector<std::size_t> ranking;
  for (const auto& user : test_overlap.users) {
    ++report.num_users;
    Vector u;
    try {
      u = embed(user);
    } catch (const LookupError& e) {
      report.errors.push_back(user.external_id + ": " + e.what());
      ++report.num_skipped;
      continue;
    }
    require_same_dim(u.size(), target_model.dim(), "evaluate_cold_start");
    const auto& positives = target_data.user_items(user.target_index);
    const auto scores = rank_items(target_model.spec.kind, u, target_model.item_embeddings);
    const auto auc = auc_per_user(scores, positives);
    if (!auc) {
      ++report.num_skipped;
      continue;
    }
    ranking.clear();
    for (const auto& s : scores) ranking.push_back(s.item);
    report.per_user.push_back({user.external_id, *auc, ndcg_at_k(ranking, positives, k)});
  }
  if (!report.per_user.empty()) {
    for (const auto& m : report.per_user) {
      report.auc += m.auc;
      report.ndcg_at_k += m.ndcg;
    }
    report.auc /= static_cast<double>(report.per_user.size());
    report.ndcg_at_k /= static_cast<double>(report.per_user.size());
  }
  return report;
}

}  // namespace tmcdr
