#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <vector>

#include "test_support.hpp"
#include "tmcdr/eval.hpp"
#include "tmcdr/meta.hpp"

namespace tmcdr {
namespace {

std::vector<ScoredItem> scored(const std::vector<double>& s) {
  std::vector<ScoredItem> out;
  for (std::size_t i = 0; i < s.size(); ++i) out.push_back({i, s[i]});
  return out;
}

double brute_auc(const std::vector<double>& s, const std::set<std::size_t>& pos) {
  double correct = 0.0, pairs = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (!pos.contains(i)) continue;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (pos.contains(j)) continue;
      pairs += 1.0;
      if (s[i] > s[j]) correct += 1.0;
      else if (s[i] == s[j]) correct += 0.5;
    }
  }
  return correct / pairs;
}

double brute_ndcg(const std::vector<double>& s, const std::set<std::size_t>& pos, std::size_t k) {
  // Rank of item i = 1 + number of items strictly ahead under (-score, index).
  double dcg = 0.0;
  for (auto i : pos) {
    std::size_t rank = 1;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (s[j] > s[i] || (s[j] == s[i] && j < i)) ++rank;
    }
    if (rank <= k) dcg += 1.0 / std::log2(static_cast<double>(rank) + 1.0);
  }
  double idcg = 0.0;
  for (std::size_t r = 1; r <= std::min(k, pos.size()); ++r) idcg += 1.0 / std::log2(static_cast<double>(r) + 1.0);
  return dcg / idcg;
}

std::vector<std::size_t> ranking_of(std::vector<ScoredItem> s) {
  sort_ranking(s);
  std::vector<std::size_t> out;
  for (const auto& x : s) out.push_back(x.item);
  return out;
}

TEST(SortRanking, DescendingScoreThenAscendingIndex) {
  EXPECT_EQ(ranking_of(scored({0.5, 0.9, 0.5, 0.1, 0.9})), (std::vector<std::size_t>{1, 4, 0, 2, 3}));
}

TEST(AucPerUser, Examples) {
  const std::vector<std::size_t> pos{0};
  EXPECT_EQ(auc_per_user(scored({0.9, 0.1}), pos), 1.0);
  EXPECT_EQ(auc_per_user(scored({0.1, 0.1}), pos), 0.5);
  EXPECT_EQ(auc_per_user(scored({0.1, 0.9}), pos), 0.0);
}

TEST(AucPerUser, UndefinedWithoutBothClasses) {
  EXPECT_FALSE(auc_per_user(scored({0.3, 0.2}), std::vector<std::size_t>{}).has_value());
  EXPECT_FALSE(auc_per_user(scored({0.3, 0.2}), std::vector<std::size_t>{0, 1}).has_value());
}

TEST(AucPerUser, MatchesBruteForcePairCounting) {
  Rng rng(1);
  std::normal_distribution<double> n(0, 1);
  std::uniform_int_distribution<int> coarse(0, 5);
  for (int t = 0; t < 200; ++t) {
    std::vector<double> s(50);
    // Half the trials draw from six levels so ties are common.
    for (double& x : s) x = t % 2 ? n(rng) : coarse(rng);
    std::vector<std::size_t> idx(50);
    std::iota(idx.begin(), idx.end(), 0);
    std::shuffle(idx.begin(), idx.end(), rng);
    std::set<std::size_t> pos(idx.begin(), idx.begin() + 10);
    const std::vector<std::size_t> sorted(pos.begin(), pos.end());
    EXPECT_EQ(*auc_per_user(scored(s), sorted), brute_auc(s, pos));
  }
}

TEST(NdcgAtK, Examples) {
  EXPECT_EQ(ndcg_at_k(std::vector<std::size_t>{7, 1, 2}, std::vector<std::size_t>{7}, 10), 1.0);
  EXPECT_DOUBLE_EQ(ndcg_at_k(std::vector<std::size_t>{1, 2, 7, 3}, std::vector<std::size_t>{7}, 10), 0.5);
  EXPECT_EQ(ndcg_at_k(std::vector<std::size_t>{1, 2, 7, 3}, std::vector<std::size_t>{7}, 2), 0.0);
  EXPECT_THROW(ndcg_at_k(std::vector<std::size_t>{1}, std::vector<std::size_t>{1}, 0), ArgumentError);
  EXPECT_THROW(ndcg_at_k(std::vector<std::size_t>{1}, std::vector<std::size_t>{}, 3), ArgumentError);
}

TEST(NdcgAtK, MatchesBruteForce) {
  Rng rng(2);
  std::uniform_int_distribution<int> coarse(0, 9);
  std::uniform_int_distribution<std::size_t> npos(1, 15), kk(1, 20);
  for (int t = 0; t < 200; ++t) {
    std::vector<double> s(40);
    for (double& x : s) x = coarse(rng) * 0.125;
    std::vector<std::size_t> idx(40);
    std::iota(idx.begin(), idx.end(), 0);
    std::shuffle(idx.begin(), idx.end(), rng);
    std::set<std::size_t> pos(idx.begin(), idx.begin() + npos(rng));
    const std::vector<std::size_t> sorted(pos.begin(), pos.end());
    const std::size_t k = kk(rng);
    EXPECT_NEAR(ndcg_at_k(ranking_of(scored(s)), sorted, k), brute_ndcg(s, pos, k), 1e-12);
  }
}

TEST(Metrics, InvariantUnderStrictlyMonotoneTransforms) {
  Rng rng(3);
  std::uniform_int_distribution<int> coarse(-20, 20);
  for (int t = 0; t < 50; ++t) {
    std::vector<double> s(30), ts(30);
    for (std::size_t i = 0; i < 30; ++i) {
      s[i] = coarse(rng) * 0.25;
      ts[i] = std::exp(s[i]) * 3.0 - 7.0;
    }
    const std::vector<std::size_t> pos{1, 4, 9, 16, 25};
    EXPECT_EQ(auc_per_user(scored(s), pos), auc_per_user(scored(ts), pos));
    EXPECT_EQ(ranking_of(scored(s)), ranking_of(scored(ts)));
    EXPECT_EQ(ndcg_at_k(ranking_of(scored(s)), pos, 10), ndcg_at_k(ranking_of(scored(ts)), pos, 10));
  }
}

/// One user per row of `users`; user k has positives `positives[k]`.
struct EvalFixture {
  InteractionDataset target{"t"};
  BaseModel model;
  OverlapSet overlap;
};

EvalFixture fixture(const Matrix& users, const Matrix& items, const std::vector<std::vector<std::size_t>>& positives) {
  EvalFixture f;
  for (std::size_t i = 0; i < items.rows(); ++i) f.target.add_item("i" + std::to_string(i));
  for (std::size_t u = 0; u < users.rows(); ++u) {
    const std::string id = "u" + std::to_string(u);
    f.target.add_user(id);
    for (auto i : positives[u]) f.target.add(id, "i" + std::to_string(i));
    f.overlap.users.push_back({u, u, id});
  }
  f.model = testing::model_from(ModelKind::MF, users, items);
  return f;
}

TEST(EvaluateColdStart, PerfectUser) {
  Matrix items(20, 1);
  for (std::size_t i = 0; i < 20; ++i) items(i, 0) = i < 3 ? 10.0 - i : -static_cast<double>(i);
  const Matrix users(1, 1, 1.0);
  const auto f = fixture(users, items, {{0, 1, 2}});
  const auto r = evaluate_cold_start(
      f.overlap, [&](const OverlapUser& u) { return to_vector(f.model.user_embeddings.row(u.target_index)); }, f.model,
      f.target, 3);
  ASSERT_EQ(r.per_user.size(), 1u);
  EXPECT_EQ(r.auc, 1.0);
  EXPECT_EQ(r.ndcg_at_k, 1.0);
}

TEST(EvaluateColdStart, OracleEmbeddingEqualsDirectEvaluation) {
  Rng rng(4);
  const Matrix users = testing::random_matrix(15, 4, rng), items = testing::random_matrix(30, 4, rng);
  std::vector<std::vector<std::size_t>> positives(15);
  for (std::size_t u = 0; u < 15; ++u) {
    for (std::size_t i = 0; i < 30; ++i) {
      if (dot(users.row(u), items.row(i)) > 1.0) positives[u].push_back(i);
    }
    if (positives[u].empty()) positives[u].push_back(u);
  }
  const auto f = fixture(users, items, positives);
  const auto r = evaluate_cold_start(
      f.overlap, [&](const OverlapUser& u) { return to_vector(f.model.user_embeddings.row(u.target_index)); }, f.model,
      f.target, 10);
  ASSERT_EQ(r.per_user.size(), 15u);
  for (std::size_t u = 0; u < 15; ++u) {
    std::vector<double> s(30);
    for (std::size_t i = 0; i < 30; ++i) s[i] = dot(users.row(u), items.row(i));
    const std::set<std::size_t> pos(positives[u].begin(), positives[u].end());
    EXPECT_EQ(r.per_user[u].auc, brute_auc(s, pos));
    EXPECT_NEAR(r.per_user[u].ndcg, brute_ndcg(s, pos, 10), 1e-12);
  }
}

TEST(EvaluateColdStart, MeansAndSkips) {
  Rng rng(5);
  const Matrix users = testing::random_matrix(6, 3, rng), items = testing::random_matrix(8, 3, rng);
  // u1 has no positives, u3 has every item: both skipped. u4 cannot be embedded.
  std::vector<std::vector<std::size_t>> positives{{0, 1}, {}, {2}, {0, 1, 2, 3, 4, 5, 6, 7}, {3}, {5, 6}};
  const auto f = fixture(users, items, positives);
  const auto r = evaluate_cold_start(
      f.overlap,
      [&](const OverlapUser& u) {
        if (u.external_id == "u4") throw LookupError("no source embedding");
        return to_vector(f.model.user_embeddings.row(u.target_index));
      },
      f.model, f.target, 5);
  EXPECT_EQ(r.num_users, 6u);
  EXPECT_EQ(r.num_skipped, 3u);
  ASSERT_EQ(r.per_user.size(), 3u);
  ASSERT_EQ(r.errors.size(), 1u);
  EXPECT_EQ(r.errors[0].rfind("u4", 0), 0u);
  double auc = 0.0, ndcg = 0.0;
  for (const auto& m : r.per_user) {
    EXPECT_NE(m.user, "u1");
    EXPECT_NE(m.user, "u3");
    EXPECT_GE(m.auc, 0.0);
    EXPECT_LE(m.auc, 1.0);
    EXPECT_GE(m.ndcg, 0.0);
    EXPECT_LE(m.ndcg, 1.0);
    auc += m.auc;
    ndcg += m.ndcg;
  }
  EXPECT_NEAR(r.auc, auc / 3.0, 1e-12);
  EXPECT_NEAR(r.ndcg_at_k, ndcg / 3.0, 1e-12);
}

TEST(EvaluateColdStart, CmlScoresByNegativeDistance) {
  Matrix items(3, 1);
  items(0, 0) = 0.0;
  items(1, 0) = 0.9;
  items(2, 0) = 0.5;
  auto f = fixture(Matrix(1, 1, 1.0), items, {{1}});
  f.model.spec.kind = ModelKind::CML;
  const auto r = evaluate_cold_start(
      f.overlap, [](const OverlapUser&) { return Vector{1.0}; }, f.model, f.target, 1);
  EXPECT_EQ(r.auc, 1.0);
  EXPECT_EQ(r.ndcg_at_k, 1.0);
}

TEST(EvaluateColdStart, TrainedMetaNetBeatsRandomAffineNet) {
  SynthConfig sc;
  sc.users_per_domain = 120;
  sc.items_per_domain = 80;
  sc.overlap = 80;
  sc.dim = 4;
  sc.noise = 0.0;
  sc.seed = 31;
  const auto t = testing::truth_world(sc);
  const auto split = split_cold_start(t.overlap, 0.25, 1);
  MetaConfig mc;
  mc.iterations = 300;
  mc.group_size = 6;
  mc.seed = 2;
  const auto meta = meta_train(t.source, t.target, split.train_overlap, t.world.target.data, mc).network;
  AffineMap random_net = init_meta_network(4, 77, 1.0);
  Rng rng(78);
  for (double& b : random_net.b()) b = std::normal_distribution<double>(0, 1)(rng);
  auto report = [&](const AffineMap& net) {
    return evaluate_cold_start(
        split.test_overlap, [&](const OverlapUser& u) { return cold_start_embed(net, t.source, u.source_index); },
        t.target, t.world.target.data, 10);
  };
  EXPECT_GT(report(meta).auc, report(random_net).auc);
}

TEST(EvaluateColdStart, Errors) {
  const auto f = fixture(Matrix(1, 2, 1.0), Matrix(3, 2, 0.5), {{0}});
  auto embed = [](const OverlapUser&) { return Vector{1.0, 1.0}; };
  EXPECT_THROW(evaluate_cold_start(f.overlap, embed, f.model, f.target, 0), ArgumentError);
  auto wrong_dim = [](const OverlapUser&) { return Vector{1.0}; };
  EXPECT_THROW(evaluate_cold_start(f.overlap, wrong_dim, f.model, f.target, 3), ArgumentError);
}

}  // namespace
}  // namespace tmcdr
