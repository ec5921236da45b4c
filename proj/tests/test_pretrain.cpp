#include <gtest/gtest.h>

#include <cmath>
#include <string>

#include "test_support.hpp"
#include "tmcdr/eval.hpp"
#include "tmcdr/pretrain.hpp"
#include "tmcdr/synth.hpp"

namespace tmcdr {
namespace {

InteractionDataset small_dataset(std::uint64_t seed = 1) {
  Rng rng(seed);
  return testing::random_dataset(40, 30, 0.15, rng);
}

PretrainConfig quick(ModelKind kind, std::size_t epochs = 3) {
  PretrainConfig c;
  c.model.kind = kind;
  c.dim = 4;
  c.epochs = epochs;
  c.batch_size = 32;
  c.seed = 9;
  return c;
}

/// Macro AUC of a model over all of its own users against its own data.
double training_auc(const BaseModel& m, const InteractionDataset& ds) {
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t u = 0; u < ds.num_users(); ++u) {
    const auto scores = rank_items(m.spec.kind, m.user_embeddings.row(u), m.item_embeddings);
    if (const auto auc = auc_per_user(scores, ds.user_items(u))) {
      sum += *auc;
      ++n;
    }
  }
  return sum / static_cast<double>(n);
}

TEST(PretrainConfig, RejectsInvalid) {
  auto bad = [](auto mutate) {
    PretrainConfig c;
    mutate(c);
    return c;
  };
  EXPECT_THROW(bad([](PretrainConfig& c) { c.epochs = 0; }).validate(), ConfigError);
  EXPECT_THROW(bad([](PretrainConfig& c) { c.dim = 0; }).validate(), ConfigError);
  EXPECT_THROW(bad([](PretrainConfig& c) { c.batch_size = 0; }).validate(), ConfigError);
  EXPECT_THROW(bad([](PretrainConfig& c) { c.negatives_per_positive = 0; }).validate(), ConfigError);
  EXPECT_THROW(bad([](PretrainConfig& c) { c.lr = 0; }).validate(), ConfigError);
  EXPECT_THROW(bad([](PretrainConfig& c) { c.l2 = -1; }).validate(), ConfigError);
  PretrainConfig zero_epochs;
  zero_epochs.epochs = 0;
  EXPECT_THROW(train_base_model(small_dataset(), zero_epochs), ConfigError);
}

TEST(InitModel, DeterministicBySeed) {
  const auto ds = small_dataset();
  const auto c = quick(ModelKind::MF);
  EXPECT_EQ(init_model(ds, c), init_model(ds, c));
  auto other = c;
  other.seed = 10;
  EXPECT_NE(init_model(ds, c), init_model(ds, other));
}

TEST(InitModel, CmlRowsInUnitBall) {
  const auto ds = small_dataset();
  auto c = quick(ModelKind::CML);
  c.init_std = 1.0;  // large enough that projection matters
  const auto m = init_model(ds, c);
  for (std::size_t i = 0; i < m.user_embeddings.rows(); ++i) EXPECT_LE(norm(m.user_embeddings.row(i)), 1.0 + 1e-12);
  for (std::size_t i = 0; i < m.item_embeddings.rows(); ++i) EXPECT_LE(norm(m.item_embeddings.row(i)), 1.0 + 1e-12);
}

TEST(InitModel, EntryMeanWithinThreeSigma) {
  InteractionDataset ds("d");
  for (int u = 0; u < 500; ++u) ds.add("u" + std::to_string(u), "i" + std::to_string(u % 125));
  PretrainConfig c;
  c.dim = 16;  // (500 + 125) * 16 = 10,000 entries
  const auto m = init_model(ds, c);
  double sum = 0.0, sq = 0.0;
  std::size_t n = 0;
  for (const auto* t : {&m.user_embeddings, &m.item_embeddings}) {
    for (double x : t->data()) {
      sum += x;
      sq += x * x;
      ++n;
    }
  }
  ASSERT_EQ(n, 10000u);
  EXPECT_LE(std::abs(sum / n), 3.0 * 0.1 / std::sqrt(static_cast<double>(n)));
  EXPECT_NEAR(std::sqrt(sq / n), 0.1, 0.005);
}

TEST(TrainBaseModel, PlantedLowRankReachesTrainingAuc) {
  SynthConfig sc;
  sc.users_per_domain = 200;
  sc.items_per_domain = 100;
  sc.overlap = 0;
  sc.dim = 4;
  sc.seed = 3;
  const auto world = generate_synthetic(sc);
  PretrainConfig c;
  c.dim = 8;
  c.epochs = 20;
  c.seed = 5;
  const auto r = train_base_model(world.source.data, c);
  EXPECT_GE(training_auc(r.model, world.source.data), 0.90);
  ASSERT_EQ(r.loss_curve.size(), 20u);
  EXPECT_LT(r.loss_curve.back(), r.loss_curve.front());
}

TEST(TrainBaseModel, FinalEpochLossBelowFirstForEveryKind) {
  const auto ds = small_dataset(2);
  for (auto kind : {ModelKind::MF, ModelKind::BPR, ModelKind::ListRankMF, ModelKind::CML}) {
    const auto r = train_base_model(ds, quick(kind, 10));
    EXPECT_LE(r.loss_curve.back(), r.loss_curve.front()) << to_string(kind);
    EXPECT_TRUE(all_finite(r.model.user_embeddings.data()));
    EXPECT_TRUE(all_finite(r.model.item_embeddings.data()));
  }
}

TEST(TrainBaseModel, Deterministic) {
  const auto ds = small_dataset(3);
  for (auto kind : {ModelKind::MF, ModelKind::CML}) {
    const auto a = train_base_model(ds, quick(kind));
    const auto b = train_base_model(ds, quick(kind));
    EXPECT_EQ(a.model, b.model);
    EXPECT_EQ(a.loss_curve, b.loss_curve);
  }
}

TEST(TrainBaseModel, CmlConstraintHoldsAfterEveryEpoch) {
  // Runs of 1..6 epochs are prefixes of the same seeded trajectory.
  const auto ds = small_dataset(4);
  auto c = quick(ModelKind::CML);
  c.lr = 0.1;
  for (std::size_t e = 1; e <= 6; ++e) {
    c.epochs = e;
    const auto m = train_base_model(ds, c).model;
    for (std::size_t i = 0; i < m.user_embeddings.rows(); ++i) EXPECT_LE(norm(m.user_embeddings.row(i)), 1.0 + 1e-12);
    for (std::size_t i = 0; i < m.item_embeddings.rows(); ++i) EXPECT_LE(norm(m.item_embeddings.row(i)), 1.0 + 1e-12);
  }
}

TEST(TrainBaseModel, EpochRunsArePrefixesOfOneTrajectory) {
  const auto ds = small_dataset(5);
  auto c = quick(ModelKind::BPR, 4);
  const auto full = train_base_model(ds, c);
  c.epochs = 2;
  const auto part = train_base_model(ds, c);
  EXPECT_EQ(part.loss_curve[0], full.loss_curve[0]);
  EXPECT_EQ(part.loss_curve[1], full.loss_curve[1]);
}

TEST(TrainBaseModel, TouchesEveryItem) {
  const auto ds = small_dataset(6);
  for (std::size_t i = 0; i < ds.num_items(); ++i) {
    bool seen = false;
    for (std::size_t u = 0; u < ds.num_users() && !seen; ++u) seen = ds.has_interaction(u, i);
    ASSERT_TRUE(seen) << "fixture needs every item interacted";
  }
  const auto c = quick(ModelKind::MF, 2);
  const auto init = init_model(ds, c);
  const auto trained = train_base_model(ds, c).model;
  for (std::size_t i = 0; i < ds.num_items(); ++i) {
    EXPECT_NE(to_vector(init.item_embeddings.row(i)), to_vector(trained.item_embeddings.row(i))) << "item " << i;
  }
}

TEST(TrainBaseModel, DivergenceNamesEpochAndBatch) {
  auto c = quick(ModelKind::MF, 2);
  c.lr = 1e300;
  c.batch_size = 8;
  try {
    train_base_model(small_dataset(), c);
    FAIL() << "expected DivergenceError";
  } catch (const DivergenceError& e) {
    const std::string what = e.what();
    EXPECT_NE(what.find("epoch"), std::string::npos);
    EXPECT_NE(what.find("batch"), std::string::npos);
  }
}

TEST(TrainBaseModel, EmptyDataset) {
  EXPECT_THROW(train_base_model(InteractionDataset("e"), PretrainConfig{}), EmptyDatasetError);
}

}  // namespace
}  // namespace tmcdr
