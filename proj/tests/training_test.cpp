#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "icg/data.hpp"
#include "icg/training.hpp"

namespace icg {
namespace {

namespace fs = std::filesystem;

// Direct textbook forms, fine for moderate logits.
double naive_bce(double x, int c, double w) {
  const double s = 1.0 / (1.0 + std::exp(-x));
  return -w * c * std::log(s) - (1 - c) * std::log(1.0 - s);
}

std::vector<WordSample> synthetic_samples(std::size_t records, std::uint64_t seed) {
  const auto ds = synthetic_provider({.seed = seed, .num_records = records});
  return expand_records(ds.records, ds.lexicon);
}

// 32 samples from distinct records, 8 positive and 24 negative.
std::vector<WordSample> overfit_set() {
  auto all = synthetic_samples(200, 77);
  std::vector<WordSample> pos, neg, out;
  for (auto& s : all) (s.label == 1 ? pos : neg).push_back(s);
  std::set<std::string> used;
  auto take = [&](const std::vector<WordSample>& from, std::size_t n) {
    for (const auto& s : from) {
      if (n == 0) break;
      if (used.insert(s.record_id).second) {
        out.push_back(s);
        --n;
      }
    }
  };
  take(pos, 8);
  take(neg, 24);
  return out;
}

// ---------------------------------------------------------------- Losses

TEST(BceLoss, AtZeroLogitIsLogTwo) {
  EXPECT_NEAR(bce_loss(0.0, 1).loss, std::log(2.0), 1e-15);
  EXPECT_NEAR(bce_loss(0.0, 0).loss, std::log(2.0), 1e-15);
  EXPECT_NEAR(bce_loss(0.0, 1).grad, -0.5, 1e-15);
}

TEST(BceLoss, IsStableForLargeLogits) {
  const LossGrad a = bce_loss(40.0, 1);
  EXPECT_TRUE(std::isfinite(a.loss));
  EXPECT_NEAR(a.loss, std::exp(-40.0), 1e-30);
  const LossGrad b = bce_loss(40.0, 0);
  EXPECT_NEAR(b.loss, 40.0, 1e-12);
  const LossGrad c = bce_loss(-800.0, 1);
  EXPECT_NEAR(c.loss, 800.0, 1e-9);
  EXPECT_NEAR(c.grad, -1.0, 1e-15);
}

TEST(BceLoss, MatchesNaiveFormulaAndWeighting) {
  for (double x : {-3.0, -0.4, 0.2, 2.5}) {
    for (int c : {0, 1}) {
      for (double w : {1.0, 2.0, 5.5}) {
        EXPECT_NEAR(bce_loss(x, c, w).loss, naive_bce(x, c, w), 1e-12);
      }
    }
  }
}

TEST(BceLoss, GradientMatchesFiniteDifference) {
  const double h = 1e-6;
  for (double x : {-2.0, -0.1, 0.7, 3.0}) {
    for (int c : {0, 1}) {
      const double num = (bce_loss(x + h, c, 3.0).loss - bce_loss(x - h, c, 3.0).loss) / (2 * h);
      EXPECT_NEAR(bce_loss(x, c, 3.0).grad, num, 1e-8);
    }
  }
}

TEST(BceLoss, UnitWeightEqualsUnweighted) {
  for (double x : {-1.5, 0.3}) {
    for (int c : {0, 1}) {
      EXPECT_EQ(bce_loss(x, c, 1.0).loss, bce_loss(x, c).loss);
      EXPECT_EQ(bce_loss(x, c, 1.0).grad, bce_loss(x, c).grad);
    }
  }
}

TEST(MseLoss, ValueAndGradient) {
  EXPECT_DOUBLE_EQ(mse_loss(0.7, 0.2).loss, 0.25);
  EXPECT_DOUBLE_EQ(mse_loss(0.7, 0.2).grad, 1.0);
  EXPECT_EQ(mse_loss(0.3, 0.3).loss, 0.0);
}

TEST(SampleLoss, IntensityChainsThroughSigmoid) {
  const ModelConfig cfg = tiny_config(Task::intensity);
  WordSample s;
  s.intensity = 0.2;
  const double x = 0.4, h = 1e-6;
  auto loss_at = [&](double logit) {
    const double v = 1.0 / (1.0 + std::exp(-logit));
    return sample_loss(cfg, {logit, v}, s, 1.0).loss;
  };
  const double v = 1.0 / (1.0 + std::exp(-x));
  const LossGrad lg = sample_loss(cfg, {x, v}, s, 1.0);
  EXPECT_NEAR(lg.loss, (v - 0.2) * (v - 0.2), 1e-15);
  EXPECT_NEAR(lg.grad, (loss_at(x + h) - loss_at(x - h)) / (2 * h), 1e-9);
}

// ---------------------------------------------------------------- Loop

TEST(Train, ZeroEpochsReturnsInitialParameters) {
  const auto samples = synthetic_samples(5, 1);
  const ModelConfig cfg = tiny_config();
  TrainConfig tc;
  tc.epochs = 0;
  tc.seed = 4;
  const TrainResult r = train(cfg, samples, {}, tc);
  EXPECT_TRUE(r.history.empty());
  const ModelParams init = init_params(cfg, 4);
  const auto a = r.best.params.all();
  const auto b = init.all();
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i]->value, b[i]->value);
  EXPECT_EQ(r.last.step_count, 0u);
}

TEST(Train, IsBitDeterministic) {
  const auto samples = synthetic_samples(6, 2);
  const ModelConfig cfg = tiny_config();
  TrainConfig tc;
  tc.epochs = 2;
  tc.batch_size = 8;
  tc.lr = 1e-3;
  tc.seed = 5;
  const TrainResult a = train(cfg, samples, samples, tc);
  const TrainResult b = train(cfg, samples, samples, tc);
  const auto pa = a.last.params.all();
  const auto pb = b.last.params.all();
  for (std::size_t i = 0; i < pa.size(); ++i) EXPECT_EQ(pa[i]->value, pb[i]->value) << pa[i]->name;
  for (std::size_t e = 0; e < a.history.size(); ++e) {
    EXPECT_EQ(a.history[e].train_loss, b.history[e].train_loss);
    EXPECT_EQ(a.history[e].eval_loss, b.history[e].eval_loss);
  }
}

TEST(Train, StepCountIsOnePerBatch) {
  const auto samples = synthetic_samples(4, 3);
  TrainConfig tc;
  tc.epochs = 3;
  tc.batch_size = 5;
  const TrainResult r = train(tiny_config(), samples, {}, tc);
  const std::size_t batches = (samples.size() + 4) / 5;
  EXPECT_EQ(r.last.step_count, 3 * batches);
  for (const auto& st : r.last.optimizer) EXPECT_EQ(st.step_count, 3 * batches);
}

TEST(Train, DuplicatedSampleBatchMatchesSingleSample) {
  const auto one = synthetic_samples(1, 4);
  const std::vector<WordSample> single = {one.front()};
  const std::vector<WordSample> doubled = {one.front(), one.front()};
  TrainConfig tc;
  tc.epochs = 1;
  tc.lr = 1e-2;
  tc.batch_size = 2;
  const TrainResult a = train(tiny_config(), single, {}, tc);
  const TrainResult b = train(tiny_config(), doubled, {}, tc);
  const auto pa = a.last.params.all();
  const auto pb = b.last.params.all();
  for (std::size_t i = 0; i < pa.size(); ++i)
    for (std::size_t j = 0; j < pa[i]->value.size(); ++j)
      EXPECT_NEAR(pa[i]->value[j], pb[i]->value[j], 1e-14) << pa[i]->name;
}

TEST(Train, ResumeContinuesStepCount) {
  const auto samples = synthetic_samples(3, 6);
  const ModelConfig cfg = tiny_config();
  TrainConfig tc;
  tc.epochs = 1;
  tc.batch_size = 4;
  const TrainResult first = train(cfg, samples, {}, tc);
  const TrainResult second = train(cfg, samples, {}, tc, &first.last);
  EXPECT_EQ(second.last.step_count, 2 * first.last.step_count);
  ModelConfig other = cfg;
  other.sa_blocks = 2;
  EXPECT_THROW(train(other, samples, {}, tc, &first.last), ConfigError);
}

TEST(Train, RejectsBadConfig) {
  const auto samples = synthetic_samples(2, 7);
  TrainConfig tc;
  tc.batch_size = 0;
  EXPECT_THROW(train(tiny_config(), samples, {}, tc), ConfigError);
  tc = TrainConfig{};
  tc.lr = -1.0;
  EXPECT_THROW(train(tiny_config(), samples, {}, tc), ConfigError);
  EXPECT_THROW(train(tiny_config(), {}, {}, TrainConfig{}), TrainingError);
}

TEST(Train, OverfitsPlacement) {
  const auto samples = overfit_set();
  ASSERT_EQ(samples.size(), 32u);
  TrainConfig tc;
  tc.epochs = 500;
  tc.batch_size = 8;
  tc.lr = 2e-2;
  tc.seed = 1;
  const ModelConfig cfg = tiny_config(Task::placement);
  const TrainResult r = train(cfg, samples, samples, tc);
  EXPECT_LT(evaluate_loss(r.best.params, cfg, samples), 0.05);
}

TEST(Train, OverfitsIntensity) {
  const auto samples = overfit_set();
  ASSERT_EQ(samples.size(), 32u);
  TrainConfig tc;
  tc.epochs = 500;
  tc.batch_size = 4;
  tc.lr = 2e-2;
  tc.seed = 1;
  const ModelConfig cfg = tiny_config(Task::intensity);
  const TrainResult r = train(cfg, samples, samples, tc);
  EXPECT_LT(evaluate_loss(r.best.params, cfg, samples), 1e-3);
}

TEST(History, CsvHasHeaderAndOneRowPerEpoch) {
  const fs::path p = fs::temp_directory_path() / "icg_history_test.csv";
  write_history_csv({{0, 0.5, 0.6, 1.0}, {1, 0.4, 0.5, 1.1}}, p);
  std::ifstream in(p);
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "epoch,train_loss,eval_loss,seconds");
  int rows = 0;
  while (std::getline(in, line)) ++rows;
  EXPECT_EQ(rows, 2);
  fs::remove(p);
}

}  // namespace
}  // namespace icg
