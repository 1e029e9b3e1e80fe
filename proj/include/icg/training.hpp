#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "icg/data.hpp"
#include "icg/model.hpp"
#include "icg/numerics.hpp"

namespace icg {

struct LossGrad {
  double loss = 0.0;
  double grad = 0.0;
};

// Weighted binary cross-entropy on a logit: −w·c·log σ(x) − (1−c)·log(1−σ(x)).
LossGrad bce_loss(double logit, int label, double pos_weight = 1.0);
// (pred − target)², gradient w.r.t. pred.
LossGrad mse_loss(double pred, double target);

struct TrainConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::size_t batch_size = 64;
  std::size_t epochs = 1;
  std::uint64_t seed = 0;
  double pos_weight = 1.0;

  void validate() const;
};

struct EpochStats {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double eval_loss = 0.0;
  double seconds = 0.0;
};

using TrainHistory = std::vector<EpochStats>;

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Per-sample loss and d(loss)/d(logit) for the configured task.
LossGrad sample_loss(const ModelConfig& config, const Prediction& pred, const WordSample& sample,
                     double pos_weight);

// Mean task loss over `samples` with read-only inference.
double evaluate_loss(const ModelParams& params, const ModelConfig& config,
                     std::span<const WordSample> samples, double pos_weight = 1.0);

struct TrainResult {
  // Lowest eval loss seen (train loss when the eval set is empty); the
  // initial parameters when no epoch ran.
  Checkpoint best;
  // State after the last epoch, including Adam moments, for resuming.
  Checkpoint last;
  TrainHistory history;
};

// Mini-batch Adam: each batch accumulates mean-reduced gradients over its
// samples and then takes exactly one optimizer step. Shuffle order is drawn
// from the seed, so identical inputs give bit-identical results. `start`
// resumes from a prior checkpoint; otherwise parameters come from
// init_params(config, seed).
TrainResult train(const ModelConfig& config, std::span<const WordSample> train_samples,
                  std::span<const WordSample> eval_samples, const TrainConfig& tc,
                  const Checkpoint* start = nullptr);

void write_history_csv(const TrainHistory& history, const std::filesystem::path& path);

}  // namespace icg
