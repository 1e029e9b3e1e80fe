#include "icg/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "icg/random.hpp"

namespace icg {

namespace {

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

}  // namespace

LossGrad bce_loss(double logit, int label, double pos_weight) {
  const double p = sigmoid(logit);
  if (label == 1) return {pos_weight * softplus(-logit), pos_weight * (p - 1.0)};
  return {softplus(logit), p};
}

LossGrad mse_loss(double pred, double target) {
  const double diff = pred - target;
  return {diff * diff, 2.0 * diff};
}

void TrainConfig::validate() const {
  if (!(lr > 0.0)) throw ConfigError("lr: must be > 0");
  if (batch_size < 1) throw ConfigError("batch_size: must be >= 1");
  if (!(pos_weight > 0.0)) throw ConfigError("pos_weight: must be > 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0)) throw ConfigError("beta1: must be in [0, 1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("beta2: must be in [0, 1)");
  if (!(eps > 0.0)) throw ConfigError("eps: must be > 0");
}

LossGrad sample_loss(const ModelConfig& config, const Prediction& pred, const WordSample& sample,
                     double pos_weight) {
  if (config.task == Task::placement) return bce_loss(pred.logit, sample.label, pos_weight);
  const LossGrad l = mse_loss(pred.value, sample.intensity);
  // Chain through the sigmoid so the gradient is w.r.t. the logit.
  return {l.loss, l.grad * pred.value * (1.0 - pred.value)};
}

double evaluate_loss(const ModelParams& params, const ModelConfig& config,
                     std::span<const WordSample> samples, double pos_weight) {
  if (samples.empty()) return 0.0;
  double total = 0.0;
  for (const auto& s : samples) {
    const Prediction p = forward(params, config, *s.sentence_embedding, s.fused_embedding);
    total += sample_loss(config, p, s, pos_weight).loss;
  }
  return total / static_cast<double>(samples.size());
}

TrainResult train(const ModelConfig& config, std::span<const WordSample> train_samples,
                  std::span<const WordSample> eval_samples, const TrainConfig& tc,
                  const Checkpoint* start) {
  config.validate();
  tc.validate();
  if (train_samples.empty()) throw TrainingError("train: empty training set");

  TrainResult result;
  Checkpoint& cur = result.last;
  if (start != nullptr) {
    if (start->config != config) throw ConfigError("resume: checkpoint config differs from run");
    cur = *start;
  } else {
    cur.config = config;
    cur.params = init_params(config, tc.seed);
  }
  auto params = cur.params.all();
  if (cur.optimizer.empty()) {
    cur.optimizer = make_adam_state(params);
    for (auto& s : cur.optimizer) s.step_count = cur.step_count;
  }
  result.best = cur;
  result.best.optimizer.clear();

  const AdamOptions adam{tc.lr, tc.beta1, tc.beta2, tc.eps};
  SplitMix64 rng(tc.seed ^ (0x5eedULL + cur.step_count));
  std::vector<std::size_t> order(train_samples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  double best_loss = std::numeric_limits<double>::infinity();
  ForwardTrace trace;
  for (std::size_t epoch = 0; epoch < tc.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    deterministic_shuffle(order, rng);
    double train_total = 0.0;
    std::size_t batch_index = 0;
    for (std::size_t b0 = 0; b0 < order.size(); b0 += tc.batch_size, ++batch_index) {
      const std::size_t b1 = std::min(order.size(), b0 + tc.batch_size);
      const double inv_batch = 1.0 / static_cast<double>(b1 - b0);
      zero_grads(params);
      for (std::size_t i = b0; i < b1; ++i) {
        const WordSample& s = train_samples[order[i]];
        const Prediction p =
            forward(cur.params, config, *s.sentence_embedding, s.fused_embedding, &trace);
        const LossGrad lg = sample_loss(config, p, s, tc.pos_weight);
        if (!std::isfinite(lg.loss) || !std::isfinite(lg.grad)) {
          std::ostringstream msg;
          msg << "non-finite loss at epoch " << epoch << ", batch " << batch_index
              << ", sample " << s.record_id << "#" << s.word_index;
          throw TrainingError(msg.str());
        }
        train_total += lg.loss;
        backward(cur.params, config, trace, lg.grad * inv_batch);
      }
      adam_step(params, cur.optimizer, adam);
      ++cur.step_count;
    }

    EpochStats stats;
    stats.epoch = epoch;
    stats.train_loss = train_total / static_cast<double>(order.size());
    stats.eval_loss = eval_samples.empty()
                          ? stats.train_loss
                          : evaluate_loss(cur.params, config, eval_samples, tc.pos_weight);
    stats.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.history.push_back(stats);
    if (stats.eval_loss < best_loss) {
      best_loss = stats.eval_loss;
      result.best.params = cur.params;
      result.best.step_count = cur.step_count;
    }
  }
  return result;
}

void write_history_csv(const TrainHistory& history, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "epoch,train_loss,eval_loss,seconds\n";
  out.precision(17);
  for (const auto& e : history) {
    out << e.epoch << ',' << e.train_loss << ',' << e.eval_loss << ',' << e.seconds << '\n';
  }
}

}  // namespace icg
