#include "icg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <string>

#include "icg/data.hpp"

namespace icg {
namespace {

// Exact check; a summed mean of equal values can be off by an ulp.
bool is_constant(std::span<const double> v) {
  return std::adjacent_find(v.begin(), v.end(), std::not_equal_to<>()) == v.end();
}

}  // namespace

Averaging parse_averaging(std::string_view s) {
  if (s == "macro") return Averaging::macro;
  if (s == "weighted") return Averaging::weighted;
  throw ValidationError("averaging: expected 'macro' or 'weighted', got '" + std::string(s) + "'");
}

ClassificationReport classification_report(std::span<const int> preds, std::span<const int> labels,
                                           Averaging mode) {
  if (preds.size() != labels.size()) {
    throw ValidationError("classification_report: " + std::to_string(preds.size()) +
                          " predictions vs " + std::to_string(labels.size()) + " labels");
  }
  if (preds.empty()) throw ValidationError("classification_report: no samples");

  ClassificationReport rep;
  rep.averaging = mode;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if ((preds[i] != 0 && preds[i] != 1) || (labels[i] != 0 && labels[i] != 1)) {
      throw ValidationError("classification_report: labels must be 0 or 1");
    }
    ++rep.confusion[labels[i]][preds[i]];
  }

  const double total = static_cast<double>(preds.size());
  rep.accuracy = 100.0 * static_cast<double>(rep.confusion[0][0] + rep.confusion[1][1]) / total;

  double weight_sum = 0.0;
  for (int c = 0; c < 2; ++c) {
    ClassStats& s = rep.per_class[c];
    s.true_positive = rep.confusion[c][c];
    s.support = rep.confusion[c][0] + rep.confusion[c][1];
    s.predicted = rep.confusion[0][c] + rep.confusion[1][c];
    if (s.predicted > 0) {
      s.precision = 100.0 * static_cast<double>(s.true_positive) / static_cast<double>(s.predicted);
    } else {
      rep.zero_division = true;
    }
    if (s.support > 0) {
      s.recall = 100.0 * static_cast<double>(s.true_positive) / static_cast<double>(s.support);
    } else {
      rep.zero_division = true;
    }
    s.f1 = s.precision + s.recall > 0.0 ? 2.0 * s.precision * s.recall / (s.precision + s.recall)
                                        : 0.0;

    double w = 0.0;
    if (mode == Averaging::weighted) {
      w = static_cast<double>(s.support);
    } else if (s.support > 0) {
      w = 1.0;
    } else {
      rep.excluded_empty_class = true;
    }
    rep.precision += w * s.precision;
    rep.recall += w * s.recall;
    rep.f1 += w * s.f1;
    weight_sum += w;
  }
  rep.precision /= weight_sum;
  rep.recall /= weight_sum;
  rep.f1 /= weight_sum;
  return rep;
}

std::vector<double> spearman_ranks(std::span<const double> values) {
  std::vector<std::size_t> idx(values.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(values.size());
  std::size_t i = 0;
  while (i < idx.size()) {
    std::size_t j = i;
    while (j + 1 < idx.size() && values[idx[j + 1]] == values[idx[i]]) ++j;
    // Positions i..j (0-based) share rank mean(i+1..j+1).
    const double rank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[idx[k]] = rank;
    i = j + 1;
  }
  return ranks;
}

std::optional<double> pearson(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.size() < 2) return std::nullopt;
  if (is_constant(a) || is_constant(b)) return std::nullopt;
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = a[i] - ma;
    const double db = b[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

std::optional<double> spearman(std::span<const double> a, std::span<const double> b) {
  const auto ra = spearman_ranks(a);
  const auto rb = spearman_ranks(b);
  return pearson(ra, rb);
}

RegressionReport regression_report(std::span<const double> preds, std::span<const double> targets) {
  if (preds.size() != targets.size()) {
    throw ValidationError("regression_report: " + std::to_string(preds.size()) +
                          " predictions vs " + std::to_string(targets.size()) + " targets");
  }
  if (preds.size() < 2) throw ValidationError("regression_report: need at least 2 samples");

  const double n = static_cast<double>(preds.size());
  RegressionReport rep;
  double abs_sum = 0.0, sq_sum = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const double e = preds[i] - targets[i];
    abs_sum += std::abs(e);
    sq_sum += e * e;
  }
  rep.mae = abs_sum / n;
  rep.mse = sq_sum / n;
  rep.rmse = std::sqrt(rep.mse);

  const double mean_t = std::accumulate(targets.begin(), targets.end(), 0.0) / n;
  double ss_tot = 0.0;
  for (double t : targets) ss_tot += (t - mean_t) * (t - mean_t);
  if (!is_constant(targets)) {
    rep.r2 = 1.0 - sq_sum / ss_tot;
    rep.pearson = pearson(preds, targets);
    rep.spearman = spearman(preds, targets);
  }
  return rep;
}

namespace {

nlohmann::json optional_json(const std::optional<double>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

}  // namespace

nlohmann::json to_json(const ClassificationReport& r) {
  nlohmann::json per_class = nlohmann::json::array();
  for (int c = 0; c < 2; ++c) {
    const auto& s = r.per_class[c];
    per_class.push_back({{"class", c},
                         {"Support", s.support},
                         {"Precision", s.precision},
                         {"Recall", s.recall},
                         {"F1", s.f1}});
  }
  return {{"Accuracy", r.accuracy},
          {"Precision", r.precision},
          {"Recall", r.recall},
          {"F1", r.f1},
          {"averaging", r.averaging == Averaging::macro ? "macro" : "weighted"},
          {"per_class", per_class},
          {"confusion", r.confusion},
          {"excluded_empty_class", r.excluded_empty_class},
          {"zero_division", r.zero_division}};
}

nlohmann::json to_json(const RegressionReport& r) {
  return {{"MAE", r.mae},
          {"MSE", r.mse},
          {"RMSE", r.rmse},
          {"R2", optional_json(r.r2)},
          {"Pearson", optional_json(r.pearson)},
          {"Spearman", optional_json(r.spearman)}};
}

}  // namespace icg
