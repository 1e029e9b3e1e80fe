#pragma once

// Placement (binary classification) and intensity (regression) reports.
//
// Averaging note: on a binary problem where every class has support, the
// support-weighted recall equals accuracy exactly. A table whose "macro"
// recall column matches its accuracy column was almost certainly computed
// with weighted averaging; both modes are available here.

#include <array>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace icg {

enum class Averaging { macro, weighted };

Averaging parse_averaging(std::string_view s);

struct ClassStats {
  std::size_t support = 0;    // actual members
  std::size_t predicted = 0;  // predicted members
  std::size_t true_positive = 0;
  double precision = 0.0;  // percent
  double recall = 0.0;
  double f1 = 0.0;
};

struct ClassificationReport {
  Averaging averaging = Averaging::macro;
  double accuracy = 0.0;  // percent
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::array<ClassStats, 2> per_class{};
  // confusion[actual][predicted]
  std::array<std::array<std::size_t, 2>, 2> confusion{};
  // Some class had zero support and was left out of the macro average.
  bool excluded_empty_class = false;
  // Some precision or recall hit a zero denominator and was set to 0.
  bool zero_division = false;
};

ClassificationReport classification_report(std::span<const int> preds, std::span<const int> labels,
                                           Averaging mode = Averaging::macro);

struct RegressionReport {
  double mae = 0.0;
  double mse = 0.0;
  double rmse = 0.0;
  // Undefined (nullopt) when targets, or predictions for the correlations,
  // are constant.
  std::optional<double> r2;
  std::optional<double> pearson;
  std::optional<double> spearman;
};

RegressionReport regression_report(std::span<const double> preds, std::span<const double> targets);

// 1-based fractional ranks; ties share the mean of their positions.
std::vector<double> spearman_ranks(std::span<const double> values);

std::optional<double> pearson(std::span<const double> a, std::span<const double> b);
std::optional<double> spearman(std::span<const double> a, std::span<const double> b);

// JSON with the table column names: Accuracy, Precision, Recall, F1 and
// MAE, MSE, RMSE, R2, Pearson, Spearman (null when undefined).
nlohmann::json to_json(const ClassificationReport& r);
nlohmann::json to_json(const RegressionReport& r);

}  // namespace icg
