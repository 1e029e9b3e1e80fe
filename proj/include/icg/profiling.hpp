#pragma once

// Analytic FLOP counts and wall-clock latency for model configurations.
//
// Counting convention: one multiply-accumulate is 2 FLOPs; elementwise adds
// (bias, residual, scaling, pooling) are 1 FLOP; every element passing
// through a nonlinear or normalizing op (softmax, layer norm, GELU, sin/cos,
// sigmoid) costs kNonlinearFlops.

#include <array>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "icg/model.hpp"

namespace icg {

inline constexpr std::uint64_t kNonlinearFlops = 5;

struct FlopReport {
  std::uint64_t fourier = 0;
  std::uint64_t input_projection = 0;
  std::vector<std::uint64_t> cross_attention;  // one per depth
  std::vector<std::uint64_t> self_attention;   // one per block, layer-major
  std::uint64_t ffn = 0;                        // all feed-forward blocks
  std::uint64_t head = 0;                       // mean-pool, linear, sigmoid
  std::uint64_t total = 0;

  double gflops() const { return static_cast<double>(total) * 1e-9; }
};

FlopReport count_flops(const ModelConfig& config);

struct CostReference {
  std::uint32_t depth = 1;
  std::uint32_t sa_blocks = 1;
  double gflops = 0.0;
};

// Reference GFLOPs for the eight-configuration depth/sa sweep.
inline constexpr std::array<CostReference, 8> kReferenceCosts = {{
    {2, 8, 5.79}, {2, 4, 3.11}, {2, 2, 1.77}, {2, 1, 1.09},
    {1, 8, 2.90}, {1, 4, 1.55}, {1, 2, 0.78}, {1, 1, 0.55},
}};

// Source widths searched when calibrating against kReferenceCosts.
inline constexpr std::array<std::uint32_t, 9> kCalibrationWidths = {1, 2, 4, 8, 16, 32, 64, 128, 256};

struct Calibration {
  std::uint32_t source_dim = 0;
  // Multiplier applied to the counter's GFLOPs.
  double scale = 1.0;
  double max_relative_error = 0.0;
  std::vector<double> fitted_gflops;  // same order as the references
};

// Fits one scale factor per candidate source width (minimising the worst
// relative error over `references`) and returns the best candidate.
Calibration calibrate_source_width(const ModelConfig& base, std::span<const CostReference> references,
                                   std::span<const std::uint32_t> candidate_widths);

class EnvironmentError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct LatencyReport {
  std::size_t iterations = 0;
  std::size_t warmup = 0;
  double median_ms = 0.0;
  double p95_ms = 0.0;
  double mean_ms = 0.0;
  double cv = 0.0;  // population stddev / mean
  std::vector<double> samples_ms;
};

// Linear-interpolated percentile (q in [0, 1]) of unsorted values.
double percentile(std::vector<double> values, double q);

// Statistics over already-measured per-iteration times.
LatencyReport summarize_latency(std::span<const double> samples_ms, std::size_t warmup);

// Smallest observable steady_clock increment in nanoseconds; throws
// EnvironmentError if the clock does not advance.
double timer_resolution_ns();

// Times single-sample forward passes on the calling thread.
LatencyReport bench_latency(const ModelParams& params, const ModelConfig& config,
                            std::span<const double> sentence, std::span<const double> word,
                            std::size_t iterations, std::size_t warmup);

}  // namespace icg
