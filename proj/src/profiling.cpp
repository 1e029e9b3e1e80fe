#include "icg/profiling.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>

#include "icg/data.hpp"

namespace icg {

namespace {

using u64 = std::uint64_t;

// Pre-norm + attention + output projection + residual. `sources` rows feed
// keys and values of width `source_width`.
u64 attention_flops(u64 n, u64 d, u64 heads, u64 sources, u64 source_width) {
  const u64 layer_norm = kNonlinearFlops * n * d;
  const u64 q = 2 * n * d * d;
  const u64 kv = 2 * 2 * sources * source_width * d;
  const u64 scores = 2 * n * sources * d;  // summed over heads
  const u64 softmax = kNonlinearFlops * heads * n * sources;
  const u64 mix = 2 * n * sources * d;
  const u64 out = 2 * n * d * d;
  const u64 residual = n * d;
  return layer_norm + q + kv + scores + softmax + mix + out + residual;
}

u64 ffn_flops(u64 n, u64 d, u64 hidden) {
  const u64 layer_norm = kNonlinearFlops * n * d;
  const u64 w1 = 2 * n * d * hidden + n * hidden;
  const u64 act = kNonlinearFlops * n * hidden;
  const u64 w2 = 2 * n * hidden * d + n * d;
  const u64 residual = n * d;
  return layer_norm + w1 + act + w2 + residual;
}

}  // namespace

FlopReport count_flops(const ModelConfig& config) {
  config.validate();
  const u64 n = config.num_latents;
  const u64 d = config.latent_dim;
  const u64 m = config.num_tokens();
  const u64 src = config.source_dim;
  const u64 hidden = config.ffn_hidden();

  FlopReport r;
  r.fourier = kNonlinearFlops * m * 2 * config.fourier_bands;
  r.input_projection = 2 * m * config.token_dim() * src;
  for (LayerKind kind : layer_plan(config)) {
    switch (kind) {
      case LayerKind::cross_attention:
        r.cross_attention.push_back(attention_flops(n, d, config.cross_heads, m, src));
        break;
      case LayerKind::self_attention:
        r.self_attention.push_back(attention_flops(n, d, config.sa_heads, n, d));
        break;
      case LayerKind::feed_forward:
        r.ffn += ffn_flops(n, d, hidden);
        break;
    }
  }
  r.head = n * d + 2 * d + 1 + kNonlinearFlops;
  r.total = r.fourier + r.input_projection + r.ffn + r.head;
  for (u64 c : r.cross_attention) r.total += c;
  for (u64 s : r.self_attention) r.total += s;
  return r;
}

Calibration calibrate_source_width(const ModelConfig& base, std::span<const CostReference> references,
                                   std::span<const std::uint32_t> candidate_widths) {
  if (references.empty() || candidate_widths.empty()) {
    throw ValidationError("calibrate_source_width: need references and candidate widths");
  }
  Calibration best;
  best.max_relative_error = std::numeric_limits<double>::infinity();
  for (std::uint32_t width : candidate_widths) {
    std::vector<double> counted;
    double q_min = std::numeric_limits<double>::infinity();
    double q_max = 0.0;
    for (const auto& ref : references) {
      ModelConfig c = base;
      c.source_dim = width;
      c.depth = ref.depth;
      c.sa_blocks = ref.sa_blocks;
      counted.push_back(count_flops(c).gflops());
      const double q = counted.back() / ref.gflops;
      q_min = std::min(q_min, q);
      q_max = std::max(q_max, q);
    }
    // Minimises max_i |scale * q_i - 1|.
    const double scale = 2.0 / (q_min + q_max);
    Calibration cal;
    cal.source_dim = width;
    cal.scale = scale;
    for (std::size_t i = 0; i < references.size(); ++i) {
      cal.fitted_gflops.push_back(scale * counted[i]);
      cal.max_relative_error = std::max(
          cal.max_relative_error, std::abs(cal.fitted_gflops[i] / references[i].gflops - 1.0));
    }
    if (cal.max_relative_error < best.max_relative_error) best = std::move(cal);
  }
  return best;
}

double percentile(std::vector<double> values, double q) {
  if (values.empty()) throw ValidationError("percentile: no values");
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

LatencyReport summarize_latency(std::span<const double> samples_ms, std::size_t warmup) {
  if (samples_ms.empty()) throw ValidationError("summarize_latency: no samples");
  LatencyReport r;
  r.iterations = samples_ms.size();
  r.warmup = warmup;
  r.samples_ms.assign(samples_ms.begin(), samples_ms.end());
  r.median_ms = percentile(r.samples_ms, 0.5);
  r.p95_ms = percentile(r.samples_ms, 0.95);
  const double n = static_cast<double>(samples_ms.size());
  r.mean_ms = std::accumulate(samples_ms.begin(), samples_ms.end(), 0.0) / n;
  double var = 0.0;
  for (double s : samples_ms) var += (s - r.mean_ms) * (s - r.mean_ms);
  var /= n;
  r.cv = r.mean_ms > 0.0 ? std::sqrt(var) / r.mean_ms : 0.0;
  return r;
}

double timer_resolution_ns() {
  using clock = std::chrono::steady_clock;
  double best = std::numeric_limits<double>::infinity();
  for (int trial = 0; trial < 16; ++trial) {
    const auto t0 = clock::now();
    auto t1 = clock::now();
    for (long spin = 0; t1 == t0 && spin < 100'000'000L; ++spin) t1 = clock::now();
    const double step = std::chrono::duration<double, std::nano>(t1 - t0).count();
    if (step > 0.0) best = std::min(best, step);
  }
  if (!(best > 0.0) || !std::isfinite(best)) {
    throw EnvironmentError("steady_clock does not advance; cannot time inference");
  }
  return best;
}

LatencyReport bench_latency(const ModelParams& params, const ModelConfig& config,
                            std::span<const double> sentence, std::span<const double> word,
                            std::size_t iterations, std::size_t warmup) {
  if (iterations < 30) throw ValidationError("bench_latency: iterations must be >= 30");
  if (warmup < 5) throw ValidationError("bench_latency: warmup must be >= 5");
  timer_resolution_ns();

  using clock = std::chrono::steady_clock;
  volatile double sink = 0.0;
  for (std::size_t i = 0; i < warmup; ++i) sink = sink + forward(params, config, sentence, word).value;
  std::vector<double> samples;
  samples.reserve(iterations);
  for (std::size_t i = 0; i < iterations; ++i) {
    const auto t0 = clock::now();
    const Prediction p = forward(params, config, sentence, word);
    const auto t1 = clock::now();
    sink = sink + p.value;
    samples.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
  }
  return summarize_latency(samples, warmup);
}

}  // namespace icg
