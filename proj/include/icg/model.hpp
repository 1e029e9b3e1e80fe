#pragma once

// Latent-bottleneck transformer for per-word iconic gesture prediction.
//
// Input layout: the 384-d sentence embedding and the 100-d emotion-fused word
// embedding are concatenated into 484 scalars. Each scalar becomes one token
// [value, sin(πω_1p), cos(πω_1p), ..., sin(πω_Kp), cos(πω_Kp), p] with p its
// normalized position in [-1, 1]. A learned projection maps tokens to the
// key/value source width. A learnable latent array then attends to the tokens
// (cross-attention) and to itself (self-attention), every attention followed
// by a feed-forward block, all pre-norm residual. Latents are mean-pooled and
// a linear head yields one logit; sigmoid turns it into a placement
// probability or a bounded intensity.

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "icg/numerics.hpp"

namespace icg {

inline constexpr std::size_t kSentenceDim = 384;
inline constexpr std::size_t kWordDim = 100;

enum class Task : std::uint32_t { placement = 0, intensity = 1 };

std::string_view task_name(Task t);
Task parse_task(std::string_view s);

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class StateError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

struct ModelConfig {
  std::uint32_t depth = 1;
  std::uint32_t sa_blocks = 1;
  std::uint32_t num_latents = 128;
  std::uint32_t latent_dim = 256;
  std::uint32_t cross_heads = 1;
  std::uint32_t sa_heads = 8;
  std::uint32_t ffn_mult = 4;
  std::uint32_t fourier_bands = 6;
  double max_freq = 10.0;
  // Width of the projected tokens that keys and values are computed from.
  std::uint32_t source_dim = 16;
  Task task = Task::placement;
  std::uint32_t sentence_dim = kSentenceDim;
  std::uint32_t word_dim = kWordDim;

  std::size_t num_tokens() const { return std::size_t{sentence_dim} + word_dim; }
  std::size_t token_dim() const { return 1 + 2 * std::size_t{fourier_bands} + 1; }
  std::size_t ffn_hidden() const { return std::size_t{ffn_mult} * latent_dim; }

  // Throws ConfigError naming the offending field.
  void validate() const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

// The tiny configuration used for gradient checks and overfit tests.
ModelConfig tiny_config(Task task = Task::placement);

enum class LayerKind { cross_attention, self_attention, feed_forward };

// Exact block order the forward pass executes; shared with the FLOP counter.
std::vector<LayerKind> layer_plan(const ModelConfig& config);

// ω_k log-spaced from 1 to max_freq (ω_1 = 1 when K = 1).
std::vector<double> fourier_frequencies(std::uint32_t bands, double max_freq);
std::vector<double> fourier_encode(double position, std::uint32_t bands, double max_freq);

struct TokenSequence {
  Tensor2 tokens;  // M × (1 + 2K + 1)
};

TokenSequence assemble_tokens(std::span<const double> sentence, std::span<const double> word,
                              const ModelConfig& config);

struct FfnParams {
  Parameter ln_gamma, ln_beta;
  Parameter w1, b1, w2, b2;
};

struct AttentionBlockParams {
  std::uint32_t heads = 1;
  Parameter ln_gamma, ln_beta;
  Parameter w_q, w_k, w_v, w_o;
  FfnParams ffn;
};

struct LayerParams {
  AttentionBlockParams cross;
  std::vector<AttentionBlockParams> self;
};

struct HeadParams {
  Parameter w, b;
};

struct ModelParams {
  Parameter latents;     // Z_0, N × d
  Parameter input_proj;  // token_dim × source_dim
  std::vector<LayerParams> layers;
  HeadParams head;

  // Stable enumeration order; used by init, checkpoints, and the optimizer.
  std::vector<Parameter*> all();
  std::vector<const Parameter*> all() const;
  std::size_t scalar_count() const;
};

// Closed-form count of learnable scalars for a configuration.
std::size_t parameter_count(const ModelConfig& config);

// Zero-valued parameters with the right names and shapes.
ModelParams make_params(const ModelConfig& config);
ModelParams init_params(const ModelConfig& config, std::uint64_t seed);

struct AttentionCache {
  LayerNormCache ln;
  Tensor2 normed;
  Tensor2 q, k, v;
  std::vector<Tensor2> weights;  // one N × S softmax matrix per head
  Tensor2 mixed;                 // heads concatenated, before W_o
};

struct FfnCache {
  LayerNormCache ln;
  Tensor2 normed;
  Tensor2 pre_act;
  Tensor2 act;
};

struct ForwardTrace {
  bool valid = false;
  TokenSequence tokens;
  Tensor2 projected;  // M × source_dim
  std::vector<AttentionCache> attention;  // in layer_plan order
  std::vector<FfnCache> ffn;
  Tensor2 final_latents;
  Tensor2 pooled;
  double logit = 0.0;
};

struct Prediction {
  double logit = 0.0;
  double value = 0.0;  // sigmoid(logit)
};

// Inference decision rule for placement: predict 1 when the probability is at
// least this value. Label binarization uses kIntensityThreshold instead.
inline constexpr double kDecisionThreshold = 0.5;

inline int decide_placement(double probability) { return probability >= kDecisionThreshold ? 1 : 0; }

// Attention-with-residual primitives, exposed for testing. `source` is the
// key/value input; pass nullptr for self-attention (keys/values from the
// normalized latents). For cross-attention the backward pass adds the
// gradient w.r.t. the source into `d_source`.
Tensor2 attention_forward(const Tensor2& z, const Tensor2* source, const AttentionBlockParams& p,
                          AttentionCache* cache = nullptr);
Tensor2 attention_backward(const Tensor2& dout, const AttentionCache& cache,
                           const Tensor2* source, AttentionBlockParams& p, Tensor2* d_source);

Tensor2 ffn_forward(const Tensor2& z, const FfnParams& p, FfnCache* cache = nullptr);
Tensor2 ffn_backward(const Tensor2& dout, const FfnCache& cache, FfnParams& p);

Tensor2 cross_attention(const Tensor2& z, const Tensor2& source, const AttentionBlockParams& p);
Tensor2 self_attention(const Tensor2& z, const AttentionBlockParams& p);

// Mean-pool over latent rows then the linear head.
Prediction predict_from_latents(const ModelParams& params, const Tensor2& latents);

Prediction forward(const ModelParams& params, const ModelConfig& config,
                   std::span<const double> sentence, std::span<const double> word,
                   ForwardTrace* trace = nullptr);
Prediction forward_tokens(const ModelParams& params, const ModelConfig& config,
                          const TokenSequence& tokens, ForwardTrace* trace = nullptr);

// Accumulates d(loss)/d(param) into every Parameter::grad, where
// `upstream_grad` is d(loss)/d(logit). Throws StateError if `trace` does not
// hold a forward pass.
void backward(ModelParams& params, const ModelConfig& config, const ForwardTrace& trace,
              double upstream_grad);

// Checkpoint file: "ICGW", u32 version, config block, u64 optimizer step,
// u32 tensor count, then per tensor u32 name length, name bytes, u64 rows,
// u64 cols, little-endian f64 values.
inline constexpr std::uint32_t kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  enum class Kind { io, bad_magic, bad_version, truncated, integrity };
  CheckpointError(Kind k, const std::string& what) : std::runtime_error(what), kind(k) {}
  Kind kind;
};

struct Checkpoint {
  ModelConfig config;
  ModelParams params;
  std::uint64_t step_count = 0;
  // Optional Adam moments, same order as params.all(); empty when absent.
  std::vector<AdamState> optimizer;
};

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace icg
