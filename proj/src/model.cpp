#include "icg/model.hpp"

#include <cmath>
#include <numbers>
#include <random>

namespace icg {

namespace {

constexpr double kInitStd = 0.02;

Tensor2 column_block(const Tensor2& x, std::size_t offset, std::size_t width) {
  Tensor2 out(x.rows(), width);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto in = x.row(r);
    auto o = out.row(r);
    for (std::size_t c = 0; c < width; ++c) o[c] = in[offset + c];
  }
  return out;
}

void add_column_block(Tensor2& x, const Tensor2& block, std::size_t offset) {
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto o = x.row(r);
    auto in = block.row(r);
    for (std::size_t c = 0; c < block.cols(); ++c) o[offset + c] += in[c];
  }
}

void accumulate(Parameter& p, const Tensor2& g) { p.grad += g; }

FfnParams make_ffn(const std::string& prefix, std::size_t d, std::size_t hidden) {
  FfnParams f;
  f.ln_gamma = Parameter(prefix + ".ln_gamma", Tensor2(1, d, 1.0));
  f.ln_beta = Parameter(prefix + ".ln_beta", Tensor2(1, d));
  f.w1 = Parameter(prefix + ".w1", Tensor2(d, hidden));
  f.b1 = Parameter(prefix + ".b1", Tensor2(1, hidden));
  f.w2 = Parameter(prefix + ".w2", Tensor2(hidden, d));
  f.b2 = Parameter(prefix + ".b2", Tensor2(1, d));
  return f;
}

AttentionBlockParams make_attention(const std::string& prefix, std::size_t d,
                                    std::size_t source_dim, std::uint32_t heads,
                                    std::size_t hidden) {
  AttentionBlockParams a;
  a.heads = heads;
  a.ln_gamma = Parameter(prefix + ".ln_gamma", Tensor2(1, d, 1.0));
  a.ln_beta = Parameter(prefix + ".ln_beta", Tensor2(1, d));
  a.w_q = Parameter(prefix + ".w_q", Tensor2(d, d));
  a.w_k = Parameter(prefix + ".w_k", Tensor2(source_dim, d));
  a.w_v = Parameter(prefix + ".w_v", Tensor2(source_dim, d));
  a.w_o = Parameter(prefix + ".w_o", Tensor2(d, d));
  a.ffn = make_ffn(prefix + ".ffn", d, hidden);
  return a;
}

template <typename Block, typename Out>
void push_attention(Block& a, Out& out) {
  for (auto* p : {&a.ln_gamma, &a.ln_beta, &a.w_q, &a.w_k, &a.w_v, &a.w_o, &a.ffn.ln_gamma,
                  &a.ffn.ln_beta, &a.ffn.w1, &a.ffn.b1, &a.ffn.w2, &a.ffn.b2}) {
    out.push_back(p);
  }
}

bool is_weight_matrix(const std::string& name) {
  const auto dot = name.rfind('.');
  const std::string leaf = dot == std::string::npos ? name : name.substr(dot + 1);
  return leaf == "w_q" || leaf == "w_k" || leaf == "w_v" || leaf == "w_o" || leaf == "w1" ||
         leaf == "w2" || leaf == "w" || name == "input_proj" || name == "latents";
}

}  // namespace

std::string_view task_name(Task t) {
  return t == Task::placement ? "placement" : "intensity";
}

Task parse_task(std::string_view s) {
  if (s == "placement") return Task::placement;
  if (s == "intensity") return Task::intensity;
  throw ConfigError("task: expected 'placement' or 'intensity', got '" + std::string(s) + "'");
}

void ModelConfig::validate() const {
  auto fail = [](const std::string& field, const std::string& why) {
    throw ConfigError(field + ": " + why);
  };
  if (depth < 1) fail("depth", "must be >= 1");
  if (sa_blocks < 1) fail("sa_blocks", "must be >= 1");
  if (num_latents < 1) fail("num_latents", "must be >= 1");
  if (latent_dim < 1) fail("latent_dim", "must be >= 1");
  if (cross_heads < 1 || latent_dim % cross_heads != 0)
    fail("cross_heads", "must divide latent_dim");
  if (sa_heads < 1 || latent_dim % sa_heads != 0) fail("sa_heads", "must divide latent_dim");
  if (ffn_mult < 1) fail("ffn_mult", "must be >= 1");
  if (fourier_bands < 1) fail("fourier_bands", "must be >= 1");
  if (!(max_freq >= 1.0) || !std::isfinite(max_freq)) fail("max_freq", "must be >= 1");
  if (source_dim < 1) fail("source_dim", "must be >= 1");
  if (task != Task::placement && task != Task::intensity) fail("task", "unknown task");
  if (sentence_dim + word_dim < 2) fail("sentence_dim", "need at least two tokens");
}

ModelConfig tiny_config(Task task) {
  ModelConfig c;
  c.depth = 1;
  c.sa_blocks = 1;
  c.num_latents = 4;
  c.latent_dim = 8;
  c.cross_heads = 1;
  c.sa_heads = 2;
  c.ffn_mult = 4;
  c.fourier_bands = 2;
  c.max_freq = 10.0;
  c.source_dim = 4;
  c.task = task;
  return c;
}

std::vector<LayerKind> layer_plan(const ModelConfig& config) {
  std::vector<LayerKind> plan;
  for (std::uint32_t l = 0; l < config.depth; ++l) {
    plan.push_back(LayerKind::cross_attention);
    plan.push_back(LayerKind::feed_forward);
    for (std::uint32_t s = 0; s < config.sa_blocks; ++s) {
      plan.push_back(LayerKind::self_attention);
      plan.push_back(LayerKind::feed_forward);
    }
  }
  return plan;
}

std::vector<double> fourier_frequencies(std::uint32_t bands, double max_freq) {
  std::vector<double> w(bands);
  if (bands == 1) {
    w[0] = 1.0;
    return w;
  }
  const double log_max = std::log(max_freq);
  for (std::uint32_t k = 0; k < bands; ++k) {
    w[k] = std::exp(log_max * static_cast<double>(k) / static_cast<double>(bands - 1));
  }
  w.front() = 1.0;
  w.back() = max_freq;
  return w;
}

std::vector<double> fourier_encode(double position, std::uint32_t bands, double max_freq) {
  if (bands < 1) throw ConfigError("fourier_bands: must be >= 1");
  std::vector<double> out;
  out.reserve(2 * bands + 1);
  for (double w : fourier_frequencies(bands, max_freq)) {
    out.push_back(std::sin(std::numbers::pi * w * position));
    out.push_back(std::cos(std::numbers::pi * w * position));
  }
  out.push_back(position);
  return out;
}

TokenSequence assemble_tokens(std::span<const double> sentence, std::span<const double> word,
                              const ModelConfig& config) {
  if (sentence.size() != config.sentence_dim) {
    throw DimensionError("assemble_tokens: sentence embedding has " +
                         std::to_string(sentence.size()) + " values, expected " +
                         std::to_string(config.sentence_dim));
  }
  if (word.size() != config.word_dim) {
    throw DimensionError("assemble_tokens: word embedding has " + std::to_string(word.size()) +
                         " values, expected " + std::to_string(config.word_dim));
  }
  const std::size_t m = config.num_tokens();
  TokenSequence seq{Tensor2(m, config.token_dim())};
  for (std::size_t i = 0; i < m; ++i) {
    auto row = seq.tokens.row(i);
    row[0] = i < sentence.size() ? sentence[i] : word[i - sentence.size()];
    const double p = 2.0 * static_cast<double>(i) / static_cast<double>(m - 1) - 1.0;
    const auto enc = fourier_encode(p, config.fourier_bands, config.max_freq);
    std::copy(enc.begin(), enc.end(), row.begin() + 1);
  }
  return seq;
}

std::vector<Parameter*> ModelParams::all() {
  std::vector<Parameter*> out{&latents, &input_proj};
  for (auto& layer : layers) {
    push_attention(layer.cross, out);
    for (auto& s : layer.self) push_attention(s, out);
  }
  out.push_back(&head.w);
  out.push_back(&head.b);
  return out;
}

std::vector<const Parameter*> ModelParams::all() const {
  auto mut = const_cast<ModelParams*>(this)->all();
  return {mut.begin(), mut.end()};
}

std::size_t ModelParams::scalar_count() const {
  std::size_t n = 0;
  for (const Parameter* p : all()) n += p->value.size();
  return n;
}

std::size_t parameter_count(const ModelConfig& c) {
  const std::size_t d = c.latent_dim;
  const std::size_t f = c.ffn_hidden();
  const std::size_t src = c.source_dim;
  const std::size_t ffn = 2 * d + d * f + f + f * d + d;
  const std::size_t cross = 2 * d + d * d + 2 * src * d + d * d + ffn;
  const std::size_t self = 2 * d + 4 * d * d + ffn;
  return std::size_t{c.num_latents} * d + c.token_dim() * src +
         c.depth * (cross + std::size_t{c.sa_blocks} * self) + d + 1;
}

ModelParams make_params(const ModelConfig& config) {
  config.validate();
  const std::size_t d = config.latent_dim;
  ModelParams p;
  p.latents = Parameter("latents", Tensor2(config.num_latents, d));
  p.input_proj = Parameter("input_proj", Tensor2(config.token_dim(), config.source_dim));
  for (std::uint32_t l = 0; l < config.depth; ++l) {
    const std::string prefix = "layer" + std::to_string(l);
    LayerParams layer;
    layer.cross = make_attention(prefix + ".cross", d, config.source_dim, config.cross_heads,
                                 config.ffn_hidden());
    for (std::uint32_t s = 0; s < config.sa_blocks; ++s) {
      layer.self.push_back(make_attention(prefix + ".self" + std::to_string(s), d, d,
                                          config.sa_heads, config.ffn_hidden()));
    }
    p.layers.push_back(std::move(layer));
  }
  p.head.w = Parameter("head.w", Tensor2(d, 1));
  p.head.b = Parameter("head.b", Tensor2(1, 1));
  return p;
}

ModelParams init_params(const ModelConfig& config, std::uint64_t seed) {
  ModelParams p = make_params(config);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, kInitStd);
  for (Parameter* param : p.all()) {
    if (!is_weight_matrix(param->name)) continue;
    for (double& v : param->value.values()) v = normal(rng);
  }
  return p;
}

Tensor2 attention_forward(const Tensor2& z, const Tensor2* source, const AttentionBlockParams& p,
                          AttentionCache* cache) {
  const std::size_t d = z.cols();
  if (p.w_q.value.rows() != d || p.w_o.value.cols() != d) {
    throw DimensionError("attention: latents " + z.shape_string() + " do not match W_q " +
                         p.w_q.value.shape_string());
  }
  AttentionCache local;
  AttentionCache& c = cache != nullptr ? *cache : local;
  c.normed = layer_norm(z, p.ln_gamma, p.ln_beta, kLayerNormEps, &c.ln);
  const Tensor2& kv_in = source != nullptr ? *source : c.normed;
  if (kv_in.cols() != p.w_k.value.rows()) {
    throw DimensionError("attention: source " + kv_in.shape_string() + " does not match W_k " +
                         p.w_k.value.shape_string());
  }
  c.q = matmul(c.normed, p.w_q.value);
  c.k = matmul(kv_in, p.w_k.value);
  c.v = matmul(kv_in, p.w_v.value);

  const std::size_t heads = p.heads;
  const std::size_t dh = d / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  c.weights.clear();
  c.mixed = Tensor2(z.rows(), d);
  for (std::size_t h = 0; h < heads; ++h) {
    Tensor2 scores = matmul_nt(column_block(c.q, h * dh, dh), column_block(c.k, h * dh, dh));
    scores *= scale;
    Tensor2 w = softmax_rows(scores);
    add_column_block(c.mixed, matmul(w, column_block(c.v, h * dh, dh)), h * dh);
    c.weights.push_back(std::move(w));
  }
  return z + matmul(c.mixed, p.w_o.value);
}

Tensor2 attention_backward(const Tensor2& dout, const AttentionCache& c, const Tensor2* source,
                           AttentionBlockParams& p, Tensor2* d_source) {
  const std::size_t d = dout.cols();
  const std::size_t heads = p.heads;
  const std::size_t dh = d / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  accumulate(p.w_o, matmul_tn(c.mixed, dout));
  const Tensor2 d_mixed = matmul_nt(dout, p.w_o.value);

  Tensor2 dq(c.q.rows(), d);
  Tensor2 dk(c.k.rows(), d);
  Tensor2 dv(c.v.rows(), d);
  for (std::size_t h = 0; h < heads; ++h) {
    const Tensor2& w = c.weights[h];
    const Tensor2 dm = column_block(d_mixed, h * dh, dh);
    add_column_block(dv, matmul_tn(w, dm), h * dh);
    Tensor2 dscores = softmax_rows_backward(w, matmul_nt(dm, column_block(c.v, h * dh, dh)));
    dscores *= scale;
    add_column_block(dq, matmul(dscores, column_block(c.k, h * dh, dh)), h * dh);
    add_column_block(dk, matmul_tn(dscores, column_block(c.q, h * dh, dh)), h * dh);
  }

  accumulate(p.w_q, matmul_tn(c.normed, dq));
  Tensor2 d_normed = matmul_nt(dq, p.w_q.value);
  const Tensor2& kv_in = source != nullptr ? *source : c.normed;
  accumulate(p.w_k, matmul_tn(kv_in, dk));
  accumulate(p.w_v, matmul_tn(kv_in, dv));
  Tensor2 d_kv = matmul_nt(dk, p.w_k.value);
  d_kv += matmul_nt(dv, p.w_v.value);
  if (source != nullptr) {
    if (d_source == nullptr) throw StateError("attention_backward: cross-attention needs d_source");
    *d_source += d_kv;
  } else {
    d_normed += d_kv;
  }

  Tensor2 dz = dout;
  dz += layer_norm_backward(d_normed, c.ln, p.ln_gamma, p.ln_beta);
  return dz;
}

Tensor2 ffn_forward(const Tensor2& z, const FfnParams& p, FfnCache* cache) {
  FfnCache local;
  FfnCache& c = cache != nullptr ? *cache : local;
  c.normed = layer_norm(z, p.ln_gamma, p.ln_beta, kLayerNormEps, &c.ln);
  c.pre_act = add_row_bias(matmul(c.normed, p.w1.value), p.b1.value);
  c.act = gelu(c.pre_act);
  return z + add_row_bias(matmul(c.act, p.w2.value), p.b2.value);
}

Tensor2 ffn_backward(const Tensor2& dout, const FfnCache& c, FfnParams& p) {
  accumulate(p.w2, matmul_tn(c.act, dout));
  accumulate(p.b2, sum_rows(dout));
  const Tensor2 d_pre = gelu_backward(c.pre_act, matmul_nt(dout, p.w2.value));
  accumulate(p.w1, matmul_tn(c.normed, d_pre));
  accumulate(p.b1, sum_rows(d_pre));
  Tensor2 dz = dout;
  dz += layer_norm_backward(matmul_nt(d_pre, p.w1.value), c.ln, p.ln_gamma, p.ln_beta);
  return dz;
}

Tensor2 cross_attention(const Tensor2& z, const Tensor2& source, const AttentionBlockParams& p) {
  return attention_forward(z, &source, p);
}

Tensor2 self_attention(const Tensor2& z, const AttentionBlockParams& p) {
  return attention_forward(z, nullptr, p);
}

namespace {

Tensor2 mean_pool(const Tensor2& latents) {
  Tensor2 pooled = sum_rows(latents);
  pooled *= 1.0 / static_cast<double>(latents.rows());
  return pooled;
}

double head_logit(const ModelParams& params, const Tensor2& pooled) {
  if (pooled.cols() != params.head.w.value.rows()) {
    throw DimensionError("head: pooled " + pooled.shape_string() + " does not match " +
                         params.head.w.value.shape_string());
  }
  double logit = params.head.b.value[0];
  for (std::size_t i = 0; i < pooled.cols(); ++i) logit += pooled[i] * params.head.w.value[i];
  return logit;
}

void check_params_match(const ModelParams& params, const ModelConfig& config) {
  if (params.layers.size() != config.depth) {
    throw DimensionError("forward: parameters have " + std::to_string(params.layers.size()) +
                         " layers, config depth is " + std::to_string(config.depth));
  }
  for (const auto& layer : params.layers) {
    if (layer.self.size() != config.sa_blocks) {
      throw DimensionError("forward: parameters have " + std::to_string(layer.self.size()) +
                           " self-attention blocks, config has " +
                           std::to_string(config.sa_blocks));
    }
  }
  if (params.latents.value.rows() != config.num_latents ||
      params.latents.value.cols() != config.latent_dim) {
    throw DimensionError("forward: latents " + params.latents.value.shape_string() +
                         " do not match config");
  }
  if (params.input_proj.value.rows() != config.token_dim() ||
      params.input_proj.value.cols() != config.source_dim) {
    throw DimensionError("forward: input_proj " + params.input_proj.value.shape_string() +
                         " does not match config");
  }
}

}  // namespace

Prediction predict_from_latents(const ModelParams& params, const Tensor2& latents) {
  const double logit = head_logit(params, mean_pool(latents));
  return {logit, sigmoid(logit)};
}

Prediction forward(const ModelParams& params, const ModelConfig& config,
                   std::span<const double> sentence, std::span<const double> word,
                   ForwardTrace* trace) {
  return forward_tokens(params, config, assemble_tokens(sentence, word, config), trace);
}

Prediction forward_tokens(const ModelParams& params, const ModelConfig& config,
                          const TokenSequence& tokens, ForwardTrace* trace) {
  check_params_match(params, config);
  if (tokens.tokens.cols() != config.token_dim()) {
    throw DimensionError("forward: tokens " + tokens.tokens.shape_string() +
                         " do not match token width " + std::to_string(config.token_dim()));
  }
  if (trace != nullptr) {
    trace->valid = false;
    trace->attention.clear();
    trace->ffn.clear();
  }
  Tensor2 projected = matmul(tokens.tokens, params.input_proj.value);
  Tensor2 z = params.latents.value;

  for (const auto& layer : params.layers) {
    auto run_block = [&](const AttentionBlockParams& block, const Tensor2* source) {
      AttentionCache* ac = nullptr;
      FfnCache* fc = nullptr;
      if (trace != nullptr) {
        ac = &trace->attention.emplace_back();
        fc = &trace->ffn.emplace_back();
      }
      z = attention_forward(z, source, block, ac);
      z = ffn_forward(z, block.ffn, fc);
    };
    run_block(layer.cross, &projected);
    for (const auto& s : layer.self) run_block(s, nullptr);
  }

  Tensor2 pooled = mean_pool(z);
  const double logit = head_logit(params, pooled);
  if (trace != nullptr) {
    trace->tokens = tokens;
    trace->projected = std::move(projected);
    trace->final_latents = std::move(z);
    trace->pooled = std::move(pooled);
    trace->logit = logit;
    trace->valid = true;
  }
  return {logit, sigmoid(logit)};
}

void backward(ModelParams& params, const ModelConfig& config, const ForwardTrace& trace,
              double upstream_grad) {
  if (!trace.valid) throw StateError("backward: no forward pass recorded in trace");
  check_params_match(params, config);
  const std::size_t blocks_per_layer = 1 + config.sa_blocks;
  if (trace.attention.size() != config.depth * blocks_per_layer) {
    throw StateError("backward: trace does not match the configuration");
  }

  const std::size_t n = trace.final_latents.rows();
  params.head.b.grad[0] += upstream_grad;
  for (std::size_t i = 0; i < trace.pooled.cols(); ++i) {
    params.head.w.grad[i] += trace.pooled[i] * upstream_grad;
  }
  Tensor2 dz(n, trace.final_latents.cols());
  for (std::size_t r = 0; r < n; ++r) {
    auto row = dz.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) {
      row[c] = upstream_grad * params.head.w.value[c] / static_cast<double>(n);
    }
  }

  Tensor2 d_projected(trace.projected.rows(), trace.projected.cols());
  for (std::size_t l = params.layers.size(); l-- > 0;) {
    LayerParams& layer = params.layers[l];
    for (std::size_t b = blocks_per_layer; b-- > 0;) {
      const std::size_t idx = l * blocks_per_layer + b;
      AttentionBlockParams& block = b == 0 ? layer.cross : layer.self[b - 1];
      dz = ffn_backward(dz, trace.ffn[idx], block.ffn);
      if (b == 0) {
        dz = attention_backward(dz, trace.attention[idx], &trace.projected, block, &d_projected);
      } else {
        dz = attention_backward(dz, trace.attention[idx], nullptr, block, nullptr);
      }
    }
  }
  params.latents.grad += dz;
  params.input_proj.grad += matmul_tn(trace.tokens.tokens, d_projected);
}

}  // namespace icg
