#include "icg/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

namespace icg {

namespace {

void require_same_shape(const Tensor2& a, const Tensor2& b, const char* op) {
  if (!a.same_shape(b)) {
    throw DimensionError(std::string(op) + ": shape mismatch " + a.shape_string() + " vs " +
                         b.shape_string());
  }
}

constexpr double kGeluScale = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluCubic = 0.044715;

}  // namespace

Tensor2::Tensor2(std::size_t rows, std::size_t cols, std::vector<double> values)
    : rows_(rows), cols_(cols), values_(std::move(values)) {
  if (values_.size() != rows_ * cols_) {
    throw DimensionError("Tensor2: " + std::to_string(values_.size()) +
                         " values for shape " + shape_string());
  }
}

Tensor2::Tensor2(std::initializer_list<std::initializer_list<double>> rows) {
  rows_ = rows.size();
  cols_ = rows_ == 0 ? 0 : rows.begin()->size();
  values_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    if (r.size() != cols_) throw DimensionError("Tensor2: ragged initializer");
    values_.insert(values_.end(), r.begin(), r.end());
  }
}

Tensor2 Tensor2::row_vector(std::span<const double> v) {
  return Tensor2(1, v.size(), std::vector<double>(v.begin(), v.end()));
}

std::string Tensor2::shape_string() const {
  std::ostringstream os;
  os << "(" << rows_ << "x" << cols_ << ")";
  return os.str();
}

void Tensor2::fill(double v) { std::fill(values_.begin(), values_.end(), v); }

bool Tensor2::all_finite() const {
  return std::all_of(values_.begin(), values_.end(), [](double x) { return std::isfinite(x); });
}

Tensor2& Tensor2::operator+=(const Tensor2& o) {
  require_same_shape(*this, o, "add");
  for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += o.values_[i];
  return *this;
}

Tensor2& Tensor2::operator*=(double s) {
  for (double& x : values_) x *= s;
  return *this;
}

Tensor2 operator+(Tensor2 a, const Tensor2& b) {
  a += b;
  return a;
}

Tensor2 transpose(const Tensor2& a) {
  Tensor2 t(a.cols(), a.rows());
  for (std::size_t r = 0; r < a.rows(); ++r)
    for (std::size_t c = 0; c < a.cols(); ++c) t(c, r) = a(r, c);
  return t;
}

void zero_grads(std::span<Parameter* const> params) {
  for (Parameter* p : params) p->zero_grad();
}

Tensor2 matmul(const Tensor2& a, const Tensor2& b) {
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: inner dimensions differ " + a.shape_string() + " x " +
                         b.shape_string());
  }
  Tensor2 c(a.rows(), b.cols());
  const std::size_t n = b.cols();
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double* out = c.row(i).data();
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double s = a(i, k);
      if (s == 0.0) continue;
      const double* brow = b.row(k).data();
      for (std::size_t j = 0; j < n; ++j) out[j] += s * brow[j];
    }
  }
  return c;
}

Tensor2 matmul_tn(const Tensor2& a, const Tensor2& b) {
  if (a.rows() != b.rows()) {
    throw DimensionError("matmul_tn: row counts differ " + a.shape_string() + " x " +
                         b.shape_string());
  }
  Tensor2 c(a.cols(), b.cols());
  const std::size_t n = b.cols();
  for (std::size_t k = 0; k < a.rows(); ++k) {
    const double* brow = b.row(k).data();
    for (std::size_t i = 0; i < a.cols(); ++i) {
      const double s = a(k, i);
      if (s == 0.0) continue;
      double* out = c.row(i).data();
      for (std::size_t j = 0; j < n; ++j) out[j] += s * brow[j];
    }
  }
  return c;
}

Tensor2 matmul_nt(const Tensor2& a, const Tensor2& b) {
  if (a.cols() != b.cols()) {
    throw DimensionError("matmul_nt: column counts differ " + a.shape_string() + " x " +
                         b.shape_string());
  }
  Tensor2 c(a.rows(), b.rows());
  const std::size_t k_len = a.cols();
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const double* arow = a.row(i).data();
    for (std::size_t j = 0; j < b.rows(); ++j) {
      const double* brow = b.row(j).data();
      double acc = 0.0;
      for (std::size_t k = 0; k < k_len; ++k) acc += arow[k] * brow[k];
      c(i, j) = acc;
    }
  }
  return c;
}

MatmulGrads matmul_backward(const Tensor2& a, const Tensor2& b, const Tensor2& dc) {
  if (dc.rows() != a.rows() || dc.cols() != b.cols()) {
    throw DimensionError("matmul_backward: upstream " + dc.shape_string() + " does not match " +
                         a.shape_string() + " x " + b.shape_string());
  }
  return {matmul_nt(dc, b), matmul_tn(a, dc)};
}

Tensor2 add_row_bias(Tensor2 x, const Tensor2& bias) {
  if (bias.rows() != 1 || bias.cols() != x.cols()) {
    throw DimensionError("add_row_bias: bias " + bias.shape_string() + " for input " +
                         x.shape_string());
  }
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto row = x.row(r);
    for (std::size_t c = 0; c < x.cols(); ++c) row[c] += bias[c];
  }
  return x;
}

Tensor2 sum_rows(const Tensor2& x) {
  Tensor2 s(1, x.cols());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto row = x.row(r);
    for (std::size_t c = 0; c < x.cols(); ++c) s[c] += row[c];
  }
  return s;
}

Tensor2 softmax_rows(const Tensor2& x) {
  Tensor2 y(x.rows(), x.cols());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto in = x.row(r);
    auto out = y.row(r);
    const double mx = *std::max_element(in.begin(), in.end());
    double sum = 0.0;
    for (std::size_t c = 0; c < in.size(); ++c) {
      out[c] = std::exp(in[c] - mx);
      sum += out[c];
    }
    const double inv = 1.0 / sum;
    for (double& v : out) v *= inv;
  }
  return y;
}

Tensor2 softmax_rows_backward(const Tensor2& y, const Tensor2& dy) {
  require_same_shape(y, dy, "softmax_rows_backward");
  Tensor2 dx(y.rows(), y.cols());
  for (std::size_t r = 0; r < y.rows(); ++r) {
    auto yr = y.row(r);
    auto dyr = dy.row(r);
    double dot = 0.0;
    for (std::size_t c = 0; c < yr.size(); ++c) dot += yr[c] * dyr[c];
    auto out = dx.row(r);
    for (std::size_t c = 0; c < yr.size(); ++c) out[c] = yr[c] * (dyr[c] - dot);
  }
  return dx;
}

double gelu(double x) {
  const double inner = kGeluScale * (x + kGeluCubic * x * x * x);
  return 0.5 * x * (1.0 + std::tanh(inner));
}

double gelu_derivative(double x) {
  const double inner = kGeluScale * (x + kGeluCubic * x * x * x);
  const double t = std::tanh(inner);
  const double d_inner = kGeluScale * (1.0 + 3.0 * kGeluCubic * x * x);
  return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * d_inner;
}

Tensor2 gelu(const Tensor2& x) {
  Tensor2 y(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = gelu(x[i]);
  return y;
}

Tensor2 gelu_backward(const Tensor2& x, const Tensor2& dy) {
  require_same_shape(x, dy, "gelu_backward");
  Tensor2 dx(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.size(); ++i) dx[i] = dy[i] * gelu_derivative(x[i]);
  return dx;
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Tensor2 layer_norm(const Tensor2& x, const Parameter& gamma, const Parameter& beta, double eps,
                   LayerNormCache* cache) {
  const std::size_t n = x.cols();
  if (gamma.value.size() != n || beta.value.size() != n) {
    throw DimensionError("layer_norm: affine " + gamma.value.shape_string() + "/" +
                         beta.value.shape_string() + " for input " + x.shape_string());
  }
  Tensor2 y(x.rows(), n);
  Tensor2 xhat(x.rows(), n);
  std::vector<double> inv_std(x.rows());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto in = x.row(r);
    double mean = 0.0;
    for (double v : in) mean += v;
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (double v : in) var += (v - mean) * (v - mean);
    var /= static_cast<double>(n);
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[r] = is;
    auto xh = xhat.row(r);
    auto out = y.row(r);
    for (std::size_t c = 0; c < n; ++c) {
      xh[c] = (in[c] - mean) * is;
      out[c] = xh[c] * gamma.value[c] + beta.value[c];
    }
  }
  if (cache != nullptr) {
    cache->normalized = std::move(xhat);
    cache->inv_std = std::move(inv_std);
  }
  return y;
}

Tensor2 layer_norm_backward(const Tensor2& dy, const LayerNormCache& cache, Parameter& gamma,
                            Parameter& beta) {
  require_same_shape(dy, cache.normalized, "layer_norm_backward");
  const std::size_t n = dy.cols();
  const double inv_n = 1.0 / static_cast<double>(n);
  Tensor2 dx(dy.rows(), n);
  std::vector<double> dxhat(n);
  for (std::size_t r = 0; r < dy.rows(); ++r) {
    auto g = dy.row(r);
    auto xh = cache.normalized.row(r);
    double sum_d = 0.0;
    double sum_dx = 0.0;
    for (std::size_t c = 0; c < n; ++c) {
      gamma.grad[c] += g[c] * xh[c];
      beta.grad[c] += g[c];
      dxhat[c] = g[c] * gamma.value[c];
      sum_d += dxhat[c];
      sum_dx += dxhat[c] * xh[c];
    }
    auto out = dx.row(r);
    const double is = cache.inv_std[r];
    for (std::size_t c = 0; c < n; ++c) {
      out[c] = is * (dxhat[c] - inv_n * sum_d - xh[c] * inv_n * sum_dx);
    }
  }
  return dx;
}

std::vector<AdamState> make_adam_state(std::span<Parameter* const> params) {
  std::vector<AdamState> state;
  state.reserve(params.size());
  for (const Parameter* p : params) {
    state.push_back({Tensor2(p->value.rows(), p->value.cols()),
                     Tensor2(p->value.rows(), p->value.cols()), 0});
  }
  return state;
}

void adam_step(std::span<Parameter* const> params, std::span<AdamState> state,
               const AdamOptions& options) {
  if (params.size() != state.size()) {
    throw DimensionError("adam_step: " + std::to_string(params.size()) + " parameters but " +
                         std::to_string(state.size()) + " optimizer states");
  }
  std::vector<std::string> skipped;
  for (std::size_t p = 0; p < params.size(); ++p) {
    Parameter& param = *params[p];
    AdamState& s = state[p];
    if (!s.m.same_shape(param.value) || !s.v.same_shape(param.value)) {
      throw DimensionError("adam_step: state shape " + s.m.shape_string() + " for parameter " +
                           param.name + " " + param.value.shape_string());
    }
    if (!param.grad.all_finite()) {
      skipped.push_back(param.name);
      continue;
    }
    ++s.step_count;
    const double t = static_cast<double>(s.step_count);
    const double bc1 = 1.0 - std::pow(options.beta1, t);
    const double bc2 = 1.0 - std::pow(options.beta2, t);
    for (std::size_t i = 0; i < param.value.size(); ++i) {
      const double g = param.grad[i];
      s.m[i] = options.beta1 * s.m[i] + (1.0 - options.beta1) * g;
      s.v[i] = options.beta2 * s.v[i] + (1.0 - options.beta2) * g * g;
      const double m_hat = s.m[i] / bc1;
      const double v_hat = s.v[i] / bc2;
      param.value[i] -= options.lr * m_hat / (std::sqrt(v_hat) + options.eps);
    }
  }
  if (!skipped.empty()) {
    std::string msg = "adam_step: non-finite gradient in";
    for (const auto& n : skipped) msg += " " + n;
    throw NonFiniteGradientError(msg, std::move(skipped));
  }
}

double finite_diff_check(const std::function<double()>& loss_fn,
                         std::span<Parameter* const> params, double h) {
  double worst = 0.0;
  for (Parameter* p : params) {
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double orig = p->value[i];
      p->value[i] = orig + h;
      const double up = loss_fn();
      p->value[i] = orig - h;
      const double down = loss_fn();
      p->value[i] = orig;
      const double numeric = (up - down) / (2.0 * h);
      const double analytic = p->grad[i];
      const double denom = std::max(1e-8, std::abs(analytic) + std::abs(numeric));
      worst = std::max(worst, std::abs(analytic - numeric) / denom);
    }
  }
  return worst;
}

}  // namespace icg
