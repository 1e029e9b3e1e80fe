#pragma once

// Dense row-major matrices and the differentiable kernels the gesture model
// is built from. Every forward op has an explicit backward rule; there is no
// tape. All arithmetic is double precision.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace icg {

class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class NonFiniteGradientError : public std::runtime_error {
 public:
  NonFiniteGradientError(const std::string& what, std::vector<std::string> names)
      : std::runtime_error(what), parameter_names(std::move(names)) {}
  std::vector<std::string> parameter_names;
};

class Tensor2 {
 public:
  Tensor2() = default;
  Tensor2(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), values_(rows * cols, fill) {}
  Tensor2(std::size_t rows, std::size_t cols, std::vector<double> values);
  Tensor2(std::initializer_list<std::initializer_list<double>> rows);

  static Tensor2 row_vector(std::span<const double> v);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return values_.size(); }

  double& operator()(std::size_t r, std::size_t c) { return values_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return values_[r * cols_ + c]; }
  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }

  std::span<double> row(std::size_t r) { return {values_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {values_.data() + r * cols_, cols_}; }
  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }

  bool same_shape(const Tensor2& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }
  std::string shape_string() const;

  void fill(double v);
  bool all_finite() const;

  Tensor2& operator+=(const Tensor2& o);
  Tensor2& operator*=(double s);

  friend bool operator==(const Tensor2&, const Tensor2&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> values_;
};

Tensor2 operator+(Tensor2 a, const Tensor2& b);
Tensor2 transpose(const Tensor2& a);

struct Parameter {
  Parameter() = default;
  Parameter(std::string n, Tensor2 v)
      : name(std::move(n)), value(std::move(v)), grad(value.rows(), value.cols()) {}

  std::string name;
  Tensor2 value;
  Tensor2 grad;

  void zero_grad() { grad.fill(0.0); }
};

void zero_grads(std::span<Parameter* const> params);

// C = A·B
Tensor2 matmul(const Tensor2& a, const Tensor2& b);
// C = Aᵀ·B
Tensor2 matmul_tn(const Tensor2& a, const Tensor2& b);
// C = A·Bᵀ
Tensor2 matmul_nt(const Tensor2& a, const Tensor2& b);

struct MatmulGrads {
  Tensor2 da;
  Tensor2 db;
};
// Given dC for C = A·B: dA = dC·Bᵀ, dB = Aᵀ·dC.
MatmulGrads matmul_backward(const Tensor2& a, const Tensor2& b, const Tensor2& dc);

// Adds a 1×cols bias row to every row.
Tensor2 add_row_bias(Tensor2 x, const Tensor2& bias);
// Column sums as a 1×cols row; the gradient of add_row_bias w.r.t. the bias.
Tensor2 sum_rows(const Tensor2& x);

Tensor2 softmax_rows(const Tensor2& x);
// dx given the softmax output y and upstream dy.
Tensor2 softmax_rows_backward(const Tensor2& y, const Tensor2& dy);

double gelu(double x);
double gelu_derivative(double x);
Tensor2 gelu(const Tensor2& x);
Tensor2 gelu_backward(const Tensor2& x, const Tensor2& dy);

double sigmoid(double x);

struct LayerNormCache {
  Tensor2 normalized;            // x̂ before the affine map
  std::vector<double> inv_std;   // one per row
};

inline constexpr double kLayerNormEps = 1e-5;

Tensor2 layer_norm(const Tensor2& x, const Parameter& gamma, const Parameter& beta, double eps,
                   LayerNormCache* cache = nullptr);
// Returns dx and accumulates into gamma.grad / beta.grad.
Tensor2 layer_norm_backward(const Tensor2& dy, const LayerNormCache& cache, Parameter& gamma,
                            Parameter& beta);

struct AdamOptions {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  Tensor2 m;
  Tensor2 v;
  std::uint64_t step_count = 0;
};

std::vector<AdamState> make_adam_state(std::span<Parameter* const> params);

// In-place bias-corrected Adam. A parameter whose gradient has a non-finite
// entry is left untouched; after all other parameters are updated a
// NonFiniteGradientError naming every skipped parameter is thrown.
void adam_step(std::span<Parameter* const> params, std::span<AdamState> state,
               const AdamOptions& options);

// Central-difference check of the analytic gradients already stored in
// `params[i]->grad` against `loss_fn`, which must evaluate the loss at the
// current parameter values. Returns max |g_a−g_n| / max(1e-8, |g_a|+|g_n|).
double finite_diff_check(const std::function<double()>& loss_fn,
                         std::span<Parameter* const> params, double h);

}  // namespace icg
