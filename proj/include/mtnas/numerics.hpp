#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace mtnas {

// Model scalar. Tests and acceptance runs pin 64-bit; -DMTNAS_REAL_FLOAT
// switches the training stack to 32-bit.
#ifdef MTNAS_REAL_FLOAT
using real = float;
#else
using real = double;
#endif

template <class S>
using MatrixX = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class S>
using VectorX = Eigen::Matrix<S, Eigen::Dynamic, 1>;

using Matrix = MatrixX<real>;
using Vector = VectorX<real>;

enum class TaskKind { binary, real_value };

struct shape_error : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};
struct numeric_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// A learnable tensor with its gradient and Adam moments, all of one shape.
struct Param {
  Matrix value;
  Matrix grad;
  Matrix adam_m;
  Matrix adam_v;
  long step_count = 0;

  Param() = default;
  Param(Eigen::Index rows, Eigen::Index cols)
      : value(Matrix::Zero(rows, cols)),
        grad(Matrix::Zero(rows, cols)),
        adam_m(Matrix::Zero(rows, cols)),
        adam_v(Matrix::Zero(rows, cols)) {}

  Eigen::Index rows() const { return value.rows(); }
  Eigen::Index cols() const { return value.cols(); }
  long size() const { return static_cast<long>(value.size()); }
  void zero_grad() { grad.setZero(); }
};

// xoshiro256++ seeded through splitmix64. Same 64-bit stream on every
// platform, which the reproducibility contract depends on.
struct Rng {
  std::uint64_t s[4];

  explicit Rng(std::uint64_t seed);
  std::uint64_t next_u64();
  /// Uniform in [0,1) with 53 random bits.
  double uniform01();
  /// Uniform in (0,1]; safe as a log() argument.
  double uniform01_open();
  /// Standard normal via Box-Muller; consumes two uniforms per pair.
  double normal();
  /// Uniform integer in [0, n).
  std::int64_t uniform_int(std::int64_t n);

 private:
  bool has_cached_normal_ = false;
  double cached_normal_ = 0.0;
};

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

// y = x W + b, b broadcast over rows.
Matrix dense_forward(const Matrix& x, const Param& W, const Param& b);
// Accumulates into W.grad / b.grad, returns dL/dx.
Matrix dense_backward(const Matrix& x, Param& W, Param& b, const Matrix& dy);

enum class Activation { relu, sigmoid, softmax_rows };

Matrix activation_forward(const Matrix& x, Activation kind);
Matrix relu(const Matrix& x);
Matrix relu_backward(const Matrix& pre, const Matrix& dy);
Matrix sigmoid(const Matrix& x);
// `y` is the sigmoid output saved from the forward pass.
Matrix sigmoid_backward(const Matrix& y, const Matrix& dy);
Matrix softmax_rows(const Matrix& x);
// `m` is the softmax output saved from the forward pass.
Matrix softmax_rows_backward(const Matrix& m, const Matrix& dm);

enum class LossKind { bce, mse };

// Mean over rows; bce clamps predictions to [1e-7, 1-1e-7].
double loss_forward(const Matrix& pred, const Matrix& target, LossKind kind);
Matrix loss_backward(const Matrix& pred, const Matrix& target, LossKind kind);

// Bias-corrected Adam with decoupled weight decay; zeroes the gradient
// and bumps step_count.
void adam_step(Param& p, const AdamConfig& cfg);

// Central finite differences with step h against the analytic grads that
// `f` leaves in params. Returns max over coordinates of
// |analytic - numeric| / max(1, |analytic|, |numeric|).
double grad_check(const std::function<double()>& f, std::span<Param* const> params,
                  double h = 1e-5);

// Dense weights ~ uniform(-a, a), a = sqrt(6/(din+dout)); bias left at zero.
void glorot_init(Param& W, Rng& rng);

std::string format_real(double v);

}  // namespace mtnas
