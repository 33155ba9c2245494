#include "mtnas/numerics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>

namespace mtnas {

namespace {

std::uint64_t splitmix64(std::uint64_t& x) {
  x += 0x9e3779b97f4a7c15ull;
  std::uint64_t z = x;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

inline std::uint64_t rotl(std::uint64_t x, int k) {
  return (x << k) | (x >> (64 - k));
}

void require(bool ok, const char* msg) {
  if (!ok) throw shape_error(msg);
}

}  // namespace

Rng::Rng(std::uint64_t seed) {
  std::uint64_t sm = seed;
  for (auto& word : s) word = splitmix64(sm);
}

std::uint64_t Rng::next_u64() {
  const std::uint64_t result = rotl(s[0] + s[3], 23) + s[0];
  const std::uint64_t t = s[1] << 17;
  s[2] ^= s[0];
  s[3] ^= s[1];
  s[1] ^= s[2];
  s[0] ^= s[3];
  s[2] ^= t;
  s[3] = rotl(s[3], 45);
  return result;
}

double Rng::uniform01() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::uniform01_open() {
  return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
}

double Rng::normal() {
  if (has_cached_normal_) {
    has_cached_normal_ = false;
    return cached_normal_;
  }
  const double u1 = uniform01_open();
  const double u2 = uniform01();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * M_PI * u2;
  cached_normal_ = r * std::sin(theta);
  has_cached_normal_ = true;
  return r * std::cos(theta);
}

std::int64_t Rng::uniform_int(std::int64_t n) {
  if (n <= 0) throw shape_error("uniform_int: n must be positive");
  // Rejection sampling over the top multiple of n keeps the draw unbiased.
  const std::uint64_t un = static_cast<std::uint64_t>(n);
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % un;
  std::uint64_t x;
  do {
    x = next_u64();
  } while (x >= limit);
  return static_cast<std::int64_t>(x % un);
}

Matrix dense_forward(const Matrix& x, const Param& W, const Param& b) {
  require(x.cols() == W.rows(), "dense_forward: x.cols != W.rows");
  require(b.rows() == 1 && b.cols() == W.cols(), "dense_forward: bias shape");
  return (x * W.value).rowwise() + b.value.row(0);
}

Matrix dense_backward(const Matrix& x, Param& W, Param& b, const Matrix& dy) {
  require(dy.rows() == x.rows() && dy.cols() == W.cols(), "dense_backward: dy shape");
  W.grad.noalias() += x.transpose() * dy;
  b.grad.row(0) += dy.colwise().sum();
  return dy * W.value.transpose();
}

Matrix relu(const Matrix& x) {
  return x.cwiseMax(real(0));
}

Matrix relu_backward(const Matrix& pre, const Matrix& dy) {
  return ((pre.array() > real(0)).template cast<real>() * dy.array()).matrix();
}

Matrix sigmoid(const Matrix& x) {
  return (real(1) / (real(1) + (-x.array()).exp())).matrix();
}

Matrix sigmoid_backward(const Matrix& y, const Matrix& dy) {
  return (y.array() * (real(1) - y.array()) * dy.array()).matrix();
}

Matrix softmax_rows(const Matrix& x) {
  require(x.cols() >= 1, "softmax_rows: need at least one column");
  Matrix shifted = x.colwise() - x.rowwise().maxCoeff();
  Matrix e = shifted.array().exp().matrix();
  return (e.array().colwise() / e.rowwise().sum().array()).matrix();
}

Matrix softmax_rows_backward(const Matrix& m, const Matrix& dm) {
  Vector dot = (m.array() * dm.array()).rowwise().sum().matrix();
  return (m.array() * (dm.array().colwise() - dot.array())).matrix();
}

Matrix activation_forward(const Matrix& x, Activation kind) {
  if (!x.allFinite()) throw numeric_error("activation_forward: non-finite input");
  switch (kind) {
    case Activation::relu: return relu(x);
    case Activation::sigmoid: return sigmoid(x);
    case Activation::softmax_rows: return softmax_rows(x);
  }
  throw shape_error("activation_forward: unknown kind");
}

namespace {
constexpr double kBceClamp = 1e-7;
}

double loss_forward(const Matrix& pred, const Matrix& target, LossKind kind) {
  require(pred.rows() == target.rows() && pred.cols() == target.cols(),
          "loss_forward: shape mismatch");
  require(pred.rows() >= 1, "loss_forward: empty input");
  const double n = static_cast<double>(pred.rows());
  if (kind == LossKind::mse) {
    return (pred - target).array().square().sum() / (n * pred.cols());
  }
  require((target.array() == real(0) || target.array() == real(1)).all(),
          "loss_forward: bce targets must be 0/1");
  auto p = pred.array().min(real(1) - real(kBceClamp)).max(real(kBceClamp));
  auto y = target.array();
  return -(y * p.log() + (real(1) - y) * (real(1) - p).log()).sum() / (n * pred.cols());
}

Matrix loss_backward(const Matrix& pred, const Matrix& target, LossKind kind) {
  require(pred.rows() == target.rows() && pred.cols() == target.cols(),
          "loss_backward: shape mismatch");
  const real n = static_cast<real>(pred.rows() * pred.cols());
  if (kind == LossKind::mse) {
    return (real(2) / n) * (pred - target);
  }
  // The clamp has zero slope outside its bounds.
  Matrix d = Matrix::Zero(pred.rows(), pred.cols());
  for (Eigen::Index i = 0; i < pred.rows(); ++i) {
    for (Eigen::Index j = 0; j < pred.cols(); ++j) {
      const real p = pred(i, j);
      if (p <= real(kBceClamp) || p >= real(1) - real(kBceClamp)) continue;
      d(i, j) = (p - target(i, j)) / (p * (real(1) - p) * n);
    }
  }
  return d;
}

void adam_step(Param& p, const AdamConfig& cfg) {
  if (!p.grad.allFinite()) throw numeric_error("adam_step: non-finite gradient");
  if (cfg.weight_decay != 0.0) {
    p.value *= real(1.0 - cfg.lr * cfg.weight_decay);
  }
  p.step_count += 1;
  const real b1 = static_cast<real>(cfg.beta1);
  const real b2 = static_cast<real>(cfg.beta2);
  p.adam_m = b1 * p.adam_m + (real(1) - b1) * p.grad;
  p.adam_v = (b2 * p.adam_v.array() + (real(1) - b2) * p.grad.array().square()).matrix();
  const real c1 = real(1) - static_cast<real>(std::pow(cfg.beta1, p.step_count));
  const real c2 = real(1) - static_cast<real>(std::pow(cfg.beta2, p.step_count));
  p.value.array() -= static_cast<real>(cfg.lr) * (p.adam_m.array() / c1) /
                     ((p.adam_v.array() / c2).sqrt() + static_cast<real>(cfg.eps));
  p.zero_grad();
}

double grad_check(const std::function<double()>& f, std::span<Param* const> params,
                  double h) {
  f();
  std::vector<Matrix> analytic;
  analytic.reserve(params.size());
  for (const Param* p : params) analytic.push_back(p->grad);

  double max_rel = 0.0;
  for (std::size_t k = 0; k < params.size(); ++k) {
    Param& p = *params[k];
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
      for (Eigen::Index j = 0; j < p.cols(); ++j) {
        const real saved = p.value(i, j);
        p.value(i, j) = saved + static_cast<real>(h);
        const double fp = f();
        p.value(i, j) = saved - static_cast<real>(h);
        const double fm = f();
        p.value(i, j) = saved;
        const double numeric = (fp - fm) / (2.0 * h);
        const double a = static_cast<double>(analytic[k](i, j));
        const double rel = std::abs(a - numeric) /
                           std::max({1.0, std::abs(a), std::abs(numeric)});
        max_rel = std::max(max_rel, rel);
      }
    }
  }
  return max_rel;
}

void glorot_init(Param& W, Rng& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(W.rows() + W.cols()));
  for (Eigen::Index i = 0; i < W.rows(); ++i) {
    for (Eigen::Index j = 0; j < W.cols(); ++j) {
      W.value(i, j) = static_cast<real>((2.0 * rng.uniform01() - 1.0) * a);
    }
  }
}

std::string format_real(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  (void)ec;
  return std::string(buf, ptr);
}

}  // namespace mtnas
