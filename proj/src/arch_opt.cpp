#include "mtnas/arch_opt.hpp"

#include <cmath>

namespace mtnas {

namespace {

ArchVector softmax(const ArchVector& logits) {
  ArchVector e = (logits.array() - logits.maxCoeff()).exp();
  return e / e.sum();
}

}  // namespace

double BaselineTracker::value() const {
  if (count == 0) return 0.0;
  return kind == BaselineKind::cumulative_mean ? running_sum / static_cast<double>(count)
                                               : ema;
}

void BaselineTracker::add(double reward) {
  running_sum += reward;
  ema = (count == 0) ? reward : ema_decay * ema + (1.0 - ema_decay) * reward;
  count += 1;
}

ArchState::ArchState(const SpaceConfig& config) : cfg(config) {
  cfg.validate();
  const int b = block_count(cfg);
  const int r = local_route_count(cfg);
  alpha.assign(static_cast<std::size_t>(b), ArchVector::Zero(r));
  adam_m.assign(static_cast<std::size_t>(b), ArchVector::Zero(r));
  adam_v.assign(static_cast<std::size_t>(b), ArchVector::Zero(r));
}

std::vector<ArchVector> ArchState::probs() const {
  std::vector<ArchVector> p;
  p.reserve(alpha.size());
  for (const ArchVector& a : alpha) p.push_back(softmax(a));
  return p;
}

RouteVector sample_route(const ArchState& arch, Rng& rng) {
  RouteVector route;
  route.u.reserve(arch.alpha.size());
  for (const ArchVector& a : arch.alpha) {
    const ArchVector p = softmax(a);
    const double draw = rng.uniform01();
    double cumulative = 0.0;
    int picked = static_cast<int>(p.size()) - 1;
    for (int k = 0; k < p.size(); ++k) {
      cumulative += p[k];
      if (draw < cumulative) {
        picked = k;
        break;
      }
    }
    route.u.push_back(picked);
  }
  return route;
}

std::vector<ArchVector> logprob_grad(const ArchState& arch, const RouteVector& u) {
  validate_route(arch.cfg, u);
  std::vector<ArchVector> grads;
  grads.reserve(arch.alpha.size());
  for (std::size_t i = 0; i < arch.alpha.size(); ++i) {
    ArchVector g = -softmax(arch.alpha[i]);
    g[u.u[i]] += 1.0;
    grads.push_back(std::move(g));
  }
  return grads;
}

void reinforce_update(ArchState& arch, const RouteVector& u, double reward, double lr) {
  if (!std::isfinite(reward)) throw numeric_error("reinforce_update: non-finite reward");
  const double advantage = reward - arch.baseline.value();
  if (advantage != 0.0) {
    const std::vector<ArchVector> grads = logprob_grad(arch, u);
    arch.step_count += 1;
    const double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    const double c1 = 1.0 - std::pow(beta1, arch.step_count);
    const double c2 = 1.0 - std::pow(beta2, arch.step_count);
    for (std::size_t i = 0; i < arch.alpha.size(); ++i) {
      // Adam minimizes; negate the ascent gradient.
      const ArchVector g = -advantage * grads[i];
      arch.adam_m[i] = beta1 * arch.adam_m[i] + (1.0 - beta1) * g;
      arch.adam_v[i] =
          (beta2 * arch.adam_v[i].array() + (1.0 - beta2) * g.array().square()).matrix();
      arch.alpha[i].array() -=
          lr * (arch.adam_m[i].array() / c1) / ((arch.adam_v[i].array() / c2).sqrt() + eps);
    }
  }
  arch.baseline.add(reward);
}

RouteVector derive_route(const ArchState& arch) {
  RouteVector route;
  route.u.reserve(arch.alpha.size());
  for (const ArchVector& a : arch.alpha) {
    int best = 0;
    for (int k = 1; k < a.size(); ++k) {
      if (a[k] > a[best]) best = k;  // strict: ties keep the lowest index
    }
    route.u.push_back(best);
  }
  return route;
}

std::vector<double> entropy_report(const ArchState& arch) {
  std::vector<double> entropy;
  entropy.reserve(arch.alpha.size());
  for (const ArchVector& a : arch.alpha) {
    const ArchVector p = softmax(a);
    double h = 0.0;
    for (int k = 0; k < p.size(); ++k) {
      if (p[k] > 0.0) h -= p[k] * std::log(p[k]);
    }
    entropy.push_back(h);
  }
  return entropy;
}

}  // namespace mtnas
