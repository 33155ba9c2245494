#pragma once

#include "mtnas/numerics.hpp"
#include "mtnas/search_space.hpp"

#include <vector>

namespace mtnas {

// Architecture math stays in 64-bit regardless of the model scalar.
using ArchVector = Eigen::VectorXd;

enum class BaselineKind { cumulative_mean, ema };

// Reward baseline b: cumulative arithmetic mean of all rewards seen so
// far (b = 0 before the first), or an EMA variant behind config.
struct BaselineTracker {
  BaselineKind kind = BaselineKind::cumulative_mean;
  double ema_decay = 0.99;
  double running_sum = 0.0;
  long count = 0;
  double ema = 0.0;

  double value() const;
  void add(double reward);
};

// Per-block logits alpha with their own Adam state and the reward baseline.
struct ArchState {
  SpaceConfig cfg;
  std::vector<ArchVector> alpha;
  std::vector<ArchVector> adam_m;
  std::vector<ArchVector> adam_v;
  long step_count = 0;
  BaselineTracker baseline;

  explicit ArchState(const SpaceConfig& cfg);

  std::vector<ArchVector> probs() const;  // softmax(alpha_i) per block
};

struct SampleRecord {
  RouteVector u;
  double reward = 0.0;
  std::vector<ArchVector> logprob_grad;  // onehot(u_i) - p_i per block
};

// One uniform draw per block, inverse-CDF over softmax(alpha_i).
RouteVector sample_route(const ArchState& arch, Rng& rng);

// d log p(u) / d alpha_i = onehot(u_i) - softmax(alpha_i).
std::vector<ArchVector> logprob_grad(const ArchState& arch, const RouteVector& u);

// Adam ascent on alpha with gradient (reward - b) * logprob_grad; the
// baseline absorbs the reward only after the advantage is computed. A
// zero advantage leaves alpha and the Adam moments untouched.
void reinforce_update(ArchState& arch, const RouteVector& u, double reward, double lr);

// Argmax probability per block, ties to the lowest canonical index.
RouteVector derive_route(const ArchState& arch);

// Per-block entropy of softmax(alpha_i), in nats.
std::vector<double> entropy_report(const ArchState& arch);

}  // namespace mtnas
