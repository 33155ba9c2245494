#pragma once

#include "mtnas/numerics.hpp"
#include "mtnas/supernet.hpp"

#include <string>
#include <vector>

namespace mtnas {

enum class BaselineArch { single, share_bottom, mmoe, ml_mmoe };

// Query feeding the MMoE-family gates: the model input feature, or the
// shared bottom layer's output (the latter makes MMoE an exact sub-graph
// of the supernet under an L=1, root_only configuration).
enum class GateQuery { input, hidden };

struct BaselineSpec {
  BaselineArch kind = BaselineArch::share_bottom;
  int hidden = 64;
  int experts = 4;        // mmoe / ml_mmoe
  int expert_layers = 1;  // ml_mmoe
  int tasks = 2;
  GateQuery gate_query = GateQuery::input;

  void validate() const;
};

struct BaselineTrace {
  Matrix x;
  Matrix fc1_pre, fc1_out;
  Matrix fc2_pre, fc2_out;                      // single / share_bottom
  std::vector<std::vector<Matrix>> expert_in;   // [layers][E]
  std::vector<std::vector<Matrix>> expert_pre;
  std::vector<std::vector<Matrix>> expert_out;
  std::vector<std::vector<GateTrace>> expert_gates;  // [layers>=2][E]
  std::vector<GateTrace> task_gates;                 // [T]
  std::vector<Matrix> head_in;
  std::vector<Matrix> preds;
};

// Reference models on the shared numerics core. single/share_bottom: two
// shared FC layers plus heads. mmoe: one shared FC, E parallel experts,
// per-task softmax gates. ml_mmoe: stacked expert layers where each
// expert past layer 1 mixes all previous-layer experts with its own gate;
// task gates sit on the last layer.
struct BaselineModel {
  BaselineSpec spec;
  int d_in = 0;
  std::vector<TaskKind> task_kinds;
  DenseLayer fc1;                                  // shared bottom / shared FC
  DenseLayer fc2;                                  // single / share_bottom only
  std::vector<std::vector<DenseLayer>> experts;    // [layers][E]
  std::vector<std::vector<GateParams>> expert_gates;  // [layers-1][E]
  std::vector<GateParams> task_gates;              // [T]
  std::vector<DenseLayer> heads;

  std::vector<Matrix> forward(const Matrix& x, BaselineTrace& trace);
  Matrix backward(const BaselineTrace& trace, const std::vector<Matrix>& dpreds);
  std::vector<Param*> all_params();
  std::vector<std::pair<std::string, Param*>> named_params();
  long param_count() const;
};

BaselineModel build_baseline(const BaselineSpec& spec, int d_in,
                             std::vector<TaskKind> task_kinds, Rng& init_rng);

// Mean softmax gate scores over a batch, one row per task (sums to 1).
Matrix gate_scores_report(BaselineModel& model, const Matrix& x);

// Scales the hidden width so the parameter count lands within 10% of
// target; throws when no width can.
BaselineSpec match_param_budget(const BaselineSpec& spec, int d_in, long target);

long baseline_param_count(const BaselineSpec& spec, int d_in);

}  // namespace mtnas
