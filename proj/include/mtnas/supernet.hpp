#pragma once

#include "mtnas/numerics.hpp"
#include "mtnas/search_space.hpp"

#include <optional>
#include <string>
#include <vector>

namespace mtnas {

struct DenseLayer {
  Param W;
  Param b;

  DenseLayer() = default;
  DenseLayer(int din, int dout) : W(din, dout), b(1, dout) {}
  long param_count() const { return W.size() + b.size(); }
};

// Gate weights for one enumerated route of one block: w is s x d_q where
// s = |value subset| and d_q is the width of that route's query.
struct GateParams {
  Param w;
  LocalRoute route;
};

struct GateTrace {
  Matrix scores;   // n x s gate scores m
  Matrix query;    // n x d_q (empty under mean_pool)
  Matrix output;   // n x d_v
};

// Gate of Eq-style weighted value mixing: e = w q per example, m =
// softmax(e), y = sum_i m_i v_i. Under mean_pool m_i = 1/s regardless of
// the query. Values must share one width; the query is ignored for s = 1.
Matrix gate_forward(const Matrix& query, const std::vector<const Matrix*>& values,
                    const GateParams& gate, GateMode mode, GateTrace* trace = nullptr);

// Backward through gate_forward. Accumulates into gate.w.grad, adds value
// grads into d_values, returns dL/d_query (zero matrix under mean_pool or
// s = 1).
Matrix gate_backward(const Matrix& dy, const GateTrace& trace,
                     const std::vector<const Matrix*>& values,
                     std::vector<Matrix*>& d_values, GateParams& gate, GateMode mode);

struct ForwardTrace {
  RouteVector route;
  Matrix x;
  Matrix root_pre, root_out;
  // [L][H]
  std::vector<std::vector<Matrix>> subnet_in;
  std::vector<std::vector<Matrix>> subnet_pre;
  std::vector<std::vector<Matrix>> subnet_out;
  std::vector<GateTrace> block_gates;  // canonical block order
  std::vector<Matrix> head_in;         // gate output feeding each task head
  std::vector<Matrix> head_pre;
  std::vector<Matrix> preds;
};

// The over-parameterized network: root layer, L x H sub-networks, one gate
// per enumerated route per block, T task heads. Sub-network weights are
// shared across routes; every route's gate exists from construction.
struct Supernet {
  SpaceConfig cfg;
  int d_in = 0;
  std::vector<TaskKind> task_kinds;
  DenseLayer root;
  std::vector<std::vector<DenseLayer>> layers;       // [L][H]
  std::vector<std::vector<GateParams>> gates;        // [B][|R|]
  std::vector<DenseLayer> heads;                     // [T]

  Supernet(const SpaceConfig& cfg, int d_in, std::vector<TaskKind> task_kinds,
           Rng& init_rng);

  // Fresh weights (same draw order as construction) and cleared Adam state.
  void reinitialize(Rng& init_rng);

  int query_width(int query_source) const;

  std::vector<Param*> all_params();
  // Parameters reachable from the heads along route u: root, live
  // sub-networks, selected gates of live blocks, heads.
  std::vector<Param*> route_params(const RouteVector& u);
  // Live flags per [layer][position] under route u.
  std::vector<std::vector<bool>> live_subnets(const RouteVector& u) const;

  long param_count_all() const;
  long param_count_route(const RouteVector& u) const;

  // Canonical path -> Param, for checkpoints.
  std::vector<std::pair<std::string, Param*>> named_params();

  std::vector<Matrix> forward(const RouteVector& u, const Matrix& x,
                              ForwardTrace& trace);
  // dpreds are dL/d(prediction) per task; grads accumulate onto route-u
  // parameters only. Returns dL/dx for an upstream embedding.
  Matrix backward(const ForwardTrace& trace, const std::vector<Matrix>& dpreds);
};

}  // namespace mtnas
