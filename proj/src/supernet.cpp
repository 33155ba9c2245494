#include "mtnas/supernet.hpp"

namespace mtnas {

namespace {

void require(bool ok, const char* msg) {
  if (!ok) throw shape_error(msg);
}

}  // namespace

Matrix gate_forward(const Matrix& query, const std::vector<const Matrix*>& values,
                    const GateParams& gate, GateMode mode, GateTrace* trace) {
  const int s = gate.route.subset_size();
  require(s >= 1 && static_cast<int>(values.size()) == s, "gate_forward: value count");
  const Eigen::Index n = values[0]->rows();
  const Eigen::Index d_v = values[0]->cols();
  for (const Matrix* v : values) {
    require(v->rows() == n && v->cols() == d_v, "gate_forward: value shapes");
  }

  Matrix scores;
  bool store_query = false;
  if (mode == GateMode::mean_pool || s == 1) {
    scores = Matrix::Constant(n, s, real(1) / static_cast<real>(s));
  } else {
    require(query.rows() == n && query.cols() == gate.w.cols(),
            "gate_forward: query width");
    scores = softmax_rows(query * gate.w.value.transpose());
    store_query = true;
  }

  Matrix y = Matrix::Zero(n, d_v);
  for (int i = 0; i < s; ++i) {
    y.array() += values[static_cast<std::size_t>(i)]->array().colwise() *
                 scores.col(i).array();
  }
  if (trace) {
    trace->scores = scores;
    trace->query = store_query ? query : Matrix();
    trace->output = y;
  }
  return y;
}

Matrix gate_backward(const Matrix& dy, const GateTrace& trace,
                     const std::vector<const Matrix*>& values,
                     std::vector<Matrix*>& d_values, GateParams& gate, GateMode mode) {
  const int s = static_cast<int>(trace.scores.cols());
  require(static_cast<int>(values.size()) == s &&
              static_cast<int>(d_values.size()) == s,
          "gate_backward: value count");

  for (int i = 0; i < s; ++i) {
    d_values[static_cast<std::size_t>(i)]->array() +=
        dy.array().colwise() * trace.scores.col(i).array();
  }
  if (mode == GateMode::mean_pool || s == 1 || trace.query.size() == 0) {
    return Matrix();  // no gradient reaches the gate weights or the query
  }

  Matrix d_scores(dy.rows(), s);
  for (int i = 0; i < s; ++i) {
    d_scores.col(i) =
        (dy.array() * values[static_cast<std::size_t>(i)]->array()).rowwise().sum();
  }
  Matrix d_logits = softmax_rows_backward(trace.scores, d_scores);
  gate.w.grad.noalias() += d_logits.transpose() * trace.query;
  return d_logits * gate.w.value;
}

Supernet::Supernet(const SpaceConfig& config, int input_dim,
                   std::vector<TaskKind> kinds, Rng& init_rng)
    : cfg(config), d_in(input_dim), task_kinds(std::move(kinds)) {
  cfg.validate();
  require(d_in >= 1, "Supernet: d_in must be >= 1");
  require(static_cast<int>(task_kinds.size()) == cfg.T, "Supernet: task kind count");

  root = DenseLayer(d_in, cfg.d_root);
  glorot_init(root.W, init_rng);

  layers.resize(static_cast<std::size_t>(cfg.L));
  for (int l = 0; l < cfg.L; ++l) {
    const int din = (l == 0) ? cfg.d_root : cfg.d_v;
    for (int j = 0; j < cfg.H; ++j) {
      layers[static_cast<std::size_t>(l)].emplace_back(din, cfg.d_v);
      glorot_init(layers[static_cast<std::size_t>(l)].back().W, init_rng);
    }
  }

  heads.reserve(static_cast<std::size_t>(cfg.T));
  for (int t = 0; t < cfg.T; ++t) {
    heads.emplace_back(cfg.d_v, 1);
    glorot_init(heads.back().W, init_rng);
  }

  // Gate weights start at zero so every route begins as uniform pooling.
  const int n_routes = local_route_count(cfg);
  gates.resize(static_cast<std::size_t>(block_count(cfg)));
  for (auto& block_gates : gates) {
    block_gates.reserve(static_cast<std::size_t>(n_routes));
    for (int k = 0; k < n_routes; ++k) {
      LocalRoute r = decode_route(cfg, k);
      GateParams g;
      g.route = r;
      g.w = Param(r.subset_size(), query_width(r.query_source));
      block_gates.push_back(std::move(g));
    }
  }
}

void Supernet::reinitialize(Rng& init_rng) {
  for (Param* p : all_params()) {
    p->value.setZero();
    p->grad.setZero();
    p->adam_m.setZero();
    p->adam_v.setZero();
    p->step_count = 0;
  }
  glorot_init(root.W, init_rng);
  for (auto& layer : layers) {
    for (auto& sn : layer) glorot_init(sn.W, init_rng);
  }
  for (auto& h : heads) glorot_init(h.W, init_rng);
}

int Supernet::query_width(int query_source) const {
  return query_is_root(cfg, query_source) ? cfg.d_root : cfg.d_v;
}

std::vector<Param*> Supernet::all_params() {
  std::vector<Param*> params{&root.W, &root.b};
  for (auto& layer : layers) {
    for (auto& sn : layer) {
      params.push_back(&sn.W);
      params.push_back(&sn.b);
    }
  }
  for (auto& block_gates : gates) {
    for (auto& g : block_gates) params.push_back(&g.w);
  }
  for (auto& h : heads) {
    params.push_back(&h.W);
    params.push_back(&h.b);
  }
  return params;
}

std::vector<std::vector<bool>> Supernet::live_subnets(const RouteVector& u) const {
  validate_route(cfg, u);
  std::vector<std::vector<bool>> live(
      static_cast<std::size_t>(cfg.L),
      std::vector<bool>(static_cast<std::size_t>(cfg.H), false));

  auto mark_sources = [&](int block_idx, int source_layer) {
    const LocalRoute r = decode_route(cfg, u.u[static_cast<std::size_t>(block_idx)]);
    for (int j : r.subset_indices()) {
      live[static_cast<std::size_t>(source_layer)][static_cast<std::size_t>(j)] = true;
    }
    if (!query_is_root(cfg, r.query_source)) {
      live[static_cast<std::size_t>(source_layer)]
          [static_cast<std::size_t>(r.query_source)] = true;
    }
  };

  for (int t = 0; t < cfg.T; ++t) {
    mark_sources((cfg.L - 1) * cfg.H + t, cfg.L - 1);
  }
  for (int l = cfg.L - 1; l >= 1; --l) {
    for (int j = 0; j < cfg.H; ++j) {
      if (live[static_cast<std::size_t>(l)][static_cast<std::size_t>(j)]) {
        mark_sources((l - 1) * cfg.H + j, l - 1);
      }
    }
  }
  return live;
}

std::vector<Param*> Supernet::route_params(const RouteVector& u) {
  const auto live = live_subnets(u);
  std::vector<Param*> params{&root.W, &root.b};
  for (int l = 0; l < cfg.L; ++l) {
    for (int j = 0; j < cfg.H; ++j) {
      if (!live[static_cast<std::size_t>(l)][static_cast<std::size_t>(j)]) continue;
      auto& sn = layers[static_cast<std::size_t>(l)][static_cast<std::size_t>(j)];
      params.push_back(&sn.W);
      params.push_back(&sn.b);
    }
  }
  // Selected gate of every block whose target sub-network (or head) is live.
  for (int l = 2; l <= cfg.L; ++l) {
    for (int j = 0; j < cfg.H; ++j) {
      if (!live[static_cast<std::size_t>(l - 1)][static_cast<std::size_t>(j)]) continue;
      const int bi = (l - 2) * cfg.H + j;
      params.push_back(
          &gates[static_cast<std::size_t>(bi)][static_cast<std::size_t>(u.u[static_cast<std::size_t>(bi)])].w);
    }
  }
  for (int t = 0; t < cfg.T; ++t) {
    const int bi = (cfg.L - 1) * cfg.H + t;
    params.push_back(
        &gates[static_cast<std::size_t>(bi)][static_cast<std::size_t>(u.u[static_cast<std::size_t>(bi)])].w);
  }
  for (auto& h : heads) {
    params.push_back(&h.W);
    params.push_back(&h.b);
  }
  return params;
}

long Supernet::param_count_all() const {
  long count = root.param_count();
  for (const auto& layer : layers) {
    for (const auto& sn : layer) count += sn.param_count();
  }
  for (const auto& block_gates : gates) {
    for (const auto& g : block_gates) count += g.w.size();
  }
  for (const auto& h : heads) count += h.param_count();
  return count;
}

long Supernet::param_count_route(const RouteVector& u) const {
  auto* self = const_cast<Supernet*>(this);
  long count = 0;
  for (const Param* p : self->route_params(u)) count += p->size();
  return count;
}

std::vector<std::pair<std::string, Param*>> Supernet::named_params() {
  std::vector<std::pair<std::string, Param*>> named;
  named.emplace_back("root/W", &root.W);
  named.emplace_back("root/b", &root.b);
  for (int l = 0; l < cfg.L; ++l) {
    for (int j = 0; j < cfg.H; ++j) {
      auto& sn = layers[static_cast<std::size_t>(l)][static_cast<std::size_t>(j)];
      const std::string base =
          "layer/" + std::to_string(l + 1) + "/subnet/" + std::to_string(j) + "/";
      named.emplace_back(base + "W", &sn.W);
      named.emplace_back(base + "b", &sn.b);
    }
  }
  for (int bi = 0; bi < block_count(cfg); ++bi) {
    auto& block_gates = gates[static_cast<std::size_t>(bi)];
    for (std::size_t k = 0; k < block_gates.size(); ++k) {
      named.emplace_back("block/" + std::to_string(bi) + "/route/" +
                             std::to_string(k) + "/gate_w",
                         &block_gates[k].w);
    }
  }
  for (int t = 0; t < cfg.T; ++t) {
    const std::string base = "head/" + std::to_string(t) + "/";
    named.emplace_back(base + "W", &heads[static_cast<std::size_t>(t)].W);
    named.emplace_back(base + "b", &heads[static_cast<std::size_t>(t)].b);
  }
  return named;
}

std::vector<Matrix> Supernet::forward(const RouteVector& u, const Matrix& x,
                                      ForwardTrace& trace) {
  validate_route(cfg, u);
  require(x.cols() == d_in, "Supernet::forward: input width");
  const std::size_t L = static_cast<std::size_t>(cfg.L);
  const std::size_t H = static_cast<std::size_t>(cfg.H);

  trace.route = u;
  trace.x = x;
  trace.subnet_in.assign(L, std::vector<Matrix>(H));
  trace.subnet_pre.assign(L, std::vector<Matrix>(H));
  trace.subnet_out.assign(L, std::vector<Matrix>(H));
  trace.block_gates.assign(static_cast<std::size_t>(block_count(cfg)), GateTrace{});
  trace.head_in.assign(static_cast<std::size_t>(cfg.T), Matrix());
  trace.head_pre.assign(static_cast<std::size_t>(cfg.T), Matrix());
  trace.preds.assign(static_cast<std::size_t>(cfg.T), Matrix());

  trace.root_pre = dense_forward(x, root.W, root.b);
  trace.root_out = relu(trace.root_pre);

  for (std::size_t j = 0; j < H; ++j) {
    trace.subnet_in[0][j] = trace.root_out;
    trace.subnet_pre[0][j] =
        dense_forward(trace.root_out, layers[0][j].W, layers[0][j].b);
    trace.subnet_out[0][j] = relu(trace.subnet_pre[0][j]);
  }

  auto run_gate = [&](int block_idx, int source_layer) -> Matrix {
    const int k = u.u[static_cast<std::size_t>(block_idx)];
    GateParams& gate =
        gates[static_cast<std::size_t>(block_idx)][static_cast<std::size_t>(k)];
    std::vector<const Matrix*> values;
    for (int idx : gate.route.subset_indices()) {
      values.push_back(
          &trace.subnet_out[static_cast<std::size_t>(source_layer)][static_cast<std::size_t>(idx)]);
    }
    const Matrix& query =
        query_is_root(cfg, gate.route.query_source)
            ? trace.root_out
            : trace.subnet_out[static_cast<std::size_t>(source_layer)]
                              [static_cast<std::size_t>(gate.route.query_source)];
    return gate_forward(query, values, gate, cfg.gate_mode,
                        &trace.block_gates[static_cast<std::size_t>(block_idx)]);
  };

  for (int l = 1; l < cfg.L; ++l) {
    for (std::size_t j = 0; j < H; ++j) {
      const int bi = (l - 1) * cfg.H + static_cast<int>(j);
      const std::size_t ul = static_cast<std::size_t>(l);
      trace.subnet_in[ul][j] = run_gate(bi, l - 1);
      trace.subnet_pre[ul][j] =
          dense_forward(trace.subnet_in[ul][j], layers[ul][j].W, layers[ul][j].b);
      trace.subnet_out[ul][j] = relu(trace.subnet_pre[ul][j]);
    }
  }

  for (int t = 0; t < cfg.T; ++t) {
    const std::size_t st = static_cast<std::size_t>(t);
    const int bi = (cfg.L - 1) * cfg.H + t;
    trace.head_in[st] = run_gate(bi, cfg.L - 1);
    trace.head_pre[st] = dense_forward(trace.head_in[st], heads[st].W, heads[st].b);
    trace.preds[st] = (task_kinds[st] == TaskKind::binary)
                          ? sigmoid(trace.head_pre[st])
                          : trace.head_pre[st];
  }
  return trace.preds;
}

Matrix Supernet::backward(const ForwardTrace& trace, const std::vector<Matrix>& dpreds) {
  const RouteVector& u = trace.route;
  require(static_cast<int>(dpreds.size()) == cfg.T, "Supernet::backward: dpred count");
  const auto live = live_subnets(u);
  const Eigen::Index n = trace.x.rows();
  const std::size_t L = static_cast<std::size_t>(cfg.L);
  const std::size_t H = static_cast<std::size_t>(cfg.H);

  std::vector<std::vector<Matrix>> d_out(L, std::vector<Matrix>(H));
  for (std::size_t l = 0; l < L; ++l) {
    for (std::size_t j = 0; j < H; ++j) {
      if (live[l][j]) d_out[l][j] = Matrix::Zero(n, cfg.d_v);
    }
  }
  Matrix d_root_out = Matrix::Zero(n, cfg.d_root);

  auto back_gate = [&](int block_idx, int source_layer, const Matrix& dy) {
    const int k = u.u[static_cast<std::size_t>(block_idx)];
    GateParams& gate =
        gates[static_cast<std::size_t>(block_idx)][static_cast<std::size_t>(k)];
    const std::size_t sl = static_cast<std::size_t>(source_layer);
    std::vector<const Matrix*> values;
    std::vector<Matrix*> d_values;
    for (int idx : gate.route.subset_indices()) {
      values.push_back(&trace.subnet_out[sl][static_cast<std::size_t>(idx)]);
      d_values.push_back(&d_out[sl][static_cast<std::size_t>(idx)]);
    }
    Matrix d_query =
        gate_backward(dy, trace.block_gates[static_cast<std::size_t>(block_idx)],
                      values, d_values, gate, cfg.gate_mode);
    if (d_query.size() == 0) return;
    if (query_is_root(cfg, gate.route.query_source)) {
      d_root_out += d_query;
    } else {
      d_out[sl][static_cast<std::size_t>(gate.route.query_source)] += d_query;
    }
  };

  for (int t = 0; t < cfg.T; ++t) {
    const std::size_t st = static_cast<std::size_t>(t);
    Matrix d_pre = (task_kinds[st] == TaskKind::binary)
                       ? sigmoid_backward(trace.preds[st], dpreds[st])
                       : dpreds[st];
    Matrix d_head_in = dense_backward(trace.head_in[st], heads[st].W, heads[st].b, d_pre);
    back_gate((cfg.L - 1) * cfg.H + t, cfg.L - 1, d_head_in);
  }

  for (int l = cfg.L - 1; l >= 1; --l) {
    const std::size_t ul = static_cast<std::size_t>(l);
    for (std::size_t j = 0; j < H; ++j) {
      if (!live[ul][j]) continue;
      Matrix d_pre = relu_backward(trace.subnet_pre[ul][j], d_out[ul][j]);
      Matrix d_in =
          dense_backward(trace.subnet_in[ul][j], layers[ul][j].W, layers[ul][j].b, d_pre);
      back_gate((l - 1) * cfg.H + static_cast<int>(j), l - 1, d_in);
    }
  }

  for (std::size_t j = 0; j < H; ++j) {
    if (!live[0][j]) continue;
    Matrix d_pre = relu_backward(trace.subnet_pre[0][j], d_out[0][j]);
    d_root_out += dense_backward(trace.root_out, layers[0][j].W, layers[0][j].b, d_pre);
  }

  Matrix d_root_pre = relu_backward(trace.root_pre, d_root_out);
  return dense_backward(trace.x, root.W, root.b, d_root_pre);
}

}  // namespace mtnas
