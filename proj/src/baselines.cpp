#include "mtnas/baselines.hpp"

namespace mtnas {

namespace {

void require(bool ok, const char* msg) {
  if (!ok) throw shape_error(msg);
}

bool has_experts(BaselineArch kind) {
  return kind == BaselineArch::mmoe || kind == BaselineArch::ml_mmoe;
}

GateParams make_full_gate(int experts, int d_q) {
  GateParams g;
  g.route.value_mask = (1u << experts) - 1;
  g.route.query_source = 0;
  g.w = Param(experts, d_q);
  return g;
}

}  // namespace

void BaselineSpec::validate() const {
  require(hidden >= 1 && tasks >= 1, "BaselineSpec: hidden and tasks must be >= 1");
  if (kind == BaselineArch::single) {
    require(tasks == 1, "BaselineSpec: single-task model has exactly one head");
  }
  if (has_experts(kind)) {
    require(experts >= 1 && experts <= 20, "BaselineSpec: experts out of range");
  }
  if (kind == BaselineArch::ml_mmoe) {
    require(expert_layers >= 1, "BaselineSpec: expert_layers must be >= 1");
  }
}

BaselineModel build_baseline(const BaselineSpec& spec, int d_in,
                             std::vector<TaskKind> task_kinds, Rng& init_rng) {
  spec.validate();
  require(d_in >= 1, "build_baseline: d_in must be >= 1");
  require(static_cast<int>(task_kinds.size()) == spec.tasks,
          "build_baseline: task kind count");

  BaselineModel model;
  model.spec = spec;
  model.d_in = d_in;
  model.task_kinds = std::move(task_kinds);

  const int h = spec.hidden;
  model.fc1 = DenseLayer(d_in, h);
  glorot_init(model.fc1.W, init_rng);

  if (!has_experts(spec.kind)) {
    model.fc2 = DenseLayer(h, h);
    glorot_init(model.fc2.W, init_rng);
  } else {
    const int layers = (spec.kind == BaselineArch::mmoe) ? 1 : spec.expert_layers;
    const int d_q = (spec.gate_query == GateQuery::input) ? d_in : h;
    model.experts.resize(static_cast<std::size_t>(layers));
    for (int l = 0; l < layers; ++l) {
      for (int e = 0; e < spec.experts; ++e) {
        model.experts[static_cast<std::size_t>(l)].emplace_back(h, h);
        glorot_init(model.experts[static_cast<std::size_t>(l)].back().W, init_rng);
      }
    }
    // Gates start at zero: uniform mixing until trained.
    model.expert_gates.resize(static_cast<std::size_t>(layers - 1));
    for (int l = 0; l + 1 < layers; ++l) {
      for (int e = 0; e < spec.experts; ++e) {
        model.expert_gates[static_cast<std::size_t>(l)].push_back(
            make_full_gate(spec.experts, d_q));
      }
    }
    for (int t = 0; t < spec.tasks; ++t) {
      model.task_gates.push_back(make_full_gate(spec.experts, d_q));
    }
  }

  for (int t = 0; t < spec.tasks; ++t) {
    model.heads.emplace_back(h, 1);
    glorot_init(model.heads.back().W, init_rng);
  }
  return model;
}

std::vector<Matrix> BaselineModel::forward(const Matrix& x, BaselineTrace& trace) {
  require(x.cols() == d_in, "BaselineModel::forward: input width");
  trace = BaselineTrace{};
  trace.x = x;
  trace.fc1_pre = dense_forward(x, fc1.W, fc1.b);
  trace.fc1_out = relu(trace.fc1_pre);

  Matrix final_features;
  if (!has_experts(spec.kind)) {
    trace.fc2_pre = dense_forward(trace.fc1_out, fc2.W, fc2.b);
    trace.fc2_out = relu(trace.fc2_pre);
  } else {
    const std::size_t layers = experts.size();
    const std::size_t n_experts = static_cast<std::size_t>(spec.experts);
    trace.expert_in.assign(layers, std::vector<Matrix>(n_experts));
    trace.expert_pre.assign(layers, std::vector<Matrix>(n_experts));
    trace.expert_out.assign(layers, std::vector<Matrix>(n_experts));
    trace.expert_gates.assign(layers >= 1 ? layers - 1 : 0,
                              std::vector<GateTrace>(n_experts));
    trace.task_gates.assign(static_cast<std::size_t>(spec.tasks), GateTrace{});

    const Matrix& query = (spec.gate_query == GateQuery::input) ? x : trace.fc1_out;
    for (std::size_t l = 0; l < layers; ++l) {
      for (std::size_t e = 0; e < n_experts; ++e) {
        if (l == 0) {
          trace.expert_in[l][e] = trace.fc1_out;
        } else {
          std::vector<const Matrix*> values;
          for (std::size_t p = 0; p < n_experts; ++p) {
            values.push_back(&trace.expert_out[l - 1][p]);
          }
          trace.expert_in[l][e] =
              gate_forward(query, values, expert_gates[l - 1][e],
                           GateMode::softmax_gate, &trace.expert_gates[l - 1][e]);
        }
        trace.expert_pre[l][e] =
            dense_forward(trace.expert_in[l][e], experts[l][e].W, experts[l][e].b);
        trace.expert_out[l][e] = relu(trace.expert_pre[l][e]);
      }
    }
  }

  trace.head_in.resize(static_cast<std::size_t>(spec.tasks));
  trace.preds.resize(static_cast<std::size_t>(spec.tasks));
  for (int t = 0; t < spec.tasks; ++t) {
    const std::size_t st = static_cast<std::size_t>(t);
    if (!has_experts(spec.kind)) {
      trace.head_in[st] = trace.fc2_out;
    } else {
      const Matrix& query = (spec.gate_query == GateQuery::input) ? x : trace.fc1_out;
      std::vector<const Matrix*> values;
      for (std::size_t e = 0; e < static_cast<std::size_t>(spec.experts); ++e) {
        values.push_back(&trace.expert_out.back()[e]);
      }
      trace.head_in[st] = gate_forward(query, values, task_gates[st],
                                       GateMode::softmax_gate, &trace.task_gates[st]);
    }
    Matrix pre = dense_forward(trace.head_in[st], heads[st].W, heads[st].b);
    trace.preds[st] = (task_kinds[st] == TaskKind::binary) ? sigmoid(pre) : pre;
  }
  return trace.preds;
}

Matrix BaselineModel::backward(const BaselineTrace& trace,
                               const std::vector<Matrix>& dpreds) {
  require(static_cast<int>(dpreds.size()) == spec.tasks,
          "BaselineModel::backward: dpred count");
  const Eigen::Index n = trace.x.rows();
  Matrix d_x = Matrix::Zero(n, d_in);
  Matrix d_fc1_out = Matrix::Zero(n, spec.hidden);
  Matrix d_fc2_out = Matrix::Zero(n, spec.hidden);

  const std::size_t layers = experts.size();
  const std::size_t n_experts = static_cast<std::size_t>(spec.experts);
  std::vector<std::vector<Matrix>> d_expert(layers, std::vector<Matrix>(n_experts));
  for (std::size_t l = 0; l < layers; ++l) {
    for (std::size_t e = 0; e < n_experts; ++e) {
      d_expert[l][e] = Matrix::Zero(n, spec.hidden);
    }
  }

  auto add_query_grad = [&](const Matrix& d_query) {
    if (d_query.size() == 0) return;
    if (spec.gate_query == GateQuery::input) {
      d_x += d_query;
    } else {
      d_fc1_out += d_query;
    }
  };

  for (int t = 0; t < spec.tasks; ++t) {
    const std::size_t st = static_cast<std::size_t>(t);
    Matrix d_pre = (task_kinds[st] == TaskKind::binary)
                       ? sigmoid_backward(trace.preds[st], dpreds[st])
                       : dpreds[st];
    Matrix d_head_in =
        dense_backward(trace.head_in[st], heads[st].W, heads[st].b, d_pre);
    if (!has_experts(spec.kind)) {
      d_fc2_out += d_head_in;
    } else {
      std::vector<const Matrix*> values;
      std::vector<Matrix*> d_values;
      for (std::size_t e = 0; e < n_experts; ++e) {
        values.push_back(&trace.expert_out.back()[e]);
        d_values.push_back(&d_expert.back()[e]);
      }
      add_query_grad(gate_backward(d_head_in, trace.task_gates[st], values, d_values,
                                   task_gates[st], GateMode::softmax_gate));
    }
  }

  if (!has_experts(spec.kind)) {
    Matrix d_pre = relu_backward(trace.fc2_pre, d_fc2_out);
    d_fc1_out += dense_backward(trace.fc1_out, fc2.W, fc2.b, d_pre);
  } else {
    for (std::size_t l = layers; l-- > 0;) {
      for (std::size_t e = 0; e < n_experts; ++e) {
        Matrix d_pre = relu_backward(trace.expert_pre[l][e], d_expert[l][e]);
        Matrix d_in =
            dense_backward(trace.expert_in[l][e], experts[l][e].W, experts[l][e].b, d_pre);
        if (l == 0) {
          d_fc1_out += d_in;
        } else {
          std::vector<const Matrix*> values;
          std::vector<Matrix*> d_values;
          for (std::size_t p = 0; p < n_experts; ++p) {
            values.push_back(&trace.expert_out[l - 1][p]);
            d_values.push_back(&d_expert[l - 1][p]);
          }
          add_query_grad(gate_backward(d_in, trace.expert_gates[l - 1][e], values,
                                       d_values, expert_gates[l - 1][e],
                                       GateMode::softmax_gate));
        }
      }
    }
  }

  Matrix d_fc1_pre = relu_backward(trace.fc1_pre, d_fc1_out);
  d_x += dense_backward(trace.x, fc1.W, fc1.b, d_fc1_pre);
  return d_x;
}

std::vector<Param*> BaselineModel::all_params() {
  std::vector<Param*> params;
  for (auto& [name, p] : named_params()) params.push_back(p);
  return params;
}

std::vector<std::pair<std::string, Param*>> BaselineModel::named_params() {
  std::vector<std::pair<std::string, Param*>> named;
  named.emplace_back("fc1/W", &fc1.W);
  named.emplace_back("fc1/b", &fc1.b);
  if (!has_experts(spec.kind)) {
    named.emplace_back("fc2/W", &fc2.W);
    named.emplace_back("fc2/b", &fc2.b);
  }
  for (std::size_t l = 0; l < experts.size(); ++l) {
    for (std::size_t e = 0; e < experts[l].size(); ++e) {
      const std::string base =
          "expert/" + std::to_string(l) + "/" + std::to_string(e) + "/";
      named.emplace_back(base + "W", &experts[l][e].W);
      named.emplace_back(base + "b", &experts[l][e].b);
    }
  }
  for (std::size_t l = 0; l < expert_gates.size(); ++l) {
    for (std::size_t e = 0; e < expert_gates[l].size(); ++e) {
      named.emplace_back(
          "expert_gate/" + std::to_string(l) + "/" + std::to_string(e) + "/w",
          &expert_gates[l][e].w);
    }
  }
  for (std::size_t t = 0; t < task_gates.size(); ++t) {
    named.emplace_back("task_gate/" + std::to_string(t) + "/w", &task_gates[t].w);
  }
  for (std::size_t t = 0; t < heads.size(); ++t) {
    const std::string base = "head/" + std::to_string(t) + "/";
    named.emplace_back(base + "W", &heads[t].W);
    named.emplace_back(base + "b", &heads[t].b);
  }
  return named;
}

long BaselineModel::param_count() const {
  return baseline_param_count(spec, d_in);
}

long baseline_param_count(const BaselineSpec& spec, int d_in) {
  spec.validate();
  const long h = spec.hidden;
  const long e = spec.experts;
  const long t = spec.tasks;
  long count = (d_in + 1) * h;  // fc1
  if (!has_experts(spec.kind)) {
    count += (h + 1) * h;  // fc2
  } else {
    const long layers = (spec.kind == BaselineArch::mmoe) ? 1 : spec.expert_layers;
    const long d_q = (spec.gate_query == GateQuery::input) ? d_in : h;
    count += layers * e * (h + 1) * h;     // experts
    count += (layers - 1) * e * e * d_q;   // expert gates
    count += t * e * d_q;                  // task gates
  }
  count += t * (h + 1);  // heads
  return count;
}

Matrix gate_scores_report(BaselineModel& model, const Matrix& x) {
  require(has_experts(model.spec.kind), "gate_scores_report: mmoe-family only");
  BaselineTrace trace;
  model.forward(x, trace);
  Matrix report(model.spec.tasks, model.spec.experts);
  for (int t = 0; t < model.spec.tasks; ++t) {
    report.row(t) =
        trace.task_gates[static_cast<std::size_t>(t)].scores.colwise().mean();
  }
  return report;
}

BaselineSpec match_param_budget(const BaselineSpec& spec, int d_in, long target) {
  spec.validate();
  BaselineSpec probe = spec;
  probe.hidden = 1;
  if (baseline_param_count(probe, d_in) > target) {
    throw shape_error("match_param_budget: target below minimal feasible count");
  }

  // Counts grow monotonically in hidden width; find the bracketing widths.
  long lo = 1, hi = 1;
  for (;;) {
    probe.hidden = static_cast<int>(hi);
    if (baseline_param_count(probe, d_in) >= target) break;
    lo = hi;
    hi *= 2;
    if (hi > (1l << 22)) throw shape_error("match_param_budget: target too large");
  }
  while (lo < hi) {
    const long mid = lo + (hi - lo) / 2;
    probe.hidden = static_cast<int>(mid);
    if (baseline_param_count(probe, d_in) >= target) {
      hi = mid;
    } else {
      lo = mid + 1;
    }
  }

  BaselineSpec above = spec;
  above.hidden = static_cast<int>(lo);
  BaselineSpec below = spec;
  below.hidden = static_cast<int>(std::max<long>(1, lo - 1));
  const long da = std::abs(baseline_param_count(above, d_in) - target);
  const long db = std::abs(baseline_param_count(below, d_in) - target);
  BaselineSpec best = (db <= da) ? below : above;  // ties take the smaller width

  const long count = baseline_param_count(best, d_in);
  if (std::abs(count - target) * 10 > target) {
    throw shape_error("match_param_budget: no width lands within 10% of target");
  }
  return best;
}

}  // namespace mtnas
