#include "mtnas/metrics.hpp"

#include <algorithm>
#include <cstdint>
#include <numeric>

namespace mtnas {

std::optional<double> auc(const std::vector<double>& scores,
                          const std::vector<int>& labels) {
  if (scores.size() != labels.size()) throw shape_error("auc: length mismatch");
  const long n = static_cast<long>(scores.size());
  long pos = 0;
  for (int y : labels) {
    if (y != 0 && y != 1) throw shape_error("auc: labels must be 0/1");
    pos += y;
  }
  const long neg = n - pos;
  if (pos == 0 || neg == 0) return std::nullopt;

  std::vector<long> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0l);
  std::sort(order.begin(), order.end(), [&](long a, long b) {
    return scores[static_cast<std::size_t>(a)] < scores[static_cast<std::size_t>(b)];
  });

  // Sweep tie groups ascending; each positive earns 2 per negative strictly
  // below and 1 per negative tied with it.
  std::int64_t num2 = 0;
  std::int64_t neg_below = 0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    std::int64_t group_pos = 0, group_neg = 0;
    const double s = scores[static_cast<std::size_t>(order[i])];
    while (j < order.size() && scores[static_cast<std::size_t>(order[j])] == s) {
      if (labels[static_cast<std::size_t>(order[j])] == 1) {
        ++group_pos;
      } else {
        ++group_neg;
      }
      ++j;
    }
    num2 += group_pos * (2 * neg_below + group_neg);
    neg_below += group_neg;
    i = j;
  }
  return static_cast<double>(num2) / static_cast<double>(2 * pos * neg);
}

double mtl_loss(const std::vector<double>& per_task_losses) {
  double total = 0.0;
  for (double l : per_task_losses) total += l;
  return total;
}

EvalResult evaluate(const PredictFn& predict, const Dataset& data,
                    const std::vector<long>& split_indices, long batch_size) {
  if (split_indices.empty()) throw shape_error("evaluate: empty split");
  const long t_count = data.labels.cols();
  std::vector<std::vector<double>> scores(static_cast<std::size_t>(t_count));
  std::vector<std::vector<int>> labels(static_cast<std::size_t>(t_count));
  std::vector<double> loss_sum(static_cast<std::size_t>(t_count), 0.0);
  const long n = static_cast<long>(split_indices.size());

  for (long begin = 0; begin < n; begin += batch_size) {
    const long count = std::min(batch_size, n - begin);
    const Batch batch = gather_batch(data, split_indices, begin, count);
    const std::vector<Matrix> preds = predict(batch);
    if (static_cast<long>(preds.size()) != t_count) {
      throw shape_error("evaluate: prediction count != task count");
    }
    for (long t = 0; t < t_count; ++t) {
      const std::size_t st = static_cast<std::size_t>(t);
      const Matrix target = batch.labels.col(t);
      const LossKind kind =
          data.task_kinds[st] == TaskKind::binary ? LossKind::bce : LossKind::mse;
      loss_sum[st] += loss_forward(preds[st], target, kind) * static_cast<double>(count);
      if (data.task_kinds[st] == TaskKind::binary) {
        for (long r = 0; r < count; ++r) {
          scores[st].push_back(static_cast<double>(preds[st](r, 0)));
          labels[st].push_back(static_cast<int>(target(r, 0)));
        }
      }
    }
  }

  EvalResult result;
  std::vector<double> per_task_losses;
  for (long t = 0; t < t_count; ++t) {
    const std::size_t st = static_cast<std::size_t>(t);
    TaskMetrics m;
    m.n = n;
    m.loss = loss_sum[st] / static_cast<double>(n);
    if (data.task_kinds[st] == TaskKind::binary) {
      m.auc = auc(scores[st], labels[st]);
    }
    per_task_losses.push_back(m.loss);
    result.per_task.push_back(m);
  }
  result.mtl = mtl_loss(per_task_losses);
  return result;
}

}  // namespace mtnas
