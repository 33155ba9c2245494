#pragma once

#include "mtnas/data.hpp"
#include "mtnas/numerics.hpp"

#include <functional>
#include <optional>
#include <vector>

namespace mtnas {

struct TaskMetrics {
  std::optional<double> auc;  // defined only when both classes are present
  double loss = 0.0;
  long n = 0;
};

// Rank-based AUC with 0.5 credit per tied positive-negative pair. The
// concordance count is accumulated in integers (2 per concordant pair, 1
// per tied pair), so the result matches O(n^2) pair counting bit-exactly.
std::optional<double> auc(const std::vector<double>& scores,
                          const std::vector<int>& labels);

double mtl_loss(const std::vector<double>& per_task_losses);

struct EvalResult {
  std::vector<TaskMetrics> per_task;
  double mtl;
};

using PredictFn = std::function<std::vector<Matrix>(const Batch&)>;

// Streams the split in batches; AUC is computed on the concatenated
// full-split scores, losses are example-weighted means.
EvalResult evaluate(const PredictFn& predict, const Dataset& data,
                    const std::vector<long>& split_indices, long batch_size = 1024);

}  // namespace mtnas
