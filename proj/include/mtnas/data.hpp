#pragma once

#include "mtnas/numerics.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace mtnas {

using IdMatrix = Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct Dataset {
  Matrix dense;   // n x d, empty for hashed datasets
  IdMatrix ids;   // n x fields, empty for dense datasets
  Matrix labels;  // n x T
  std::vector<TaskKind> task_kinds;

  long n() const { return dense.size() > 0 ? dense.rows() : ids.rows(); }
  bool hashed() const { return ids.size() > 0; }
};

// Two-task synthetic regression benchmark. sine_alphas/betas are the sine
// parameters (distinct from the architecture logits); empty vectors mean
// "draw i.i.d. N(0,1) once per dataset".
struct SyntheticSpec {
  int d = 100;
  double rho = 0.0;
  int m = 10;
  long n = 10000;
  double noise_std = 0.1;
  std::uint64_t seed = 0;
  Eigen::VectorXd sine_alphas;
  Eigen::VectorXd sine_betas;
};

struct SyntheticMeta {
  SyntheticSpec spec;          // with drawn sine parameters filled in
  Eigen::VectorXd u1, u2;      // orthonormal pair
  Eigen::VectorXd w1, w2;      // task weights, cos(w1,w2) = rho
};

struct SyntheticResult {
  Dataset data;
  SyntheticMeta meta;
};

// Gram-Schmidt on two raw draws; nullopt when the draws are (near) parallel.
std::optional<std::pair<Eigen::VectorXd, Eigen::VectorXd>> gram_schmidt_pair(
    const Eigen::VectorXd& v1, const Eigen::VectorXd& v2);

// Two Gaussian draws orthonormalized; redraws on a degenerate pair.
std::pair<Eigen::VectorXd, Eigen::VectorXd> gen_orthonormal_pair(int d, Rng& rng);

// w1 = u1, w2 = rho*u1 + sqrt(1-rho^2)*u2, so cos(w1,w2) = rho.
std::pair<Eigen::VectorXd, Eigen::VectorXd> make_task_weights(
    const Eigen::VectorXd& u1, const Eigen::VectorXd& u2, double rho);

// y_t = w_t.x + sum_i sin(a_i w_t.x + b_i) + noise. The weight vectors and
// sine parameters are drawn once per dataset; x and the noise per example.
SyntheticResult gen_synthetic(const SyntheticSpec& spec);

double pcc(const Eigen::VectorXd& a, const Eigen::VectorXd& b);

std::uint64_t fnv1a64(std::string_view bytes);
// id = fnv1a64(field ++ "=" ++ value) mod modulus.
std::int64_t hash_feature(std::string_view field, std::string_view value,
                          std::int64_t modulus);

struct HashedFeatureSpec {
  std::vector<std::string> fields;
  std::int64_t modulus = 1;
  int embedding_dim = 10;
  bool shared_table = false;  // one table for all fields instead of per-field
};

struct CsvLoadReport {
  long rows_kept = 0;
  long rows_skipped = 0;
};

Dataset load_csv(const std::string& path, const HashedFeatureSpec& schema,
                 const std::vector<std::string>& label_columns,
                 const std::vector<TaskKind>& task_kinds,
                 CsvLoadReport* report = nullptr);

struct Splits {
  std::vector<long> train, valid, test;
};

// Seeded shuffle then contiguous cuts; fractions must sum to 1.
Splits split_indices(long n, double f_train, double f_valid, double f_test, Rng& rng);

struct Batch {
  Matrix x;        // dense inputs (or embedded lookups)
  IdMatrix ids;    // hashed ids when the dataset is hashed
  Matrix labels;   // n x T
  long size() const { return labels.rows(); }
};

Batch gather_batch(const Dataset& data, const std::vector<long>& indices, long begin,
                   long count);

// Cycles over one split; the train iterator reshuffles each epoch from its
// own seeded stream, valid/test iterate in a fixed order.
class BatchIterator {
 public:
  BatchIterator(const Dataset& data, std::vector<long> indices, long batch_size,
                bool reshuffle, std::uint64_t seed);

  Batch next();
  long epoch() const { return epoch_; }

 private:
  const Dataset* data_;
  std::vector<long> indices_;
  long batch_size_;
  bool reshuffle_;
  Rng rng_;
  long cursor_ = 0;
  long epoch_ = 0;
};

// Per-field (or shared) embedding tables; lookups concatenate field
// embeddings in field order.
struct EmbeddingTable {
  HashedFeatureSpec spec;
  std::vector<Param> tables;

  EmbeddingTable() = default;
  EmbeddingTable(const HashedFeatureSpec& spec, Rng& init_rng);

  int output_dim() const;
  Matrix lookup(const IdMatrix& ids) const;
  void backward(const IdMatrix& ids, const Matrix& d_out);
  std::vector<Param*> all_params();
  long param_count() const;
};

}  // namespace mtnas
