#include "mtnas/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace mtnas {

std::optional<std::pair<Eigen::VectorXd, Eigen::VectorXd>> gram_schmidt_pair(
    const Eigen::VectorXd& v1, const Eigen::VectorXd& v2) {
  const double n1 = v1.norm();
  if (n1 < 1e-12) return std::nullopt;
  Eigen::VectorXd u1 = v1 / n1;
  Eigen::VectorXd r = v2 - u1.dot(v2) * u1;
  const double n2 = r.norm();
  if (n2 < 1e-9 * std::max(1.0, v2.norm())) return std::nullopt;
  return std::make_pair(std::move(u1), Eigen::VectorXd(r / n2));
}

std::pair<Eigen::VectorXd, Eigen::VectorXd> gen_orthonormal_pair(int d, Rng& rng) {
  if (d < 2) throw shape_error("gen_orthonormal_pair: d must be >= 2");
  for (;;) {
    Eigen::VectorXd v1(d), v2(d);
    for (int i = 0; i < d; ++i) v1[i] = rng.normal();
    for (int i = 0; i < d; ++i) v2[i] = rng.normal();
    if (auto pair = gram_schmidt_pair(v1, v2)) return *pair;
  }
}

std::pair<Eigen::VectorXd, Eigen::VectorXd> make_task_weights(
    const Eigen::VectorXd& u1, const Eigen::VectorXd& u2, double rho) {
  if (std::abs(rho) > 1.0) throw shape_error("make_task_weights: |rho| must be <= 1");
  Eigen::VectorXd w1 = u1;
  Eigen::VectorXd w2 = rho * u1 + std::sqrt(1.0 - rho * rho) * u2;
  return {std::move(w1), std::move(w2)};
}

namespace {

double label_value(const Eigen::VectorXd& w, const Eigen::VectorXd& x,
                   const Eigen::VectorXd& alphas, const Eigen::VectorXd& betas,
                   double noise) {
  const double z = w.dot(x);
  double y = z;
  for (int i = 0; i < alphas.size(); ++i) {
    y += std::sin(alphas[i] * z + betas[i]);
  }
  return y + noise;
}

}  // namespace

SyntheticResult gen_synthetic(const SyntheticSpec& spec) {
  if (spec.d < 2 || spec.n < 1 || spec.m < 0) {
    throw shape_error("gen_synthetic: invalid spec");
  }
  Rng rng(spec.seed);

  SyntheticMeta meta;
  meta.spec = spec;
  std::tie(meta.u1, meta.u2) = gen_orthonormal_pair(spec.d, rng);
  std::tie(meta.w1, meta.w2) = make_task_weights(meta.u1, meta.u2, spec.rho);

  if (meta.spec.sine_alphas.size() == 0) {
    meta.spec.sine_alphas.resize(spec.m);
    for (int i = 0; i < spec.m; ++i) meta.spec.sine_alphas[i] = rng.normal();
  }
  if (meta.spec.sine_betas.size() == 0) {
    meta.spec.sine_betas.resize(spec.m);
    for (int i = 0; i < spec.m; ++i) meta.spec.sine_betas[i] = rng.normal();
  }
  if (meta.spec.sine_alphas.size() != spec.m || meta.spec.sine_betas.size() != spec.m) {
    throw shape_error("gen_synthetic: sine parameter count != m");
  }

  Dataset data;
  data.dense.resize(spec.n, spec.d);
  data.labels.resize(spec.n, 2);
  data.task_kinds = {TaskKind::real_value, TaskKind::real_value};

  Eigen::VectorXd x(spec.d);
  for (long r = 0; r < spec.n; ++r) {
    for (int c = 0; c < spec.d; ++c) x[c] = rng.normal();
    const double e1 = spec.noise_std * rng.normal();
    const double e2 = spec.noise_std * rng.normal();
    data.dense.row(r) = x.cast<real>().transpose();
    data.labels(r, 0) = static_cast<real>(
        label_value(meta.w1, x, meta.spec.sine_alphas, meta.spec.sine_betas, e1));
    data.labels(r, 1) = static_cast<real>(
        label_value(meta.w2, x, meta.spec.sine_alphas, meta.spec.sine_betas, e2));
  }
  return {std::move(data), std::move(meta)};
}

double pcc(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  if (a.size() != b.size() || a.size() < 2) throw shape_error("pcc: need equal lengths >= 2");
  const Eigen::VectorXd da = a.array() - a.mean();
  const Eigen::VectorXd db = b.array() - b.mean();
  const double var_a = da.squaredNorm();
  const double var_b = db.squaredNorm();
  if (var_a == 0.0 || var_b == 0.0) throw numeric_error("pcc: zero variance");
  return da.dot(db) / std::sqrt(var_a * var_b);
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::int64_t hash_feature(std::string_view field, std::string_view value,
                          std::int64_t modulus) {
  if (modulus < 1) throw shape_error("hash_feature: modulus must be >= 1");
  std::string key;
  key.reserve(field.size() + 1 + value.size());
  key.append(field).append("=").append(value);
  return static_cast<std::int64_t>(fnv1a64(key) % static_cast<std::uint64_t>(modulus));
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.push_back("");
  return cells;
}

}  // namespace

Dataset load_csv(const std::string& path, const HashedFeatureSpec& schema,
                 const std::vector<std::string>& label_columns,
                 const std::vector<TaskKind>& task_kinds, CsvLoadReport* report) {
  if (label_columns.size() != task_kinds.size()) {
    throw shape_error("load_csv: label column / task kind count mismatch");
  }
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_csv: cannot open " + path);

  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("load_csv: empty file " + path);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const std::vector<std::string> header = split_csv_line(line);

  auto column_of = [&](const std::string& name) {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (header[i] == name) return static_cast<long>(i);
    }
    throw std::runtime_error("load_csv: missing column '" + name + "' in " + path);
  };
  std::vector<long> field_cols, label_cols;
  for (const auto& f : schema.fields) field_cols.push_back(column_of(f));
  for (const auto& l : label_columns) label_cols.push_back(column_of(l));

  std::vector<std::vector<std::int64_t>> id_rows;
  std::vector<std::vector<real>> label_rows;
  long skipped = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::vector<std::string> cells = split_csv_line(line);
    if (cells.size() != header.size()) {
      ++skipped;
      continue;
    }
    std::vector<real> labels(label_cols.size());
    bool ok = true;
    for (std::size_t t = 0; t < label_cols.size(); ++t) {
      const std::string& cell = cells[static_cast<std::size_t>(label_cols[t])];
      try {
        std::size_t pos = 0;
        const double v = std::stod(cell, &pos);
        if (pos != cell.size()) ok = false;
        if (task_kinds[t] == TaskKind::binary && v != 0.0 && v != 1.0) ok = false;
        labels[t] = static_cast<real>(v);
      } catch (const std::exception&) {
        ok = false;
      }
      if (!ok) break;
    }
    if (!ok) {
      ++skipped;
      continue;
    }
    std::vector<std::int64_t> ids(field_cols.size());
    for (std::size_t f = 0; f < field_cols.size(); ++f) {
      ids[f] = hash_feature(schema.fields[f], cells[static_cast<std::size_t>(field_cols[f])],
                            schema.modulus);
    }
    id_rows.push_back(std::move(ids));
    label_rows.push_back(std::move(labels));
  }

  Dataset data;
  data.task_kinds = task_kinds;
  const long n = static_cast<long>(id_rows.size());
  data.ids.resize(n, static_cast<long>(schema.fields.size()));
  data.labels.resize(n, static_cast<long>(task_kinds.size()));
  for (long r = 0; r < n; ++r) {
    for (long f = 0; f < data.ids.cols(); ++f) {
      data.ids(r, f) = id_rows[static_cast<std::size_t>(r)][static_cast<std::size_t>(f)];
    }
    for (long t = 0; t < data.labels.cols(); ++t) {
      data.labels(r, t) = label_rows[static_cast<std::size_t>(r)][static_cast<std::size_t>(t)];
    }
  }
  if (report) *report = {n, skipped};
  return data;
}

namespace {

void shuffle_indices(std::vector<long>& idx, Rng& rng) {
  for (long i = static_cast<long>(idx.size()) - 1; i > 0; --i) {
    const long j = rng.uniform_int(i + 1);
    std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
  }
}

}  // namespace

Splits split_indices(long n, double f_train, double f_valid, double f_test, Rng& rng) {
  if (std::abs(f_train + f_valid + f_test - 1.0) > 1e-9) {
    throw shape_error("split_indices: fractions must sum to 1");
  }
  std::vector<long> idx(static_cast<std::size_t>(n));
  for (long i = 0; i < n; ++i) idx[static_cast<std::size_t>(i)] = i;
  shuffle_indices(idx, rng);

  const long n_train = static_cast<long>(std::floor(f_train * static_cast<double>(n)));
  const long n_valid = static_cast<long>(std::floor(f_valid * static_cast<double>(n)));
  Splits s;
  s.train.assign(idx.begin(), idx.begin() + n_train);
  s.valid.assign(idx.begin() + n_train, idx.begin() + n_train + n_valid);
  s.test.assign(idx.begin() + n_train + n_valid, idx.end());
  return s;
}

Batch gather_batch(const Dataset& data, const std::vector<long>& indices, long begin,
                   long count) {
  Batch batch;
  batch.labels.resize(count, data.labels.cols());
  if (data.hashed()) {
    batch.ids.resize(count, data.ids.cols());
  } else {
    batch.x.resize(count, data.dense.cols());
  }
  for (long r = 0; r < count; ++r) {
    const long src = indices[static_cast<std::size_t>(begin + r)];
    batch.labels.row(r) = data.labels.row(src);
    if (data.hashed()) {
      batch.ids.row(r) = data.ids.row(src);
    } else {
      batch.x.row(r) = data.dense.row(src);
    }
  }
  return batch;
}

BatchIterator::BatchIterator(const Dataset& data, std::vector<long> indices,
                             long batch_size, bool reshuffle, std::uint64_t seed)
    : data_(&data),
      indices_(std::move(indices)),
      batch_size_(batch_size),
      reshuffle_(reshuffle),
      rng_(seed) {
  if (batch_size_ < 1) throw shape_error("BatchIterator: batch size must be >= 1");
  if (indices_.empty()) throw shape_error("BatchIterator: empty split");
  if (reshuffle_) shuffle_indices(indices_, rng_);
}

Batch BatchIterator::next() {
  if (cursor_ >= static_cast<long>(indices_.size())) {
    cursor_ = 0;
    epoch_ += 1;
    if (reshuffle_) shuffle_indices(indices_, rng_);
  }
  const long count =
      std::min<long>(batch_size_, static_cast<long>(indices_.size()) - cursor_);
  Batch batch = gather_batch(*data_, indices_, cursor_, count);
  cursor_ += count;
  return batch;
}

EmbeddingTable::EmbeddingTable(const HashedFeatureSpec& schema, Rng& init_rng)
    : spec(schema) {
  if (spec.modulus < 1 || spec.embedding_dim < 1 || spec.fields.empty()) {
    throw shape_error("EmbeddingTable: invalid spec");
  }
  const std::size_t n_tables = spec.shared_table ? 1 : spec.fields.size();
  tables.reserve(n_tables);
  for (std::size_t i = 0; i < n_tables; ++i) {
    tables.emplace_back(spec.modulus, spec.embedding_dim);
    glorot_init(tables.back(), init_rng);
  }
}

int EmbeddingTable::output_dim() const {
  return static_cast<int>(spec.fields.size()) * spec.embedding_dim;
}

Matrix EmbeddingTable::lookup(const IdMatrix& ids) const {
  if (ids.cols() != static_cast<long>(spec.fields.size())) {
    throw shape_error("EmbeddingTable::lookup: field count");
  }
  Matrix out(ids.rows(), output_dim());
  for (long r = 0; r < ids.rows(); ++r) {
    for (long f = 0; f < ids.cols(); ++f) {
      const Param& table = tables[spec.shared_table ? 0 : static_cast<std::size_t>(f)];
      out.block(r, f * spec.embedding_dim, 1, spec.embedding_dim) =
          table.value.row(ids(r, f));
    }
  }
  return out;
}

void EmbeddingTable::backward(const IdMatrix& ids, const Matrix& d_out) {
  for (long r = 0; r < ids.rows(); ++r) {
    for (long f = 0; f < ids.cols(); ++f) {
      Param& table = tables[spec.shared_table ? 0 : static_cast<std::size_t>(f)];
      table.grad.row(ids(r, f)) +=
          d_out.block(r, f * spec.embedding_dim, 1, spec.embedding_dim);
    }
  }
}

std::vector<Param*> EmbeddingTable::all_params() {
  std::vector<Param*> params;
  for (Param& t : tables) params.push_back(&t);
  return params;
}

long EmbeddingTable::param_count() const {
  long count = 0;
  for (const Param& t : tables) count += t.size();
  return count;
}

}  // namespace mtnas
