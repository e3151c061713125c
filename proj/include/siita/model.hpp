#pragma once

// Inductive Tucker model: X ~ G x_1 (A_1 U_1) x_2 ... x_N (A_N U_N), where each
// A_i is a side-information matrix of shape I_i x M_i and U_i is M_i x r_i.

#include <algorithm>
#include <cstdint>
#include <tuple>
#include <iostream>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "siita/error.hpp"
#include "siita/tensor.hpp"

namespace siita {

// Identity side information. `rows` may be smaller than `size` once the
// matrix is truncated to a snapshot: the first `rows` rows of I_size.
struct IdentitySide {
  Index size = 0;
  Index rows = 0;
};

// CSR matrix for sparse side information.
struct SparseSide {
  Index rows = 0;
  Index cols = 0;
  std::vector<std::size_t> row_ptr;  // rows + 1
  std::vector<Index> col_idx;
  std::vector<double> values;

  static SparseSide from_triplets(Index rows, Index cols, std::vector<std::tuple<Index, Index, double>> triplets) {
    std::sort(triplets.begin(), triplets.end(), [](const auto& a, const auto& b) {
      return std::pair(std::get<0>(a), std::get<1>(a)) < std::pair(std::get<0>(b), std::get<1>(b));
    });
    SparseSide s;
    s.rows = rows;
    s.cols = cols;
    s.row_ptr.assign(rows + 1, 0);
    for (std::size_t t = 0; t < triplets.size(); ++t) {
      const auto& [r, c, v] = triplets[t];
      if (r >= rows || c >= cols) throw ShapeError("sparse side entry out of bounds");
      // Repeated coordinates are summed, as in MatrixMarket assembly.
      if (t > 0 && std::get<0>(triplets[t - 1]) == r && std::get<1>(triplets[t - 1]) == c) {
        s.values.back() += v;
        continue;
      }
      s.col_idx.push_back(c);
      s.values.push_back(v);
      ++s.row_ptr[r + 1];
    }
    for (Index r = 0; r < rows; ++r) s.row_ptr[r + 1] += s.row_ptr[r];
    return s;
  }
};

class SideInfo {
 public:
  using Variant = std::variant<IdentitySide, DenseMatrix, SparseSide>;

  SideInfo() = default;
  explicit SideInfo(Variant v) : v_(std::move(v)) {}

  static SideInfo identity(Index n) {
    if (n == 0) throw ShapeError("identity side info needs size >= 1");
    return SideInfo(IdentitySide{n, n});
  }
  static SideInfo dense(DenseMatrix m) { return SideInfo(std::move(m)); }
  static SideInfo sparse(SparseSide s) { return SideInfo(std::move(s)); }

  bool is_identity() const noexcept { return std::holds_alternative<IdentitySide>(v_); }
  const Variant& variant() const noexcept { return v_; }

  // I_i: current mode dimension.
  Index rows() const noexcept {
    return std::visit([](const auto& s) -> Index {
      using T = std::decay_t<decltype(s)>;
      if constexpr (std::is_same_v<T, DenseMatrix>) return s.rows();
      else return s.rows;
    }, v_);
  }

  // M_i: feature count, constant over time.
  Index cols() const noexcept {
    return std::visit([](const auto& s) -> Index {
      using T = std::decay_t<decltype(s)>;
      if constexpr (std::is_same_v<T, DenseMatrix>) return s.cols();
      else if constexpr (std::is_same_v<T, IdentitySide>) return s.size;
      else return s.cols;
    }, v_);
  }

  // A * u, shape rows() x u.cols().
  DenseMatrix multiply(const DenseMatrix& u) const {
    if (u.rows() != cols())
      throw ShapeError("side info has " + std::to_string(cols()) + " columns but factor has " +
                       std::to_string(u.rows()) + " rows");
    return std::visit([&](const auto& s) -> DenseMatrix {
      using T = std::decay_t<decltype(s)>;
      if constexpr (std::is_same_v<T, IdentitySide>) {
        if (s.rows == s.size) return u;
        std::vector<double> head(u.values().begin(), u.values().begin() + s.rows * u.cols());
        return DenseMatrix(s.rows, u.cols(), std::move(head));
      } else if constexpr (std::is_same_v<T, DenseMatrix>) {
        return matmul(s, u);
      } else {
        DenseMatrix out(s.rows, u.cols());
        for (Index r = 0; r < s.rows; ++r) {
          auto orow = out.row(r);
          for (std::size_t p = s.row_ptr[r]; p < s.row_ptr[r + 1]; ++p) {
            auto urow = u.row(s.col_idx[p]);
            for (Index j = 0; j < u.cols(); ++j) orow[j] += s.values[p] * urow[j];
          }
        }
        return out;
      }
    }, v_);
  }

  // A^T * d, shape cols() x d.cols().
  DenseMatrix transpose_multiply(const DenseMatrix& d) const {
    if (d.rows() != rows())
      throw ShapeError("side info has " + std::to_string(rows()) + " rows but operand has " +
                       std::to_string(d.rows()));
    return std::visit([&](const auto& s) -> DenseMatrix {
      using T = std::decay_t<decltype(s)>;
      if constexpr (std::is_same_v<T, IdentitySide>) {
        if (s.rows == s.size) return d;
        DenseMatrix out(s.size, d.cols());
        std::copy(d.values().begin(), d.values().end(), out.values().begin());
        return out;
      } else if constexpr (std::is_same_v<T, DenseMatrix>) {
        return transpose_matmul(s, d);
      } else {
        DenseMatrix out(s.cols, d.cols());
        for (Index r = 0; r < s.rows; ++r) {
          auto drow = d.row(r);
          for (std::size_t p = s.row_ptr[r]; p < s.row_ptr[r + 1]; ++p) {
            auto orow = out.row(s.col_idx[p]);
            for (Index j = 0; j < d.cols(); ++j) orow[j] += s.values[p] * drow[j];
          }
        }
        return out;
      }
    }, v_);
  }

  // First n rows; the column count is unchanged.
  SideInfo truncated(Index n) const {
    if (n == 0 || n > rows())
      throw ShapeError("cannot truncate side info with " + std::to_string(rows()) + " rows to " + std::to_string(n));
    return std::visit([&](const auto& s) -> SideInfo {
      using T = std::decay_t<decltype(s)>;
      if constexpr (std::is_same_v<T, IdentitySide>) {
        return SideInfo(IdentitySide{s.size, n});
      } else if constexpr (std::is_same_v<T, DenseMatrix>) {
        std::vector<double> head(s.values().begin(), s.values().begin() + n * s.cols());
        return SideInfo(DenseMatrix(n, s.cols(), std::move(head)));
      } else {
        SparseSide out;
        out.rows = n;
        out.cols = s.cols;
        out.row_ptr.assign(s.row_ptr.begin(), s.row_ptr.begin() + n + 1);
        out.col_idx.assign(s.col_idx.begin(), s.col_idx.begin() + out.row_ptr.back());
        out.values.assign(s.values.begin(), s.values.begin() + out.row_ptr.back());
        return SideInfo(std::move(out));
      }
    }, v_);
  }

  // Materialized dense copy (tests, oracles).
  DenseMatrix to_dense() const {
    return std::visit([&](const auto& s) -> DenseMatrix {
      using T = std::decay_t<decltype(s)>;
      if constexpr (std::is_same_v<T, IdentitySide>) {
        DenseMatrix m(s.rows, s.size);
        for (Index i = 0; i < s.rows; ++i) m(i, i) = 1.0;
        return m;
      } else if constexpr (std::is_same_v<T, DenseMatrix>) {
        return s;
      } else {
        DenseMatrix m(s.rows, s.cols);
        for (Index r = 0; r < s.rows; ++r)
          for (std::size_t p = s.row_ptr[r]; p < s.row_ptr[r + 1]; ++p) m(r, s.col_idx[p]) += s.values[p];
        return m;
      }
    }, v_);
  }

 private:
  Variant v_;
};

// One SideInfo per mode.
using SideInfoSet = std::vector<SideInfo>;

inline Shape side_rows_shape(const SideInfoSet& side) {
  std::vector<Index> dims;
  for (const auto& s : side) dims.push_back(s.rows());
  return Shape(std::move(dims));
}

inline SideInfoSet truncate_side(const SideInfoSet& side, const Shape& dims) {
  if (side.size() != dims.order()) throw ShapeError("side info count does not match tensor order");
  SideInfoSet out;
  out.reserve(side.size());
  for (std::size_t k = 0; k < side.size(); ++k) out.push_back(side[k].truncated(dims[k]));
  return out;
}

struct Hyperparams {
  double lambda_g = 1e-3;
  std::vector<double> lambda;  // per mode; a single value broadcasts
  double gamma = 1e-3;
  int inner_steps = 1;  // K
  bool nonnegative = false;
  std::uint64_t seed = 42;
  int threads = 1;
  bool deterministic = true;
  // Core gradient uses a residual recomputed after the factor update; false
  // reuses the residual from the top of the iteration.
  bool fresh_core_residual = true;

  double lambda_for(std::size_t mode) const {
    if (lambda.empty()) return 1e-3;
    if (lambda.size() == 1) return lambda.front();
    return lambda.at(mode);
  }

  void validate(std::size_t order) const {
    if (!(gamma > 0.0)) throw ConfigError("gamma must be > 0");
    if (inner_steps < 1) throw ConfigError("inner_steps (K) must be >= 1");
    if (!(lambda_g >= 0.0)) throw ConfigError("lambda_g must be >= 0");
    if (lambda.size() > 1 && lambda.size() != order)
      throw ConfigError("lambda must have one value or one per mode (" + std::to_string(order) + ")");
    for (double l : lambda)
      if (!(l >= 0.0)) throw ConfigError("lambda values must be >= 0");
    if (threads < 1) throw ConfigError("threads must be >= 1");
  }
};

struct TuckerModel {
  DenseTensor core;                 // shape == ranks
  std::vector<DenseMatrix> factors;  // factor i: M_i x r_i

  std::size_t order() const noexcept { return factors.size(); }
  const Shape& ranks() const noexcept { return core.shape(); }

  void check_against(const SideInfoSet& side) const {
    if (side.size() != order()) throw ShapeError("side info count does not match model order");
    for (std::size_t k = 0; k < order(); ++k) {
      if (factors[k].rows() != side[k].cols())
        throw ShapeError("factor " + std::to_string(k) + " has " + std::to_string(factors[k].rows()) +
                         " rows, side info has " + std::to_string(side[k].cols()) + " columns");
      if (factors[k].cols() != ranks()[k])
        throw ShapeError("factor " + std::to_string(k) + " column count differs from rank");
    }
  }

  friend bool operator==(const TuckerModel&, const TuckerModel&) = default;
};

namespace detail {

// Uniform [0,1) from the top 53 bits.
inline double unit_uniform(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

}  // namespace detail

inline TuckerModel init_model(const Shape& ranks, const SideInfoSet& side, const Hyperparams& hp) {
  if (side.size() != ranks.order()) throw ShapeError("rank count does not match side info count");
  std::mt19937_64 rng(hp.seed);
  TuckerModel m;
  for (std::size_t k = 0; k < side.size(); ++k) {
    const Index feats = side[k].cols();
    if (ranks[k] > feats)
      std::cerr << "warning: rank " << ranks[k] << " exceeds feature count " << feats << " on mode " << k << "\n";
    DenseMatrix u(feats, ranks[k]);
    for (double& v : u.values()) v = detail::unit_uniform(rng);
    m.factors.push_back(std::move(u));
  }
  m.core = DenseTensor(ranks);
  for (double& v : m.core.values()) v = detail::unit_uniform(rng);
  return m;
}

// P_i = A_i U_i for every mode.
inline std::vector<DenseMatrix> projected_factors(const TuckerModel& model, const SideInfoSet& side) {
  model.check_against(side);
  std::vector<DenseMatrix> p;
  p.reserve(model.order());
  for (std::size_t k = 0; k < model.order(); ++k) p.push_back(side[k].multiply(model.factors[k]));
  return p;
}

namespace detail {

// Core multi-index table: entry j*N + k is the mode-k index of core element j.
inline std::vector<Index> core_multi_index(const Shape& ranks) {
  const std::size_t n = ranks.order();
  const Index total = ranks.numel();
  std::vector<Index> table(total * n);
  std::vector<Index> idx(n, 0);
  for (Index j = 0; j < total; ++j) {
    std::copy(idx.begin(), idx.end(), table.begin() + j * n);
    for (std::size_t k = n; k-- > 0;) {
      if (++idx[k] < ranks[k]) break;
      idx[k] = 0;
    }
  }
  return table;
}

// Sum_j G[j] * prod_k P_k[i_k, j_k]; the core is traversed in row-major order
// so the innermost mode is contracted first.
inline double predict_with(const DenseTensor& core, std::span<const DenseMatrix> proj,
                           std::span<const std::uint32_t> index, std::vector<double>& scratch) {
  const Shape& ranks = core.shape();
  const std::size_t n = ranks.order();
  // Contract from the last mode inwards: scratch holds the partially reduced core.
  const auto& g = core.values();
  Index len = g.size();
  scratch.assign(g.begin(), g.end());
  for (std::size_t k = n; k-- > 0;) {
    const Index r = ranks[k];
    const auto row = proj[k].row(index[k]);
    const Index outer = len / r;
    for (Index o = 0; o < outer; ++o) {
      double s = 0.0;
      for (Index j = 0; j < r; ++j) s += scratch[o * r + j] * row[j];
      scratch[o] = s;
    }
    len = outer;
  }
  return scratch[0];
}

}  // namespace detail

inline double predict_entry(const TuckerModel& model, std::span<const DenseMatrix> proj,
                            std::span<const std::uint32_t> index) {
  if (index.size() != model.order() || proj.size() != model.order())
    throw ShapeError("predict_entry: index order mismatch");
  for (std::size_t k = 0; k < index.size(); ++k)
    if (index[k] >= proj[k].rows())
      throw ShapeError("predict_entry: index " + std::to_string(index[k]) + " out of bounds on mode " +
                       std::to_string(k));
  std::vector<double> scratch;
  return detail::predict_with(model.core, proj, index, scratch);
}

inline double predict_entry(const TuckerModel& model, const SideInfoSet& side, std::span<const std::uint32_t> index) {
  const auto proj = projected_factors(model, side);
  return predict_entry(model, std::span<const DenseMatrix>(proj), index);
}

inline double regularizer(const TuckerModel& model, const Hyperparams& hp) {
  double reg = hp.lambda_g * frobenius_sq(model.core.values());
  for (std::size_t k = 0; k < model.order(); ++k) reg += hp.lambda_for(k) * frobenius_sq(model.factors[k].values());
  return reg;
}

inline void check_data_shape(const SparseTensor& data, const SideInfoSet& side) {
  if (data.order() != side.size()) throw ShapeError("data order does not match side info count");
  for (std::size_t k = 0; k < side.size(); ++k)
    if (data.shape()[k] != side[k].rows())
      throw ShapeError("data mode " + std::to_string(k) + " has size " + std::to_string(data.shape()[k]) +
                       ", side info has " + std::to_string(side[k].rows()) + " rows");
}

// Squared error over observed entries plus Frobenius regularizers.
inline double objective(const TuckerModel& model, const SideInfoSet& side, const SparseTensor& data,
                        const Hyperparams& hp) {
  check_data_shape(data, side);
  const auto proj = projected_factors(model, side);
  std::vector<double> scratch;
  double loss = 0.0;
  for (std::size_t e = 0; e < data.nnz(); ++e) {
    const double r = data.value(e) - detail::predict_with(model.core, proj, data.index(e), scratch);
    loss += r * r;
  }
  return loss + regularizer(model, hp);
}

}  // namespace siita
