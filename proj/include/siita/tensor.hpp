#pragma once

// Dense and sparse tensor primitives.
//
// Dense storage is row-major throughout: for a tensor of shape (I_1, ..., I_N)
// the last index varies fastest. Unfoldings use the cyclic column ordering that
// pairs with a backward-cyclic Kronecker product of the remaining modes, i.e.
//
//   unfold(G x_1 P_1 ... x_N P_N, n) == P_n * unfold(G, n) * kron_except(P, n)^T
//
// where kron_except(P, n) = P_{n-1} (x) ... (x) P_1 (x) P_N (x) ... (x) P_{n+1}.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <limits>
#include <numeric>
#include <ranges>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "siita/error.hpp"

namespace siita {

using Index = std::size_t;

class Shape {
 public:
  Shape() = default;

  explicit Shape(std::vector<Index> dims) : dims_(std::move(dims)) {
    if (dims_.size() < 2) throw ShapeError("shape needs at least two modes");
    for (Index d : dims_)
      if (d == 0) throw ShapeError("shape dimensions must be >= 1");
  }

  Shape(std::initializer_list<Index> dims) : Shape(std::vector<Index>(dims)) {}

  std::size_t order() const noexcept { return dims_.size(); }
  Index operator[](std::size_t mode) const { return dims_.at(mode); }
  const std::vector<Index>& dims() const noexcept { return dims_; }

  Index numel() const noexcept {
    return std::accumulate(dims_.begin(), dims_.end(), Index{1}, std::multiplies<>{});
  }

  template <typename I>
  bool contains(std::span<const I> index) const noexcept {
    if (index.size() != dims_.size()) return false;
    for (std::size_t k = 0; k < dims_.size(); ++k)
      if (static_cast<Index>(index[k]) >= dims_[k]) return false;
    return true;
  }

  // Componentwise <=.
  bool fits_within(const Shape& other) const noexcept {
    if (order() != other.order()) return false;
    for (std::size_t k = 0; k < order(); ++k)
      if (dims_[k] > other.dims_[k]) return false;
    return true;
  }

  std::string str() const {
    std::string s;
    for (std::size_t k = 0; k < dims_.size(); ++k) {
      if (k) s += 'x';
      s += std::to_string(dims_[k]);
    }
    return s;
  }

  friend bool operator==(const Shape&, const Shape&) = default;

 private:
  std::vector<Index> dims_;
};

class DenseMatrix {
 public:
  DenseMatrix() = default;

  DenseMatrix(Index rows, Index cols, double fill = 0.0)
      : rows_(rows), cols_(cols), values_(rows * cols, fill) {
    if (rows == 0 || cols == 0) throw ShapeError("matrix dimensions must be >= 1");
  }

  DenseMatrix(Index rows, Index cols, std::vector<double> values)
      : rows_(rows), cols_(cols), values_(std::move(values)) {
    if (rows == 0 || cols == 0) throw ShapeError("matrix dimensions must be >= 1");
    if (values_.size() != rows * cols) throw ShapeError("matrix value count does not match rows*cols");
  }

  static DenseMatrix identity(Index n) {
    DenseMatrix m(n, n);
    for (Index i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  Index rows() const noexcept { return rows_; }
  Index cols() const noexcept { return cols_; }

  double& operator()(Index r, Index c) noexcept { return values_[r * cols_ + c]; }
  double operator()(Index r, Index c) const noexcept { return values_[r * cols_ + c]; }

  std::span<double> row(Index r) noexcept { return {values_.data() + r * cols_, cols_}; }
  std::span<const double> row(Index r) const noexcept { return {values_.data() + r * cols_, cols_}; }

  std::vector<double>& values() noexcept { return values_; }
  const std::vector<double>& values() const noexcept { return values_; }

  friend bool operator==(const DenseMatrix&, const DenseMatrix&) = default;

 private:
  Index rows_ = 0;
  Index cols_ = 0;
  std::vector<double> values_;
};

inline DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b) {
  if (a.cols() != b.rows()) throw ShapeError("matmul: inner dimensions differ");
  DenseMatrix out(a.rows(), b.cols());
  for (Index i = 0; i < a.rows(); ++i) {
    auto orow = out.row(i);
    for (Index k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      auto brow = b.row(k);
      for (Index j = 0; j < b.cols(); ++j) orow[j] += aik * brow[j];
    }
  }
  return out;
}

// a^T * b
inline DenseMatrix transpose_matmul(const DenseMatrix& a, const DenseMatrix& b) {
  if (a.rows() != b.rows()) throw ShapeError("transpose_matmul: row counts differ");
  DenseMatrix out(a.cols(), b.cols());
  for (Index i = 0; i < a.rows(); ++i) {
    auto brow = b.row(i);
    for (Index k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      auto orow = out.row(k);
      for (Index j = 0; j < b.cols(); ++j) orow[j] += aik * brow[j];
    }
  }
  return out;
}

inline DenseMatrix transpose(const DenseMatrix& a) {
  DenseMatrix out(a.cols(), a.rows());
  for (Index i = 0; i < a.rows(); ++i)
    for (Index j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
  return out;
}

inline double frobenius_sq(std::span<const double> v) noexcept {
  double s = 0.0;
  for (double x : v) s += x * x;
  return s;
}

class DenseTensor {
 public:
  DenseTensor() = default;

  explicit DenseTensor(Shape shape, double fill = 0.0)
      : shape_(std::move(shape)), values_(shape_.numel(), fill) {}

  DenseTensor(Shape shape, std::vector<double> values) : shape_(std::move(shape)), values_(std::move(values)) {
    if (values_.size() != shape_.numel()) throw ShapeError("tensor value count does not match shape");
  }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t order() const noexcept { return shape_.order(); }

  std::vector<double>& values() noexcept { return values_; }
  const std::vector<double>& values() const noexcept { return values_; }

  template <typename I>
  Index linear_index(std::span<const I> index) const {
    if (!shape_.contains(index)) throw ShapeError("tensor index out of bounds");
    Index lin = 0;
    for (std::size_t k = 0; k < index.size(); ++k) lin = lin * shape_[k] + static_cast<Index>(index[k]);
    return lin;
  }

  double& at(std::initializer_list<Index> index) {
    return values_[linear_index(std::span<const Index>(index.begin(), index.size()))];
  }
  double at(std::initializer_list<Index> index) const {
    return values_[linear_index(std::span<const Index>(index.begin(), index.size()))];
  }

  friend bool operator==(const DenseTensor&, const DenseTensor&) = default;

 private:
  Shape shape_;
  std::vector<double> values_;
};

namespace detail {

// Cyclic order of the non-`mode` modes; the first listed varies fastest in
// the unfolded column index.
inline std::vector<std::size_t> cyclic_other_modes(std::size_t order, std::size_t mode) {
  std::vector<std::size_t> modes;
  modes.reserve(order - 1);
  for (std::size_t s = 1; s < order; ++s) modes.push_back((mode + s) % order);
  return modes;
}

// Column strides (in the unfolded matrix) for every mode; 0 for `mode` itself.
inline std::vector<Index> unfold_column_strides(const Shape& shape, std::size_t mode) {
  std::vector<Index> strides(shape.order(), 0);
  Index stride = 1;
  for (std::size_t k : cyclic_other_modes(shape.order(), mode)) {
    strides[k] = stride;
    stride *= shape[k];
  }
  return strides;
}

inline void check_mode(const Shape& shape, std::size_t mode) {
  if (mode >= shape.order())
    throw ShapeError("mode " + std::to_string(mode) + " out of range for order " + std::to_string(shape.order()));
}

}  // namespace detail

// Mode-n unfolding: rows index `mode`, columns run over the remaining modes in
// cyclic order starting at mode+1 (fastest).
inline DenseMatrix matricize(const DenseTensor& t, std::size_t mode) {
  const Shape& shape = t.shape();
  detail::check_mode(shape, mode);
  const Index rows = shape[mode];
  const Index cols = shape.numel() / rows;
  const auto col_strides = detail::unfold_column_strides(shape, mode);

  DenseMatrix out(rows, cols);
  std::vector<Index> idx(shape.order(), 0);
  const auto& vals = t.values();
  for (Index lin = 0; lin < vals.size(); ++lin) {
    Index col = 0;
    for (std::size_t k = 0; k < idx.size(); ++k) col += idx[k] * col_strides[k];
    out(idx[mode], col) = vals[lin];
    for (std::size_t k = idx.size(); k-- > 0;) {
      if (++idx[k] < shape[k]) break;
      idx[k] = 0;
    }
  }
  return out;
}

// Inverse of matricize for a tensor of the given shape.
inline DenseTensor refold(const DenseMatrix& m, std::size_t mode, const Shape& shape) {
  detail::check_mode(shape, mode);
  if (m.rows() != shape[mode] || m.rows() * m.cols() != shape.numel())
    throw ShapeError("refold: matrix " + std::to_string(m.rows()) + "x" + std::to_string(m.cols()) +
                     " does not unfold shape " + shape.str() + " along mode " + std::to_string(mode));
  const auto col_strides = detail::unfold_column_strides(shape, mode);

  DenseTensor out(shape);
  std::vector<Index> idx(shape.order(), 0);
  auto& vals = out.values();
  for (Index lin = 0; lin < vals.size(); ++lin) {
    Index col = 0;
    for (std::size_t k = 0; k < idx.size(); ++k) col += idx[k] * col_strides[k];
    vals[lin] = m(idx[mode], col);
    for (std::size_t k = idx.size(); k-- > 0;) {
      if (++idx[k] < shape[k]) break;
      idx[k] = 0;
    }
  }
  return out;
}

// t x_mode m, with m of shape (J, I_mode). Result replaces I_mode by J.
inline DenseTensor mode_n_product(const DenseTensor& t, const DenseMatrix& m, std::size_t mode) {
  const Shape& shape = t.shape();
  detail::check_mode(shape, mode);
  if (m.cols() != shape[mode])
    throw ShapeError("mode_n_product: matrix has " + std::to_string(m.cols()) + " columns, mode " +
                     std::to_string(mode) + " has size " + std::to_string(shape[mode]));

  Index outer = 1, inner = 1;
  for (std::size_t k = 0; k < mode; ++k) outer *= shape[k];
  for (std::size_t k = mode + 1; k < shape.order(); ++k) inner *= shape[k];

  auto dims = shape.dims();
  dims[mode] = m.rows();
  DenseTensor out{Shape(dims)};

  const Index in_len = shape[mode];
  const auto& src = t.values();
  auto& dst = out.values();
  for (Index o = 0; o < outer; ++o)
    for (Index r = 0; r < m.rows(); ++r)
      for (Index in = 0; in < inner; ++in) {
        double s = 0.0;
        for (Index i = 0; i < in_len; ++i) s += m(r, i) * src[(o * in_len + i) * inner + in];
        dst[(o * m.rows() + r) * inner + in] = s;
      }
  return out;
}

// Read-only view of one stored entry.
struct EntryView {
  std::span<const std::uint32_t> index;
  double value;
};

// COO sparse tensor. Entries are kept in lexicographic index order and are
// unique; the stored index set is the observed set of the tensor.
class SparseTensor {
 public:
  struct Entry {
    std::vector<Index> index;
    double value;
  };

  SparseTensor() = default;

  // Empty tensor of the given shape.
  explicit SparseTensor(Shape shape) : shape_(std::move(shape)) { check_index_width(); }

  SparseTensor(Shape shape, std::vector<Entry> entries) : shape_(std::move(shape)) {
    check_index_width();
    const std::size_t n = shape_.order();
    std::vector<std::uint32_t> idx;
    std::vector<double> vals;
    idx.reserve(entries.size() * n);
    vals.reserve(entries.size());
    for (const auto& e : entries) {
      if (!shape_.contains(std::span<const Index>(e.index)))
        throw ShapeError("sparse entry index out of bounds for shape " + shape_.str());
      for (Index i : e.index) idx.push_back(static_cast<std::uint32_t>(i));
      vals.push_back(e.value);
    }
    assign_sorted(std::move(idx), std::move(vals));
  }

  // Flat index storage: entry e occupies [e*order, (e+1)*order).
  SparseTensor(Shape shape, std::vector<std::uint32_t> flat_index, std::vector<double> values)
      : shape_(std::move(shape)) {
    check_index_width();
    const std::size_t n = shape_.order();
    if (flat_index.size() != values.size() * n) throw ShapeError("sparse index/value length mismatch");
    for (std::size_t e = 0; e < values.size(); ++e)
      if (!shape_.contains(std::span<const std::uint32_t>(flat_index.data() + e * n, n)))
        throw ShapeError("sparse entry index out of bounds for shape " + shape_.str());
    assign_sorted(std::move(flat_index), std::move(values));
  }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t order() const noexcept { return shape_.order(); }
  std::size_t nnz() const noexcept { return values_.size(); }
  bool empty() const noexcept { return values_.empty(); }

  std::span<const std::uint32_t> index(std::size_t e) const noexcept {
    return {index_.data() + e * order(), order()};
  }
  double value(std::size_t e) const noexcept { return values_[e]; }

  const std::vector<std::uint32_t>& flat_index() const noexcept { return index_; }
  const std::vector<double>& values() const noexcept { return values_; }

  // Canonically ordered stream of entries.
  auto entries() const {
    return std::views::iota(std::size_t{0}, nnz()) |
           std::views::transform([this](std::size_t e) { return EntryView{index(e), value(e)}; });
  }

  // Entries at the given ascending positions, re-homed into `shape` (which must
  // contain them). Order is preserved, so the result stays canonical.
  SparseTensor select(std::span<const std::size_t> positions, Shape shape) const {
    SparseTensor out(std::move(shape));
    if (out.order() != order()) throw ShapeError("select: order mismatch");
    out.index_.reserve(positions.size() * order());
    out.values_.reserve(positions.size());
    for (std::size_t p : positions) {
      auto idx = index(p);
      if (!out.shape_.contains(idx)) throw ShapeError("select: entry outside target shape " + out.shape_.str());
      out.index_.insert(out.index_.end(), idx.begin(), idx.end());
      out.values_.push_back(values_[p]);
    }
    return out;
  }

  // Same index set, new values.
  SparseTensor with_values(std::vector<double> values) const {
    if (values.size() != nnz()) throw ShapeError("with_values: length mismatch");
    SparseTensor out = *this;
    out.values_ = std::move(values);
    return out;
  }

  friend bool operator==(const SparseTensor&, const SparseTensor&) = default;

 private:
  void check_index_width() const {
    for (Index d : shape_.dims())
      if (d > std::numeric_limits<std::uint32_t>::max()) throw ShapeError("dimension exceeds 32-bit index range");
  }

  void assign_sorted(std::vector<std::uint32_t> idx, std::vector<double> vals) {
    const std::size_t n = shape_.order();
    const std::size_t count = vals.size();
    auto less = [&](std::size_t a, std::size_t b) {
      return std::lexicographical_compare(idx.begin() + a * n, idx.begin() + (a + 1) * n, idx.begin() + b * n,
                                          idx.begin() + (b + 1) * n);
    };
    std::vector<std::size_t> perm(count);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    if (!std::is_sorted(perm.begin(), perm.end(), less)) std::sort(perm.begin(), perm.end(), less);

    index_.resize(count * n);
    values_.resize(count);
    for (std::size_t e = 0; e < count; ++e) {
      std::copy_n(idx.begin() + perm[e] * n, n, index_.begin() + e * n);
      values_[e] = vals[perm[e]];
      if (e > 0 && std::equal(index_.begin() + (e - 1) * n, index_.begin() + e * n, index_.begin() + e * n))
        throw DataError("duplicate sparse index (" + index_string(e) + ")");
    }
  }

  std::string index_string(std::size_t e) const {
    std::string s;
    for (std::size_t k = 0; k < order(); ++k) {
      if (k) s += ',';
      s += std::to_string(index_[e * order() + k]);
    }
    return s;
  }

  Shape shape_;
  std::vector<std::uint32_t> index_;
  std::vector<double> values_;
};

}  // namespace siita
