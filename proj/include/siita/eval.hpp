#pragma once

// Metrics: RMSE, cluster purity, per-step records and CSV output.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "siita/data.hpp"
#include "siita/error.hpp"
#include "siita/model.hpp"
#include "siita/tensor.hpp"

namespace siita {

struct MetricsRecord {
  std::size_t step = 0;
  std::optional<double> train_rmse;
  std::optional<double> test_rmse;
  double objective = 0.0;
  double elapsed_ms = 0.0;
  std::size_t test_count = 0;  // size of the test set behind test_rmse
};

inline double rmse(const TuckerModel& model, std::span<const DenseMatrix> proj, const SparseTensor& entries) {
  if (entries.empty()) throw std::invalid_argument("rmse: empty entry set");
  std::vector<double> scratch;
  double sum = 0.0;
  for (std::size_t e = 0; e < entries.nnz(); ++e) {
    const double r = entries.value(e) - detail::predict_with(model.core, proj, entries.index(e), scratch);
    sum += r * r;
  }
  return std::sqrt(sum / static_cast<double>(entries.nnz()));
}

inline double rmse(const TuckerModel& model, const SideInfoSet& side, const SparseTensor& entries) {
  check_data_shape(entries, side);
  const auto proj = projected_factors(model, side);
  return rmse(model, std::span<const DenseMatrix>(proj), entries);
}

// Mean of per-step test RMSE over steps that have one. Weighted mode weighs
// each step by its test-set size.
inline std::optional<double> average_test_rmse(std::span<const MetricsRecord> records, bool weighted = false) {
  double sum = 0.0, weight = 0.0;
  for (const auto& r : records) {
    if (!r.test_rmse) continue;
    const double w = weighted ? static_cast<double>(r.test_count) : 1.0;
    sum += w * *r.test_rmse;
    weight += w;
  }
  if (weight == 0.0) return std::nullopt;
  return sum / weight;
}

struct ClusterEntry {
  std::size_t column = 0;
  std::vector<Index> top_items;
  double purity = 0.0;
};

struct ClusterReport {
  std::size_t mode = 0;
  std::size_t w = 0;
  std::vector<ClusterEntry> per_cluster;
  double average_purity = 0.0;
};

// Purity of one top-w item set: the share of items carrying the most common
// category (items with several categories count toward each of them).
inline double cluster_purity(std::span<const Index> items, const Labels& labels) {
  if (items.empty()) return 0.0;
  std::map<int, std::size_t> counts;
  for (Index i : items)
    for (int c : labels.at(i)) ++counts[c];
  std::size_t best = 0;
  for (const auto& [c, n] : counts) best = std::max(best, n);
  return static_cast<double>(best) / static_cast<double>(items.size());
}

// Indices of the w largest entries of column `col`, ties to the lower row.
inline std::vector<Index> top_w_rows(const DenseMatrix& m, std::size_t col, std::size_t w) {
  std::vector<Index> rows(m.rows());
  std::iota(rows.begin(), rows.end(), Index{0});
  std::partial_sort(rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(w), rows.end(), [&](Index a, Index b) {
    const double va = m(a, col), vb = m(b, col);
    return va > vb || (va == vb && a < b);
  });
  rows.resize(w);
  return rows;
}

inline ClusterReport purity_from_projection(const DenseMatrix& proj, std::size_t mode, const Labels& labels,
                                            std::size_t w) {
  if (w < 1) throw ConfigError("purity: w must be >= 1");
  if (w > proj.rows())
    throw ConfigError("purity: w = " + std::to_string(w) + " exceeds mode size " + std::to_string(proj.rows()));
  if (labels.size() < proj.rows()) throw DataError("purity: labels do not cover every item of the mode");
  ClusterReport report;
  report.mode = mode;
  report.w = w;
  double sum = 0.0;
  for (std::size_t c = 0; c < proj.cols(); ++c) {
    ClusterEntry entry;
    entry.column = c;
    entry.top_items = top_w_rows(proj, c, w);
    entry.purity = cluster_purity(entry.top_items, labels);
    sum += entry.purity;
    report.per_cluster.push_back(std::move(entry));
  }
  report.average_purity = sum / static_cast<double>(proj.cols());
  return report;
}

inline ClusterReport purity(const TuckerModel& model, const SideInfoSet& side, std::size_t mode, const Labels& labels,
                            std::size_t w) {
  if (mode >= model.order()) throw ConfigError("purity: mode out of range");
  return purity_from_projection(side.at(mode).multiply(model.factors[mode]), mode, labels, w);
}

inline void emit_csv(std::span<const MetricsRecord> records, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  out << "step,train_rmse,test_rmse,objective,elapsed_ms\n";
  char buf[64];
  auto metric = [&](const std::optional<double>& v) -> std::string {
    if (!v) return "";
    std::snprintf(buf, sizeof buf, "%.6f", *v);
    return buf;
  };
  for (const auto& r : records) {
    out << r.step << ',' << metric(r.train_rmse) << ',' << metric(r.test_rmse) << ',';
    std::snprintf(buf, sizeof buf, "%.6f", r.objective);
    out << buf << ',' << std::llround(r.elapsed_ms) << '\n';
  }
  if (!out) throw DataError("failed writing " + path);
}

// Reads a file written by emit_csv.
inline std::vector<MetricsRecord> read_csv(const std::string& path) {
  auto in = detail::open_input(path);
  std::string line;
  if (!std::getline(in, line) || line != "step,train_rmse,test_rmse,objective,elapsed_ms")
    throw DataError(path + ": unexpected metrics header");
  std::vector<MetricsRecord> out;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    const auto f = detail::split_on(line, ',');
    if (f.size() != 5) throw DataError(path, lineno, "expected 5 fields");
    MetricsRecord r;
    auto opt = [&](std::string_view s) -> std::optional<double> {
      if (s.empty()) return std::nullopt;
      double v = 0.0;
      if (!detail::parse_number(s, v)) throw DataError(path, lineno, "bad number");
      return v;
    };
    if (!detail::parse_number(f[0], r.step) || !detail::parse_number(f[3], r.objective) ||
        !detail::parse_number(f[4], r.elapsed_ms))
      throw DataError(path, lineno, "bad number");
    r.train_rmse = opt(f[1]);
    r.test_rmse = opt(f[2]);
    out.push_back(r);
  }
  return out;
}

}  // namespace siita
