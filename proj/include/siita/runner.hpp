#pragma once

// Experiment drivers: split -> snapshots -> per-step updates -> metrics.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "siita/config.hpp"
#include "siita/data.hpp"
#include "siita/eval.hpp"
#include "siita/model.hpp"
#include "siita/optimizer.hpp"
#include "siita/streaming.hpp"

namespace siita {

inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index, std::uint64_t salt) {
  // splitmix64 finalizer over the combined input
  std::uint64_t z = master + 0x9e3779b97f4a7c15ULL * (index + 1) + 0xbf58476d1ce4e5b9ULL * salt;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

struct SplitResult {
  std::uint64_t split_seed = 0;
  std::vector<MetricsRecord> records;
  std::optional<double> average_test_rmse;
  TuckerModel model;
};

struct RunSummary {
  std::vector<SplitResult> splits;
  std::optional<double> mean_average_test_rmse;
};

struct RunOptions {
  bool timing = true;
  bool weighted_average = false;
  UpdateObserver observer;
};

namespace detail {

// Entries of `t` grouped by the snapshot that first contains them.
inline std::vector<std::vector<std::size_t>> bucket_by_step(const SparseTensor& t, const GrowthPlan& plan) {
  std::vector<std::vector<std::size_t>> buckets(plan.regime() == Regime::Batch ? 1 : plan.steps());
  for (std::size_t e = 0; e < t.nnz(); ++e) buckets[plan.first_step(t.index(e))].push_back(e);
  return buckets;
}

inline double squared_error(const TuckerModel& model, std::span<const DenseMatrix> proj, const SparseTensor& t,
                            std::span<const std::size_t> positions, std::vector<double>& scratch) {
  double s = 0.0;
  for (std::size_t e : positions) {
    const double r = t.value(e) - predict_with(model.core, proj, t.index(e), scratch);
    s += r * r;
  }
  return s;
}

}  // namespace detail

// Train on `train` snapshot by snapshot; after each step report RMSE over all
// train/test entries inside the current snapshot shape.
inline SplitResult run_split(const SparseTensor& train, const SparseTensor& test, const SideInfoSet& side,
                             const GrowthPlan& plan, const Shape& ranks, const Hyperparams& hp,
                             const RunOptions& opts = {}) {
  hp.validate(ranks.order());
  SplitResult out;
  out.model = init_model(ranks, side, hp);
  SnapshotStream stream(train, side, plan);

  const auto train_buckets = detail::bucket_by_step(train, plan);
  const auto test_buckets = detail::bucket_by_step(test, plan);
  std::vector<std::size_t> train_seen, test_seen;
  std::vector<double> scratch;

  while (auto snap = stream.next()) {
    const std::size_t b = plan.regime() == Regime::Batch ? 0 : snap->step_index;
    if (plan.regime() != Regime::Batch || snap->step_index == 0) {
      train_seen.insert(train_seen.end(), train_buckets[b].begin(), train_buckets[b].end());
      test_seen.insert(test_seen.end(), test_buckets[b].begin(), test_buckets[b].end());
    }
    const StepResult res = step(out.model, *snap->side_view, *snap->delta, hp, opts.observer);

    MetricsRecord rec;
    rec.step = snap->step_index;
    rec.objective = res.objective;
    rec.elapsed_ms = opts.timing ? res.elapsed_ms : 0.0;
    const auto proj = projected_factors(out.model, *snap->side_view);
    if (!train_seen.empty())
      rec.train_rmse = std::sqrt(detail::squared_error(out.model, proj, train, train_seen, scratch) /
                                 static_cast<double>(train_seen.size()));
    if (!test_seen.empty()) {
      rec.test_rmse = std::sqrt(detail::squared_error(out.model, proj, test, test_seen, scratch) /
                                static_cast<double>(test_seen.size()));
      rec.test_count = test_seen.size();
    }
    if ((rec.train_rmse && !std::isfinite(*rec.train_rmse)) || (rec.test_rmse && !std::isfinite(*rec.test_rmse)))
      throw NumericalError("RMSE became non-finite at step " + std::to_string(rec.step));
    out.records.push_back(rec);
  }
  out.average_test_rmse = average_test_rmse(out.records, opts.weighted_average);
  return out;
}

inline Dataset load_dataset(const RunConfig& cfg) {
  const Shape shape(cfg.dims);
  Dataset ds;
  ds.name = cfg.tensor;
  ds.tensor = load_tensor(cfg.tensor, shape);
  for (std::size_t k = 0; k < shape.order(); ++k) ds.side.push_back(load_side_info(cfg.side_spec(k), shape[k]));
  return ds;
}

// All splits of a configured experiment; no file output.
inline RunSummary run_experiment(const RunConfig& cfg, const Dataset& ds, const UpdateObserver& observer = {}) {
  cfg.validate();
  const GrowthPlan plan = cfg.growth_plan();
  const Shape ranks(cfg.ranks);
  RunOptions opts{cfg.timing, cfg.weighted_average, observer};

  RunSummary summary;
  double sum = 0.0;
  int counted = 0;
  for (int k = 0; k < cfg.n_splits; ++k) {
    const std::uint64_t split_seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(k), 1);
    const Split split = make_split(ds.tensor, cfg.missing_pct, split_seed);
    Hyperparams hp = cfg.hyperparams();
    hp.seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(k), 2);
    SplitResult res = run_split(split.train, split.test, ds.side, plan, ranks, hp, opts);
    res.split_seed = split_seed;
    if (res.average_test_rmse) {
      sum += *res.average_test_rmse;
      ++counted;
    }
    summary.splits.push_back(std::move(res));
  }
  if (counted) summary.mean_average_test_rmse = sum / counted;
  return summary;
}

inline std::string format_metric(std::optional<double> v) {
  if (!v) return "NA";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", *v);
  return buf;
}

inline void write_resolved_config(const RunConfig& cfg, const std::filesystem::path& dir) {
  std::ofstream out(dir / "config.resolved");
  if (!out) throw DataError("cannot write " + (dir / "config.resolved").string());
  out << "# siita " << kVersion << "\n" << cfg.to_text();
}

// `run` subcommand: loads data, runs every split, writes per-split CSVs, a
// summary and the resolved config into out_dir.
inline RunSummary cmd_run(const RunConfig& cfg, std::ostream& log) {
  cfg.validate();
  const Dataset ds = load_dataset(cfg);
  const std::filesystem::path dir(cfg.out_dir);
  std::filesystem::create_directories(dir);
  write_resolved_config(cfg, dir);

  RunSummary summary = run_experiment(cfg, ds);
  std::ofstream sum_out(dir / "summary.txt");
  for (std::size_t k = 0; k < summary.splits.size(); ++k) {
    const auto& s = summary.splits[k];
    emit_csv(s.records, (dir / ("split_" + std::to_string(k) + ".csv")).string());
    if (cfg.checkpoint)
      checkpoint_save(s.model, cfg.hyperparams(), s.records.size(), (dir / ("split_" + std::to_string(k) + ".ckpt")).string());
    sum_out << "split " << k << " average_test_rmse " << format_metric(s.average_test_rmse) << "\n";
  }
  sum_out << "mean_average_test_rmse " << format_metric(summary.mean_average_test_rmse) << "\n";
  log << "mean averaged test RMSE over " << summary.splits.size()
      << " split(s): " << format_metric(summary.mean_average_test_rmse) << "\n";
  return summary;
}

struct ClusterRun {
  std::vector<std::optional<double>> average_purity;  // per step; absent while the mode has < w rows
  ClusterReport final_report;
  TuckerModel model;
};

// Nonnegative factorization of the full data over the growth plan, tracking
// cluster purity of `mode` after each step.
inline ClusterRun run_clustering(const SparseTensor& data, const SideInfoSet& side, const GrowthPlan& plan,
                                 const Shape& ranks, Hyperparams hp, std::size_t mode, const Labels& labels,
                                 std::size_t w, const UpdateObserver& observer = {}) {
  if (mode >= data.order()) throw ConfigError("cluster_mode: out of range");
  if (w < 1 || w > data.shape()[mode])
    throw ConfigError("w: " + std::to_string(w) + " must lie in [1, " + std::to_string(data.shape()[mode]) + "]");
  if (labels.size() < data.shape()[mode]) throw DataError("labels do not cover every item of mode " + std::to_string(mode));
  hp.nonnegative = true;
  hp.validate(ranks.order());

  ClusterRun out;
  out.model = init_model(ranks, side, hp);
  SnapshotStream stream(data, side, plan);
  while (auto snap = stream.next()) {
    step(out.model, *snap->side_view, *snap->delta, hp, observer);
    const auto& view = (*snap->side_view)[mode];
    if (view.rows() < w) {
      out.average_purity.push_back(std::nullopt);
      continue;
    }
    out.final_report = purity(out.model, *snap->side_view, mode, labels, w);
    out.average_purity.push_back(out.final_report.average_purity);
  }
  return out;
}

inline ClusterRun cmd_cluster(RunConfig cfg, std::ostream& log) {
  if (!cfg.nonnegative) {
    log << "warning: cluster requires nonnegative factors; overriding nonnegative = true\n";
    cfg.nonnegative = true;
  }
  cfg.validate();
  if (cfg.labels.empty()) throw ConfigError("labels: path is required for cluster");
  const Dataset ds = load_dataset(cfg);
  const Labels labels = load_labels(cfg.labels, ds.tensor.shape()[std::min(cfg.cluster_mode, ds.tensor.order() - 1)]);
  const std::filesystem::path dir(cfg.out_dir);
  std::filesystem::create_directories(dir);
  write_resolved_config(cfg, dir);

  ClusterRun run = run_clustering(ds.tensor, ds.side, cfg.growth_plan(), Shape(cfg.ranks), cfg.hyperparams(),
                                  cfg.cluster_mode, labels, cfg.w);
  {
    std::ofstream out(dir / "purity.csv");
    out << "step,average_purity\n";
    for (std::size_t t = 0; t < run.average_purity.size(); ++t) out << t << ',' << (run.average_purity[t] ? format_metric(run.average_purity[t]) : "") << '\n';
  }
  {
    std::ofstream out(dir / "clusters.csv");
    out << "column,purity,top_items\n";
    for (const auto& c : run.final_report.per_cluster) {
      out << c.column << ',' << format_metric(c.purity) << ',';
      for (std::size_t i = 0; i < c.top_items.size(); ++i) out << (i ? " " : "") << c.top_items[i];
      out << '\n';
    }
  }
  log << "final average purity (w=" << cfg.w << "): " << format_metric(run.final_report.average_purity) << "\n";
  return run;
}

}  // namespace siita
