// Acceptance checks. One PASS/FAIL/SKIP line per criterion.
//
//   acceptance                 criteria 1-7 and 9; 8 reported as SKIP
//   acceptance --movielens     criterion 8 only; exit 77 when data is absent
//   acceptance --only 3,4      a subset
//
// Exit status: 0 when nothing failed, 1 otherwise, 77 for a skipped
// --movielens run.

#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <limits>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <sys/wait.h>
#include <unistd.h>

#include "siita/gradcheck.hpp"
#include "siita/runner.hpp"
#include "siita/siita.hpp"
#include "siita/testing/oracles.hpp"

namespace {

using namespace siita;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

enum class Outcome { Pass, Fail, Skip };

struct Verdict {
  Outcome outcome = Outcome::Fail;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

Verdict verdict(bool ok, std::string detail) { return {ok ? Outcome::Pass : Outcome::Fail, std::move(detail)}; }

// ---------------------------------------------------------------------------
// 1. gradient kernel against finite differences and the Kronecker oracle

Verdict gradient_correctness() {
  std::mt19937_64 rng(20240601);
  const std::array<Index, 3> max_dims = {6, 5, 4};
  double worst_fd = 0.0, worst_kron = 0.0;
  int failures = 0;
  for (int i = 0; i < 50; ++i) {
    std::vector<Index> dims, ranks, feats;
    for (std::size_t k = 0; k < 3; ++k) {
      dims.push_back(1 + rng() % max_dims[k]);
      ranks.push_back(1 + rng() % 3);
      feats.push_back(1 + rng() % dims.back());
    }
    Hyperparams hp;
    hp.lambda_g = 1e-2 * static_cast<double>(rng() % 10);
    hp.lambda = {1e-2 * static_cast<double>(rng() % 10)};
    const double density = i % 2 ? 0.5 : 1.0;
    const auto rep = gradcheck(dims, ranks, feats, rng(), density, hp);
    worst_fd = std::max(worst_fd, rep.max_rel_error_fd);
    worst_kron = std::max(worst_kron, rep.max_abs_error_kron);
    failures += rep.passed() ? 0 : 1;
  }
  return verdict(failures == 0, fmt("50 instances, max rel err vs FD %.2e (< %.0e), max abs err vs Kronecker %.2e (< %.0e)",
                                    worst_fd, kFiniteDifferenceTolerance, worst_kron, kKroneckerTolerance));
}

// ---------------------------------------------------------------------------
// 2. predict_entry against dense mode-n-product reconstruction

Verdict reconstruction_equivalence() {
  double worst = 0.0;
  std::size_t checked = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    std::mt19937_64 rng(seed);
    const std::vector<Index> ranks = {1 + rng() % 3, 1 + rng() % 3, 1 + rng() % 3};
    const std::vector<Index> feats = {1 + rng() % 4, 1 + rng() % 4, 1 + rng() % 3};
    auto inst = testing::random_instance({4, 4, 3}, ranks, feats, 1.0, seed);
    const auto proj = projected_factors(inst.model, inst.side);
    const auto dense = testing::tucker_reconstruct(inst.model.core, testing::dense_projections(inst.model, inst.side));
    for (std::uint32_t i = 0; i < 4; ++i)
      for (std::uint32_t j = 0; j < 4; ++j)
        for (std::uint32_t k = 0; k < 3; ++k) {
          const std::uint32_t idx[] = {i, j, k};
          const double a = predict_entry(inst.model, std::span<const DenseMatrix>(proj), idx);
          const double b = dense.values()[dense.linear_index(std::span<const std::uint32_t>(idx))];
          worst = std::max(worst, std::abs(a - b));
          ++checked;
        }
  }
  return verdict(worst < 1e-12, fmt("%zu entries over 20 random 4x4x3 models, max abs err %.2e (< 1e-12)", checked, worst));
}

// ---------------------------------------------------------------------------
// 3 and 4. planted-model recovery in the batch regime, and the nonnegative
// invariant on the same data

struct Planted {
  SideInfoSet side;
  SparseTensor train, test;
  double sd = 0.0;
};

// G*, U* uniform [0,1); A_k uniform [0,1) scaled by 1/M_k so projected
// factors stay O(1). Half the cells observed for training, the rest held out.
Planted planted_problem(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  const std::vector<Index> dims = {30, 30, 20}, feats = {8, 8, 5};
  Planted p;
  for (std::size_t k = 0; k < 3; ++k) {
    DenseMatrix a(dims[k], feats[k]);
    for (double& v : a.values()) v = u01(rng) / static_cast<double>(feats[k]);
    p.side.push_back(SideInfo::dense(std::move(a)));
  }
  TuckerModel truth;
  truth.core = DenseTensor(Shape{3, 3, 3});
  for (double& v : truth.core.values()) v = u01(rng);
  for (std::size_t k = 0; k < 3; ++k) {
    DenseMatrix u(feats[k], 3);
    for (double& v : u.values()) v = u01(rng);
    truth.factors.push_back(std::move(u));
  }
  const auto full = testing::tucker_reconstruct(truth.core, testing::dense_projections(truth, p.side));
  std::vector<SparseTensor::Entry> train, test;
  double sum = 0.0, sq = 0.0;
  for (Index lin = 0; lin < full.values().size(); ++lin) {
    const double v = full.values()[lin];
    sum += v;
    sq += v * v;
    (u01(rng) < 0.5 ? train : test).push_back({{lin / 600, lin / 20 % 30, lin % 20}, v});
  }
  const double n = static_cast<double>(full.values().size());
  p.sd = std::sqrt(sq / n - (sum / n) * (sum / n));
  const Shape shape(dims);
  p.train = SparseTensor(shape, std::move(train));
  p.test = SparseTensor(shape, std::move(test));
  return p;
}

struct BatchFit {
  bool finite = true;
  double train_rmse = std::numeric_limits<double>::infinity();
  double test_rmse = std::numeric_limits<double>::infinity();
  TuckerModel model;
};

BatchFit batch_fit(const Planted& p, const Hyperparams& hp, int passes, const UpdateObserver& observer = {}) {
  BatchFit fit;
  fit.model = init_model(Shape{3, 3, 3}, p.side, hp);
  SnapshotStream stream(p.train, p.side, GrowthPlan::batch(p.train.shape(), passes));
  try {
    while (auto snap = stream.next()) step(fit.model, *snap->side_view, *snap->delta, hp, observer);
  } catch (const NumericalError&) {
    fit.finite = false;
    return fit;
  }
  fit.train_rmse = rmse(fit.model, p.side, p.train);
  fit.test_rmse = rmse(fit.model, p.side, p.test);
  fit.finite = std::isfinite(fit.train_rmse) && std::isfinite(fit.test_rmse);
  return fit;
}

constexpr int kRecoveryPasses = 2000;
double g_selected_gamma = 0.0;  // chosen by criterion 3, reused by 4

Verdict synthetic_recovery() {
  const Planted p = planted_problem(7);
  Hyperparams hp;
  hp.lambda_g = 0.0;
  hp.lambda = {0.0};
  hp.inner_steps = 1;
  hp.seed = 11;

  // gamma picked by final training RMSE; the held-out half is only scored
  BatchFit best;
  std::string grid;
  for (double gamma : {1e-2, 1e-3, 1e-4}) {
    hp.gamma = gamma;
    BatchFit fit = batch_fit(p, hp, kRecoveryPasses);
    grid += fit.finite ? fmt(" %.0e:train %.2e", gamma, fit.train_rmse) : fmt(" %.0e:diverged", gamma);
    if (fit.finite && fit.train_rmse < best.train_rmse) {
      best = std::move(fit);
      g_selected_gamma = gamma;
    }
  }
  if (g_selected_gamma == 0.0) return verdict(false, "every gamma diverged;" + grid);
  const double bound = 0.1 * p.sd;
  return verdict(best.test_rmse < bound, fmt("gamma %.0e, %d passes, test RMSE %.3e < 0.1*sd = %.3e;", g_selected_gamma,
                                             kRecoveryPasses, best.test_rmse, bound) +
                                             grid);
}

Verdict nonnegativity_invariant() {
  const Planted p = planted_problem(7);
  Hyperparams hp;
  hp.lambda_g = 0.0;
  hp.lambda = {0.0};
  hp.seed = 11;
  hp.nonnegative = true;
  hp.gamma = g_selected_gamma > 0.0 ? g_selected_gamma : 1e-3;
  std::size_t updates = 0, violations = 0;
  double min_seen = std::numeric_limits<double>::infinity();
  const auto fit = batch_fit(p, hp, kRecoveryPasses, [&](const TuckerModel& m) {
    ++updates;
    auto scan = [&](const std::vector<double>& v) {
      for (double x : v) {
        min_seen = std::min(min_seen, x);
        if (!(x >= 0.0)) ++violations;
      }
    };
    scan(m.core.values());
    for (const auto& f : m.factors) scan(f.values());
  });
  if (!fit.finite) return verdict(false, fmt("NN run diverged at gamma %.0e after %zu updates", hp.gamma, updates));
  return verdict(violations == 0 && updates == 2 * kRecoveryPasses,
                 fmt("%zu updates checked, %zu negative entries, min entry %.3g; NN test RMSE %.3e", updates, violations,
                     min_seen, fit.test_rmse));
}

// ---------------------------------------------------------------------------
// 5. identity markers vs explicit dense identity matrices, through the CLI

int run_cli(const std::string& args, std::string* output = nullptr) {
  const std::string cmd = std::string(SIITA_CLI_PATH) + " " + args + " 2>&1";
  FILE* p = popen(cmd.c_str(), "r");
  if (!p) return -1;
  std::string out;
  std::array<char, 512> buf{};
  while (std::fgets(buf.data(), buf.size(), p)) out += buf.data();
  const int status = pclose(p);
  if (output) *output = out;
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch_dir(const std::string& tag) {
  const auto d = fs::temp_directory_path() / ("siita_accept_" + tag + "_" + std::to_string(::getpid()));
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

Verdict identity_ablation() {
  const auto dir = scratch_dir("identity");
  const std::vector<Index> dims = {12, 10, 6};
  auto inst = testing::random_instance(dims, {2, 2, 2}, {1, 1, 1}, 0.5, 5);
  save_tensor(inst.block, (dir / "x.tns").string());
  std::string marker_side, dense_side;
  for (std::size_t k = 0; k < dims.size(); ++k) {
    const auto csv = dir / ("eye" + std::to_string(k) + ".csv");
    std::ofstream out(csv);
    for (Index r = 0; r < dims[k]; ++r)
      for (Index c = 0; c < dims[k]; ++c) out << (r == c ? "1" : "0") << (c + 1 < dims[k] ? ',' : '\n');
    marker_side += (k ? "," : "") + std::string("identity:") + std::to_string(dims[k]);
    dense_side += (k ? "," : "") + csv.string();
  }
  const std::string common = "run --tensor " + (dir / "x.tns").string() +
                             " --dims 12,10,6 --start 4,4,2 --step 4,3,2 --ranks 2,2,2 --K 3 --gamma 0.01"
                             " --n_splits 2 --seed 9 --timing false --threads 1";
  std::string log_a, log_b;
  const int a = run_cli(common + " --side " + marker_side + " --out_dir " + (dir / "marker").string(), &log_a);
  const int b = run_cli(common + " --side " + dense_side + " --out_dir " + (dir / "dense").string(), &log_b);
  if (a != 0 || b != 0) return verdict(false, fmt("CLI exit codes %d / %d: ", a, b) + log_a + log_b);
  int same = 0, files = 0;
  for (const char* f : {"split_0.csv", "split_1.csv", "summary.txt"}) {
    ++files;
    const auto x = slurp(dir / "marker" / f), y = slurp(dir / "dense" / f);
    same += (!x.empty() && x == y) ? 1 : 0;
  }
  fs::remove_all(dir);
  return verdict(same == files, fmt("%d/%d output files byte-identical (2 splits, 3 growth steps)", same, files));
}

// ---------------------------------------------------------------------------
// 6. deltas partition the observations; streaming deltas are slices

using IndexSet = std::set<std::vector<Index>>;

IndexSet index_set(const SparseTensor& t) {
  IndexSet out;
  for (const auto& e : t.entries()) out.emplace(e.index.begin(), e.index.end());
  return out;
}

Verdict streaming_partition() {
  std::mt19937_64 rng(606);
  int bad_partition = 0, bad_slices = 0;
  std::size_t snapshots = 0;
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<Index> full(3), start(3), step(3);
    for (std::size_t k = 0; k < 3; ++k) {
      full[k] = 1 + rng() % 9;
      start[k] = 1 + rng() % full[k];
      step[k] = start[k] < full[k] ? 1 + rng() % 3 : rng() % 2;
    }
    const Shape shape(full);
    const double density = 0.1 + 0.8 * static_cast<double>(rng() % 100) / 100.0;
    std::bernoulli_distribution keep(density);
    std::vector<SparseTensor::Entry> entries;
    for (Index lin = 0; lin < shape.numel(); ++lin)
      if (keep(rng)) entries.push_back({{lin / (full[1] * full[2]), lin / full[2] % full[1], lin % full[2]}, 1.0});
    const SparseTensor data(shape, std::move(entries));
    SideInfoSet side;
    for (Index d : full) side.push_back(SideInfo::identity(d));
    const IndexSet all = index_set(data);

    auto partition = [&](const GrowthPlan& plan, bool slices) {
      SnapshotStream stream(data, side, plan);
      IndexSet seen;
      std::size_t total = 0;
      bool ok = true;
      while (auto s = stream.next()) {
        ++snapshots;
        const IndexSet d = index_set(s->delta->observations);
        total += d.size();
        seen.insert(d.begin(), d.end());
        if (slices) {
          IndexSet slice;
          for (const auto& i : all)
            if (i[2] == s->step_index) slice.insert(i);
          if (slice != d) ++bad_slices;
        }
      }
      return ok && seen == all && total == all.size();
    };
    if (!partition(GrowthPlan::multi_aspect(Shape(start), step, shape), false)) ++bad_partition;
    if (!partition(GrowthPlan::streaming(shape, 2), true)) ++bad_partition;
  }
  return verdict(bad_partition == 0 && bad_slices == 0,
                 fmt("100 random plans x {multi-aspect, streaming}, %zu snapshots; %d partition failures, %d slice mismatches",
                     snapshots, bad_partition, bad_slices));
}

// ---------------------------------------------------------------------------
// 7. gradient time grows linearly with the number of observations

Verdict complexity_scaling() {
  const Shape shape{200, 200, 50};
  const std::size_t base = 50000;
  const int steps = 30;
  SideInfoSet side{SideInfo::identity(200), SideInfo::identity(200), SideInfo::identity(50)};
  Hyperparams hp;
  const auto model = init_model(Shape{3, 3, 3}, side, hp);

  std::mt19937_64 rng(77);
  std::set<Index> cells;
  while (cells.size() < 2 * base) cells.insert(rng() % shape.numel());
  std::vector<Index> order(cells.begin(), cells.end());
  std::shuffle(order.begin(), order.end(), rng);
  auto block = [&](std::size_t n) {
    std::vector<SparseTensor::Entry> e;
    for (std::size_t i = 0; i < n; ++i) e.push_back({{order[i] / 10000, order[i] / 50 % 200, order[i] % 50}, 1.0});
    return SparseTensor(shape, std::move(e));
  };
  const SparseTensor small = block(base), large = block(2 * base);

  auto timed = [&](const SparseTensor& t) {
    const auto t0 = Clock::now();
    const auto g = gradients(model, side, t, hp);
    const double ms = std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
    return g.d_core.values().empty() ? -1.0 : ms;
  };
  timed(small);
  timed(large);
  double t_small = 0.0, t_large = 0.0;
  for (int s = 0; s < steps; ++s) {  // interleaved so drift hits both sizes
    t_small += timed(small);
    t_large += timed(large);
  }
  const double ratio = t_large / t_small;
  return verdict(ratio >= 1.6 && ratio <= 2.6,
                 fmt("|Omega| %zu vs %zu over %d steps each: %.2f ms vs %.2f ms per step, ratio %.3f (in [1.6, 2.6])", base,
                     2 * base, steps, t_small / steps, t_large / steps, ratio));
}

// ---------------------------------------------------------------------------
// 8. MovieLens 100K

struct RegimeTarget {
  std::string regime;
  double target;
};

Verdict movielens() {
  const char* env = std::getenv("SIITA_ML100K_DIR");
  if (!env || !fs::exists(fs::path(env) / "u.data") || !fs::exists(fs::path(env) / "u.item"))
    return {Outcome::Skip, "set SIITA_ML100K_DIR to a directory holding u.data and u.item"};
  const fs::path dir(env);
  auto ml = movielens_ingest((dir / "u.data").string());
  const auto genres = movielens_genres((dir / "u.item").string(), ml.item_ids);
  const Shape& shape = ml.dataset.tensor.shape();
  const bool shape_ok = shape == Shape{943, 1682, 31} && ml.dataset.tensor.nnz() == 100000;
  const bool genre_ok = genres.side.rows() == 1682 && genres.side.cols() == 19;
  std::string detail = fmt("shape %s (%zu ratings), genre %zux%zu;", shape.str().c_str(), ml.dataset.tensor.nnz(),
                           static_cast<std::size_t>(genres.side.rows()), static_cast<std::size_t>(genres.side.cols()));
  if (!shape_ok || !genre_ok) return verdict(false, detail);

  Dataset ds = ml.dataset;
  ds.side[1] = genres.side;
  const std::vector<RegimeTarget> targets = {{"multi-aspect", 1.23}, {"streaming:2", 1.53}, {"batch:100", 1.534}};
  bool ok = true;
  for (const auto& [regime, target] : targets) {
    RunConfig cfg;
    cfg.tensor = "movielens";
    cfg.dims = {943, 1682, 31};
    cfg.regime = regime;
    cfg.start = {19, 34, 2};
    cfg.step = {19, 34, 1};
    cfg.ranks = {3, 3, 3};
    cfg.missing_pct = 0.2;
    cfg.seed = 2018;
    cfg.timing = false;
    cfg.inner_steps = regime.rfind("batch", 0) == 0 ? 1 : 10;

    // tune on one held-out split, then report over ten
    double best = std::numeric_limits<double>::infinity(), best_gamma = 0.0, best_lambda = 0.0;
    for (double gamma : {1e-3, 1e-4, 1e-5})
      for (double lambda : {1e-3, 1e-1}) {
        cfg.gamma = gamma;
        cfg.lambda_g = lambda;
        cfg.lambda = {lambda};
        cfg.n_splits = 1;
        try {
          const auto s = run_experiment(cfg, ds);
          if (s.mean_average_test_rmse && *s.mean_average_test_rmse < best) {
            best = *s.mean_average_test_rmse;
            best_gamma = gamma;
            best_lambda = lambda;
          }
        } catch (const NumericalError&) {
        }
      }
    if (best_gamma == 0.0) {
      ok = false;
      detail += " " + regime + ": every grid point diverged;";
      continue;
    }
    cfg.gamma = best_gamma;
    cfg.lambda_g = best_lambda;
    cfg.lambda = {best_lambda};
    cfg.n_splits = 10;
    cfg.seed = 4242;  // fresh splits for the report
    const auto s = run_experiment(cfg, ds);
    const double got = s.mean_average_test_rmse.value_or(std::numeric_limits<double>::infinity());
    const bool hit = std::abs(got - target) <= 0.25;
    ok = ok && hit;
    detail += fmt(" %s: %.4f vs %.3f+-0.25 (gamma %.0e, lambda %.0e)%s;", regime.c_str(), got, target, best_gamma,
                  best_lambda, hit ? "" : " OUT");
  }
  return verdict(ok, detail);
}

// ---------------------------------------------------------------------------
// 9. purity: hand examples and planted block clusters

struct ClusterProblem {
  SparseTensor data;
  SideInfoSet side;
  Labels labels;
};

// users x items x weeks with three planted blocks, 60% of cells observed
// (off-block cells observed as zeros). Side features: two per block with
// noisy membership weights plus a small uniform floor.
ClusterProblem cluster_problem(std::uint64_t seed) {
  const Index users = 24, items = 30, weeks = 6, blocks = 3;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  ClusterProblem p;
  std::vector<SparseTensor::Entry> e;
  for (Index u = 0; u < users; ++u)
    for (Index i = 0; i < items; ++i)
      for (Index t = 0; t < weeks; ++t) {
        if (u01(rng) >= 0.6) continue;
        const bool on_block = u * blocks / users == i * blocks / items;
        e.push_back({{u, i, t}, on_block ? 1.0 + 0.5 * u01(rng) : 0.0});
      }
  p.data = SparseTensor(Shape{users, items, weeks}, std::move(e));
  auto features = [&](Index rows) {
    DenseMatrix a(rows, 2 * blocks);
    for (Index r = 0; r < rows; ++r)
      for (Index f = 0; f < 2 * blocks; ++f)
        a(r, f) = (f / 2 == r * blocks / rows ? 0.5 + 0.5 * u01(rng) : 0.0) + 0.1 * u01(rng);
    return a;
  };
  p.side = {SideInfo::dense(features(users)), SideInfo::dense(features(items)), SideInfo::identity(weeks)};
  p.labels.resize(items);
  for (Index i = 0; i < items; ++i) p.labels[i] = {static_cast<int>(i * blocks / items)};
  return p;
}

struct ClusterOutcome {
  double purity = 0.0;
  bool zero_in_top = false;  // a top-w set reached into zero-valued rows
  std::size_t blocks = 0;
};

ClusterOutcome cluster_once(std::uint64_t seed) {
  const auto p = cluster_problem(seed);
  Hyperparams hp;
  hp.gamma = 1e-3;
  hp.inner_steps = 300;
  hp.lambda_g = 0.0;
  hp.lambda = {0.0};
  hp.seed = seed;
  const auto plan = GrowthPlan::multi_aspect(Shape{8, 10, 2}, {4, 5, 1}, p.data.shape());
  const auto run = run_clustering(p.data, p.side, plan, Shape{3, 3, 1}, hp, 1, p.labels, 10);
  const auto proj = p.side[1].multiply(run.model.factors[1]);
  ClusterOutcome out;
  out.purity = run.final_report.average_purity;
  std::set<int> seen;
  for (const auto& c : run.final_report.per_cluster) {
    seen.insert(p.labels[c.top_items.front()].front());
    for (Index i : c.top_items) out.zero_in_top = out.zero_in_top || !(proj(i, c.column) > 0.0);
  }
  out.blocks = seen.size();
  return out;
}

Verdict purity_oracle() {
  // hand-enumerated values
  auto single = [](std::initializer_list<int> cats) {
    Labels l;
    for (int c : cats) l.push_back({c});
    return l;
  };
  const std::vector<Index> five = {0, 1, 2, 3, 4}, three = {0, 1, 2};
  const bool ex1 = cluster_purity(five, single({0, 0, 0, 1, 2})) == 0.6;
  DenseMatrix cols(10, 2);
  for (Index i = 0; i < 5; ++i) cols(i, 0) = 10.0 - static_cast<double>(i);
  for (Index i = 5; i < 10; ++i) cols(i, 1) = static_cast<double>(i);
  const bool ex2 = std::abs(purity_from_projection(cols, 0, single({0, 0, 0, 1, 2, 0, 0, 0, 0, 0}), 5).average_purity - 0.8) < 1e-15;
  const bool ex3 = std::abs(cluster_purity(three, Labels{{0, 1}, {0}, {2}}) - 2.0 / 3.0) < 1e-15;

  // planted clusters; a run only counts when every top-w row is positive,
  // so ties among all-zero rows cannot pass as clusters
  const auto main = cluster_once(42);
  int pass_rate = 0;
  for (std::uint64_t s = 1; s <= 20; ++s) {
    const auto o = cluster_once(s);
    pass_rate += (o.purity >= 0.9 && !o.zero_in_top) ? 1 : 0;
  }
  const bool ok = ex1 && ex2 && ex3 && main.purity >= 0.9 && !main.zero_in_top;
  return verdict(ok, fmt("hand examples %s; planted 24x30x6, rank (3,3,1), w=10: average purity %.3f (>= 0.9), "
                         "%zu distinct blocks, zero rows in top-w: %s; seeds 1-20 passing: %d/20",
                         ex1 && ex2 && ex3 ? "0.6/0.8/0.667 ok" : "MISMATCH", main.purity, main.blocks,
                         main.zero_in_top ? "yes" : "no", pass_rate));
}

// ---------------------------------------------------------------------------

struct Criterion {
  int id;
  const char* name;
  std::function<Verdict()> check;
};

}  // namespace

int main(int argc, char** argv) {
  bool movielens_mode = false;
  std::set<int> only;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--movielens") {
      movielens_mode = true;
    } else if (a == "--only" && i + 1 < argc) {
      for (auto f : detail::split_on(argv[++i], ',')) only.insert(std::atoi(std::string(f).c_str()));
    } else {
      std::fprintf(stderr, "usage: acceptance [--movielens] [--only 1,2,...]\n");
      return 2;
    }
  }

  const std::vector<Criterion> criteria = {
      {1, "gradient correctness", gradient_correctness},
      {2, "reconstruction equivalence", reconstruction_equivalence},
      {3, "synthetic recovery", synthetic_recovery},
      {4, "nonnegativity invariant", nonnegativity_invariant},
      {5, "identity ablation bit-equality", identity_ablation},
      {6, "streaming partition", streaming_partition},
      {7, "complexity scaling", complexity_scaling},
      {8, "MovieLens 100K reproduction", movielens},
      {9, "purity oracle", purity_oracle},
  };

  int failed = 0, skipped = 0;
  for (const auto& c : criteria) {
    if (movielens_mode && c.id != 8) continue;
    if (!only.empty() && !only.count(c.id)) continue;
    Verdict v;
    const auto t0 = Clock::now();
    if (c.id == 8 && !movielens_mode && only.empty()) {
      v = {Outcome::Skip, "run 'acceptance --movielens' with SIITA_ML100K_DIR set"};
    } else {
      // rank-above-features warnings from random instances are expected here
      std::ostringstream sink;
      auto* saved = std::cerr.rdbuf(sink.rdbuf());
      try {
        v = c.check();
      } catch (const std::exception& e) {
        v = {Outcome::Fail, std::string("exception: ") + e.what()};
      }
      std::cerr.rdbuf(saved);
    }
    const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
    const char* tag = v.outcome == Outcome::Pass ? "PASS" : v.outcome == Outcome::Fail ? "FAIL" : "SKIP";
    std::printf("[%s] %d %s (%.1fs): %s\n", tag, c.id, c.name, secs, v.detail.c_str());
    std::fflush(stdout);
    failed += v.outcome == Outcome::Fail;
    skipped += v.outcome == Outcome::Skip;
  }
  if (failed) return 1;
  if (movielens_mode && skipped) return 77;
  return 0;
}
