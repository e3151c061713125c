#pragma once

// Gradient kernels and the per-time-step update loop.
//
// With R the residual restricted to the observed block and P_k = A_k U_k,
//
//   dF/dU_n = -2 A_n^T [ R_(n) kron_except(P, n) G_(n)^T ] + 2 lambda_n U_n
//   dF/dG   = -2 R x_1 P_1^T ... x_N P_N^T                  + 2 lambda_g G
//
// Both data terms are accumulated in one pass over the observed entries; the
// Kronecker products are never formed.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <functional>
#include <memory>
#include <span>
#include <thread>
#include <utility>
#include <vector>

#include "siita/error.hpp"
#include "siita/model.hpp"
#include "siita/tensor.hpp"

namespace siita {

struct GradientBuffers {
  DenseTensor d_core;
  std::vector<DenseMatrix> d_factors;
};

// Row range [begin, end) newly exposed on one mode at this step.
struct RowRange {
  Index begin = 0;
  Index end = 0;
  bool empty() const noexcept { return begin == end; }
};

// Observations that arrived at one time step plus the side rows that became
// visible with them. Observation indices live in the current snapshot shape.
struct DeltaBlock {
  SparseTensor observations;
  std::vector<RowRange> new_side_rows;
};

struct StepResult {
  double objective = 0.0;  // on the delta block, after the last iteration
  double elapsed_ms = 0.0;
};

// Called after every projected/unprojected variable update inside step().
using UpdateObserver = std::function<void(const TuckerModel&)>;

namespace detail {

inline constexpr std::size_t kChunkSize = 4096;

struct ChunkRange {
  std::size_t begin;
  std::size_t end;
};

// Deterministic mode uses a partition that depends only on the entry count,
// so per-chunk partial sums merge identically for any thread count.
inline std::vector<ChunkRange> plan_chunks(std::size_t count, const Hyperparams& hp) {
  std::vector<ChunkRange> ranges;
  if (count == 0) return ranges;
  const std::size_t pieces = hp.deterministic ? (count + kChunkSize - 1) / kChunkSize
                                              : std::min<std::size_t>(static_cast<std::size_t>(hp.threads), count);
  const std::size_t base = count / pieces, extra = count % pieces;
  std::size_t at = 0;
  for (std::size_t c = 0; c < pieces; ++c) {
    const std::size_t len = hp.deterministic ? std::min(kChunkSize, count - at) : base + (c < extra ? 1 : 0);
    ranges.push_back({at, at + len});
    at += len;
  }
  return ranges;
}

template <typename Fn>
void run_chunks(std::size_t chunks, int threads, Fn&& fn) {
  const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(std::max(threads, 1)), chunks);
  if (workers <= 1) {
    for (std::size_t c = 0; c < chunks; ++c) fn(c);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::jthread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (std::size_t c = next++; c < chunks; c = next++) fn(c);
    });
}

// Data-term partial sums for one chunk of entries.
struct Partial {
  std::vector<DenseMatrix> d_proj;  // per mode, I_k x r_k
  DenseTensor d_core;
};

class Kernel {
 public:
  Kernel(const TuckerModel& model, std::span<const DenseMatrix> proj)
      : model_(model), proj_(proj), table_(core_multi_index(model.ranks())) {}

  std::vector<double> residuals(const SparseTensor& block, const Hyperparams& hp) const {
    std::vector<double> out(block.nnz());
    const auto chunks = plan_chunks(block.nnz(), hp);
    run_chunks(chunks.size(), hp.threads, [&](std::size_t c) {
      std::vector<double> scratch;
      for (std::size_t e = chunks[c].begin; e < chunks[c].end; ++e)
        out[e] = block.value(e) - predict_with(model_.core, proj_, block.index(e), scratch);
    });
    return out;
  }

  // Sum over entries of -2 r_e d(prediction)/d(P_k) and/or d/d(G).
  Partial accumulate(const SparseTensor& block, std::span<const double> residual, bool want_factors,
                     bool want_core, const Hyperparams& hp) const {
    const std::size_t n = model_.order();
    const auto chunks = plan_chunks(block.nnz(), hp);
    std::vector<Partial> partials(std::max<std::size_t>(chunks.size(), 1));
    for (auto& p : partials) init_partial(p, want_factors, want_core);

    run_chunks(chunks.size(), hp.threads, [&](std::size_t c) {
      Partial& out = partials[c];
      const Index total = model_.core.values().size();
      const auto& g = model_.core.values();
      std::vector<const double*> rows(n);
      std::vector<double*> drows(n, nullptr);
      std::vector<double> prefix(n + 1), suffix(n + 1);
      for (std::size_t e = chunks[c].begin; e < chunks[c].end; ++e) {
        const double coeff = -2.0 * residual[e];
        if (coeff == 0.0) continue;
        const auto idx = block.index(e);
        for (std::size_t k = 0; k < n; ++k) rows[k] = proj_[k].row(idx[k]).data();
        if (want_factors)
          for (std::size_t k = 0; k < n; ++k) drows[k] = out.d_proj[k].row(idx[k]).data();
        double* dcore = want_core ? out.d_core.values().data() : nullptr;

        for (Index j = 0; j < total; ++j) {
          const Index* jm = &table_[j * n];
          prefix[0] = 1.0;
          for (std::size_t k = 0; k < n; ++k) prefix[k + 1] = prefix[k] * rows[k][jm[k]];
          if (dcore) dcore[j] += coeff * prefix[n];
          if (!want_factors) continue;
          suffix[n] = 1.0;
          for (std::size_t k = n; k-- > 0;) suffix[k] = suffix[k + 1] * rows[k][jm[k]];
          const double cg = coeff * g[j];
          for (std::size_t k = 0; k < n; ++k) drows[k][jm[k]] += cg * prefix[k] * suffix[k + 1];
        }
      }
    });

    // Fixed-order merge.
    Partial& acc = partials.front();
    for (std::size_t c = 1; c < partials.size(); ++c) {
      if (want_factors)
        for (std::size_t k = 0; k < n; ++k) add_into(acc.d_proj[k].values(), partials[c].d_proj[k].values());
      if (want_core) add_into(acc.d_core.values(), partials[c].d_core.values());
    }
    return std::move(acc);
  }

 private:
  void init_partial(Partial& p, bool want_factors, bool want_core) const {
    if (want_factors)
      for (const auto& pk : proj_) p.d_proj.emplace_back(pk.rows(), pk.cols());
    if (want_core) p.d_core = DenseTensor(model_.ranks());
  }

  static void add_into(std::vector<double>& dst, const std::vector<double>& src) {
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
  }

  const TuckerModel& model_;
  std::span<const DenseMatrix> proj_;
  std::vector<Index> table_;
};

inline DenseMatrix factor_gradient(const SideInfo& side, const DenseMatrix& d_proj, const DenseMatrix& factor,
                                   double lambda) {
  DenseMatrix d = side.transpose_multiply(d_proj);
  auto& dv = d.values();
  const auto& uv = factor.values();
  for (std::size_t i = 0; i < dv.size(); ++i) dv[i] += 2.0 * lambda * uv[i];
  return d;
}

inline DenseTensor core_gradient(const DenseTensor& d_data, const DenseTensor& core, double lambda_g) {
  DenseTensor d = d_data;
  auto& dv = d.values();
  const auto& gv = core.values();
  for (std::size_t i = 0; i < dv.size(); ++i) dv[i] += 2.0 * lambda_g * gv[i];
  return d;
}

inline void descend(std::vector<double>& x, const std::vector<double>& dx, double gamma, bool nonnegative) {
  for (std::size_t i = 0; i < x.size(); ++i) {
    x[i] -= gamma * dx[i];
    if (nonnegative && !(x[i] > 0.0)) x[i] = 0.0;
  }
}

}  // namespace detail

inline SparseTensor residual_at_observed(const TuckerModel& model, const SideInfoSet& side, const SparseTensor& block,
                                         const Hyperparams& hp = {}) {
  check_data_shape(block, side);
  const auto proj = projected_factors(model, side);
  detail::Kernel kernel(model, proj);
  return block.with_values(kernel.residuals(block, hp));
}

inline GradientBuffers gradients(const TuckerModel& model, const SideInfoSet& side, const SparseTensor& block,
                                 const Hyperparams& hp) {
  check_data_shape(block, side);
  const auto proj = projected_factors(model, side);
  detail::Kernel kernel(model, proj);
  const auto r = kernel.residuals(block, hp);
  auto partial = kernel.accumulate(block, r, true, true, hp);

  GradientBuffers out;
  for (std::size_t k = 0; k < model.order(); ++k)
    out.d_factors.push_back(
        detail::factor_gradient(side[k], partial.d_proj[k], model.factors[k], hp.lambda_for(k)));
  out.d_core = detail::core_gradient(partial.d_core, model.core, hp.lambda_g);
  return out;
}

inline void apply_update(TuckerModel& model, const GradientBuffers& grads, const Hyperparams& hp) {
  if (grads.d_factors.size() != model.order() || grads.d_core.shape() != model.core.shape())
    throw ShapeError("apply_update: gradient buffers do not match the model");
  for (std::size_t k = 0; k < model.order(); ++k) {
    if (grads.d_factors[k].rows() != model.factors[k].rows() || grads.d_factors[k].cols() != model.factors[k].cols())
      throw ShapeError("apply_update: factor gradient shape mismatch on mode " + std::to_string(k));
    detail::descend(model.factors[k].values(), grads.d_factors[k].values(), hp.gamma, hp.nonnegative);
  }
  detail::descend(model.core.values(), grads.d_core.values(), hp.gamma, hp.nonnegative);
}

// K inner iterations on one delta block. Within an iteration the factor
// gradients use the residual at the iteration start; the core gradient is
// taken after the factor update.
inline StepResult step(TuckerModel& model, const SideInfoSet& side, const DeltaBlock& delta, const Hyperparams& hp,
                       const UpdateObserver& observer = {}) {
  const auto t0 = std::chrono::steady_clock::now();
  const SparseTensor& obs = delta.observations;
  check_data_shape(obs, side);
  model.check_against(side);

  for (int k = 0; k < hp.inner_steps; ++k) {
    auto proj = projected_factors(model, side);
    std::vector<double> r;
    {
      detail::Kernel kernel(model, proj);
      r = kernel.residuals(obs, hp);
      auto partial = kernel.accumulate(obs, r, true, false, hp);
      for (std::size_t m = 0; m < model.order(); ++m) {
        const auto d = detail::factor_gradient(side[m], partial.d_proj[m], model.factors[m], hp.lambda_for(m));
        detail::descend(model.factors[m].values(), d.values(), hp.gamma, hp.nonnegative);
      }
    }
    if (observer) observer(model);

    proj = projected_factors(model, side);
    detail::Kernel kernel(model, proj);
    if (hp.fresh_core_residual) r = kernel.residuals(obs, hp);
    auto partial = kernel.accumulate(obs, r, false, true, hp);
    const auto d = detail::core_gradient(partial.d_core, model.core, hp.lambda_g);
    detail::descend(model.core.values(), d.values(), hp.gamma, hp.nonnegative);
    if (observer) observer(model);
  }

  StepResult out;
  out.objective = objective(model, side, obs, hp);
  out.elapsed_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  if (!std::isfinite(out.objective)) throw NumericalError("objective became non-finite");
  return out;
}

}  // namespace siita
