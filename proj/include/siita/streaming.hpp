#pragma once

// Growth plans and snapshot emission for the three experimental regimes.
//
// Snapshot t has dims(t) = min(start + t * step, full) componentwise. Each
// observation is delivered exactly once, at the first snapshot whose shape
// contains it.

#include <algorithm>
#include <cstddef>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "siita/error.hpp"
#include "siita/model.hpp"
#include "siita/optimizer.hpp"
#include "siita/tensor.hpp"

namespace siita {

enum class Regime { MultiAspect, Streaming, Batch };

class GrowthPlan {
 public:
  static GrowthPlan multi_aspect(Shape start, std::vector<Index> step, Shape full) {
    GrowthPlan p;
    p.regime_ = Regime::MultiAspect;
    p.start_ = std::move(start);
    p.step_ = std::move(step);
    p.full_ = std::move(full);
    p.validate();
    return p;
  }

  // One slice of `mode` per step; other modes are fixed at full size.
  static GrowthPlan streaming(Shape full, std::size_t mode) {
    if (mode >= full.order()) throw ConfigError("stream mode " + std::to_string(mode) + " out of range");
    GrowthPlan p;
    p.regime_ = Regime::Streaming;
    p.stream_mode_ = mode;
    auto start = full.dims();
    start[mode] = 1;
    p.start_ = Shape(start);
    p.step_.assign(full.order(), 0);
    p.step_[mode] = 1;
    p.full_ = std::move(full);
    p.validate();
    return p;
  }

  static GrowthPlan batch(Shape full, int passes) {
    if (passes < 1) throw ConfigError("batch passes must be >= 1");
    GrowthPlan p;
    p.regime_ = Regime::Batch;
    p.passes_ = passes;
    p.start_ = full;
    p.step_.assign(full.order(), 0);
    p.full_ = std::move(full);
    p.validate();
    return p;
  }

  Regime regime() const noexcept { return regime_; }
  std::size_t stream_mode() const noexcept { return stream_mode_; }
  int passes() const noexcept { return passes_; }
  const Shape& start() const noexcept { return start_; }
  const std::vector<Index>& step() const noexcept { return step_; }
  const Shape& full() const noexcept { return full_; }

  Shape dims_at(std::size_t t) const {
    if (regime_ == Regime::Batch) return full_;
    std::vector<Index> d(full_.order());
    for (std::size_t k = 0; k < d.size(); ++k) d[k] = std::min(full_[k], start_[k] + t * step_[k]);
    return Shape(std::move(d));
  }

  // Number of emitted snapshots.
  std::size_t steps() const {
    if (regime_ == Regime::Batch) return static_cast<std::size_t>(passes_);
    std::size_t last = 0;
    for (std::size_t k = 0; k < full_.order(); ++k) {
      const Index missing = full_[k] - start_[k];
      if (missing == 0) continue;
      last = std::max<std::size_t>(last, (missing + step_[k] - 1) / step_[k]);
    }
    return last + 1;
  }

  // First snapshot whose shape contains `index` (always 0 for Batch).
  template <typename I>
  std::size_t first_step(std::span<const I> index) const {
    if (regime_ == Regime::Batch) return 0;
    std::size_t t = 0;
    for (std::size_t k = 0; k < full_.order(); ++k) {
      const Index i = static_cast<Index>(index[k]);
      if (i < start_[k]) continue;
      // need start + t*step > i
      t = std::max<std::size_t>(t, (i - start_[k]) / step_[k] + 1);
    }
    return t;
  }

 private:
  void validate() const {
    if (start_.order() != full_.order() || step_.size() != full_.order())
      throw ConfigError("growth plan: start, step and full must have the same order");
    if (!start_.fits_within(full_)) throw ConfigError("growth plan: start dims exceed full dims");
    for (std::size_t k = 0; k < full_.order(); ++k)
      if (start_[k] < full_[k] && step_[k] == 0)
        throw ConfigError("growth plan: mode " + std::to_string(k) + " never reaches full size (step is 0)");
  }

  Regime regime_ = Regime::Batch;
  std::size_t stream_mode_ = 0;
  int passes_ = 1;
  Shape start_;
  std::vector<Index> step_;
  Shape full_;
};

inline std::size_t plan_steps(const GrowthPlan& plan) { return plan.steps(); }

struct SnapshotView {
  std::size_t step_index = 0;
  Shape dims;
  std::shared_ptr<const DeltaBlock> delta;
  std::shared_ptr<const SideInfoSet> side_view;
};

// Sequential snapshot iterator. Observations are bucketed up front; views
// share their buffers, so Batch passes cost no copies.
class SnapshotStream {
 public:
  SnapshotStream(const SparseTensor& dataset, const SideInfoSet& side, GrowthPlan plan) : plan_(std::move(plan)) {
    if (dataset.shape() != plan_.full())
      throw ShapeError("dataset shape " + dataset.shape().str() + " differs from plan full dims " +
                       plan_.full().str());
    check_data_shape(dataset, side);

    const std::size_t total = plan_.steps();
    const std::size_t buckets = plan_.regime() == Regime::Batch ? 1 : total;
    std::vector<std::vector<std::size_t>> positions(buckets);
    for (std::size_t e = 0; e < dataset.nnz(); ++e) positions[plan_.first_step(dataset.index(e))].push_back(e);

    Shape prev;
    for (std::size_t t = 0; t < buckets; ++t) {
      Shape dims = plan_.dims_at(t);
      auto block = std::make_shared<DeltaBlock>();
      block->observations = dataset.select(positions[t], dims);
      for (std::size_t k = 0; k < dims.order(); ++k)
        block->new_side_rows.push_back({t == 0 ? 0 : prev[k], dims[k]});
      deltas_.push_back(std::move(block));
      sides_.push_back(std::make_shared<const SideInfoSet>(truncate_side(side, dims)));
      prev = std::move(dims);
    }
  }

  const GrowthPlan& plan() const noexcept { return plan_; }
  std::size_t size() const { return plan_.steps(); }

  std::optional<SnapshotView> next() {
    if (cursor_ >= size()) return std::nullopt;
    const std::size_t t = cursor_++;
    const std::size_t b = plan_.regime() == Regime::Batch ? 0 : t;
    return SnapshotView{t, plan_.dims_at(t), deltas_[b], sides_[b]};
  }

  void reset() noexcept { cursor_ = 0; }

 private:
  GrowthPlan plan_;
  std::vector<std::shared_ptr<const DeltaBlock>> deltas_;
  std::vector<std::shared_ptr<const SideInfoSet>> sides_;
  std::size_t cursor_ = 0;
};

inline SnapshotStream emit_snapshots(const SparseTensor& dataset, const SideInfoSet& side, GrowthPlan plan) {
  return SnapshotStream(dataset, side, std::move(plan));
}

}  // namespace siita
