#pragma once

#include <cstdint>
#include <vector>

#include "siita/optimizer.hpp"
#include "siita/testing/oracles.hpp"

namespace siita {

inline constexpr double kFiniteDifferenceTolerance = 1e-5;  // max relative error
inline constexpr double kKroneckerTolerance = 1e-10;        // max absolute error

struct GradcheckReport {
  double max_rel_error_fd = 0.0;
  double max_abs_error_kron = 0.0;
  bool passed() const noexcept {
    return max_rel_error_fd < kFiniteDifferenceTolerance && max_abs_error_kron < kKroneckerTolerance;
  }
};

// Compares the sparse gradient kernel with central finite differences and
// with the unfolding/Kronecker construction on one random instance.
// `corrupt` perturbs the kernel output (negative control).
inline GradcheckReport gradcheck(const std::vector<Index>& dims, const std::vector<Index>& ranks,
                                 const std::vector<Index>& features, std::uint64_t seed, double density = 1.0,
                                 const Hyperparams& hp_in = {}, bool corrupt = false) {
  auto inst = testing::random_instance(dims, ranks, features, density, seed);
  Hyperparams hp = hp_in;
  if (hp.lambda.empty()) hp.lambda = {hp.lambda_g};

  GradientBuffers kernel = gradients(inst.model, inst.side, inst.block, hp);
  if (corrupt) kernel.d_factors.front().values().front() += 1e-3 * (1.0 + std::abs(kernel.d_factors.front().values().front()));
  const auto fd = testing::finite_difference_gradients(inst.model, inst.side, inst.block, hp);
  const auto kron = testing::kronecker_gradients(inst.model, inst.side, inst.block, hp);
  return {testing::max_relative_error(kernel, fd), testing::max_abs_error(kernel, kron)};
}

}  // namespace siita
