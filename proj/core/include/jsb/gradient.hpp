#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "jsb/env.hpp"
#include "jsb/estimators.hpp"

namespace jsb {

struct GradientSample {
  Vector vector;
  std::uint64_t seed = 0;
  std::uint64_t replication = 0;
};

enum class VarianceKind { mc_population, microbatch_unbiased };

std::string_view to_string(VarianceKind k) noexcept;

/// Estimate of Tr Var[g]. Monte Carlo readings refer to a single-batch g;
/// micro-batch readings refer to the average of the M samples they were
/// computed from.
struct VarianceReading {
  double trace_var = 0.0;
  std::size_t n_samples = 0;
  VarianceKind kind = VarianceKind::mc_population;
  /// Standard error of trace_var (Monte Carlo only; 0 otherwise).
  double stderr_estimate = 0.0;
};

/// g = (1/n) sum_i (1/m) sum_j (r_i^j - b_i^j) * score(x_i, y_i^j).
/// The batch must carry response ids; throws ShapeError on mismatched shapes.
Vector policy_gradient(const TabularPolicy& policy, const RewardBatch& batch, const BaselineMatrix& baseline);

/// Same estimator with the advantage matrix supplied directly (used for GRPO).
Vector policy_gradient_from_advantages(const TabularPolicy& policy, const RewardBatch& batch, const Matrix& advantages);

/// Gradient of `estimator` on `batch`, dispatching to compute_advantages.
Vector estimator_gradient(const TabularPolicy& policy, const RewardBatch& batch, Estimator estimator,
                          const EstimatorParams& params);

/// Batch of replication `replication`: n prompt indices from the prompts
/// stream, rollouts from the rollouts stream; model k is policy prompt k.
RewardBatch draw_policy_batch(const TabularPolicy& policy, const PromptDistribution& dist, std::size_t n,
                              std::size_t m, std::uint64_t seed, std::uint32_t replication);

struct GradientMoments {
  Estimator estimator;
  Vector mean;
  /// Per-coordinate (R-1)-denominator variance of g.
  Vector coordinate_variance;
  /// Monte Carlo trace variance of a single-batch g.
  VarianceReading variance;
  /// Average of the micro-batch estimator over consecutive groups of
  /// `microbatch_size` replications (variance of a group average).
  VarianceReading microbatch;
  /// ||g_r - mean||^2 for every replication, in replication order.
  Vector squared_deviation;
};

struct MomentsRequest {
  std::size_t n = 1;
  std::size_t m = 2;
  std::size_t replications = 2;
  std::uint64_t seed = 0;
  std::size_t microbatch_size = 8;
  unsigned threads = 1;
  EstimatorParams params;
};

/// Paired Monte Carlo moments: every estimator sees the same R batches.
/// Throws ShapeError when R < 2.
std::vector<GradientMoments> mc_gradient_moments(const TabularPolicy& policy, const PromptDistribution& dist,
                                                 std::span<const Estimator> estimators, const MomentsRequest& req);

GradientMoments mc_gradient_moments(const TabularPolicy& policy, const PromptDistribution& dist, std::size_t n,
                                    std::size_t m, Estimator estimator, std::size_t replications, std::uint64_t seed,
                                    unsigned threads = 1);

/// (1/M) (1/(M-1)) sum_i ||g_i - g_bar||^2, the unbiased estimate of the trace
/// variance of the M-sample average. Samples are put in lexicographic order
/// before summing, so the result is independent of their order. Not clamped:
/// finite-precision results may be marginally negative. Throws ShapeError when M < 2.
VarianceReading microbatch_trace_variance(std::span<const GradientSample> samples);

}  // namespace jsb
