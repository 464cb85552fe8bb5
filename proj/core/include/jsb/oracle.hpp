#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string_view>

#include "jsb/env.hpp"
#include "jsb/estimators.hpp"

namespace jsb {

/// Largest outcome space any exact enumeration will visit.
inline constexpr std::uint64_t kEnumerationLimit = 1'000'000;

/// prod_i K_i^m for fixed prompts, saturating at UINT64_MAX.
std::uint64_t outcome_count(std::span<const PromptModel> prompts, std::size_t m);
/// (sum_k K_k^m)^n: prompt assignments times response tuples.
std::uint64_t population_outcome_count(const PromptDistribution& dist, std::size_t n, std::size_t m);

using OutcomeVisitor = std::function<void(const RewardBatch& batch, double probability)>;

/// Calls `visit` once per response tuple of the fixed prompts, in mixed-radix
/// order (row-major over (i, j), last index fastest). Probabilities are
/// products formed in log space and exponentiated once; zero-probability
/// tuples are skipped. Throws TractabilityError above kEnumerationLimit.
void for_each_outcome(std::span<const PromptModel> prompts, std::size_t m, const OutcomeVisitor& visit);

/// Same over prompt assignments drawn i.i.d. from `dist` and then response
/// tuples. batch.prompt_ids holds the model indices.
void for_each_population_outcome(const PromptDistribution& dist, std::size_t n, std::size_t m,
                                 const OutcomeVisitor& visit);

struct EnumerationResult {
  Vector expected_gradient;
  /// (1/(n m)) sum_ij E[(b_i^j - mu_i)^2] of the estimator's baseline.
  double expected_mse = 0.0;
  std::uint64_t outcome_count = 0;
  /// E||g||^2 and Tr Var[g] = E||g||^2 - ||E g||^2.
  double expected_sq_norm = 0.0;
  double trace_variance = 0.0;
};

/// Exact E[g] over every response tuple for fixed prompts (policy prompt
/// indices; repeats allowed).
EnumerationResult enumerate_expected_gradient(const TabularPolicy& policy, std::span<const std::size_t> prompts,
                                              std::size_t m, Estimator estimator, const EstimatorParams& params = {});

/// Exact baseline MSE against the true prompt means, fixed prompts.
double exact_baseline_mse(std::span<const PromptModel> prompts, std::size_t m, Estimator estimator,
                          const EstimatorParams& params = {});

/// Exact baseline MSE with prompts drawn from `dist`.
double exact_baseline_mse_population(const PromptDistribution& dist, std::size_t n, std::size_t m,
                                     Estimator estimator, const EstimatorParams& params = {});

enum class MseConvention {
  gamma_naive,      ///< t = gamma in (1-gamma) mu_hat_i + gamma * loo_batch_mean_i, fixed prompts
  lambda_loo,       ///< t = lambda in the leave-one-out shrinkage baseline, prompts drawn from D
};

std::string_view to_string(MseConvention c) noexcept;

/// MSE(t) = a t^2 + b t + c.
struct QuadraticMse {
  double a = 0.0;
  double b = 0.0;
  double c = 0.0;
  MseConvention convention = MseConvention::gamma_naive;

  double operator()(double t) const noexcept { return (a * t + b) * t + c; }
  /// -b / (2a); 0 when a == 0.
  double argmin() const noexcept { return a == 0.0 ? 0.0 : -b / (2.0 * a); }
};

/// (n/(n-1)) (s+v) gamma^2 - 2 v gamma + v with v = sum sigma_i^2/(n m) and
/// s the (n-1)-denominator variance of the true means. Needs n >= 2, m >= 1.
QuadraticMse mse_quadratic_fixed_prompts(std::span<const PromptModel> prompts, std::size_t m);

/// (n/(n-1)) (s2+v2) lambda^2 - 2 v2 lambda + v2 with v2 = E[sigma^2]/(m-1)
/// and s2 = Var[mu], the closed form whose vertex is ((n-1)/n) v2/(s2+v2).
QuadraticMse mse_quadratic_population(const PromptDistribution& dist, std::size_t n, std::size_t m);

/// Exact population MSE of the leave-one-out shrinkage baseline. The batch
/// anchor averages full m-rollout prompt means, whose variance is
/// sigma^2/m, so the lambda^2 coefficient is
///   n/(n-1) s2 + v2 + E[sigma^2] / (m (n-1)).
QuadraticMse mse_quadratic_population_exact(const PromptDistribution& dist, std::size_t n, std::size_t m);

/// Enumerated MSE of (1-gamma) mu_hat_i + gamma * loo_batch_mean_i for each gamma.
Vector enumerate_naive_shrinkage_mse(std::span<const PromptModel> prompts, std::size_t m, std::span<const double> gammas);

/// Enumerated population MSE of (1-lambda) rloo_i^j + lambda * loo_batch_mean_i for each lambda.
Vector enumerate_loo_shrinkage_mse(const PromptDistribution& dist, std::size_t n, std::size_t m,
                                   std::span<const double> lambdas);

struct GridSearchResult {
  double best = 0.0;
  std::size_t best_index = 0;
  Vector mse;
};

/// Grid search over gamma for fixed prompts (gamma_naive convention).
GridSearchResult mse_grid_search(std::span<const PromptModel> prompts, std::size_t m, std::span<const double> grid);
/// Grid search over lambda with prompts drawn from dist (lambda_loo convention).
GridSearchResult mse_grid_search(const PromptDistribution& dist, std::size_t n, std::size_t m,
                                 std::span<const double> grid);

/// Vertex of the parabola through three (t, f) points.
double parabola_vertex(std::span<const double, 3> t, std::span<const double, 3> f);

/// Closed-form coefficient for js2_oracle_lambda on fixed prompts:
/// ((n-1)/n) v2 / (s + v2), v2 = mean sigma^2/(m-1), s as in mse_quadratic_fixed_prompts.
double oracle_lambda(std::span<const PromptModel> prompts, std::size_t m);
/// Population version ((n-1)/n) v2/(s2+v2).
double oracle_lambda(const PromptDistribution& dist, std::size_t n, std::size_t m);

}  // namespace jsb
