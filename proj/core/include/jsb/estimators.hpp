#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "jsb/env.hpp"
#include "jsb/numeric.hpp"

namespace jsb {

/// Baseline / advantage estimators. The first eleven are the public
/// identifiers accepted in configs and written to reports; the last two are
/// oracle-only variants.
enum class Estimator {
  prompt_mean,
  rloo,
  bloo,
  global_mean,
  js1,
  js2,
  js2_debiased,
  grpo,
  grpo_nostd,
  remax,
  none,
  global_mean_loo,
  js2_oracle_lambda,
};

std::string_view to_string(Estimator e) noexcept;
/// Parses a public identifier; `allow_internal` also accepts the oracle-only ones.
std::optional<Estimator> parse_estimator(std::string_view id, bool allow_internal = false) noexcept;
std::span<const Estimator> public_estimators() noexcept;

/// True when b_i^j is a function of the batch with r_i^j removed.
bool is_leave_one_out(Estimator e) noexcept;

/// n x m matrix of per-sample baselines b_i^j.
struct BaselineMatrix {
  Matrix values;

  double operator()(std::size_t i, std::size_t j) const { return values(i, j); }
  friend bool operator==(const BaselineMatrix&, const BaselineMatrix&) = default;
};

/// Per-prompt plug-in shrinkage statistics, each computed from the batch with
/// prompt i removed.
struct ShrinkageDiagnostics {
  Vector v_hat;           ///< within-prompt noise of the prompt means
  Vector s_hat;           ///< spread of the other prompts' means
  Vector lambda_hat;      ///< in [0, (n-1)/n]
  Vector loo_batch_mean;  ///< mean of the other prompts' means
};

enum class ShrinkageMode {
  paper,     ///< v_hat = mean over k != i of var_k / m, s_hat = spread of the other means (default)
  debiased,  ///< v_hat * m/(m-1), s_hat = max(0, s_hat - v_hat)
};

/// mu_hat_i = (1/m) sum_j r_i^j.
Vector prompt_means(const RewardBatch& batch);

/// b_i^j = mean of row i without r_i^j. Throws InvalidRolloutCount for m < 2.
BaselineMatrix rloo_baseline(const RewardBatch& batch);

/// b_i^j = mean of the other prompts' means. Throws InvalidBatchSize for n < 2.
BaselineMatrix bloo_baseline(const RewardBatch& batch);

/// Every entry is the grand mean of the batch.
BaselineMatrix global_mean_baseline(const RewardBatch& batch);

/// b_i^j = grand mean of the batch without r_i^j. Needs n*m >= 2.
BaselineMatrix global_mean_loo_baseline(const RewardBatch& batch);

/// Naive shrinkage (1 - lambda) mu_hat_i + lambda * grand mean. Uses r_i^j
/// itself, so the resulting policy gradient is biased.
BaselineMatrix naive_js_baseline(const RewardBatch& batch, double lambda);

struct OptimalLambda {
  double gamma_star = 0.0;   ///< ((n-1)/n) v / (s + v), leave-one-out form
  double lambda_star = 0.0;  ///< v / (s + v), naive form
  bool degenerate = false;   ///< v + s == 0; both coefficients are 0
};

OptimalLambda optimal_lambda_known(double v, double s, std::size_t n);

/// Throws InvalidBatchSize (n < 2) or InvalidRolloutCount (m < 2).
ShrinkageDiagnostics shrinkage_diagnostics(const RewardBatch& batch, ShrinkageMode mode = ShrinkageMode::paper);

struct JsBaseline {
  BaselineMatrix baseline;
  ShrinkageDiagnostics diagnostics;
};

/// James-Stein baseline (1 - lambda_i) * rloo_i^j + lambda_i * loo_batch_mean_i
/// with plug-in lambda_i.
JsBaseline js_baseline(const RewardBatch& batch, ShrinkageMode mode = ShrinkageMode::paper);

/// Same combination with caller-chosen per-prompt coefficients.
BaselineMatrix js_baseline_with_lambda(const RewardBatch& batch, std::span<const double> lambdas);

/// A_i^j = (r_i^j - mu_hat_i) / (std_i + epsilon), std with the m-1 denominator;
/// with normalize=false, A_i^j = r_i^j - mu_hat_i.
Matrix grpo_advantage(const RewardBatch& batch, double epsilon = 1e-6, bool normalize = true);

/// Reward of the highest-probability response (lowest index on ties).
BaselineMatrix remax_baseline(const TabularPolicy& policy, const RewardBatch& batch);

struct EstimatorParams {
  double js1_lambda = 0.5;
  double grpo_epsilon = 1e-6;
  /// Coefficient used by js2_oracle_lambda.
  double oracle_lambda = 0.0;
  /// Shrinkage statistics used by "js2".
  ShrinkageMode js2_mode = ShrinkageMode::paper;
  /// Needed by remax only.
  const TabularPolicy* policy = nullptr;
};

/// Baseline matrix of any estimator. GRPO variants report their centering
/// term (the prompt mean); "none" is all zeros.
BaselineMatrix compute_baseline(Estimator e, const RewardBatch& batch, const EstimatorParams& params = {});

struct Advantages {
  Matrix values;
  std::optional<ShrinkageDiagnostics> diagnostics;
};

/// r - b for baseline estimators, the GRPO formula for the grpo variants.
Advantages compute_advantages(Estimator e, const RewardBatch& batch, const EstimatorParams& params = {});

}  // namespace jsb
