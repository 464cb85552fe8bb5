#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "jsb/config.hpp"
#include "jsb/estimators.hpp"
#include "jsb/gradient.hpp"
#include "jsb/report.hpp"

namespace jsb {

/// Estimator actually run for a configured id: "js2" becomes the debiased or
/// oracle-coefficient variant under the corresponding lambda_mode.
Estimator effective_estimator(Estimator e, const ExperimentConfig& cfg);
/// Parameters for a batch of n prompts with m rollouts; the oracle coefficient
/// comes from `dist`.
EstimatorParams estimator_params(const ExperimentConfig& cfg, const PromptDistribution& dist, std::size_t n,
                                 std::size_t m);

struct MseCell {
  std::size_t m = 0;
  Estimator estimator = Estimator::rloo;
  double mse = 0.0;
  double mse_stderr = 0.0;
  std::optional<double> exact_mse;
  /// Per-replication (1/(n m)) sum (b - mu)^2, in replication order.
  Vector per_replication;
};
/// Cells ordered by m, then by configured estimator order. Every estimator
/// sees the same batches.
std::vector<MseCell> mse_sweep(const ExperimentConfig& cfg, unsigned threads = 1);
Report run_mse_sweep(const ExperimentConfig& cfg, unsigned threads = 1);

struct GradVarianceRow {
  std::size_t m = 0;
  Estimator estimator = Estimator::rloo;
  GradientMoments moments;
};
std::vector<GradVarianceRow> grad_variance(const ExperimentConfig& cfg, unsigned threads = 1);
Report run_grad_variance(const ExperimentConfig& cfg, unsigned threads = 1);

struct LambdaCurvePoint {
  std::size_t m = 0;
  /// Batch mean of lambda_hat_i for every replication.
  Vector per_replication;
  double mean = 0.0;
  double stderr_estimate = 0.0;
};
std::vector<LambdaCurvePoint> lambda_curve(const ExperimentConfig& cfg, unsigned threads = 1);
Report run_lambda_curve(const ExperimentConfig& cfg, unsigned threads = 1);

enum class CheckStatus { pass, fail, deviation };
std::string_view to_string(CheckStatus s) noexcept;

struct OracleCheckRow {
  std::string check;
  std::string detail;
  double value = 0.0;
  double threshold = 0.0;
  /// "deviation" rows are informational and never fail the suite.
  CheckStatus status = CheckStatus::pass;
};
struct OracleCheckResult {
  std::vector<OracleCheckRow> rows;
  bool passed() const noexcept;
};
/// Exact-enumeration suite on random small environments drawn from the
/// config seed; a configured distribution adds population checks with the
/// configured n and first m (TractabilityError when too large).
OracleCheckResult oracle_check(const ExperimentConfig& cfg, unsigned threads = 1);
Report run_oracle_check(const ExperimentConfig& cfg, unsigned threads = 1);
Report oracle_check_report(const ExperimentConfig& cfg, const OracleCheckResult& result);

struct TrainTrace {
  std::size_t m = 0;
  Estimator estimator = Estimator::rloo;
  std::size_t replication = 0;
  /// J(theta_t) for t = 0..steps.
  Vector expected_reward;
  /// Batch mean of lambda_hat used at step t (t >= 1) for shrinkage estimators.
  std::vector<std::optional<double>> mean_lambda;
};
/// Plain gradient ascent on the tabular policy built from the distribution,
/// `replications` independent runs per (m, estimator). Runs with equal
/// replication index share prompt and rollout streams. Throws DivergenceError
/// when J decreases for 50 consecutive steps.
std::vector<TrainTrace> toy_train(const ExperimentConfig& cfg, unsigned threads = 1);
Report run_toy_train(const ExperimentConfig& cfg, unsigned threads = 1);

inline constexpr std::size_t kDivergencePatience = 50;

Report run_scenario(const ExperimentConfig& cfg, Scenario scenario, unsigned threads = 1);

}  // namespace jsb
