#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "jsb/env.hpp"
#include "jsb/estimators.hpp"

namespace jsb {

enum class Scenario { mse_sweep, grad_variance, lambda_curve, oracle_check, toy_train };
enum class LambdaMode { paper, debiased, oracle };
enum class ReportFormat { csv, json };

std::string_view to_string(Scenario s) noexcept;
std::string_view to_string(LambdaMode l) noexcept;
std::string_view to_string(ReportFormat f) noexcept;
/// Accepts both "mse_sweep" and the CLI spelling "mse-sweep".
std::optional<Scenario> parse_scenario(std::string_view s) noexcept;
std::optional<ReportFormat> parse_format(std::string_view s) noexcept;

/// Experiment configuration. JSON field names match the member names.
///
/// `lambda_mode` selects what "js2" means everywhere: plug-in statistics
/// ("paper"), the debiased plug-in ("debiased"), or the closed-form
/// coefficient from the true distribution ("oracle").
struct ExperimentConfig {
  std::uint64_t seed = 0;
  std::size_t n = 16;
  std::vector<std::size_t> m{2, 4, 8};
  /// Serialize `m` as a scalar (it was given as one).
  bool m_scalar = false;
  std::vector<Estimator> estimators{Estimator::rloo, Estimator::bloo, Estimator::js2};
  /// Set when the distribution was given as a file path; kept for round-trips.
  std::optional<std::string> distribution_path;
  /// Resolved distribution; empty means the built-in heterogeneous default.
  std::optional<PromptDistribution> distribution;
  std::size_t replications = 1000;
  LambdaMode lambda_mode = LambdaMode::paper;
  std::optional<Scenario> scenario;
  /// Empty writes to stdout.
  std::string output;
  ReportFormat format = ReportFormat::csv;

  double learning_rate = 1.0;
  std::size_t steps = 200;
  std::size_t log_every = 1;
  double js1_lambda = 0.5;
  double grpo_epsilon = 1e-6;
  std::size_t microbatch_size = 8;
};

/// Relative distribution paths resolve against `base_dir`. Unknown fields and
/// out-of-range values raise ConfigError naming the field.
ExperimentConfig parse_config(const nlohmann::json& doc, const std::filesystem::path& base_dir = {});
ExperimentConfig load_config(const std::filesystem::path& path);
nlohmann::json to_json(const ExperimentConfig& cfg);

/// Scenario-specific checks (minimum n, m, replications per estimator).
void validate_for(const ExperimentConfig& cfg, Scenario scenario);

/// FNV-1a 64 of the canonical JSON (sorted keys, compact, distribution
/// inlined, output/format excluded), as 16 hex digits.
std::string config_hash(const ExperimentConfig& cfg);

/// Nine Bernoulli-reward prompts with success rates 0.1 .. 0.9, each realized
/// by a uniform policy over ten responses, weighted uniformly.
PromptDistribution default_distribution();

const PromptDistribution& effective_distribution(const ExperimentConfig& cfg);

}  // namespace jsb
