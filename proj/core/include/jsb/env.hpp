#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "jsb/numeric.hpp"
#include "jsb/rng.hpp"

namespace jsb {

/// Finite-support reward law of one prompt under the current policy.
class PromptModel {
 public:
  /// Throws ConfigError unless probs are nonnegative, sum to 1 within 1e-12
  /// and match the support length (K >= 1).
  PromptModel(std::size_t prompt_id, std::vector<double> support, std::vector<double> probs);

  static PromptModel bernoulli(std::size_t prompt_id, double p);
  static PromptModel point_mass(std::size_t prompt_id, double value);

  std::size_t prompt_id() const noexcept { return prompt_id_; }
  std::size_t size() const noexcept { return support_.size(); }
  std::span<const double> support() const noexcept { return support_; }
  std::span<const double> probs() const noexcept { return probs_; }

  /// Value function mu(x) = sum_k p_k r_k.
  double mean() const noexcept { return mean_; }
  /// sigma^2(x) = sum_k p_k (r_k - mu)^2.
  double variance() const noexcept { return variance_; }

 private:
  std::size_t prompt_id_;
  std::vector<double> support_;
  std::vector<double> probs_;
  double mean_;
  double variance_;
};

/// Finite mixture over prompt models; stands in for the prompt distribution.
class PromptDistribution {
 public:
  PromptDistribution(std::vector<PromptModel> models, std::vector<double> weights);

  static PromptDistribution uniform(std::vector<PromptModel> models);

  /// {"models":[{"support":[...],"probs":[...]}...],"weights":[...]}.
  /// "weights" may be omitted, meaning uniform.
  static PromptDistribution from_json(const nlohmann::json& doc);
  static PromptDistribution load(const std::filesystem::path& path);
  nlohmann::json to_json() const;

  std::size_t size() const noexcept { return models_.size(); }
  const PromptModel& model(std::size_t k) const { return models_.at(k); }
  const std::vector<PromptModel>& models() const noexcept { return models_; }
  std::span<const double> weights() const noexcept { return weights_; }

 private:
  std::vector<PromptModel> models_;
  std::vector<double> weights_;
};

/// Per-prompt softmax policy over a finite response set; response k of
/// prompt x earns reward_table[x][k]. The flattened parameter vector
/// concatenates the prompt logit blocks in prompt order.
class TabularPolicy {
 public:
  TabularPolicy(std::vector<std::vector<double>> logits, std::vector<std::vector<double>> reward_table);

  /// Logits log(p_k) and rewards = support for every model. Requires every
  /// probability to be strictly positive.
  static TabularPolicy from_distribution(const PromptDistribution& dist);

  std::size_t num_prompts() const noexcept { return offsets_.size() - 1; }
  std::size_t num_responses(std::size_t prompt) const;
  std::size_t num_params() const noexcept { return params_.size(); }
  std::size_t offset(std::size_t prompt) const { return offsets_.at(prompt); }

  std::span<const double> logits(std::size_t prompt) const;
  std::span<const double> rewards(std::size_t prompt) const;
  std::span<const double> parameters() const noexcept { return params_; }

  /// softmax(logits(prompt)).
  Vector probabilities(std::size_t prompt) const;
  /// Reward law induced by this policy on `prompt`.
  PromptModel prompt_model(std::size_t prompt) const;
  /// sum_y pi(y|x) r(x, y).
  double expected_reward(std::size_t prompt) const;

  /// theta <- theta + step_size * direction.
  void ascend(std::span<const double> direction, double step_size);

 private:
  void check_prompt(std::size_t prompt) const;

  Vector params_;
  Vector rewards_;
  std::vector<std::size_t> offsets_;
};

/// One RL step's rewards: row i holds the m rollouts of prompt prompt_ids[i].
struct RewardBatch {
  std::vector<std::size_t> prompt_ids;
  Matrix rewards;
  std::optional<IndexMatrix> response_ids;

  std::size_t n() const noexcept { return rewards.rows(); }
  std::size_t m() const noexcept { return rewards.cols(); }

  /// Batch with prompt ids 0..n-1 and no response ids; handy for estimator-only use.
  static RewardBatch from_rows(const std::vector<std::vector<double>>& rows);
};

/// n i.i.d. model indices drawn by weight from consecutive draws of `stream`.
std::vector<std::size_t> sample_prompt_indices(const PromptDistribution& dist, std::size_t n,
                                               RngStream& stream);

std::vector<PromptModel> sample_prompts(const PromptDistribution& dist, std::size_t n, RngStream& stream);

/// Row i draws its m response indices from stream.substream(i), so rows can
/// be generated independently of each other. response_ids is always filled.
RewardBatch sample_rewards(std::span<const PromptModel> prompts, std::size_t m, const RngStream& stream);

/// d/dtheta log pi(y|x): block of `prompt` is e_y - pi(.|x), all other blocks zero.
Vector score_vector(const TabularPolicy& policy, std::size_t prompt, std::size_t response);

/// Adds coeff * score_vector(policy, prompt, response) into out, using
/// precomputed probabilities of that prompt.
void add_scaled_score(const TabularPolicy& policy, std::size_t prompt, std::size_t response,
                      std::span<const double> probs, double coeff, std::span<double> out);

/// J restricted to the listed prompts: mean over the list of expected rewards.
double expected_reward(const TabularPolicy& policy, std::span<const std::size_t> prompts);
/// J under a prompt distribution whose model k is policy prompt k.
double expected_reward(const TabularPolicy& policy, std::span<const double> weights);

/// Exact gradient of expected_reward(policy, prompts).
Vector exact_grad_J(const TabularPolicy& policy, std::span<const std::size_t> prompts);
/// Exact gradient of expected_reward(policy, weights).
Vector exact_grad_J(const TabularPolicy& policy, std::span<const double> weights);

/// Ground-truth value statistics.
///   v  = (1/(n m)) sum_i sigma_i^2           s  = (1/(n-1)) sum_i (mu_i - mu_bar)^2
///   v2 = E[sigma^2] / (m - 1)                s2 = Var[mu]
/// For a prompt list, E and Var are taken uniformly over the list (s = 0 when n = 1).
struct ValueStats {
  double v = 0.0;
  double s = 0.0;
  double v2 = 0.0;
  double s2 = 0.0;
  double mean_sigma2 = 0.0;
  Vector mu;
  Vector sigma2;
};

/// Throws InvalidRolloutCount when m < 2.
ValueStats true_value_stats(std::span<const PromptModel> prompts, std::size_t m);
/// Population form over a distribution; v and s are left at 0.
ValueStats true_value_stats(const PromptDistribution& dist, std::size_t m);

}  // namespace jsb
