#include "jsb/env.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <string>

#include "jsb/errors.hpp"

namespace jsb {
namespace {

constexpr double kSumTolerance = 1e-12;

void check_probability_vector(std::span<const double> p, const std::string& what) {
  if (p.empty()) throw ConfigError(what + " must be nonempty");
  for (double x : p) {
    if (!std::isfinite(x) || x < 0.0) throw ConfigError(what + " must be finite and nonnegative");
  }
  const double total = pairwise_sum(p);
  if (std::abs(total - 1.0) > kSumTolerance) {
    throw ConfigError(what + " must sum to 1 (got " + std::to_string(total) + ")");
  }
}

Vector softmax(std::span<const double> logits) {
  const double top = *std::max_element(logits.begin(), logits.end());
  Vector p(logits.size());
  for (std::size_t k = 0; k < p.size(); ++k) p[k] = std::exp(logits[k] - top);
  const double z = pairwise_sum(p);
  for (double& x : p) x /= z;
  return p;
}

}  // namespace

PromptModel::PromptModel(std::size_t prompt_id, std::vector<double> support, std::vector<double> probs)
    : prompt_id_(prompt_id), support_(std::move(support)), probs_(std::move(probs)) {
  if (support_.size() != probs_.size()) throw ConfigError("support and probs differ in length");
  for (double r : support_) {
    if (!std::isfinite(r)) throw ConfigError("support values must be finite");
  }
  check_probability_vector(probs_, "probs");
  Vector terms(size());
  for (std::size_t k = 0; k < size(); ++k) terms[k] = probs_[k] * support_[k];
  mean_ = pairwise_sum(terms);
  for (std::size_t k = 0; k < size(); ++k) terms[k] = probs_[k] * (support_[k] - mean_) * (support_[k] - mean_);
  variance_ = pairwise_sum(terms);
}

PromptModel PromptModel::bernoulli(std::size_t prompt_id, double p) {
  return PromptModel(prompt_id, {0.0, 1.0}, {1.0 - p, p});
}

PromptModel PromptModel::point_mass(std::size_t prompt_id, double value) {
  return PromptModel(prompt_id, {value}, {1.0});
}

PromptDistribution::PromptDistribution(std::vector<PromptModel> models, std::vector<double> weights)
    : models_(std::move(models)), weights_(std::move(weights)) {
  if (models_.empty()) throw ConfigError("prompt distribution has no models");
  if (weights_.size() != models_.size()) throw ConfigError("weights and models differ in length");
  check_probability_vector(weights_, "weights");
}

PromptDistribution PromptDistribution::uniform(std::vector<PromptModel> models) {
  if (models.empty()) throw ConfigError("prompt distribution has no models");
  std::vector<double> w(models.size(), 1.0 / static_cast<double>(models.size()));
  return PromptDistribution(std::move(models), std::move(w));
}

PromptDistribution PromptDistribution::from_json(const nlohmann::json& doc) {
  if (!doc.is_object() || !doc.contains("models") || !doc.at("models").is_array()) {
    throw ConfigError("distribution needs a \"models\" array");
  }
  std::vector<PromptModel> models;
  std::size_t id = 0;
  try {
    for (const auto& m : doc.at("models")) {
      models.emplace_back(id++, m.at("support").get<std::vector<double>>(), m.at("probs").get<std::vector<double>>());
    }
    if (!doc.contains("weights")) return uniform(std::move(models));
    return PromptDistribution(std::move(models), doc.at("weights").get<std::vector<double>>());
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed distribution: ") + e.what());
  }
}

PromptDistribution PromptDistribution::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open distribution file " + path.string());
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("cannot parse " + path.string() + ": " + e.what());
  }
  return from_json(doc);
}

nlohmann::json PromptDistribution::to_json() const {
  nlohmann::json models = nlohmann::json::array();
  for (const auto& m : models_) {
    models.push_back({{"support", Vector(m.support().begin(), m.support().end())},
                      {"probs", Vector(m.probs().begin(), m.probs().end())}});
  }
  return {{"models", std::move(models)}, {"weights", weights_}};
}

TabularPolicy::TabularPolicy(std::vector<std::vector<double>> logits, std::vector<std::vector<double>> reward_table) {
  if (logits.empty()) throw ConfigError("policy has no prompts");
  if (logits.size() != reward_table.size()) throw ConfigError("logits and reward table differ in prompt count");
  offsets_.push_back(0);
  for (std::size_t x = 0; x < logits.size(); ++x) {
    if (logits[x].empty()) throw ConfigError("prompt " + std::to_string(x) + " has no responses");
    if (logits[x].size() != reward_table[x].size()) {
      throw ConfigError("prompt " + std::to_string(x) + ": logits and rewards differ in length");
    }
    for (std::size_t k = 0; k < logits[x].size(); ++k) {
      if (!std::isfinite(logits[x][k]) || !std::isfinite(reward_table[x][k])) {
        throw ConfigError("prompt " + std::to_string(x) + ": logits and rewards must be finite");
      }
      params_.push_back(logits[x][k]);
      rewards_.push_back(reward_table[x][k]);
    }
    offsets_.push_back(params_.size());
  }
}

TabularPolicy TabularPolicy::from_distribution(const PromptDistribution& dist) {
  std::vector<std::vector<double>> logits, rewards;
  for (const auto& m : dist.models()) {
    std::vector<double> row;
    for (double p : m.probs()) {
      if (p <= 0.0) throw ConfigError("tabular policy needs strictly positive response probabilities", "distribution");
      row.push_back(std::log(p));
    }
    logits.push_back(std::move(row));
    rewards.emplace_back(m.support().begin(), m.support().end());
  }
  return TabularPolicy(std::move(logits), std::move(rewards));
}

void TabularPolicy::check_prompt(std::size_t prompt) const {
  if (prompt >= num_prompts()) {
    throw IndexError("prompt index " + std::to_string(prompt) + " out of range (policy has " +
                     std::to_string(num_prompts()) + " prompts)");
  }
}

std::size_t TabularPolicy::num_responses(std::size_t prompt) const {
  check_prompt(prompt);
  return offsets_[prompt + 1] - offsets_[prompt];
}

std::span<const double> TabularPolicy::logits(std::size_t prompt) const {
  check_prompt(prompt);
  return std::span<const double>(params_).subspan(offsets_[prompt], offsets_[prompt + 1] - offsets_[prompt]);
}

std::span<const double> TabularPolicy::rewards(std::size_t prompt) const {
  check_prompt(prompt);
  return std::span<const double>(rewards_).subspan(offsets_[prompt], offsets_[prompt + 1] - offsets_[prompt]);
}

Vector TabularPolicy::probabilities(std::size_t prompt) const { return softmax(logits(prompt)); }

PromptModel TabularPolicy::prompt_model(std::size_t prompt) const {
  auto r = rewards(prompt);
  Vector p = probabilities(prompt);
  return PromptModel(prompt, Vector(r.begin(), r.end()), std::move(p));
}

double TabularPolicy::expected_reward(std::size_t prompt) const {
  const Vector p = probabilities(prompt);
  const auto r = rewards(prompt);
  Vector terms(p.size());
  for (std::size_t k = 0; k < p.size(); ++k) terms[k] = p[k] * r[k];
  return pairwise_sum(terms);
}

void TabularPolicy::ascend(std::span<const double> direction, double step_size) {
  if (direction.size() != params_.size()) throw ShapeError("update direction has the wrong dimension");
  for (std::size_t i = 0; i < params_.size(); ++i) params_[i] += step_size * direction[i];
}

RewardBatch RewardBatch::from_rows(const std::vector<std::vector<double>>& rows) {
  RewardBatch b;
  b.rewards = Matrix::from_rows(rows);
  b.prompt_ids.resize(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) b.prompt_ids[i] = i;
  return b;
}

std::vector<std::size_t> sample_prompt_indices(const PromptDistribution& dist, std::size_t n, RngStream& stream) {
  std::vector<std::size_t> idx(n);
  for (auto& k : idx) k = stream.categorical(dist.weights());
  return idx;
}

std::vector<PromptModel> sample_prompts(const PromptDistribution& dist, std::size_t n, RngStream& stream) {
  if (n == 0) throw InvalidBatchSize("sample_prompts needs n >= 1");
  std::vector<PromptModel> out;
  out.reserve(n);
  for (std::size_t k : sample_prompt_indices(dist, n, stream)) out.push_back(dist.model(k));
  return out;
}

RewardBatch sample_rewards(std::span<const PromptModel> prompts, std::size_t m, const RngStream& stream) {
  if (m == 0) throw InvalidRolloutCount("sample_rewards needs m >= 1");
  if (prompts.empty()) throw InvalidBatchSize("sample_rewards needs at least one prompt");
  RewardBatch b;
  b.rewards = Matrix(prompts.size(), m);
  b.response_ids = IndexMatrix(prompts.size(), m);
  b.prompt_ids.resize(prompts.size());
  for (std::size_t i = 0; i < prompts.size(); ++i) {
    const auto& model = prompts[i];
    b.prompt_ids[i] = model.prompt_id();
    RngStream row = stream.substream(static_cast<std::uint32_t>(i));
    for (std::size_t j = 0; j < m; ++j) {
      const std::size_t y = row.categorical(model.probs());
      (*b.response_ids)(i, j) = y;
      b.rewards(i, j) = model.support()[y];
    }
  }
  return b;
}

void add_scaled_score(const TabularPolicy& policy, std::size_t prompt, std::size_t response,
                      std::span<const double> probs, double coeff, std::span<double> out) {
  const std::size_t base = policy.offset(prompt);
  for (std::size_t k = 0; k < probs.size(); ++k) {
    out[base + k] += coeff * ((k == response ? 1.0 : 0.0) - probs[k]);
  }
}

Vector score_vector(const TabularPolicy& policy, std::size_t prompt, std::size_t response) {
  if (response >= policy.num_responses(prompt)) {
    throw IndexError("response index " + std::to_string(response) + " out of range for prompt " +
                     std::to_string(prompt));
  }
  Vector out(policy.num_params(), 0.0);
  add_scaled_score(policy, prompt, response, policy.probabilities(prompt), 1.0, out);
  return out;
}

double expected_reward(const TabularPolicy& policy, std::span<const std::size_t> prompts) {
  if (prompts.empty()) throw InvalidBatchSize("expected_reward needs at least one prompt");
  Vector terms(prompts.size());
  for (std::size_t i = 0; i < prompts.size(); ++i) terms[i] = policy.expected_reward(prompts[i]);
  return pairwise_sum(terms) / static_cast<double>(prompts.size());
}

double expected_reward(const TabularPolicy& policy, std::span<const double> weights) {
  if (weights.size() != policy.num_prompts()) throw ShapeError("weights do not match policy prompts");
  Vector terms(weights.size());
  for (std::size_t k = 0; k < weights.size(); ++k) terms[k] = weights[k] * policy.expected_reward(k);
  return pairwise_sum(terms);
}

namespace {

// d/dtheta_k of sum_y pi_y r_y = pi_k (r_k - sum_y pi_y r_y), the same as
// sum_y pi_y r_y (e_y - pi)_k.
void add_prompt_gradient(const TabularPolicy& policy, std::size_t prompt, double weight, Vector& out) {
  const Vector p = policy.probabilities(prompt);
  const auto r = policy.rewards(prompt);
  Vector terms(p.size());
  for (std::size_t k = 0; k < p.size(); ++k) terms[k] = p[k] * r[k];
  const double value = pairwise_sum(terms);
  const std::size_t base = policy.offset(prompt);
  for (std::size_t k = 0; k < p.size(); ++k) out[base + k] += weight * p[k] * (r[k] - value);
}

}  // namespace

Vector exact_grad_J(const TabularPolicy& policy, std::span<const std::size_t> prompts) {
  if (prompts.empty()) throw InvalidBatchSize("exact_grad_J needs at least one prompt");
  Vector out(policy.num_params(), 0.0);
  const double w = 1.0 / static_cast<double>(prompts.size());
  for (std::size_t x : prompts) add_prompt_gradient(policy, x, w, out);
  return out;
}

Vector exact_grad_J(const TabularPolicy& policy, std::span<const double> weights) {
  if (weights.size() != policy.num_prompts()) throw ShapeError("weights do not match policy prompts");
  Vector out(policy.num_params(), 0.0);
  for (std::size_t k = 0; k < weights.size(); ++k) add_prompt_gradient(policy, k, weights[k], out);
  return out;
}

ValueStats true_value_stats(std::span<const PromptModel> prompts, std::size_t m) {
  if (m < 2) throw InvalidRolloutCount("value statistics need m >= 2");
  if (prompts.empty()) throw InvalidBatchSize("value statistics need at least one prompt");
  const std::size_t n = prompts.size();
  ValueStats st;
  for (const auto& p : prompts) {
    st.mu.push_back(p.mean());
    st.sigma2.push_back(p.variance());
  }
  const double mu_bar = mean(st.mu);
  Vector dev(n);
  for (std::size_t i = 0; i < n; ++i) dev[i] = (st.mu[i] - mu_bar) * (st.mu[i] - mu_bar);
  const double ss = pairwise_sum(dev);
  st.mean_sigma2 = mean(st.sigma2);
  st.v = pairwise_sum(st.sigma2) / (static_cast<double>(n) * static_cast<double>(m));
  st.s = n > 1 ? ss / static_cast<double>(n - 1) : 0.0;
  st.v2 = st.mean_sigma2 / static_cast<double>(m - 1);
  st.s2 = ss / static_cast<double>(n);
  return st;
}

ValueStats true_value_stats(const PromptDistribution& dist, std::size_t m) {
  if (m < 2) throw InvalidRolloutCount("value statistics need m >= 2");
  ValueStats st;
  const auto w = dist.weights();
  Vector a(dist.size()), b(dist.size());
  for (std::size_t k = 0; k < dist.size(); ++k) {
    st.mu.push_back(dist.model(k).mean());
    st.sigma2.push_back(dist.model(k).variance());
    a[k] = w[k] * st.mu[k];
    b[k] = w[k] * st.sigma2[k];
  }
  const double mu_bar = pairwise_sum(a);
  st.mean_sigma2 = pairwise_sum(b);
  for (std::size_t k = 0; k < dist.size(); ++k) a[k] = w[k] * (st.mu[k] - mu_bar) * (st.mu[k] - mu_bar);
  st.s2 = pairwise_sum(a);
  st.v2 = st.mean_sigma2 / static_cast<double>(m - 1);
  return st;
}

}  // namespace jsb
