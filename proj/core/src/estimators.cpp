#include "jsb/estimators.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <string>

#include "jsb/errors.hpp"

namespace jsb {
namespace {

constexpr std::array<Estimator, 11> kPublic = {
    Estimator::prompt_mean, Estimator::rloo,         Estimator::bloo, Estimator::global_mean,
    Estimator::js1,         Estimator::js2,          Estimator::js2_debiased, Estimator::grpo,
    Estimator::grpo_nostd,  Estimator::remax,        Estimator::none,
};

constexpr std::array<Estimator, 13> kAll = {
    Estimator::prompt_mean, Estimator::rloo,       Estimator::bloo,  Estimator::global_mean,
    Estimator::js1,         Estimator::js2,        Estimator::js2_debiased, Estimator::grpo,
    Estimator::grpo_nostd,  Estimator::remax,      Estimator::none,  Estimator::global_mean_loo,
    Estimator::js2_oracle_lambda,
};

void require_m(const RewardBatch& b, std::size_t min, const char* who) {
  if (b.m() < min) {
    throw InvalidRolloutCount(std::string(who) + " needs m >= " + std::to_string(min) + " (got " +
                              std::to_string(b.m()) + ")");
  }
}

void require_n(const RewardBatch& b, std::size_t min, const char* who) {
  if (b.n() < min) {
    throw InvalidBatchSize(std::string(who) + " needs n >= " + std::to_string(min) + " (got " +
                           std::to_string(b.n()) + ")");
  }
}

// Copy of x without position `skip`.
Vector without(std::span<const double> x, std::size_t skip) {
  Vector out;
  out.reserve(x.size() - 1);
  for (std::size_t k = 0; k < x.size(); ++k) {
    if (k != skip) out.push_back(x[k]);
  }
  return out;
}

BaselineMatrix broadcast_rows(std::span<const double> per_row, std::size_t m) {
  BaselineMatrix b{Matrix(per_row.size(), m)};
  for (std::size_t i = 0; i < per_row.size(); ++i) {
    for (std::size_t j = 0; j < m; ++j) b.values(i, j) = per_row[i];
  }
  return b;
}

// Unbiased row variance divided by m, i.e. the estimated variance of the
// prompt mean.
Vector prompt_mean_variances(const RewardBatch& batch, std::span<const double> means) {
  const std::size_t m = batch.m();
  Vector out(batch.n());
  Vector dev(m);
  for (std::size_t i = 0; i < batch.n(); ++i) {
    const auto row = batch.rewards.row(i);
    for (std::size_t j = 0; j < m; ++j) dev[j] = (row[j] - means[i]) * (row[j] - means[i]);
    out[i] = pairwise_sum(dev) / static_cast<double>(m - 1) / static_cast<double>(m);
  }
  return out;
}

}  // namespace

std::string_view to_string(Estimator e) noexcept {
  switch (e) {
    case Estimator::prompt_mean: return "prompt_mean";
    case Estimator::rloo: return "rloo";
    case Estimator::bloo: return "bloo";
    case Estimator::global_mean: return "global_mean";
    case Estimator::js1: return "js1";
    case Estimator::js2: return "js2";
    case Estimator::js2_debiased: return "js2_debiased";
    case Estimator::grpo: return "grpo";
    case Estimator::grpo_nostd: return "grpo_nostd";
    case Estimator::remax: return "remax";
    case Estimator::none: return "none";
    case Estimator::global_mean_loo: return "global_mean_loo";
    case Estimator::js2_oracle_lambda: return "js2_oracle_lambda";
  }
  return "unknown";
}

std::optional<Estimator> parse_estimator(std::string_view id, bool allow_internal) noexcept {
  const std::span<const Estimator> pool = allow_internal ? std::span<const Estimator>(kAll) : kPublic;
  for (Estimator e : pool) {
    if (to_string(e) == id) return e;
  }
  return std::nullopt;
}

std::span<const Estimator> public_estimators() noexcept { return kPublic; }

bool is_leave_one_out(Estimator e) noexcept {
  switch (e) {
    case Estimator::rloo:
    case Estimator::bloo:
    case Estimator::js2:
    case Estimator::js2_debiased:
    case Estimator::global_mean_loo:
    case Estimator::js2_oracle_lambda:
    case Estimator::none:
      return true;
    default:
      return false;
  }
}

Vector prompt_means(const RewardBatch& batch) {
  require_m(batch, 1, "prompt_means");
  Vector mu(batch.n());
  for (std::size_t i = 0; i < batch.n(); ++i) mu[i] = shifted_mean(batch.rewards.row(i));
  return mu;
}

BaselineMatrix rloo_baseline(const RewardBatch& batch) {
  require_m(batch, 2, "rloo baseline");
  BaselineMatrix b{Matrix(batch.n(), batch.m())};
  for (std::size_t i = 0; i < batch.n(); ++i) {
    const auto row = batch.rewards.row(i);
    for (std::size_t j = 0; j < batch.m(); ++j) b.values(i, j) = shifted_mean(without(row, j));
  }
  return b;
}

namespace {

Vector loo_batch_means(std::span<const double> means) {
  Vector out(means.size());
  for (std::size_t i = 0; i < means.size(); ++i) out[i] = shifted_mean(without(means, i));
  return out;
}

}  // namespace

BaselineMatrix bloo_baseline(const RewardBatch& batch) {
  require_n(batch, 2, "bloo baseline");
  return broadcast_rows(loo_batch_means(prompt_means(batch)), batch.m());
}

BaselineMatrix global_mean_baseline(const RewardBatch& batch) {
  if (batch.n() == 0 || batch.m() == 0) throw ShapeError("global mean of an empty batch");
  const double g = shifted_mean(batch.rewards.data());
  return BaselineMatrix{Matrix(batch.n(), batch.m(), g)};
}

BaselineMatrix global_mean_loo_baseline(const RewardBatch& batch) {
  if (batch.n() * batch.m() < 2) throw ShapeError("leave-one-out global mean needs at least two rewards");
  const auto all = batch.rewards.data();
  BaselineMatrix b{Matrix(batch.n(), batch.m())};
  for (std::size_t i = 0; i < batch.n(); ++i) {
    for (std::size_t j = 0; j < batch.m(); ++j) b.values(i, j) = shifted_mean(without(all, i * batch.m() + j));
  }
  return b;
}

BaselineMatrix naive_js_baseline(const RewardBatch& batch, double lambda) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw ConfigError("js1 shrinkage coefficient must lie in [0, 1]");
  const Vector mu = prompt_means(batch);
  const double g = shifted_mean(batch.rewards.data());
  Vector per_row(batch.n());
  for (std::size_t i = 0; i < batch.n(); ++i) per_row[i] = (1.0 - lambda) * mu[i] + lambda * g;
  return broadcast_rows(per_row, batch.m());
}

OptimalLambda optimal_lambda_known(double v, double s, std::size_t n) {
  if (n < 2) throw InvalidBatchSize("optimal shrinkage needs n >= 2");
  if (v < 0.0 || s < 0.0) throw ConfigError("v and s must be nonnegative");
  if (v + s == 0.0) return {0.0, 0.0, true};
  const double ratio = v / (s + v);
  return {ratio * (static_cast<double>(n - 1) / static_cast<double>(n)), ratio, false};
}

ShrinkageDiagnostics shrinkage_diagnostics(const RewardBatch& batch, ShrinkageMode mode) {
  require_n(batch, 2, "shrinkage diagnostics");
  require_m(batch, 2, "shrinkage diagnostics");
  const std::size_t n = batch.n();
  const double m = static_cast<double>(batch.m());
  const double shrink_cap = static_cast<double>(n - 1) / static_cast<double>(n);

  const Vector mu = prompt_means(batch);
  const Vector noise = prompt_mean_variances(batch, mu);

  ShrinkageDiagnostics d;
  d.v_hat.resize(n);
  d.s_hat.resize(n);
  d.lambda_hat.resize(n);
  d.loo_batch_mean.resize(n);
  Vector dev(n - 1);
  for (std::size_t i = 0; i < n; ++i) {
    const Vector others = without(mu, i);
    const double centre = shifted_mean(others);
    for (std::size_t k = 0; k < others.size(); ++k) dev[k] = (others[k] - centre) * (others[k] - centre);
    double v = mean(without(noise, i));
    double s = mean(dev);
    if (mode == ShrinkageMode::debiased) {
      s = std::max(0.0, s - v);
      v = v * m / (m - 1.0);
    }
    d.loo_batch_mean[i] = centre;
    d.v_hat[i] = v;
    d.s_hat[i] = s;
    // v + s == 0 only for a batch whose other prompts all have identical
    // constant rows; lambda = 0 then reduces the baseline to RLOO.
    d.lambda_hat[i] = (v + s == 0.0) ? 0.0 : v / (v + s) * shrink_cap;
  }
  return d;
}

BaselineMatrix js_baseline_with_lambda(const RewardBatch& batch, std::span<const double> lambdas) {
  require_n(batch, 2, "js baseline");
  require_m(batch, 2, "js baseline");
  if (lambdas.size() != batch.n()) throw ShapeError("one shrinkage coefficient per prompt required");
  const BaselineMatrix local = rloo_baseline(batch);
  const Vector centre = loo_batch_means(prompt_means(batch));
  BaselineMatrix b{Matrix(batch.n(), batch.m())};
  for (std::size_t i = 0; i < batch.n(); ++i) {
    for (std::size_t j = 0; j < batch.m(); ++j) {
      b.values(i, j) = (1.0 - lambdas[i]) * local(i, j) + lambdas[i] * centre[i];
    }
  }
  return b;
}

JsBaseline js_baseline(const RewardBatch& batch, ShrinkageMode mode) {
  ShrinkageDiagnostics d = shrinkage_diagnostics(batch, mode);
  BaselineMatrix b = js_baseline_with_lambda(batch, d.lambda_hat);
  return {std::move(b), std::move(d)};
}

Matrix grpo_advantage(const RewardBatch& batch, double epsilon, bool normalize) {
  require_m(batch, 2, "grpo advantage");
  if (!(epsilon >= 0.0)) throw ConfigError("grpo epsilon must be nonnegative");
  const Vector mu = prompt_means(batch);
  Matrix a(batch.n(), batch.m());
  Vector dev(batch.m());
  for (std::size_t i = 0; i < batch.n(); ++i) {
    const auto row = batch.rewards.row(i);
    for (std::size_t j = 0; j < batch.m(); ++j) dev[j] = (row[j] - mu[i]) * (row[j] - mu[i]);
    const double scale = normalize ? std::sqrt(pairwise_sum(dev) / static_cast<double>(batch.m() - 1)) + epsilon : 1.0;
    for (std::size_t j = 0; j < batch.m(); ++j) {
      const double centred = row[j] - mu[i];
      // A zero numerator stays zero even when scale is 0 (epsilon = 0).
      a(i, j) = centred == 0.0 ? 0.0 : centred / scale;
    }
  }
  return a;
}

BaselineMatrix remax_baseline(const TabularPolicy& policy, const RewardBatch& batch) {
  Vector per_row(batch.n());
  for (std::size_t i = 0; i < batch.n(); ++i) {
    const auto logits = policy.logits(batch.prompt_ids.at(i));
    const auto best = static_cast<std::size_t>(std::max_element(logits.begin(), logits.end()) - logits.begin());
    per_row[i] = policy.rewards(batch.prompt_ids[i])[best];
  }
  return broadcast_rows(per_row, batch.m());
}

BaselineMatrix compute_baseline(Estimator e, const RewardBatch& batch, const EstimatorParams& params) {
  switch (e) {
    case Estimator::prompt_mean:
    case Estimator::grpo:
    case Estimator::grpo_nostd:
      return broadcast_rows(prompt_means(batch), batch.m());
    case Estimator::rloo: return rloo_baseline(batch);
    case Estimator::bloo: return bloo_baseline(batch);
    case Estimator::global_mean: return global_mean_baseline(batch);
    case Estimator::global_mean_loo: return global_mean_loo_baseline(batch);
    case Estimator::js1: return naive_js_baseline(batch, params.js1_lambda);
    case Estimator::js2: return js_baseline(batch, params.js2_mode).baseline;
    case Estimator::js2_debiased: return js_baseline(batch, ShrinkageMode::debiased).baseline;
    case Estimator::js2_oracle_lambda: {
      const Vector lambdas(batch.n(), params.oracle_lambda);
      return js_baseline_with_lambda(batch, lambdas);
    }
    case Estimator::remax:
      if (params.policy == nullptr) throw ConfigError("remax baseline needs a policy");
      return remax_baseline(*params.policy, batch);
    case Estimator::none: return BaselineMatrix{Matrix(batch.n(), batch.m(), 0.0)};
  }
  throw ConfigError("unknown estimator");
}

Advantages compute_advantages(Estimator e, const RewardBatch& batch, const EstimatorParams& params) {
  if (e == Estimator::grpo || e == Estimator::grpo_nostd) {
    return {grpo_advantage(batch, params.grpo_epsilon, e == Estimator::grpo), std::nullopt};
  }
  Advantages out;
  BaselineMatrix b;
  if (e == Estimator::js2 || e == Estimator::js2_debiased) {
    JsBaseline js = js_baseline(batch, e == Estimator::js2 ? params.js2_mode : ShrinkageMode::debiased);
    b = std::move(js.baseline);
    out.diagnostics = std::move(js.diagnostics);
  } else {
    b = compute_baseline(e, batch, params);
  }
  out.values = Matrix(batch.n(), batch.m());
  for (std::size_t i = 0; i < batch.n(); ++i) {
    for (std::size_t j = 0; j < batch.m(); ++j) out.values(i, j) = batch.rewards(i, j) - b(i, j);
  }
  return out;
}

}  // namespace jsb
