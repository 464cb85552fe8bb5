#include "jsb/oracle.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "jsb/errors.hpp"
#include "jsb/gradient.hpp"

namespace jsb {
namespace {

constexpr std::uint64_t kSaturated = std::numeric_limits<std::uint64_t>::max();

std::uint64_t saturating_mul(std::uint64_t a, std::uint64_t b) {
  if (a != 0 && b > kSaturated / a) return kSaturated;
  return a * b;
}

std::uint64_t saturating_pow(std::uint64_t base, std::size_t exp) {
  std::uint64_t r = 1;
  for (std::size_t i = 0; i < exp; ++i) r = saturating_mul(r, base);
  return r;
}

// Weighted sums accumulated in index order: sequential inside fixed-size
// blocks, pairwise across blocks.
class OrderedSum {
 public:
  explicit OrderedSum(std::size_t dim) : current_(dim, 0.0) {}

  void add(double weight, std::span<const double> x) {
    for (std::size_t k = 0; k < current_.size(); ++k) current_[k] += weight * x[k];
    if (++in_block_ == kBlock) flush();
  }

  Vector total() {
    if (in_block_ > 0 || blocks_.empty()) flush();
    return pairwise_reduce<Vector>(blocks_, [](const Vector& a, const Vector& b) {
      Vector out(a.size());
      for (std::size_t k = 0; k < a.size(); ++k) out[k] = a[k] + b[k];
      return out;
    });
  }

 private:
  static constexpr std::size_t kBlock = 1024;

  void flush() {
    blocks_.push_back(current_);
    std::fill(current_.begin(), current_.end(), 0.0);
    in_block_ = 0;
  }

  Vector current_;
  std::vector<Vector> blocks_;
  std::size_t in_block_ = 0;
};

void enumerate_models(std::span<const PromptModel> models, std::span<const std::size_t> ids, std::size_t m,
                      double base_log_prob, const OutcomeVisitor& visit) {
  const std::size_t n = models.size();
  const std::size_t digits = n * m;
  std::vector<Vector> log_p(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (double p : models[i].probs()) log_p[i].push_back(p > 0.0 ? std::log(p) : -std::numeric_limits<double>::infinity());
  }
  RewardBatch batch;
  batch.prompt_ids.assign(ids.begin(), ids.end());
  batch.rewards = Matrix(n, m);
  batch.response_ids = IndexMatrix(n, m);
  std::vector<std::size_t> digit(digits, 0);
  while (true) {
    double log_prob = base_log_prob;
    for (std::size_t d = 0; d < digits; ++d) log_prob += log_p[d / m][digit[d]];
    if (log_prob != -std::numeric_limits<double>::infinity()) {
      for (std::size_t d = 0; d < digits; ++d) {
        const std::size_t i = d / m, j = d % m;
        (*batch.response_ids)(i, j) = digit[d];
        batch.rewards(i, j) = models[i].support()[digit[d]];
      }
      visit(batch, std::exp(log_prob));
    }
    std::size_t d = digits;
    while (d > 0) {
      --d;
      if (++digit[d] < models[d / m].size()) break;
      digit[d] = 0;
      if (d == 0) return;
    }
  }
}

double baseline_sq_error(const BaselineMatrix& b, std::span<const double> mu) {
  const std::size_t n = b.values.rows(), m = b.values.cols();
  Vector err(n * m);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) err[i * m + j] = (b(i, j) - mu[i]) * (b(i, j) - mu[i]);
  }
  return mean(err);
}

std::vector<PromptModel> models_for(const TabularPolicy& policy, std::span<const std::size_t> prompts) {
  std::vector<PromptModel> out;
  for (std::size_t x : prompts) out.push_back(policy.prompt_model(x));
  return out;
}

}  // namespace

std::uint64_t outcome_count(std::span<const PromptModel> prompts, std::size_t m) {
  std::uint64_t c = 1;
  for (const auto& p : prompts) c = saturating_mul(c, saturating_pow(p.size(), m));
  return c;
}

std::uint64_t population_outcome_count(const PromptDistribution& dist, std::size_t n, std::size_t m) {
  std::uint64_t per_prompt = 0;
  for (const auto& model : dist.models()) {
    const std::uint64_t c = saturating_pow(model.size(), m);
    per_prompt = (c > kSaturated - per_prompt) ? kSaturated : per_prompt + c;
  }
  return saturating_pow(per_prompt, n);
}

void for_each_outcome(std::span<const PromptModel> prompts, std::size_t m, const OutcomeVisitor& visit) {
  if (prompts.empty()) throw InvalidBatchSize("enumeration needs at least one prompt");
  if (m == 0) throw InvalidRolloutCount("enumeration needs m >= 1");
  const std::uint64_t count = outcome_count(prompts, m);
  if (count > kEnumerationLimit) throw TractabilityError(count, kEnumerationLimit);
  std::vector<std::size_t> ids;
  for (const auto& p : prompts) ids.push_back(p.prompt_id());
  enumerate_models(prompts, ids, m, 0.0, visit);
}

void for_each_population_outcome(const PromptDistribution& dist, std::size_t n, std::size_t m,
                                  const OutcomeVisitor& visit) {
  if (n == 0) throw InvalidBatchSize("enumeration needs n >= 1");
  if (m == 0) throw InvalidRolloutCount("enumeration needs m >= 1");
  const std::uint64_t count = population_outcome_count(dist, n, m);
  if (count > kEnumerationLimit) throw TractabilityError(count, kEnumerationLimit);
  const std::size_t K = dist.size();
  std::vector<std::size_t> assign(n, 0);
  std::vector<PromptModel> models(n, dist.model(0));
  while (true) {
    double log_w = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double w = dist.weights()[assign[i]];
      log_w += w > 0.0 ? std::log(w) : -std::numeric_limits<double>::infinity();
      models[i] = dist.model(assign[i]);
    }
    if (log_w != -std::numeric_limits<double>::infinity()) enumerate_models(models, assign, m, log_w, visit);
    std::size_t d = n;
    while (d > 0) {
      --d;
      if (++assign[d] < K) break;
      assign[d] = 0;
      if (d == 0) return;
    }
  }
}

EnumerationResult enumerate_expected_gradient(const TabularPolicy& policy, std::span<const std::size_t> prompts,
                                              std::size_t m, Estimator estimator, const EstimatorParams& params) {
  const std::vector<PromptModel> models = models_for(policy, prompts);
  Vector mu;
  for (const auto& model : models) mu.push_back(model.mean());
  EstimatorParams p = params;
  p.policy = &policy;

  const std::size_t P = policy.num_params();
  OrderedSum grad(P), scalars(2);
  EnumerationResult res;
  for_each_outcome(models, m, [&](const RewardBatch& batch, double prob) {
    const Vector g = estimator_gradient(policy, batch, estimator, p);
    const double stats[2] = {squared_norm(g), baseline_sq_error(compute_baseline(estimator, batch, p), mu)};
    grad.add(prob, g);
    scalars.add(prob, stats);
    ++res.outcome_count;
  });
  res.expected_gradient = grad.total();
  const Vector s = scalars.total();
  res.expected_sq_norm = s[0];
  res.expected_mse = s[1];
  res.trace_variance = res.expected_sq_norm - squared_norm(res.expected_gradient);
  return res;
}

double exact_baseline_mse(std::span<const PromptModel> prompts, std::size_t m, Estimator estimator,
                          const EstimatorParams& params) {
  Vector mu;
  for (const auto& model : prompts) mu.push_back(model.mean());
  OrderedSum acc(1);
  for_each_outcome(prompts, m, [&](const RewardBatch& batch, double prob) {
    const double e = baseline_sq_error(compute_baseline(estimator, batch, params), mu);
    acc.add(prob, std::span<const double>(&e, 1));
  });
  return acc.total()[0];
}

double exact_baseline_mse_population(const PromptDistribution& dist, std::size_t n, std::size_t m,
                                     Estimator estimator, const EstimatorParams& params) {
  OrderedSum acc(1);
  Vector mu(n);
  for_each_population_outcome(dist, n, m, [&](const RewardBatch& batch, double prob) {
    for (std::size_t i = 0; i < n; ++i) mu[i] = dist.model(batch.prompt_ids[i]).mean();
    const double e = baseline_sq_error(compute_baseline(estimator, batch, params), mu);
    acc.add(prob, std::span<const double>(&e, 1));
  });
  return acc.total()[0];
}

std::string_view to_string(MseConvention c) noexcept {
  return c == MseConvention::gamma_naive ? "gamma_naive" : "lambda_loo";
}

QuadraticMse mse_quadratic_fixed_prompts(std::span<const PromptModel> prompts, std::size_t m) {
  const std::size_t n = prompts.size();
  if (n < 2) throw InvalidBatchSize("fixed-prompt MSE quadratic needs n >= 2");
  if (m < 1) throw InvalidRolloutCount("fixed-prompt MSE quadratic needs m >= 1");
  Vector mu, sigma2;
  for (const auto& p : prompts) {
    mu.push_back(p.mean());
    sigma2.push_back(p.variance());
  }
  const double mu_bar = mean(mu);
  Vector dev(n);
  for (std::size_t i = 0; i < n; ++i) dev[i] = (mu[i] - mu_bar) * (mu[i] - mu_bar);
  const double s = pairwise_sum(dev) / static_cast<double>(n - 1);
  const double v = pairwise_sum(sigma2) / (static_cast<double>(n) * static_cast<double>(m));
  const double nn = static_cast<double>(n);
  return {nn / (nn - 1.0) * (s + v), -2.0 * v, v, MseConvention::gamma_naive};
}

QuadraticMse mse_quadratic_population(const PromptDistribution& dist, std::size_t n, std::size_t m) {
  if (n < 2) throw InvalidBatchSize("population MSE quadratic needs n >= 2");
  const ValueStats st = true_value_stats(dist, m);
  const double nn = static_cast<double>(n);
  return {nn / (nn - 1.0) * (st.s2 + st.v2), -2.0 * st.v2, st.v2, MseConvention::lambda_loo};
}

QuadraticMse mse_quadratic_population_exact(const PromptDistribution& dist, std::size_t n, std::size_t m) {
  if (n < 2) throw InvalidBatchSize("population MSE quadratic needs n >= 2");
  const ValueStats st = true_value_stats(dist, m);
  const double nn = static_cast<double>(n);
  const double a = nn / (nn - 1.0) * st.s2 + st.v2 + st.mean_sigma2 / (static_cast<double>(m) * (nn - 1.0));
  return {a, -2.0 * st.v2, st.v2, MseConvention::lambda_loo};
}

Vector enumerate_naive_shrinkage_mse(std::span<const PromptModel> prompts, std::size_t m,
                                     std::span<const double> gammas) {
  const std::size_t n = prompts.size();
  if (n < 2) throw InvalidBatchSize("shrinkage MSE needs n >= 2");
  Vector mu;
  for (const auto& p : prompts) mu.push_back(p.mean());
  OrderedSum acc(gammas.size());
  Vector per_gamma(gammas.size());
  Vector err(n);
  for_each_outcome(prompts, m, [&](const RewardBatch& batch, double prob) {
    const Vector local = prompt_means(batch);
    const BaselineMatrix anchor = bloo_baseline(batch);
    for (std::size_t t = 0; t < gammas.size(); ++t) {
      for (std::size_t i = 0; i < n; ++i) {
        const double b = (1.0 - gammas[t]) * local[i] + gammas[t] * anchor(i, 0);
        err[i] = (b - mu[i]) * (b - mu[i]);
      }
      per_gamma[t] = mean(err);
    }
    acc.add(prob, per_gamma);
  });
  return acc.total();
}

Vector enumerate_loo_shrinkage_mse(const PromptDistribution& dist, std::size_t n, std::size_t m,
                                   std::span<const double> lambdas) {
  if (n < 2) throw InvalidBatchSize("shrinkage MSE needs n >= 2");
  if (m < 2) throw InvalidRolloutCount("leave-one-out shrinkage MSE needs m >= 2");
  OrderedSum acc(lambdas.size());
  Vector per_lambda(lambdas.size());
  Vector err(n * m);
  for_each_population_outcome(dist, n, m, [&](const RewardBatch& batch, double prob) {
    const BaselineMatrix local = rloo_baseline(batch);
    const BaselineMatrix anchor = bloo_baseline(batch);
    for (std::size_t t = 0; t < lambdas.size(); ++t) {
      for (std::size_t i = 0; i < n; ++i) {
        const double mu = dist.model(batch.prompt_ids[i]).mean();
        for (std::size_t j = 0; j < m; ++j) {
          const double b = (1.0 - lambdas[t]) * local(i, j) + lambdas[t] * anchor(i, j);
          err[i * m + j] = (b - mu) * (b - mu);
        }
      }
      per_lambda[t] = mean(err);
    }
    acc.add(prob, per_lambda);
  });
  return acc.total();
}

namespace {

GridSearchResult pick_best(std::span<const double> grid, Vector mse) {
  GridSearchResult r;
  for (std::size_t t = 1; t < mse.size(); ++t) {
    if (mse[t] < mse[r.best_index]) r.best_index = t;
  }
  r.best = grid[r.best_index];
  r.mse = std::move(mse);
  return r;
}

void check_grid(std::span<const double> grid) {
  if (grid.empty()) throw ConfigError("coefficient grid is empty");
  for (double t : grid) {
    if (!(t >= 0.0 && t <= 1.0)) throw ConfigError("grid coefficients must lie in [0, 1]");
  }
}

}  // namespace

GridSearchResult mse_grid_search(std::span<const PromptModel> prompts, std::size_t m, std::span<const double> grid) {
  check_grid(grid);
  return pick_best(grid, enumerate_naive_shrinkage_mse(prompts, m, grid));
}

GridSearchResult mse_grid_search(const PromptDistribution& dist, std::size_t n, std::size_t m,
                                 std::span<const double> grid) {
  check_grid(grid);
  return pick_best(grid, enumerate_loo_shrinkage_mse(dist, n, m, grid));
}

double parabola_vertex(std::span<const double, 3> t, std::span<const double, 3> f) {
  // Newton divided differences: f = f0 + d1 (x - t0) + d2 (x - t0)(x - t1).
  const double d01 = (f[1] - f[0]) / (t[1] - t[0]);
  const double d12 = (f[2] - f[1]) / (t[2] - t[1]);
  const double d2 = (d12 - d01) / (t[2] - t[0]);
  if (d2 == 0.0) throw ShapeError("points are collinear; no vertex");
  return 0.5 * (t[0] + t[1]) - d01 / (2.0 * d2);
}

double oracle_lambda(std::span<const PromptModel> prompts, std::size_t m) {
  const ValueStats st = true_value_stats(prompts, m);
  return optimal_lambda_known(st.v2, st.s, prompts.size()).gamma_star;
}

double oracle_lambda(const PromptDistribution& dist, std::size_t n, std::size_t m) {
  const ValueStats st = true_value_stats(dist, m);
  return optimal_lambda_known(st.v2, st.s2, n).gamma_star;
}

}  // namespace jsb
