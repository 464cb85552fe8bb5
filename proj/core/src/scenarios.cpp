#include "jsb/scenarios.hpp"

#include <array>
#include <cmath>
#include <sstream>

#include "jsb/errors.hpp"
#include "jsb/oracle.hpp"
#include "jsb/parallel.hpp"
#include "jsb/rng.hpp"

namespace jsb {
namespace {

double standard_error(std::span<const double> x) {
  if (x.size() < 2) return 0.0;
  return std::sqrt(sample_variance(x) / static_cast<double>(x.size()));
}

Cell count_cell(std::size_t v) { return static_cast<std::uint64_t>(v); }

Cell optional_cell(const std::optional<double>& v) {
  if (v) return *v;
  return std::monostate{};
}

std::string estimator_label(Estimator e) { return std::string(to_string(e)); }

std::uint32_t as_u32(std::size_t v, const char* what) {
  if (v > UINT32_MAX) throw ConfigError(std::string(what) + " exceeds the stream index range");
  return static_cast<std::uint32_t>(v);
}

/// Per-replication baseline error, (1/(n m)) sum_ij (b_ij - mu_i)^2.
double baseline_error(const BaselineMatrix& b, std::span<const PromptModel> prompts) {
  const std::size_t n = b.values.rows();
  const std::size_t m = b.values.cols();
  Vector sq(n * m);
  for (std::size_t i = 0; i < n; ++i) {
    const double mu = prompts[i].mean();
    for (std::size_t j = 0; j < m; ++j) {
      const double d = b(i, j) - mu;
      sq[i * m + j] = d * d;
    }
  }
  return mean(sq);
}

std::optional<TabularPolicy> policy_if_needed(const ExperimentConfig& cfg, const PromptDistribution& dist) {
  for (Estimator e : cfg.estimators) {
    if (e == Estimator::remax) return TabularPolicy::from_distribution(dist);
  }
  return std::nullopt;
}

}  // namespace

Estimator effective_estimator(Estimator e, const ExperimentConfig& cfg) {
  if (e != Estimator::js2) return e;
  switch (cfg.lambda_mode) {
    case LambdaMode::paper: return Estimator::js2;
    case LambdaMode::debiased: return Estimator::js2_debiased;
    case LambdaMode::oracle: return Estimator::js2_oracle_lambda;
  }
  return e;
}

EstimatorParams estimator_params(const ExperimentConfig& cfg, const PromptDistribution& dist, std::size_t n,
                                 std::size_t m) {
  EstimatorParams p;
  p.js1_lambda = cfg.js1_lambda;
  p.grpo_epsilon = cfg.grpo_epsilon;
  p.js2_mode = cfg.lambda_mode == LambdaMode::debiased ? ShrinkageMode::debiased : ShrinkageMode::paper;
  if (cfg.lambda_mode == LambdaMode::oracle && n >= 2 && m >= 2) p.oracle_lambda = oracle_lambda(dist, n, m);
  return p;
}

// ---------------------------------------------------------------- mse_sweep

std::vector<MseCell> mse_sweep(const ExperimentConfig& cfg, unsigned threads) {
  validate_for(cfg, Scenario::mse_sweep);
  const PromptDistribution& dist = effective_distribution(cfg);
  const auto policy = policy_if_needed(cfg, dist);
  const std::size_t R = cfg.replications;
  const std::size_t E = cfg.estimators.size();

  std::vector<MseCell> cells;
  for (std::size_t m : cfg.m) {
    EstimatorParams params = estimator_params(cfg, dist, cfg.n, m);
    if (policy) params.policy = &*policy;
    std::vector<Vector> err(E, Vector(R));
    parallel_for(R, threads, [&](std::size_t r) {
      const auto rep = as_u32(r, "replications");
      RngStream prompt_stream(cfg.seed, Purpose::prompts, rep);
      const auto prompts = sample_prompts(dist, cfg.n, prompt_stream);
      const RewardBatch batch = sample_rewards(prompts, m, RngStream(cfg.seed, Purpose::rollouts, rep));
      for (std::size_t e = 0; e < E; ++e) {
        const auto b = compute_baseline(effective_estimator(cfg.estimators[e], cfg), batch, params);
        err[e][r] = baseline_error(b, prompts);
      }
    });
    const bool tractable = population_outcome_count(dist, cfg.n, m) <= kEnumerationLimit;
    for (std::size_t e = 0; e < E; ++e) {
      MseCell cell;
      cell.m = m;
      cell.estimator = cfg.estimators[e];
      cell.mse = mean(err[e]);
      cell.mse_stderr = standard_error(err[e]);
      if (tractable) {
        cell.exact_mse = exact_baseline_mse_population(dist, cfg.n, m, effective_estimator(cfg.estimators[e], cfg),
                                                       params);
      }
      cell.per_replication = std::move(err[e]);
      cells.push_back(std::move(cell));
    }
  }
  return cells;
}

Report run_mse_sweep(const ExperimentConfig& cfg, unsigned threads) {
  const auto cells = mse_sweep(cfg, threads);
  Report report(make_provenance(cfg, Scenario::mse_sweep),
                {"m", "estimator", "mse", "mse_stderr", "exact_flag", "exact_mse", "replications"});
  for (const auto& c : cells) {
    report.add_row({count_cell(c.m), estimator_label(c.estimator), c.mse,
                    cfg.replications >= 2 ? Cell{c.mse_stderr} : Cell{}, std::int64_t{c.exact_mse ? 1 : 0},
                    optional_cell(c.exact_mse), count_cell(cfg.replications)});
  }
  return report;
}

// ------------------------------------------------------------ grad_variance

std::vector<GradVarianceRow> grad_variance(const ExperimentConfig& cfg, unsigned threads) {
  validate_for(cfg, Scenario::grad_variance);
  const PromptDistribution& dist = effective_distribution(cfg);
  const TabularPolicy policy = TabularPolicy::from_distribution(dist);
  std::vector<Estimator> run;
  for (Estimator e : cfg.estimators) run.push_back(effective_estimator(e, cfg));

  std::vector<GradVarianceRow> rows;
  for (std::size_t m : cfg.m) {
    MomentsRequest req;
    req.n = cfg.n;
    req.m = m;
    req.replications = cfg.replications;
    req.seed = cfg.seed;
    req.microbatch_size = cfg.microbatch_size;
    req.threads = threads;
    req.params = estimator_params(cfg, dist, cfg.n, m);
    auto moments = mc_gradient_moments(policy, dist, run, req);
    for (std::size_t e = 0; e < run.size(); ++e) {
      rows.push_back(GradVarianceRow{m, cfg.estimators[e], std::move(moments[e])});
    }
  }
  return rows;
}

Report run_grad_variance(const ExperimentConfig& cfg, unsigned threads) {
  const auto rows = grad_variance(cfg, threads);
  Report report(make_provenance(cfg, Scenario::grad_variance),
                {"m", "estimator", "trace_var_mc", "trace_var_mc_stderr", "trace_var_microbatch", "microbatch_size",
                 "microbatch_samples", "n_samples"});
  for (const auto& r : rows) {
    const auto& mb = r.moments.microbatch;
    report.add_row({count_cell(r.m), estimator_label(r.estimator), r.moments.variance.trace_var,
                    r.moments.variance.stderr_estimate, mb.n_samples > 0 ? Cell{mb.trace_var} : Cell{},
                    count_cell(cfg.microbatch_size), count_cell(mb.n_samples),
                    count_cell(r.moments.variance.n_samples)});
  }
  return report;
}

// ------------------------------------------------------------- lambda_curve

std::vector<LambdaCurvePoint> lambda_curve(const ExperimentConfig& cfg, unsigned threads) {
  validate_for(cfg, Scenario::lambda_curve);
  const PromptDistribution& dist = effective_distribution(cfg);
  const ShrinkageMode mode = cfg.lambda_mode == LambdaMode::debiased ? ShrinkageMode::debiased : ShrinkageMode::paper;
  std::vector<LambdaCurvePoint> points;
  for (std::size_t m : cfg.m) {
    LambdaCurvePoint pt;
    pt.m = m;
    pt.per_replication.assign(cfg.replications, 0.0);
    if (cfg.lambda_mode == LambdaMode::oracle) {
      pt.per_replication.assign(cfg.replications, oracle_lambda(dist, cfg.n, m));
    } else {
      parallel_for(cfg.replications, threads, [&](std::size_t r) {
        const auto rep = as_u32(r, "replications");
        RngStream prompt_stream(cfg.seed, Purpose::prompts, rep);
        const auto prompts = sample_prompts(dist, cfg.n, prompt_stream);
        const RewardBatch batch = sample_rewards(prompts, m, RngStream(cfg.seed, Purpose::rollouts, rep));
        pt.per_replication[r] = mean(shrinkage_diagnostics(batch, mode).lambda_hat);
      });
    }
    pt.mean = mean(pt.per_replication);
    pt.stderr_estimate = standard_error(pt.per_replication);
    points.push_back(std::move(pt));
  }
  return points;
}

Report run_lambda_curve(const ExperimentConfig& cfg, unsigned threads) {
  const auto points = lambda_curve(cfg, threads);
  Report report(make_provenance(cfg, Scenario::lambda_curve),
                {"m", "row_type", "replication", "mean_lambda", "mean_lambda_stderr"});
  for (const auto& pt : points) {
    for (std::size_t r = 0; r < pt.per_replication.size(); ++r) {
      report.add_row({count_cell(pt.m), std::string("replication"), count_cell(r), pt.per_replication[r], {}});
    }
    report.add_row({count_cell(pt.m), std::string("summary"), {}, pt.mean,
                    pt.per_replication.size() >= 2 ? Cell{pt.stderr_estimate} : Cell{}});
  }
  return report;
}

// ------------------------------------------------------------- oracle_check

std::string_view to_string(CheckStatus s) noexcept {
  switch (s) {
    case CheckStatus::pass: return "pass";
    case CheckStatus::fail: return "fail";
    case CheckStatus::deviation: return "deviation";
  }
  return "unknown";
}

bool OracleCheckResult::passed() const noexcept {
  for (const auto& r : rows) {
    if (r.status == CheckStatus::fail) return false;
  }
  return true;
}

namespace {

constexpr std::size_t kSuiteEnvs = 20;
constexpr std::size_t kPopulationEnvs = 10;
constexpr double kGradientTol = 1e-10;
constexpr double kMseTol = 1e-12;
constexpr double kVertexTol = 1e-9;
constexpr double kBiasFloor = 1e-3;

struct SmallEnv {
  TabularPolicy policy;
  std::vector<std::size_t> prompts;
  std::size_t m;
};

/// Random tabular env: n in {2,3}, m in {2,3}, K = 2, logits in [-1.5, 1.5),
/// rewards in [0, 1).
SmallEnv random_small_env(std::uint64_t seed, std::size_t index) {
  RngStream rng(seed, Purpose::env_generation, static_cast<std::uint32_t>(index));
  const std::size_t n = 2 + index % 2;
  const std::size_t m = 2 + (index / 2) % 2;
  std::vector<std::vector<double>> logits(n), rewards(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (int k = 0; k < 2; ++k) {
      logits[i].push_back(3.0 * rng.uniform() - 1.5);
      rewards[i].push_back(rng.uniform());
    }
  }
  std::vector<std::size_t> prompts(n);
  for (std::size_t i = 0; i < n; ++i) prompts[i] = i;
  return {TabularPolicy(std::move(logits), std::move(rewards)), std::move(prompts), m};
}

/// Random mixture of 1..3 two-point reward laws, n in {2,3}, m in {2,3}.
struct SmallPopulation {
  PromptDistribution dist;
  std::size_t n;
  std::size_t m;
};

SmallPopulation random_population(std::uint64_t seed, std::size_t index) {
  RngStream rng(seed, Purpose::env_generation, static_cast<std::uint32_t>(kSuiteEnvs + index));
  const std::size_t k_models = 1 + index % 3;
  std::vector<PromptModel> models;
  Vector weights;
  for (std::size_t k = 0; k < k_models; ++k) {
    const double p = 0.05 + 0.9 * rng.uniform();
    const double lo = rng.uniform();
    const double hi = lo + 0.1 + rng.uniform();
    models.emplace_back(k, Vector{lo, hi}, Vector{1.0 - p, p});
    weights.push_back(0.5 + rng.uniform());
  }
  const double total = pairwise_sum(weights);
  for (double& w : weights) w /= total;
  const std::size_t n = 2 + (index / 3) % 2;
  const std::size_t m = 2 + (index / 2) % 2;
  return {PromptDistribution(std::move(models), std::move(weights)), n, m};
}

double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
  return d;
}

OracleCheckRow bound_row(std::string check, std::string detail, double value, double threshold) {
  return {std::move(check), std::move(detail), value, threshold,
          value < threshold ? CheckStatus::pass : CheckStatus::fail};
}

double max_of(std::span<const double> x) {
  double out = 0.0;
  for (double v : x) out = std::max(out, v);
  return out;
}

constexpr std::array<double, 5> kGammaGrid{0.0, 0.25, 0.5, 0.75, 1.0};
constexpr std::array<double, 3> kVertexGrid{0.0, 0.5, 1.0};

/// Population checks for one distribution: enumeration vs the exact
/// quadratic (pass/fail) and vs the closed form with E[sigma^2]/(m-1) as the
/// anchor noise (reported as a deviation).
struct PopulationDeviations {
  double exact_mse = 0.0;
  double exact_vertex = 0.0;
  double closed_form_mse = 0.0;
  double closed_form_vertex = 0.0;
};

PopulationDeviations population_deviations(const PromptDistribution& dist, std::size_t n, std::size_t m) {
  PopulationDeviations d;
  const Vector enumerated = enumerate_loo_shrinkage_mse(dist, n, m, kGammaGrid);
  const QuadraticMse exact = mse_quadratic_population_exact(dist, n, m);
  const QuadraticMse closed = mse_quadratic_population(dist, n, m);
  for (std::size_t k = 0; k < kGammaGrid.size(); ++k) {
    d.exact_mse = std::max(d.exact_mse, std::abs(enumerated[k] - exact(kGammaGrid[k])));
    d.closed_form_mse = std::max(d.closed_form_mse, std::abs(enumerated[k] - closed(kGammaGrid[k])));
  }
  const Vector at3 = enumerate_loo_shrinkage_mse(dist, n, m, kVertexGrid);
  const double vertex = parabola_vertex(std::span<const double, 3>(kVertexGrid), std::span<const double, 3>(at3.data(), 3));
  d.exact_vertex = std::abs(vertex - exact.argmin());
  d.closed_form_vertex = std::abs(vertex - oracle_lambda(dist, n, m));
  return d;
}

}  // namespace

OracleCheckResult oracle_check(const ExperimentConfig& cfg, unsigned threads) {
  OracleCheckResult result;
  const std::array<Estimator, 6> unbiased{Estimator::rloo,         Estimator::bloo,
                                          Estimator::js2,          Estimator::js2_debiased,
                                          Estimator::global_mean_loo, Estimator::js2_oracle_lambda};

  // Unbiasedness, fixed-prompt quadratic and vertex on random small envs.
  std::vector<Vector> grad_dev(kSuiteEnvs, Vector(unbiased.size() + 1));
  Vector quad_dev(kSuiteEnvs), vertex_dev(kSuiteEnvs), grid_hit(kSuiteEnvs);
  parallel_for(kSuiteEnvs, threads, [&](std::size_t k) {
    const SmallEnv env = random_small_env(cfg.seed, k);
    std::vector<PromptModel> models;
    for (std::size_t x : env.prompts) models.push_back(env.policy.prompt_model(x));
    const Vector truth = exact_grad_J(env.policy, env.prompts);
    EstimatorParams params;
    params.oracle_lambda = oracle_lambda(models, env.m);
    params.policy = &env.policy;
    for (std::size_t e = 0; e < unbiased.size(); ++e) {
      const auto res = enumerate_expected_gradient(env.policy, env.prompts, env.m, unbiased[e], params);
      grad_dev[k][e] = max_abs_diff(res.expected_gradient, truth);
    }
    grad_dev[k][unbiased.size()] =
        max_abs_diff(enumerate_expected_gradient(env.policy, env.prompts, env.m, Estimator::none, params).expected_gradient,
                     truth);

    const QuadraticMse quad = mse_quadratic_fixed_prompts(models, env.m);
    const Vector enumerated = enumerate_naive_shrinkage_mse(models, env.m, kGammaGrid);
    for (std::size_t g = 0; g < kGammaGrid.size(); ++g) {
      quad_dev[k] = std::max(quad_dev[k], std::abs(enumerated[g] - quad(kGammaGrid[g])));
    }
    const Vector at3 = enumerate_naive_shrinkage_mse(models, env.m, kVertexGrid);
    const double n = static_cast<double>(env.prompts.size());
    const double lambda_vertex =
        parabola_vertex(std::span<const double, 3>(kVertexGrid), std::span<const double, 3>(at3.data(), 3)) * n /
        (n - 1.0);
    const ValueStats stats = true_value_stats(models, env.m);
    const double lambda_star = optimal_lambda_known(stats.v, stats.s, env.prompts.size()).lambda_star;
    vertex_dev[k] = std::abs(lambda_vertex - lambda_star);

    const double gamma_star = quad.argmin();
    const std::array<double, 3> grid{0.0, gamma_star, 1.0};
    grid_hit[k] = mse_grid_search(models, env.m, grid).best_index == 1 ? 0.0 : 1.0;
  });

  for (std::size_t e = 0; e <= unbiased.size(); ++e) {
    Vector col(kSuiteEnvs);
    for (std::size_t k = 0; k < kSuiteEnvs; ++k) col[k] = grad_dev[k][e];
    const std::string name = e < unbiased.size() ? estimator_label(unbiased[e]) : "none";
    result.rows.push_back(bound_row("unbiased_gradient", "estimator=" + name + " envs=" + std::to_string(kSuiteEnvs),
                                    max_of(col), kGradientTol));
  }

  {
    // n = 2, m = 2, one response per outcome: the naive shrinkage baseline
    // reuses r_i^j and so correlates with the score.
    TabularPolicy policy({{0.0, 0.0}, {0.3, -0.2}}, {{0.0, 1.0}, {0.0, 1.0}});
    const std::vector<std::size_t> prompts{0, 1};
    EstimatorParams params;
    params.js1_lambda = 0.5;
    const auto res = enumerate_expected_gradient(policy, prompts, 2, Estimator::js1, params);
    const double bias = max_abs_diff(res.expected_gradient, exact_grad_J(policy, prompts));
    result.rows.push_back({"js1_bias", "lambda=0.5 n=2 m=2", bias, kBiasFloor,
                           bias > kBiasFloor ? CheckStatus::pass : CheckStatus::fail});
  }

  result.rows.push_back(bound_row("fixed_prompt_quadratic", "gamma grid {0,0.25,0.5,0.75,1} envs=" +
                                                                std::to_string(kSuiteEnvs),
                                  max_of(quad_dev), kMseTol));
  result.rows.push_back(bound_row("fixed_prompt_vertex", "parabola through enumerated MSE vs v/(s+v)",
                                  max_of(vertex_dev), kVertexTol));
  result.rows.push_back(bound_row("grid_contains_closed_form", "closed-form gamma wins grid {0,gamma*,1}",
                                  max_of(grid_hit), 0.5));

  // Population mode on random finite mixtures.
  std::vector<PopulationDeviations> pop(kPopulationEnvs);
  parallel_for(kPopulationEnvs, threads, [&](std::size_t k) {
    const SmallPopulation p = random_population(cfg.seed, k);
    pop[k] = population_deviations(p.dist, p.n, p.m);
  });
  Vector pm(kPopulationEnvs), pv(kPopulationEnvs), cm(kPopulationEnvs), cv(kPopulationEnvs);
  for (std::size_t k = 0; k < kPopulationEnvs; ++k) {
    pm[k] = pop[k].exact_mse;
    pv[k] = pop[k].exact_vertex;
    cm[k] = pop[k].closed_form_mse;
    cv[k] = pop[k].closed_form_vertex;
  }
  const std::string pop_detail = "mixtures=" + std::to_string(kPopulationEnvs);
  result.rows.push_back(bound_row("population_quadratic", pop_detail + " exact coefficients", max_of(pm), kMseTol));
  result.rows.push_back(bound_row("population_vertex", pop_detail + " exact coefficients", max_of(pv), kVertexTol));
  result.rows.push_back({"population_quadratic_closed_form", pop_detail + " anchor noise E[sigma^2]/(m-1)", max_of(cm),
                         kMseTol, CheckStatus::deviation});
  result.rows.push_back({"population_vertex_closed_form", pop_detail + " ((n-1)/n) v2/(s2+v2)", max_of(cv),
                         kVertexTol, CheckStatus::deviation});

  if (cfg.distribution) {
    const std::size_t n = cfg.n;
    const std::size_t m = cfg.m.front();
    if (n < 2 || m < 2) throw ConfigError("population checks need n >= 2 and m >= 2", n < 2 ? "n" : "m");
    const std::uint64_t count = population_outcome_count(*cfg.distribution, n, m);
    if (count > kEnumerationLimit) throw TractabilityError(count, kEnumerationLimit);
    const PopulationDeviations d = population_deviations(*cfg.distribution, n, m);
    const std::string detail = "configured distribution n=" + std::to_string(n) + " m=" + std::to_string(m);
    result.rows.push_back(bound_row("population_quadratic", detail, d.exact_mse, kMseTol));
    result.rows.push_back(bound_row("population_vertex", detail, d.exact_vertex, kVertexTol));
    result.rows.push_back({"population_quadratic_closed_form", detail, d.closed_form_mse, kMseTol,
                           CheckStatus::deviation});
  }
  return result;
}

Report oracle_check_report(const ExperimentConfig& cfg, const OracleCheckResult& result) {
  Report report(make_provenance(cfg, Scenario::oracle_check), {"check", "detail", "value", "threshold", "status"});
  for (const auto& r : result.rows) {
    report.add_row({r.check, r.detail, r.value, r.threshold, std::string(to_string(r.status))});
  }
  return report;
}

Report run_oracle_check(const ExperimentConfig& cfg, unsigned threads) {
  return oracle_check_report(cfg, oracle_check(cfg, threads));
}

// ---------------------------------------------------------------- toy_train

std::vector<TrainTrace> toy_train(const ExperimentConfig& cfg, unsigned threads) {
  validate_for(cfg, Scenario::toy_train);
  const PromptDistribution& dist = effective_distribution(cfg);
  const TabularPolicy initial = TabularPolicy::from_distribution(dist);
  const std::size_t E = cfg.estimators.size();
  const std::size_t R = cfg.replications;
  const std::size_t runs = cfg.m.size() * E * R;
  std::vector<TrainTrace> traces(runs);

  parallel_for(runs, threads, [&](std::size_t task) {
    const std::size_t mi = task / (E * R);
    const std::size_t e = (task / R) % E;
    const std::size_t r = task % R;
    const std::size_t m = cfg.m[mi];
    const Estimator est = effective_estimator(cfg.estimators[e], cfg);
    TrainTrace& trace = traces[task];
    trace.m = m;
    trace.estimator = cfg.estimators[e];
    trace.replication = r;
    trace.expected_reward.reserve(cfg.steps + 1);
    trace.mean_lambda.reserve(cfg.steps + 1);

    TabularPolicy policy = initial;
    const auto J = [&] { return expected_reward(policy, dist.weights()); };
    trace.expected_reward.push_back(J());
    trace.mean_lambda.emplace_back();
    EstimatorParams params = estimator_params(cfg, dist, cfg.n, m);
    params.policy = &policy;
    std::size_t decreasing = 0;
    const auto lane = as_u32(r, "replications");
    for (std::size_t t = 1; t <= cfg.steps; ++t) {
      const auto step = as_u32(t, "steps");
      RngStream prompt_stream(cfg.seed, Purpose::train_prompts, step, lane);
      const auto idx = sample_prompt_indices(dist, cfg.n, prompt_stream);
      std::vector<PromptModel> models;
      models.reserve(idx.size());
      for (std::size_t k : idx) models.push_back(policy.prompt_model(k));
      const RewardBatch batch =
          sample_rewards(models, m, RngStream(cfg.seed, Purpose::train_rollouts, step, as_u32(r * cfg.n, "lane")));

      std::optional<double> lam;
      if (est == Estimator::js2_oracle_lambda) {
        std::vector<PromptModel> current;
        for (std::size_t k = 0; k < dist.size(); ++k) current.push_back(policy.prompt_model(k));
        params.oracle_lambda =
            oracle_lambda(PromptDistribution(std::move(current), Vector(dist.weights().begin(), dist.weights().end())),
                          cfg.n, m);
        lam = params.oracle_lambda;
      }
      const Advantages adv = compute_advantages(est, batch, params);
      if (adv.diagnostics) lam = mean(adv.diagnostics->lambda_hat);
      const Vector g = policy_gradient_from_advantages(policy, batch, adv.values);
      policy.ascend(g, cfg.learning_rate);

      const double now = J();
      decreasing = now < trace.expected_reward.back() ? decreasing + 1 : 0;
      trace.expected_reward.push_back(now);
      trace.mean_lambda.push_back(lam);
      if (!std::isfinite(now) || decreasing >= kDivergencePatience) {
        std::ostringstream msg;
        msg << "toy_train diverged: estimator " << to_string(cfg.estimators[e]) << ", m=" << m
            << ", replication " << r << ": J decreased for " << decreasing << " consecutive steps, J=" << now
            << " at step " << t;
        throw DivergenceError(msg.str());
      }
    }
  });
  return traces;
}

Report run_toy_train(const ExperimentConfig& cfg, unsigned threads) {
  const auto traces = toy_train(cfg, threads);
  Report report(make_provenance(cfg, Scenario::toy_train),
                {"m", "estimator", "replication", "step", "expected_reward", "mean_lambda"});
  for (const auto& tr : traces) {
    for (std::size_t t = 0; t < tr.expected_reward.size(); ++t) {
      if (t % cfg.log_every != 0 && t + 1 != tr.expected_reward.size()) continue;
      report.add_row({count_cell(tr.m), estimator_label(tr.estimator), count_cell(tr.replication), count_cell(t),
                      tr.expected_reward[t], optional_cell(tr.mean_lambda[t])});
    }
  }
  return report;
}

Report run_scenario(const ExperimentConfig& cfg, Scenario scenario, unsigned threads) {
  switch (scenario) {
    case Scenario::mse_sweep: return run_mse_sweep(cfg, threads);
    case Scenario::grad_variance: return run_grad_variance(cfg, threads);
    case Scenario::lambda_curve: return run_lambda_curve(cfg, threads);
    case Scenario::oracle_check: return run_oracle_check(cfg, threads);
    case Scenario::toy_train: return run_toy_train(cfg, threads);
  }
  throw ConfigError("unknown scenario", "scenario");
}

}  // namespace jsb
