#include <gtest/gtest.h>

#include <cmath>

#include "jsb/errors.hpp"
#include "jsb/scenarios.hpp"

using namespace jsb;
using nlohmann::json;

namespace {

ExperimentConfig cfg_from(const std::string& text) { return parse_config(json::parse(text)); }

std::string body(const Report& r) {
  std::string out;
  std::istringstream in(r.to_string(ReportFormat::csv));
  for (std::string line; std::getline(in, line);) {
    if (line.rfind("# generated_at=", 0) != 0) out += line + "\n";
  }
  return out;
}

double expected_sigma2(const PromptDistribution& d) {
  double s = 0.0;
  for (std::size_t k = 0; k < d.size(); ++k) s += d.weights()[k] * d.model(k).variance();
  return s;
}

}  // namespace

TEST(MseSweep, DeterministicEnvHasZeroError) {
  const auto cfg = cfg_from(R"({"n": 4, "m": [2, 3], "estimators": ["rloo", "bloo", "js2", "global_mean"],
    "replications": 50, "distribution": {"models": [{"support": [0, 1], "probs": [0, 1]}]}})");
  for (const auto& c : mse_sweep(cfg)) {
    EXPECT_EQ(c.mse, 0.0) << to_string(c.estimator);
    ASSERT_TRUE(c.exact_mse.has_value());
    EXPECT_EQ(*c.exact_mse, 0.0);
  }
}

TEST(MseSweep, RlooMatchesLooMeanVariance) {
  const auto cfg = cfg_from(R"({"seed": 5, "n": 16, "m": [2, 4, 8], "estimators": ["rloo"], "replications": 10000})");
  const double s2 = expected_sigma2(effective_distribution(cfg));
  for (const auto& c : mse_sweep(cfg)) {
    const double expect = s2 / double(c.m - 1);
    EXPECT_NEAR(c.mse, expect, 3 * c.mse_stderr) << "m=" << c.m;
    EXPECT_FALSE(c.exact_mse.has_value());
  }
}

TEST(MseSweep, MonteCarloAgreesWithExactWhenTractable) {
  const auto cfg = cfg_from(R"({"seed": 2, "n": 3, "m": [2], "estimators": ["rloo", "bloo", "js2", "js1", "grpo"],
    "replications": 20000, "distribution": {"models": [{"support": [0, 1], "probs": [0.7, 0.3]},
                                                       {"support": [0, 1], "probs": [0.2, 0.8]}]}})");
  for (const auto& c : mse_sweep(cfg)) {
    ASSERT_TRUE(c.exact_mse.has_value());
    EXPECT_NEAR(c.mse, *c.exact_mse, 4 * c.mse_stderr) << to_string(c.estimator);
  }
  const auto report = run_mse_sweep(cfg);
  const auto flag = report.column_index("exact_flag");
  for (const auto& row : report.rows()) EXPECT_EQ(std::get<std::int64_t>(row[flag]), 1);
}

TEST(MseSweep, Js2BeatsRlooOnHeterogeneousEnv) {
  const auto cfg = cfg_from(R"({"seed": 9, "n": 32, "m": [2, 4, 8], "estimators": ["rloo", "js2"], "replications": 4000})");
  const auto cells = mse_sweep(cfg);
  for (std::size_t k = 0; k < cells.size(); k += 2) {
    Vector diff(cfg.replications);
    for (std::size_t r = 0; r < diff.size(); ++r) {
      diff[r] = cells[k].per_replication[r] - cells[k + 1].per_replication[r];
    }
    EXPECT_GT(mean(diff), 3 * std::sqrt(sample_variance(diff) / double(diff.size()))) << "m=" << cells[k].m;
  }
}

TEST(MseSweep, LambdaModesChangeOnlyJs2) {
  auto cfg = cfg_from(R"({"seed": 1, "n": 8, "m": [4], "estimators": ["rloo", "js2"], "replications": 200})");
  const auto paper = mse_sweep(cfg);
  cfg.lambda_mode = LambdaMode::oracle;
  const auto oracle = mse_sweep(cfg);
  EXPECT_EQ(paper[0].mse, oracle[0].mse);
  EXPECT_NE(paper[1].mse, oracle[1].mse);
  EXPECT_EQ(effective_estimator(Estimator::js2, cfg), Estimator::js2_oracle_lambda);
  EXPECT_EQ(effective_estimator(Estimator::rloo, cfg), Estimator::rloo);
}

TEST(GradVariance, ZeroRewardEnvHasZeroVariance) {
  const auto cfg = cfg_from(R"({"n": 4, "m": [2], "estimators": ["none", "rloo", "js2", "grpo"], "replications": 64,
    "distribution": {"models": [{"support": [0, 0], "probs": [0.5, 0.5]}, {"support": [0, 0, 0], "probs": [0.2, 0.3, 0.5]}]}})");
  for (const auto& r : grad_variance(cfg)) {
    EXPECT_EQ(r.moments.variance.trace_var, 0.0);
    EXPECT_EQ(r.moments.microbatch.trace_var, 0.0);
  }
}

TEST(GradVariance, NoBaselineIsNoisiest) {
  const auto cfg = cfg_from(R"({"seed": 4, "n": 8, "m": [2], "estimators": ["none", "rloo", "js2", "bloo"], "replications": 8000})");
  const auto rows = grad_variance(cfg);
  for (std::size_t e = 1; e < rows.size(); ++e) {
    Vector diff(cfg.replications);
    for (std::size_t r = 0; r < diff.size(); ++r) {
      diff[r] = rows[0].moments.squared_deviation[r] - rows[e].moments.squared_deviation[r];
    }
    const double se = std::sqrt(sample_variance(diff) / double(diff.size()));
    EXPECT_GT(rows[0].moments.variance.trace_var - rows[e].moments.variance.trace_var, 3 * se)
        << to_string(rows[e].estimator);
  }
}

TEST(GradVariance, MicrobatchMeterTracksMonteCarloOverM) {
  const auto cfg = cfg_from(R"({"seed": 6, "n": 8, "m": [4], "estimators": ["rloo"], "replications": 16000,
                               "microbatch_size": 8})");
  const auto rows = grad_variance(cfg);
  const auto& mom = rows[0].moments;
  EXPECT_NEAR(mom.microbatch.trace_var * 8, mom.variance.trace_var, 0.05 * mom.variance.trace_var);
  const auto report = run_grad_variance(cfg);
  EXPECT_EQ(std::get<std::uint64_t>(report.rows()[0][report.column_index("microbatch_samples")]), 16000u);
}

TEST(LambdaCurve, DecreasesWithRollouts) {
  const auto cfg = cfg_from(R"({"seed": 3, "n": 16, "m": [2, 4, 8], "replications": 500})");
  const auto pts = lambda_curve(cfg);
  for (std::size_t k = 1; k < pts.size(); ++k) EXPECT_LE(pts[k].mean, pts[k - 1].mean);
}

TEST(LambdaCurve, HomogeneousMeansApproachCapWhenDebiased) {
  auto cfg = cfg_from(R"({"seed": 8, "n": 32, "m": [2, 4, 8], "replications": 1000, "lambda_mode": "debiased",
    "distribution": {"models": [{"support": [0, 1], "probs": [0.5, 0.5]}, {"support": [0.25, 0.75], "probs": [0.5, 0.5]}]}})");
  const double cap = 31.0 / 32.0;
  for (const auto& pt : lambda_curve(cfg)) EXPECT_NEAR(pt.mean, cap, 0.1) << "m=" << pt.m;
  cfg.lambda_mode = LambdaMode::oracle;
  for (const auto& pt : lambda_curve(cfg)) EXPECT_NEAR(pt.mean, cap, 1e-15);
}

TEST(LambdaCurve, HomogeneousMeansPaperModeFirstOrder) {
  // With s2 = 0, E[s_hat] = ((n-2)/(n-1)) E[v_hat] to first order, so
  // lambda_hat ~ ((n-1)/n) (n-1)/(2n-3).
  const auto cfg = cfg_from(R"({"seed": 8, "n": 16, "m": [4, 8], "replications": 1000,
    "distribution": {"models": [{"support": [0, 1], "probs": [0.5, 0.5]}]}})");
  const double approx = 15.0 / 16.0 * 15.0 / 29.0;
  for (const auto& pt : lambda_curve(cfg)) EXPECT_NEAR(pt.mean, approx, 0.05) << "m=" << pt.m;
}

TEST(LambdaCurve, DeterministicRewardsGiveZero) {
  const auto cfg = cfg_from(R"({"n": 4, "m": [2, 5], "replications": 20,
    "distribution": {"models": [{"support": [1], "probs": [1]}, {"support": [0.3], "probs": [1]}]}})");
  for (const auto& pt : lambda_curve(cfg)) {
    for (double l : pt.per_replication) EXPECT_EQ(l, 0.0);
  }
  const auto report = run_lambda_curve(cfg);
  EXPECT_EQ(report.rows().size(), 2u * 21u);
}

TEST(OracleCheck, DefaultSuitePasses) {
  const auto res = oracle_check(ExperimentConfig{});
  EXPECT_TRUE(res.passed());
  bool saw_bias = false;
  for (const auto& r : res.rows) {
    if (r.check == "unbiased_gradient") EXPECT_LT(r.value, 1e-10);
    if (r.check == "js1_bias") {
      saw_bias = true;
      EXPECT_GT(r.value, 1e-3);
    }
    if (r.check == "fixed_prompt_vertex" || r.check == "population_vertex") EXPECT_LT(r.value, 1e-9);
  }
  EXPECT_TRUE(saw_bias);
}

TEST(OracleCheck, OversizedDistributionIsRefused) {
  auto cfg = cfg_from(R"({"n": 8, "m": [4]})");
  cfg.distribution = default_distribution();
  EXPECT_THROW(oracle_check(cfg), TractabilityError);
}

TEST(ToyTrain, ConvergesOnFourPromptEnv) {
  const auto cfg = load_config(std::string(JSB_CONFIG_DIR) + "/toy_train.json");
  for (const auto& tr : toy_train(cfg, 2)) {
    if (tr.estimator == Estimator::none) continue;
    ASSERT_EQ(tr.expected_reward.size(), cfg.steps + 1);
    EXPECT_GT(tr.expected_reward.back(), 0.99) << to_string(tr.estimator);
  }
}

TEST(ToyTrain, ZeroLearningRateKeepsRewardConstant) {
  auto cfg = load_config(std::string(JSB_CONFIG_DIR) + "/toy_train.json");
  cfg.learning_rate = 0.0;
  cfg.steps = 25;
  for (const auto& tr : toy_train(cfg)) {
    for (double j : tr.expected_reward) EXPECT_EQ(j, tr.expected_reward.front());
  }
}

TEST(ToyTrain, ShrinkageAreaNotBelowRloo) {
  auto cfg = load_config(std::string(JSB_CONFIG_DIR) + "/toy_train.json");
  cfg.m = {2};
  cfg.estimators = {Estimator::rloo, Estimator::js2};
  cfg.replications = 20;
  cfg.steps = 300;
  cfg.learning_rate = 0.5;
  const auto traces = toy_train(cfg, 2);
  double area[2] = {0, 0};
  for (const auto& tr : traces) area[tr.estimator == Estimator::js2] += pairwise_sum(tr.expected_reward);
  EXPECT_GE(area[1], area[0]);
}

TEST(ToyTrain, LogEveryKeepsFirstAndLastStep) {
  auto cfg = load_config(std::string(JSB_CONFIG_DIR) + "/toy_train.json");
  cfg.steps = 7;
  cfg.log_every = 3;
  cfg.estimators = {Estimator::js2};
  cfg.replications = 1;
  const auto report = run_toy_train(cfg);
  const auto col = report.column_index("step");
  std::vector<std::uint64_t> steps;
  for (const auto& row : report.rows()) steps.push_back(std::get<std::uint64_t>(row[col]));
  EXPECT_EQ(steps, (std::vector<std::uint64_t>{0, 3, 6, 7}));
}

TEST(Scenarios, ReportsIndependentOfThreadCount) {
  auto cfg = cfg_from(R"({"seed": 12, "n": 6, "m": [2, 3], "estimators": ["rloo", "bloo", "js2", "grpo", "none"],
                          "replications": 150, "steps": 20})");
  for (Scenario s : {Scenario::mse_sweep, Scenario::grad_variance, Scenario::lambda_curve, Scenario::oracle_check,
                     Scenario::toy_train}) {
    EXPECT_EQ(body(run_scenario(cfg, s, 1)), body(run_scenario(cfg, s, 3))) << to_string(s);
  }
}

TEST(Scenarios, DegenerateReportsAreFinite) {
  const auto cfg = cfg_from(R"({"n": 4, "m": [2, 3], "estimators": ["rloo", "bloo", "js2", "grpo", "grpo_nostd", "none"],
    "replications": 10, "steps": 5,
    "distribution": {"models": [{"support": [1, 1], "probs": [0.5, 0.5]}]}})");
  for (Scenario s : {Scenario::mse_sweep, Scenario::grad_variance, Scenario::lambda_curve, Scenario::toy_train}) {
    const auto doc = json::parse(run_scenario(cfg, s).to_string(ReportFormat::json));
    for (const auto& rec : doc.at("records")) {
      for (const auto& [key, value] : rec.items()) {
        if (value.is_number()) EXPECT_TRUE(std::isfinite(value.get<double>())) << key;
      }
    }
  }
}
