// Acceptance suite: one line per criterion, "PASS" or "FAIL" with the
// measured quantities. Usage: jsb_acceptance [--criterion N]...

#include <sys/wait.h>

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "jsb/config.hpp"
#include "jsb/gradient.hpp"
#include "jsb/oracle.hpp"
#include "jsb/rng.hpp"
#include "jsb/scenarios.hpp"

using namespace jsb;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  int id;
  const char* name;
  double time_limit_s;
  std::function<Outcome()> run;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
  return d;
}

/// Paired standard error of mean(a - b).
double paired_se(std::span<const double> a, std::span<const double> b) {
  Vector d(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
  return std::sqrt(sample_variance(d) / double(d.size()));
}

// Random K = 2 tabular env with n prompts.
TabularPolicy random_policy(RngStream& rng, std::size_t n) {
  std::vector<std::vector<double>> logits(n), rewards(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (int k = 0; k < 2; ++k) {
      logits[i].push_back(4.0 * rng.uniform() - 2.0);
      rewards[i].push_back(rng.uniform() < 0.3 ? double(k) : rng.uniform());
    }
  }
  return TabularPolicy(std::move(logits), std::move(rewards));
}

std::vector<PromptModel> random_models(RngStream& rng, std::size_t n) {
  std::vector<PromptModel> out;
  for (std::size_t i = 0; i < n; ++i) {
    const double p = 0.05 + 0.9 * rng.uniform();
    const double lo = rng.uniform();
    out.emplace_back(i, Vector{lo, lo + 0.2 + rng.uniform()}, Vector{1 - p, p});
  }
  return out;
}

// (v, s) for fixed prompts: v = sum sigma^2 / (n m), s = (n-1)-denominator variance of mu.
std::pair<double, double> fixed_v_s(const std::vector<PromptModel>& ps, std::size_t m) {
  const double n = double(ps.size());
  double sig = 0, mu_bar = 0;
  for (const auto& p : ps) {
    const double mu = p.support()[0] * p.probs()[0] + p.support()[1] * p.probs()[1];
    const double e2 = p.support()[0] * p.support()[0] * p.probs()[0] + p.support()[1] * p.support()[1] * p.probs()[1];
    sig += e2 - mu * mu;
    mu_bar += mu;
  }
  mu_bar /= n;
  double s = 0;
  for (const auto& p : ps) s += (p.mean() - mu_bar) * (p.mean() - mu_bar);
  return {sig / (n * double(m)), s / (n - 1)};
}

Outcome unbiasedness() {
  RngStream rng(101, Purpose::test);
  const Estimator ests[] = {Estimator::rloo, Estimator::bloo, Estimator::js2, Estimator::global_mean_loo};
  double worst = 0.0;
  std::size_t envs = 0;
  for (std::size_t k = 0; k < 24; ++k) {
    const std::size_t n = 2 + k % 2, m = 2 + (k / 2) % 2;
    const TabularPolicy pol = random_policy(rng, n);
    std::vector<std::size_t> prompts(n);
    for (std::size_t i = 0; i < n; ++i) prompts[i] = i;
    const Vector truth = exact_grad_J(pol, prompts);
    for (Estimator e : ests) {
      worst = std::max(worst, max_abs_diff(enumerate_expected_gradient(pol, prompts, m, e).expected_gradient, truth));
    }
    ++envs;
  }
  return {worst < 1e-10, fmt("envs=%zu estimators=rloo,bloo,js2,global_mean_loo max|E[g]-grad J|=%.3e (bound 1e-10)",
                             envs, worst)};
}

Outcome js1_bias() {
  TabularPolicy pol({{0.0, 0.0}, {0.3, -0.2}}, {{0.0, 1.0}, {0.0, 1.0}});
  const std::vector<std::size_t> prompts{0, 1};
  EstimatorParams params;
  params.js1_lambda = 0.5;
  const auto res = enumerate_expected_gradient(pol, prompts, 2, Estimator::js1, params);
  const double bias = max_abs_diff(res.expected_gradient, exact_grad_J(pol, prompts));
  return {bias > 1e-3, fmt("n=2 m=2 lambda=0.5 |E[g]-grad J|_inf=%.6f (floor 1e-3)", bias)};
}

Outcome fixed_quadratic() {
  RngStream rng(303, Purpose::test);
  const Vector gammas{0.0, 0.25, 0.5, 0.75, 1.0};
  double worst_mse = 0.0, worst_vertex = 0.0;
  for (std::size_t k = 0; k < 20; ++k) {
    const std::size_t n = 2 + k % 3, m = 2 + (k / 3) % 2;
    const auto ps = random_models(rng, n);
    const auto [v, s] = fixed_v_s(ps, m);
    const double nn = double(n);
    const auto quad = [&](double g) { return nn / (nn - 1) * (s + v) * g * g - 2 * v * g + v; };
    const Vector mse = enumerate_naive_shrinkage_mse(ps, m, gammas);
    for (std::size_t g = 0; g < gammas.size(); ++g) worst_mse = std::max(worst_mse, std::abs(mse[g] - quad(gammas[g])));
    const std::array<double, 3> t{0.0, 0.5, 1.0};
    const std::array<double, 3> f{mse[0], mse[2], mse[4]};
    const double lambda_vertex = parabola_vertex(t, f) * nn / (nn - 1);
    worst_vertex = std::max(worst_vertex, std::abs(lambda_vertex - v / (s + v)));
  }
  return {worst_mse < 1e-12 && worst_vertex < 1e-9,
          fmt("envs=20 max|enum-quadratic|=%.3e (bound 1e-12) max|vertex*n/(n-1) - v/(s+v)|=%.3e (bound 1e-9)",
              worst_mse, worst_vertex)};
}

Outcome population_quadratic() {
  RngStream rng(404, Purpose::test);
  const Vector lambdas{0.0, 0.25, 0.5, 0.75, 1.0};
  double worst_mse = 0.0, worst_vertex = 0.0, worst_exact = 0.0;
  for (std::size_t k = 0; k < 12; ++k) {
    const std::size_t K = 1 + k % 3, n = 2 + (k / 3) % 2, m = 2 + (k / 6) % 2;
    auto models = random_models(rng, K);
    Vector w(K);
    double tot = 0;
    for (double& x : w) tot += (x = 0.5 + rng.uniform());
    for (double& x : w) x /= tot;
    const PromptDistribution d(models, w);
    double e_sig = 0, e_mu = 0, e_mu2 = 0;
    for (std::size_t j = 0; j < K; ++j) {
      e_sig += w[j] * models[j].variance();
      e_mu += w[j] * models[j].mean();
      e_mu2 += w[j] * models[j].mean() * models[j].mean();
    }
    const double v2 = e_sig / double(m - 1), s2 = e_mu2 - e_mu * e_mu, nn = double(n);
    const auto quad = [&](double l) { return nn / (nn - 1) * (s2 + v2) * l * l - 2 * v2 * l + v2; };
    const Vector mse = enumerate_loo_shrinkage_mse(d, n, m, lambdas);
    const auto exact = mse_quadratic_population_exact(d, n, m);
    for (std::size_t g = 0; g < lambdas.size(); ++g) {
      worst_mse = std::max(worst_mse, std::abs(mse[g] - quad(lambdas[g])));
      worst_exact = std::max(worst_exact, std::abs(mse[g] - exact(lambdas[g])));
    }
    const std::array<double, 3> t{0.0, 0.5, 1.0};
    const std::array<double, 3> f{mse[0], mse[2], mse[4]};
    worst_vertex = std::max(worst_vertex, std::abs(parabola_vertex(t, f) - (nn - 1) / nn * v2 / (s2 + v2)));
  }
  return {worst_mse < 1e-12 && worst_vertex < 1e-9,
          fmt("mixtures=12 max|enum-closed form|=%.3e (bound 1e-12) max|vertex-((n-1)/n)v2/(s2+v2)|=%.3e (bound 1e-9); "
              "with anchor noise E[sigma^2]/m the exact quadratic agrees to %.3e",
              worst_mse, worst_vertex, worst_exact)};
}

Outcome microbatch() {
  const std::vector<GradientSample> hand{{{1.0, 0.0}, 0, 0}, {{0.0, 1.0}, 0, 1}};
  const double h = microbatch_trace_variance(hand).trace_var;

  TabularPolicy pol({{0.2, -0.5, 0.4}, {1.0, 0.0}}, {{0.0, 1.0, 0.3}, {1.0, 0.2}});
  const std::vector<std::size_t> prompts{0, 1};
  const std::size_t m = 3, M = 8, redraws = 100000;
  const double exact_single = enumerate_expected_gradient(pol, prompts, m, Estimator::rloo).trace_variance;
  const double target = exact_single / double(M);
  std::vector<PromptModel> models{pol.prompt_model(0), pol.prompt_model(1)};
  Vector est(redraws);
  for (std::size_t r = 0; r < redraws; ++r) {
    std::vector<GradientSample> group(M);
    for (std::size_t k = 0; k < M; ++k) {
      const auto lane = static_cast<std::uint32_t>((r * M + k) * prompts.size());
      const RewardBatch b = sample_rewards(models, m, RngStream(55, Purpose::test, 0, lane));
      group[k].vector = estimator_gradient(pol, b, Estimator::rloo, {});
    }
    est[r] = microbatch_trace_variance(group).trace_var;
  }
  const double mc = mean(est);
  const double rel = std::abs(mc - target) / target;
  return {h == 0.5 && rel < 0.02,
          fmt("hand case=%.17g (want 0.5); mean over %zu redraws=%.6e exact Tr Cov(g_bar)=%.6e rel err=%.4f (bound 0.02)",
              h, redraws, mc, target, rel)};
}

Outcome mse_sweep_ordering() {
  auto cfg = load_config(std::string(JSB_CONFIG_DIR) + "/mse_sweep.json");
  cfg.n = 64;
  cfg.m = {2, 4, 8};
  cfg.estimators = {Estimator::rloo, Estimator::js2};
  cfg.replications = 10000;
  cfg.lambda_mode = LambdaMode::paper;
  const auto cells = mse_sweep(cfg, 1);
  bool pass = true;
  std::string detail;
  double prev_gap = 1e300;
  for (std::size_t k = 0; k < cells.size(); k += 2) {
    const auto& rloo = cells[k];
    const auto& js = cells[k + 1];
    const double se = paired_se(rloo.per_replication, js.per_replication);
    const double margin = (rloo.mse - js.mse) / se;
    const double gap = (rloo.mse - js.mse) / rloo.mse;
    pass = pass && margin > 3.0 && gap < prev_gap;
    prev_gap = gap;
    detail += fmt("m=%zu rloo=%.5f js2=%.5f margin=%.1f se rel gap=%.3f; ", rloo.m, rloo.mse, js.mse, margin, gap);
  }
  return {pass, detail + "n=64 R=10000"};
}

Outcome lambda_decreasing() {
  auto cfg = load_config(std::string(JSB_CONFIG_DIR) + "/lambda_curve.json");
  cfg.m = {2, 4, 8, 16};
  cfg.replications = 1000;
  const auto pts = lambda_curve(cfg, 1);
  bool pass = true;
  std::string detail;
  for (std::size_t k = 0; k < pts.size(); ++k) {
    if (k > 0) pass = pass && pts[k].mean < pts[k - 1].mean;
    detail += fmt("m=%zu mean lambda=%.4f; ", pts[k].m, pts[k].mean);
  }
  return {pass, detail + "R=1000"};
}

Outcome gradient_variance_ordering() {
  auto cfg = load_config(std::string(JSB_CONFIG_DIR) + "/grad_variance.json");
  cfg.m = {2};
  cfg.estimators = {Estimator::none, Estimator::rloo, Estimator::js2};
  cfg.replications = 100000;
  const auto rows = grad_variance(cfg, 1);
  const auto& none = rows[0].moments;
  const auto& rloo = rows[1].moments;
  const auto& js = rows[2].moments;
  const double scale = double(cfg.replications) / double(cfg.replications - 1);
  const double se_none = scale * paired_se(none.squared_deviation, rloo.squared_deviation);
  const double se_js = scale * paired_se(rloo.squared_deviation, js.squared_deviation);
  const double m1 = (none.variance.trace_var - rloo.variance.trace_var) / se_none;
  const double m2 = (rloo.variance.trace_var - js.variance.trace_var) / se_js;
  return {m1 > 3.0 && m2 > 3.0,
          fmt("n=%zu m=2 R=100000 TrVar none=%.6e rloo=%.6e js2=%.6e; none-rloo=%.1f se, rloo-js2=%.1f se", cfg.n,
              none.variance.trace_var, rloo.variance.trace_var, js.variance.trace_var, m1, m2)};
}

std::string read_body(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::string out;
  for (std::string line; std::getline(in, line);) {
    if (line.find("generated_at") == std::string::npos) out += line + "\n";
  }
  return out;
}

Outcome cli_determinism() {
  const auto dir = std::filesystem::temp_directory_path() / "jsb_acceptance_det";
  std::filesystem::create_directories(dir);
  const char* scenarios[] = {"mse_sweep", "grad_variance", "lambda_curve", "oracle_check", "toy_train"};
  bool pass = true;
  std::string detail;
  for (const char* s : scenarios) {
    std::string cmd_name = s;
    for (char& c : cmd_name) {
      if (c == '_') c = '-';
    }
    for (const char* format : {"csv", "json"}) {
      std::string bodies[2];
      for (int t = 0; t < 2; ++t) {
        const int threads = t == 0 ? 1 : 8;
        const auto out = dir / (std::string(s) + "_" + std::to_string(threads) + "." + format);
        const std::string cmd = std::string(JSB_CLI_PATH) + " " + cmd_name + " --config " + JSB_CONFIG_DIR + "/" + s +
                                ".json --threads " + std::to_string(threads) + " --format " + format + " --out " +
                                out.string() + " 2>/dev/null";
        const int status = std::system(cmd.c_str());
        if (!WIFEXITED(status) || WEXITSTATUS(status) != 0) {
          pass = false;
          detail += fmt("%s exited %d; ", s, WIFEXITED(status) ? WEXITSTATUS(status) : -1);
        }
        bodies[t] = read_body(out);
      }
      const bool same = !bodies[0].empty() && bodies[0] == bodies[1];
      pass = pass && same;
      detail += fmt("%s/%s %s (%zu bytes); ", s, format, same ? "identical" : "DIFFERENT", bodies[0].size());
    }
  }
  std::filesystem::remove_all(dir);
  return {pass, detail + "threads 1 vs 8"};
}

Outcome degenerate() {
  bool pass = true;
  std::string detail;
  std::size_t batches = 0;
  const Estimator centered[] = {Estimator::prompt_mean, Estimator::rloo,       Estimator::bloo,
                                Estimator::global_mean, Estimator::js1,        Estimator::js2,
                                Estimator::js2_debiased, Estimator::grpo,      Estimator::grpo_nostd,
                                Estimator::global_mean_loo};
  for (double c : {0.0, 1.0, 0.1, 0.7, -3.25}) {
    for (std::size_t n : {2u, 3u, 7u}) {
      for (std::size_t m : {2u, 5u}) {
        std::vector<std::vector<double>> rows(n, std::vector<double>(m, c));
        RewardBatch b = RewardBatch::from_rows(rows);
        std::vector<std::vector<double>> logits(n, std::vector<double>(m, 0.0));
        std::vector<std::vector<double>> rewards(n, std::vector<double>(m, c));
        const TabularPolicy pol(logits, rewards);
        IndexMatrix ids(n, m);
        for (std::size_t i = 0; i < n; ++i) {
          for (std::size_t j = 0; j < m; ++j) ids(i, j) = j;
        }
        b.response_ids = ids;
        for (ShrinkageMode mode : {ShrinkageMode::paper, ShrinkageMode::debiased}) {
          for (double l : shrinkage_diagnostics(b, mode).lambda_hat) pass = pass && l == 0.0;
        }
        EstimatorParams params;
        params.policy = &pol;
        for (Estimator e : centered) {
          const Advantages adv = compute_advantages(e, b, params);
          for (double a : adv.values.data()) pass = pass && a == 0.0;
          for (double g : estimator_gradient(pol, b, e, params)) pass = pass && g == 0.0;
        }
        ++batches;
      }
    }
  }
  if (!pass) detail += "nonzero lambda, advantage or gradient on an all-equal batch; ";
  const auto cfg = parse_config(nlohmann::json::parse(
      R"({"n": 4, "m": [2, 3], "estimators": ["rloo", "bloo", "js2", "grpo", "grpo_nostd", "none", "remax", "js1"],
          "replications": 16, "steps": 10,
          "distribution": {"models": [{"support": [0.5, 0.5], "probs": [0.5, 0.5]}]}})"));
  std::size_t reports = 0;
  for (Scenario s : {Scenario::mse_sweep, Scenario::grad_variance, Scenario::lambda_curve, Scenario::toy_train}) {
    const Report report = run_scenario(cfg, s, 1);
    // JSON: every numeric value finite. CSV: no field spells a non-finite value.
    const auto doc = nlohmann::json::parse(report.to_string(ReportFormat::json));
    for (const auto& rec : doc.at("records")) {
      for (const auto& [key, value] : rec.items()) {
        if (value.is_number() && !std::isfinite(value.get<double>())) {
          pass = false;
          detail += fmt("non-finite %s in %s report; ", key.c_str(), std::string(to_string(s)).c_str());
        }
      }
    }
    std::istringstream csv(report.to_string(ReportFormat::csv));
    for (std::string line; std::getline(csv, line);) {
      std::istringstream fields(line);
      for (std::string f; std::getline(fields, f, ',');) {
        if (!f.empty() && f.back() == '\r') f.pop_back();
        for (char& ch : f) ch = char(std::tolower(static_cast<unsigned char>(ch)));
        if (f == "nan" || f == "-nan" || f == "inf" || f == "-inf" || f == "infinity" || f == "-infinity") {
          pass = false;
          detail += fmt("%s field in %s csv; ", f.c_str(), std::string(to_string(s)).c_str());
        }
      }
    }
    reports += 2;
  }
  return {pass, detail + fmt("batches=%zu with lambda_hat=0, zero advantages and gradients; %zu reports free of NaN/Inf",
                             batches, reports)};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> all = {
      {1, "unbiasedness", 10, unbiasedness},
      {2, "js1_bias_witness", 1, js1_bias},
      {3, "fixed_prompt_quadratic", 10, fixed_quadratic},
      {4, "population_quadratic", 30, population_quadratic},
      {5, "microbatch_variance", 20, microbatch},
      {6, "mse_sweep_ordering", 120, mse_sweep_ordering},
      {7, "lambda_decreasing", 30, lambda_decreasing},
      {8, "gradient_variance_ordering", 180, gradient_variance_ordering},
      {9, "cli_determinism", 600, cli_determinism},
      {10, "degenerate_batches", 30, degenerate},
  };
  std::vector<int> wanted;
  for (int a = 1; a < argc; ++a) {
    const std::string arg = argv[a];
    if (arg == "--criterion" && a + 1 < argc) {
      wanted.push_back(std::atoi(argv[++a]));
    } else {
      std::cerr << "usage: jsb_acceptance [--criterion N]...\n";
      return 64;
    }
  }
  int failures = 0;
  for (const auto& c : all) {
    if (!wanted.empty() && std::find(wanted.begin(), wanted.end(), c.id) == wanted.end()) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_time = secs <= c.time_limit_s;
    const bool pass = o.pass && in_time;
    std::cout << "criterion " << c.id << " " << c.name << ": " << (pass ? "PASS" : "FAIL") << " | " << o.detail
              << " | " << fmt("%.2fs (limit %.0fs%s)", secs, c.time_limit_s, in_time ? "" : ", EXCEEDED") << std::endl;
    failures += pass ? 0 : 1;
  }
  return failures == 0 ? 0 : 1;
}
