#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "jsb/config.hpp"
#include "jsb/errors.hpp"
#include "jsb/report.hpp"
#include "jsb/scenarios.hpp"
#include "jsb/version.hpp"

namespace {

enum ExitCode : int { kOk = 0, kConfigError = 1, kOracleFailure = 2, kTractability = 3, kDiverged = 4 };

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string format;
  unsigned threads = 1;
};

void add_common(CLI::App* sub, Options& opt) {
  sub->add_option("--config", opt.config, "experiment config (JSON)")->check(CLI::ExistingFile);
  sub->add_option("--seed", opt.seed, "override the config seed");
  sub->add_option("--out", opt.out, "report path (default: config output, else stdout)");
  sub->add_option("--format", opt.format, "report format")->check(CLI::IsMember({"csv", "json"}));
  sub->add_option("--threads", opt.threads, "worker threads")->check(CLI::Range(1u, 1024u));
}

int run(jsb::Scenario scenario, const Options& opt) {
  jsb::ExperimentConfig cfg = opt.config.empty() ? jsb::ExperimentConfig{} : jsb::load_config(opt.config);
  if (opt.seed) cfg.seed = *opt.seed;
  if (!opt.out.empty()) cfg.output = opt.out;
  if (!opt.format.empty()) cfg.format = *jsb::parse_format(opt.format);

  int code = kOk;
  jsb::Report report = [&] {
    if (scenario != jsb::Scenario::oracle_check) return jsb::run_scenario(cfg, scenario, opt.threads);
    const auto result = jsb::oracle_check(cfg, opt.threads);
    if (!result.passed()) code = kOracleFailure;
    return jsb::oracle_check_report(cfg, result);
  }();

  if (cfg.output.empty()) {
    report.write(std::cout, cfg.format);
  } else {
    std::ofstream out(cfg.output, std::ios::binary);
    if (!out) throw jsb::ConfigError("cannot open " + cfg.output + " for writing", "output");
    report.write(out, cfg.format);
  }
  if (code == kOracleFailure) std::cerr << "oracle-check: at least one check failed\n";
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Baseline estimator simulator for critic-free policy gradients"};
  app.set_version_flag("--version", std::string(jsb::kVersion));
  app.require_subcommand(1);

  Options opt;
  const std::pair<const char*, const char*> commands[] = {
      {"mse-sweep", "baseline MSE against the true prompt values, per m and estimator"},
      {"grad-variance", "Monte Carlo and micro-batch trace variance of the policy gradient"},
      {"lambda-curve", "mean plug-in shrinkage coefficient per m"},
      {"oracle-check", "exact-enumeration checks on small environments"},
      {"toy-train", "gradient ascent on the tabular policy"},
  };
  for (const auto& [name, help] : commands) add_common(app.add_subcommand(name, help), opt);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kConfigError;
  }

  const std::string name = app.get_subcommands().front()->get_name();
  try {
    return run(*jsb::parse_scenario(name), opt);
  } catch (const jsb::TractabilityError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kTractability;
  } catch (const jsb::DivergenceError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kDiverged;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kConfigError;
  }
}
