#include "jsb/config.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>

#include "jsb/errors.hpp"

namespace jsb {
namespace {

using nlohmann::json;

const std::set<std::string>& known_fields() {
  static const std::set<std::string> fields = {
      "seed",  "n",         "m",         "estimators",    "distribution", "replications", "lambda_mode",
      "scenario", "output", "format",    "learning_rate", "steps",        "log_every",    "js1_lambda",
      "grpo_epsilon", "microbatch_size",
  };
  return fields;
}

std::size_t get_count(const json& doc, const char* field, std::size_t min) {
  const json& v = doc.at(field);
  if (!v.is_number_integer()) throw ConfigError("must be an integer", field);
  if (v.is_number_unsigned() || v.get<std::int64_t>() >= 0) {
    const auto x = v.get<std::uint64_t>();
    if (x >= min) return static_cast<std::size_t>(x);
  }
  throw ConfigError("must be >= " + std::to_string(min), field);
}

double get_real(const json& doc, const char* field) {
  const json& v = doc.at(field);
  if (!v.is_number()) throw ConfigError("must be a number", field);
  return v.get<double>();
}

std::string get_string(const json& doc, const char* field) {
  const json& v = doc.at(field);
  if (!v.is_string()) throw ConfigError("must be a string", field);
  return v.get<std::string>();
}

const PromptDistribution& builtin_default() {
  static const PromptDistribution d = default_distribution();
  return d;
}

std::size_t min_rollouts(Estimator e) {
  switch (e) {
    case Estimator::rloo:
    case Estimator::js2:
    case Estimator::js2_debiased:
    case Estimator::js2_oracle_lambda:
    case Estimator::grpo:
    case Estimator::grpo_nostd:
      return 2;
    default:
      return 1;
  }
}

std::size_t min_prompts(Estimator e) {
  switch (e) {
    case Estimator::bloo:
    case Estimator::js2:
    case Estimator::js2_debiased:
    case Estimator::js2_oracle_lambda:
      return 2;
    default:
      return 1;
  }
}

}  // namespace

std::string_view to_string(Scenario s) noexcept {
  switch (s) {
    case Scenario::mse_sweep: return "mse_sweep";
    case Scenario::grad_variance: return "grad_variance";
    case Scenario::lambda_curve: return "lambda_curve";
    case Scenario::oracle_check: return "oracle_check";
    case Scenario::toy_train: return "toy_train";
  }
  return "unknown";
}

std::string_view to_string(LambdaMode l) noexcept {
  switch (l) {
    case LambdaMode::paper: return "paper";
    case LambdaMode::debiased: return "debiased";
    case LambdaMode::oracle: return "oracle";
  }
  return "unknown";
}

std::string_view to_string(ReportFormat f) noexcept { return f == ReportFormat::csv ? "csv" : "json"; }

std::optional<Scenario> parse_scenario(std::string_view s) noexcept {
  std::string norm(s);
  for (char& c : norm) {
    if (c == '-') c = '_';
  }
  for (Scenario sc : {Scenario::mse_sweep, Scenario::grad_variance, Scenario::lambda_curve, Scenario::oracle_check,
                      Scenario::toy_train}) {
    if (to_string(sc) == norm) return sc;
  }
  return std::nullopt;
}

std::optional<ReportFormat> parse_format(std::string_view s) noexcept {
  if (s == "csv") return ReportFormat::csv;
  if (s == "json") return ReportFormat::json;
  return std::nullopt;
}

ExperimentConfig parse_config(const json& doc, const std::filesystem::path& base_dir) {
  if (!doc.is_object()) throw ConfigError("config must be a JSON object");
  for (const auto& [key, _] : doc.items()) {
    if (!known_fields().contains(key)) throw ConfigError("unknown field", key);
  }
  ExperimentConfig cfg;
  if (doc.contains("seed")) {
    const json& v = doc.at("seed");
    if (!v.is_number_integer() || (!v.is_number_unsigned() && v.get<std::int64_t>() < 0)) {
      throw ConfigError("must be a nonnegative 64-bit integer", "seed");
    }
    cfg.seed = v.get<std::uint64_t>();
  }
  if (doc.contains("n")) cfg.n = get_count(doc, "n", 1);
  if (doc.contains("m")) {
    const json& v = doc.at("m");
    cfg.m.clear();
    if (v.is_array()) {
      if (v.empty()) throw ConfigError("must list at least one rollout count", "m");
      for (const auto& x : v) {
        if (!x.is_number_integer() || x.get<std::int64_t>() < 1) throw ConfigError("entries must be integers >= 1", "m");
        cfg.m.push_back(x.get<std::size_t>());
      }
      cfg.m_scalar = false;
    } else {
      cfg.m.push_back(get_count(doc, "m", 1));
      cfg.m_scalar = true;
    }
  }
  if (doc.contains("estimators")) {
    const json& v = doc.at("estimators");
    if (!v.is_array() || v.empty()) throw ConfigError("must be a nonempty array of estimator ids", "estimators");
    cfg.estimators.clear();
    for (const auto& x : v) {
      const auto e = x.is_string() ? parse_estimator(x.get<std::string>()) : std::nullopt;
      if (!e) throw ConfigError("unknown estimator id " + x.dump(), "estimators");
      cfg.estimators.push_back(*e);
    }
  }
  if (doc.contains("distribution")) {
    const json& v = doc.at("distribution");
    try {
      if (v.is_string()) {
        cfg.distribution_path = v.get<std::string>();
        std::filesystem::path p(*cfg.distribution_path);
        if (p.is_relative() && !base_dir.empty()) p = base_dir / p;
        cfg.distribution = PromptDistribution::load(p);
      } else {
        cfg.distribution = PromptDistribution::from_json(v);
      }
    } catch (const ConfigError& e) {
      if (!e.field().empty()) throw;
      throw ConfigError(e.what(), "distribution");
    }
  }
  if (doc.contains("replications")) cfg.replications = get_count(doc, "replications", 1);
  if (doc.contains("lambda_mode")) {
    const std::string s = get_string(doc, "lambda_mode");
    if (s == "paper") cfg.lambda_mode = LambdaMode::paper;
    else if (s == "debiased") cfg.lambda_mode = LambdaMode::debiased;
    else if (s == "oracle") cfg.lambda_mode = LambdaMode::oracle;
    else throw ConfigError("must be one of paper, debiased, oracle", "lambda_mode");
  }
  if (doc.contains("scenario")) {
    const auto sc = parse_scenario(get_string(doc, "scenario"));
    if (!sc) throw ConfigError("unknown scenario", "scenario");
    cfg.scenario = sc;
  }
  if (doc.contains("output")) cfg.output = get_string(doc, "output");
  if (doc.contains("format")) {
    const auto f = parse_format(get_string(doc, "format"));
    if (!f) throw ConfigError("must be csv or json", "format");
    cfg.format = *f;
  }
  if (doc.contains("learning_rate")) {
    cfg.learning_rate = get_real(doc, "learning_rate");
    if (!(cfg.learning_rate >= 0.0) || !std::isfinite(cfg.learning_rate)) {
      throw ConfigError("must be finite and >= 0", "learning_rate");
    }
  }
  if (doc.contains("steps")) cfg.steps = get_count(doc, "steps", 0);
  if (doc.contains("log_every")) cfg.log_every = get_count(doc, "log_every", 1);
  if (doc.contains("js1_lambda")) {
    cfg.js1_lambda = get_real(doc, "js1_lambda");
    if (!(cfg.js1_lambda >= 0.0 && cfg.js1_lambda <= 1.0)) throw ConfigError("must lie in [0, 1]", "js1_lambda");
  }
  if (doc.contains("grpo_epsilon")) {
    cfg.grpo_epsilon = get_real(doc, "grpo_epsilon");
    if (!(cfg.grpo_epsilon >= 0.0) || !std::isfinite(cfg.grpo_epsilon)) {
      throw ConfigError("must be finite and >= 0", "grpo_epsilon");
    }
  }
  if (doc.contains("microbatch_size")) cfg.microbatch_size = get_count(doc, "microbatch_size", 2);
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw ConfigError("cannot parse " + path.string() + ": " + e.what());
  }
  return parse_config(doc, path.parent_path());
}

json to_json(const ExperimentConfig& cfg) {
  json doc;
  doc["seed"] = cfg.seed;
  doc["n"] = cfg.n;
  if (cfg.m_scalar && cfg.m.size() == 1) doc["m"] = cfg.m.front();
  else doc["m"] = cfg.m;
  json est = json::array();
  for (Estimator e : cfg.estimators) est.push_back(std::string(to_string(e)));
  doc["estimators"] = std::move(est);
  if (cfg.distribution_path) doc["distribution"] = *cfg.distribution_path;
  else if (cfg.distribution) doc["distribution"] = cfg.distribution->to_json();
  doc["replications"] = cfg.replications;
  doc["lambda_mode"] = std::string(to_string(cfg.lambda_mode));
  if (cfg.scenario) doc["scenario"] = std::string(to_string(*cfg.scenario));
  doc["output"] = cfg.output;
  doc["format"] = std::string(to_string(cfg.format));
  doc["learning_rate"] = cfg.learning_rate;
  doc["steps"] = cfg.steps;
  doc["log_every"] = cfg.log_every;
  doc["js1_lambda"] = cfg.js1_lambda;
  doc["grpo_epsilon"] = cfg.grpo_epsilon;
  doc["microbatch_size"] = cfg.microbatch_size;
  return doc;
}

void validate_for(const ExperimentConfig& cfg, Scenario scenario) {
  if (cfg.scenario && *cfg.scenario != scenario) {
    throw ConfigError("config is for scenario " + std::string(to_string(*cfg.scenario)) + ", not " +
                          std::string(to_string(scenario)),
                      "scenario");
  }
  if (scenario == Scenario::oracle_check) return;
  const std::size_t min_m = (scenario == Scenario::lambda_curve) ? 2 : 1;
  const std::size_t min_n = (scenario == Scenario::lambda_curve) ? 2 : 1;
  if (cfg.n < min_n) throw ConfigError("must be >= " + std::to_string(min_n), "n");
  for (std::size_t m : cfg.m) {
    if (m < min_m) throw ConfigError("entries must be >= " + std::to_string(min_m), "m");
  }
  if (scenario == Scenario::lambda_curve) return;
  for (Estimator e : cfg.estimators) {
    const std::string id(to_string(e));
    if (cfg.n < min_prompts(e)) throw ConfigError("estimator " + id + " needs n >= " + std::to_string(min_prompts(e)), "n");
    for (std::size_t m : cfg.m) {
      if (m < min_rollouts(e)) {
        throw ConfigError("estimator " + id + " needs m >= " + std::to_string(min_rollouts(e)), "m");
      }
    }
  }
  if (scenario == Scenario::grad_variance && cfg.replications < 2) throw ConfigError("must be >= 2", "replications");
}

std::string config_hash(const ExperimentConfig& cfg) {
  json doc = to_json(cfg);
  doc.erase("output");
  doc.erase("format");
  doc["distribution"] = effective_distribution(cfg).to_json();
  const std::string canonical = doc.dump();
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : canonical) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

PromptDistribution default_distribution() {
  std::vector<PromptModel> models;
  constexpr std::size_t kResponses = 10;
  for (std::size_t c = 1; c <= 9; ++c) {
    std::vector<double> support(kResponses, 0.0);
    for (std::size_t k = 0; k < c; ++k) support[k] = 1.0;
    models.emplace_back(c - 1, std::move(support), std::vector<double>(kResponses, 0.1));
  }
  return PromptDistribution::uniform(std::move(models));
}

const PromptDistribution& effective_distribution(const ExperimentConfig& cfg) {
  return cfg.distribution ? *cfg.distribution : builtin_default();
}

}  // namespace jsb
