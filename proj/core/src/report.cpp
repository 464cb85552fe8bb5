#include "jsb/report.hpp"

#include <charconv>
#include <chrono>
#include <cmath>
#include <ctime>
#include <ostream>
#include <sstream>

#include "jsb/errors.hpp"
#include "jsb/version.hpp"

namespace jsb {
namespace {

std::string cell_text(const Cell& c) {
  struct Visitor {
    std::string operator()(std::monostate) const { return {}; }
    std::string operator()(std::int64_t v) const { return std::to_string(v); }
    std::string operator()(std::uint64_t v) const { return std::to_string(v); }
    std::string operator()(double v) const { return format_double(v); }
    std::string operator()(const std::string& v) const { return v; }
  };
  return std::visit(Visitor{}, c);
}

nlohmann::json cell_json(const Cell& c) {
  struct Visitor {
    nlohmann::json operator()(std::monostate) const { return nullptr; }
    nlohmann::json operator()(std::int64_t v) const { return v; }
    nlohmann::json operator()(std::uint64_t v) const { return v; }
    nlohmann::json operator()(double v) const { return v; }
    nlohmann::json operator()(const std::string& v) const { return v; }
  };
  return std::visit(Visitor{}, c);
}

}  // namespace

Provenance make_provenance(const ExperimentConfig& cfg, Scenario scenario) {
  return Provenance{std::string(to_string(scenario)), config_hash(cfg), cfg.seed, kVersion, utc_timestamp()};
}

Report::Report(Provenance provenance, std::vector<std::string> columns) : provenance_(std::move(provenance)) {
  columns_.reserve(columns.size() + 1);
  columns_.push_back("config_hash");
  for (auto& c : columns) columns_.push_back(std::move(c));
}

void Report::add_row(std::vector<Cell> cells) {
  if (cells.size() + 1 != columns_.size()) {
    throw Error("report row has " + std::to_string(cells.size()) + " cells, expected " +
                std::to_string(columns_.size() - 1));
  }
  for (std::size_t k = 0; k < cells.size(); ++k) {
    if (const auto* d = std::get_if<double>(&cells[k]); d && !std::isfinite(*d)) {
      throw Error("non-finite value in report column " + columns_[k + 1]);
    }
  }
  std::vector<Cell> row;
  row.reserve(columns_.size());
  row.emplace_back(provenance_.config_hash);
  for (auto& c : cells) row.push_back(std::move(c));
  rows_.push_back(std::move(row));
}

std::size_t Report::column_index(const std::string& name) const {
  for (std::size_t k = 0; k < columns_.size(); ++k) {
    if (columns_[k] == name) return k;
  }
  throw IndexError("no report column " + name);
}

void Report::write_csv(std::ostream& out) const {
  out << "# scenario=" << provenance_.scenario << "\r\n";
  out << "# config_hash=" << provenance_.config_hash << "\r\n";
  out << "# seed=" << provenance_.seed << "\r\n";
  out << "# version=" << provenance_.version << "\r\n";
  out << "# generated_at=" << provenance_.generated_at << "\r\n";
  for (std::size_t k = 0; k < columns_.size(); ++k) out << (k ? "," : "") << csv_escape(columns_[k]);
  out << "\r\n";
  for (const auto& row : rows_) {
    for (std::size_t k = 0; k < row.size(); ++k) out << (k ? "," : "") << csv_escape(cell_text(row[k]));
    out << "\r\n";
  }
}

nlohmann::json Report::to_json() const {
  nlohmann::json records = nlohmann::json::array();
  for (const auto& row : rows_) {
    nlohmann::json rec = nlohmann::json::object();
    for (std::size_t k = 0; k < row.size(); ++k) rec[columns_[k]] = cell_json(row[k]);
    records.push_back(std::move(rec));
  }
  nlohmann::json prov = {
      {"scenario", provenance_.scenario},
      {"config_hash", provenance_.config_hash},
      {"seed", provenance_.seed},
      {"version", provenance_.version},
      {"generated_at", provenance_.generated_at},
  };
  return {{"provenance", std::move(prov)}, {"records", std::move(records)}};
}

void Report::write_json(std::ostream& out) const { out << to_json().dump(2) << '\n'; }

void Report::write(std::ostream& out, ReportFormat format) const {
  if (format == ReportFormat::csv) write_csv(out);
  else write_json(out);
}

std::string Report::to_string(ReportFormat format) const {
  std::ostringstream os;
  write(os, format);
  return os.str();
}

std::string format_double(double x) {
  if (x == 0.0) return "0";
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

std::string csv_escape(const std::string& field) {
  if (field.find_first_of(",\"\r\n") == std::string::npos) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace jsb
