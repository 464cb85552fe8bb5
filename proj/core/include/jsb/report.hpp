#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "jsb/config.hpp"

namespace jsb {

/// Empty cells mean "not applicable"; they print as an empty CSV field and
/// as JSON null.
using Cell = std::variant<std::monostate, std::int64_t, std::uint64_t, double, std::string>;

struct Provenance {
  std::string scenario;
  std::string config_hash;
  std::uint64_t seed = 0;
  std::string version;
  /// UTC ISO-8601; the only field allowed to differ between reruns.
  std::string generated_at;
};

Provenance make_provenance(const ExperimentConfig& cfg, Scenario scenario);

/// Tabular scenario output. The first column is always config_hash and is
/// filled from the provenance on every row.
class Report {
 public:
  Report(Provenance provenance, std::vector<std::string> columns);

  /// `cells` excludes the config_hash column. Throws Error on width mismatch
  /// or a non-finite double.
  void add_row(std::vector<Cell> cells);

  const Provenance& provenance() const noexcept { return provenance_; }
  const std::vector<std::string>& columns() const noexcept { return columns_; }
  const std::vector<std::vector<Cell>>& rows() const noexcept { return rows_; }
  std::size_t column_index(const std::string& name) const;

  /// '#'-prefixed provenance lines, one header row, then records.
  void write_csv(std::ostream& out) const;
  /// {"provenance": {...}, "records": [{column: value, ...}, ...]}
  void write_json(std::ostream& out) const;
  void write(std::ostream& out, ReportFormat format) const;
  std::string to_string(ReportFormat format) const;
  nlohmann::json to_json() const;

 private:
  Provenance provenance_;
  std::vector<std::string> columns_;
  std::vector<std::vector<Cell>> rows_;
};

/// Shortest representation that parses back to the same double.
std::string format_double(double x);
std::string csv_escape(const std::string& field);
std::string utc_timestamp();

}  // namespace jsb
