#pragma once

// Country-level data ingestion and regional aggregation.

#include "e3s2/model.hpp"

#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace e3s2 {

struct CsvTable {
  std::string source;
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<int> lines;  // 1-based source line of each row

  /// Column index; throws DataError when absent.
  int column(const std::string& name) const;
  /// Column index or -1.
  int find_column(const std::string& name) const;
  /// Numeric cell; throws DataError naming the line on parse failure.
  double number(std::size_t row, int col) const;
};

/// Header row required; fields are trimmed; double quotes protect delimiters.
CsvTable parse_csv(const std::string& text, char delimiter = ',', const std::string& source = "<memory>");
CsvTable read_csv(const std::filesystem::path& path, char delimiter = ',');

struct UnitInfo {
  std::string canonical;
  double factor = 1.0;  // canonical value = raw * factor
};
/// Registered units: mtoe, ktoe, EJ, PJ (energy, canonical mtoe), MtCO2,
/// GtCO2 (canonical MtCO2), lcu, lcu_per_usd, index, usd_bn.
const std::map<std::string, UnitInfo>& unit_registry();
/// Unit assumed for a wide-format column without a unit column.
std::optional<std::string> default_unit(const std::string& variable);

struct CountryRecord {
  std::string iso3;
  int year = 0;
  std::string variable;
  double value = 0.0;  // in the canonical unit
  std::string unit;    // canonical unit tag
  int line = 0;

  bool same_data(const CountryRecord& o) const {
    return iso3 == o.iso3 && year == o.year && variable == o.variable && value == o.value && unit == o.unit;
  }
};

enum class TableLayout { Wide, Long };

struct FormatSpec {
  char delimiter = ',';
  TableLayout layout = TableLayout::Wide;
  std::string iso3_column = "iso3";
  std::string year_column = "year";
  std::string unit_column = "unit";          // optional in the file
  std::string variable_column = "variable";  // long layout
  std::string value_column = "value";        // long layout
  /// Unit applied to every value when the file has no unit column.
  std::optional<std::string> implied_unit;
  /// Permits different raw units for one variable (values are converted).
  bool allow_mixed_units = false;
  /// The whole file fails when more than this fraction of rows is invalid.
  double max_invalid_fraction = 0.1;
};

struct RowError {
  int line = 0;
  std::string message;
};

struct LoadResult {
  std::vector<CountryRecord> records;
  std::vector<RowError> errors;
};

LoadResult parse_table(const std::string& text, const FormatSpec& format, const std::string& source = "<memory>");
LoadResult load_table(const std::filesystem::path& path, const FormatSpec& format = {});

/// Long layout: iso3, year, variable, value, unit.
void write_records(std::ostream& os, const std::vector<CountryRecord>& records);

/// Real GDP in billions: (nominal / ppp) / (deflator / deflator_base) / 1e9.
double gdp_normalize(double nominal_lcu, double ppp_factor, double deflator, double deflator_base);

inline const std::vector<std::string> kRegions = {"OECD", "REF", "ASIA", "MAF", "LAM"};

struct RegionMap {
  std::map<std::string, std::vector<std::string>> members;  // region -> iso3
  std::set<std::string> excluded;

  /// Region of an included country, or empty.
  std::string region_of(const std::string& iso3) const;
  /// Included members of `region`; "WORLD" is the union of all regions.
  std::vector<std::string> included(const std::string& region) const;
  /// Throws DataError if a country belongs to two regions.
  void validate() const;

  /// CSV with columns region, iso3; exclusion list with column iso3.
  static RegionMap load(const std::filesystem::path& regions, const std::optional<std::filesystem::path>& excluded = {});
  /// Shipped membership and exclusion list.
  static RegionMap builtin();
};

struct AggregateConfig {
  std::string region = "WORLD";
  int gdp_base_year = 2005;
  bool allow_gaps = false;
  /// Region-level series that replace the aggregate before `override_before`.
  std::vector<CountryRecord> overrides;
  int override_before = 1990;
};

struct RegionData {
  std::string region;
  EnergySeries energy;
  ObservationSeries obs;
  std::vector<std::string> notices;
};

/// Sums member countries by year. Energy: coal, oil, gas, nuclear,
/// renewables; emissions; GDP either as `gdp` (real, billions) or from
/// gdp_lcu, ppp and deflator. Renewables are also the observed R series.
RegionData aggregate_region(const std::vector<CountryRecord>& records, const RegionMap& map,
                            const AggregateConfig& config);

/// Reads energy.csv and observations.csv from `dir`, plus regions.csv,
/// excluded.csv, and overrides.csv when present (shipped map otherwise).
RegionData load_region_dataset(const std::filesystem::path& dir, const std::string& region,
                               const AggregateConfig& base = {});

}  // namespace e3s2
