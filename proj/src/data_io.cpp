#include "e3s2/data_io.hpp"

#include "e3s2/json_io.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <ostream>
#include <sstream>
#include <tuple>

namespace e3s2 {

namespace {

std::string trim(std::string_view s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return std::string(s.substr(a, b - a));
}

std::vector<std::string> split_line(const std::string& line, char delim) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (c == '"') {
      if (quoted && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else {
        quoted = !quoted;
      }
    } else if (c == delim && !quoted) {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(trim(cur));
  return out;
}

bool parse_double(const std::string& s, double& out) {
  if (s.empty()) return false;
  const char* first = s.data();
  if (*first == '+') ++first;
  const auto r = std::from_chars(first, s.data() + s.size(), out);
  return r.ec == std::errc() && r.ptr == s.data() + s.size() && std::isfinite(out);
}

bool parse_int(const std::string& s, int& out) {
  const auto r = std::from_chars(s.data(), s.data() + s.size(), out);
  return !s.empty() && r.ec == std::errc() && r.ptr == s.data() + s.size();
}

}  // namespace

int CsvTable::find_column(const std::string& name) const {
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == name) return static_cast<int>(i);
  }
  return -1;
}

int CsvTable::column(const std::string& name) const {
  const int i = find_column(name);
  if (i < 0) throw DataError(source + ": missing column '" + name + "'");
  return i;
}

double CsvTable::number(std::size_t row, int col) const {
  const auto& cell = rows.at(row).at(static_cast<std::size_t>(col));
  double v = 0.0;
  if (!parse_double(cell, v)) {
    throw DataError(source + ":" + std::to_string(lines.at(row)) + ": non-numeric value '" + cell + "' in column '" +
                    header[static_cast<std::size_t>(col)] + "'");
  }
  return v;
}

CsvTable parse_csv(const std::string& text, char delimiter, const std::string& source) {
  CsvTable t;
  t.source = source;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (lineno == 1 && line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
    if (trim(line).empty()) continue;
    auto fields = split_line(line, delimiter);
    if (!have_header) {
      t.header = std::move(fields);
      have_header = true;
      continue;
    }
    t.rows.push_back(std::move(fields));
    t.lines.push_back(lineno);
  }
  if (!have_header) throw DataError(source + ": missing header row");
  return t;
}

CsvTable read_csv(const std::filesystem::path& path, char delimiter) {
  return parse_csv(read_text(path), delimiter, path.string());
}

const std::map<std::string, UnitInfo>& unit_registry() {
  static const std::map<std::string, UnitInfo> units = {
      {"mtoe", {"mtoe", 1.0}},
      {"ktoe", {"mtoe", 1e-3}},
      {"EJ", {"mtoe", 23.8846}},
      {"PJ", {"mtoe", 0.0238846}},
      {"MtCO2", {"MtCO2", 1.0}},
      {"GtCO2", {"MtCO2", 1000.0}},
      {"lcu", {"lcu", 1.0}},
      {"lcu_per_usd", {"lcu_per_usd", 1.0}},
      {"index", {"index", 1.0}},
      {"usd_bn", {"usd_bn", 1.0}},
  };
  return units;
}

std::optional<std::string> default_unit(const std::string& v) {
  if (v == "coal" || v == "oil" || v == "gas" || v == "nuclear" || v == "renewables") return "mtoe";
  if (v == "emissions") return "MtCO2";
  if (v == "gdp_lcu") return "lcu";
  if (v == "ppp") return "lcu_per_usd";
  if (v == "deflator") return "index";
  if (v == "gdp") return "usd_bn";
  return std::nullopt;
}

LoadResult parse_table(const std::string& text, const FormatSpec& fmt, const std::string& source) {
  const CsvTable t = parse_csv(text, fmt.delimiter, source);
  LoadResult res;
  const int ci = t.column(fmt.iso3_column);
  const int cy = t.column(fmt.year_column);
  const int cu = t.find_column(fmt.unit_column);

  struct Raw {
    CountryRecord rec;
    std::string raw_unit;
  };
  std::vector<Raw> raw;
  std::vector<std::pair<std::string, int>> value_cols;  // (variable, column) for wide
  int cv = -1, cval = -1;
  if (fmt.layout == TableLayout::Wide) {
    for (std::size_t i = 0; i < t.header.size(); ++i) {
      const int c = static_cast<int>(i);
      if (c == ci || c == cy || c == cu) continue;
      value_cols.emplace_back(t.header[i], c);
    }
  } else {
    cv = t.column(fmt.variable_column);
    cval = t.column(fmt.value_column);
  }

  std::size_t bad_rows = 0;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    const int line = t.lines[r];
    auto fail = [&](const std::string& msg) { res.errors.push_back({line, msg}); };
    if (row.size() != t.header.size()) {
      fail("expected " + std::to_string(t.header.size()) + " fields, found " + std::to_string(row.size()));
      ++bad_rows;
      continue;
    }
    int year = 0;
    if (!parse_int(row[static_cast<std::size_t>(cy)], year)) {
      fail("invalid year '" + row[static_cast<std::size_t>(cy)] + "'");
      ++bad_rows;
      continue;
    }
    const std::string iso3 = row[static_cast<std::size_t>(ci)];
    if (iso3.empty()) {
      fail("empty iso3 code");
      ++bad_rows;
      continue;
    }
    std::vector<std::pair<std::string, std::string>> cells;  // (variable, text)
    if (fmt.layout == TableLayout::Wide) {
      for (const auto& [var, c] : value_cols) cells.emplace_back(var, row[static_cast<std::size_t>(c)]);
    } else {
      cells.emplace_back(row[static_cast<std::size_t>(cv)], row[static_cast<std::size_t>(cval)]);
    }
    bool row_bad = false;
    for (const auto& [var, txt] : cells) {
      if (txt.empty() && fmt.layout == TableLayout::Wide) continue;  // absent value
      std::string unit;
      if (cu >= 0 && !row[static_cast<std::size_t>(cu)].empty()) {
        unit = row[static_cast<std::size_t>(cu)];
      } else if (fmt.implied_unit) {
        unit = *fmt.implied_unit;
      } else if (auto d = default_unit(var)) {
        unit = *d;
      }
      // A row-level unit column applies to energy columns only; other
      // variables keep their implied unit.
      if (cu >= 0 && fmt.layout == TableLayout::Wide) {
        const auto d = default_unit(var);
        if (d && *d != "mtoe") unit = *d;
      }
      const auto it = unit_registry().find(unit);
      if (it == unit_registry().end()) {
        fail("unknown unit '" + unit + "' for " + var);
        row_bad = true;
        continue;
      }
      double v = 0.0;
      if (!parse_double(txt, v)) {
        fail("non-numeric value '" + txt + "' for " + var);
        row_bad = true;
        continue;
      }
      raw.push_back({{iso3, year, var, v * it->second.factor, it->second.canonical, line}, unit});
    }
    if (row_bad) ++bad_rows;
  }

  // Duplicate keys: keep the first, report both lines.
  std::map<std::tuple<std::string, int, std::string>, int> seen;
  std::map<std::string, std::set<std::string>> units_by_var;
  for (auto& r : raw) {
    const auto key = std::make_tuple(r.rec.iso3, r.rec.year, r.rec.variable);
    const auto [it, inserted] = seen.emplace(key, r.rec.line);
    if (!inserted) {
      res.errors.push_back({r.rec.line, "duplicate (" + r.rec.iso3 + ", " + std::to_string(r.rec.year) + ", " +
                                            r.rec.variable + ") at lines " + std::to_string(it->second) + " and " +
                                            std::to_string(r.rec.line)});
      ++bad_rows;
      continue;
    }
    units_by_var[r.rec.variable].insert(r.raw_unit);
    res.records.push_back(std::move(r.rec));
  }
  if (!fmt.allow_mixed_units) {
    for (const auto& [var, units] : units_by_var) {
      if (units.size() > 1) {
        std::string list;
        for (const auto& u : units) list += (list.empty() ? "" : ", ") + u;
        throw DataError(source + ": variable '" + var + "' mixes units (" + list +
                        ") without a conversion directive");
      }
    }
  }
  const double frac = t.rows.empty() ? 0.0 : static_cast<double>(bad_rows) / static_cast<double>(t.rows.size());
  if (frac > fmt.max_invalid_fraction) {
    std::string report;
    for (const auto& e : res.errors) report += "\n  line " + std::to_string(e.line) + ": " + e.message;
    throw DataError(source + ": " + std::to_string(bad_rows) + " of " + std::to_string(t.rows.size()) +
                    " rows invalid" + report);
  }
  for (const auto& e : res.errors) spdlog::warn("{}:{}: {}", source, e.line, e.message);
  return res;
}

LoadResult load_table(const std::filesystem::path& path, const FormatSpec& format) {
  return parse_table(read_text(path), format, path.string());
}

void write_records(std::ostream& os, const std::vector<CountryRecord>& records) {
  os << "iso3,year,variable,value,unit\n";
  for (const auto& r : records) {
    os << r.iso3 << ',' << r.year << ',' << r.variable << ',' << format_number(r.value) << ',' << r.unit << '\n';
  }
}

double gdp_normalize(double nominal_lcu, double ppp_factor, double deflator, double deflator_base) {
  if (!(ppp_factor > 0) || !(deflator > 0) || !(deflator_base > 0)) {
    throw DataError("PPP factor and deflators must be positive");
  }
  return (nominal_lcu / ppp_factor) / (deflator / deflator_base) / 1e9;
}

std::string RegionMap::region_of(const std::string& iso3) const {
  if (excluded.count(iso3)) return "";
  for (const auto& [region, list] : members) {
    if (std::find(list.begin(), list.end(), iso3) != list.end()) return region;
  }
  return "";
}

std::vector<std::string> RegionMap::included(const std::string& region) const {
  std::vector<std::string> out;
  auto add = [&](const std::vector<std::string>& list) {
    for (const auto& c : list) {
      if (!excluded.count(c)) out.push_back(c);
    }
  };
  if (region == "WORLD") {
    for (const auto& [r, list] : members) add(list);
  } else {
    const auto it = members.find(region);
    if (it == members.end()) throw DataError("unknown region '" + region + "'");
    add(it->second);
  }
  std::sort(out.begin(), out.end());
  return out;
}

void RegionMap::validate() const {
  std::map<std::string, std::string> owner;
  for (const auto& [region, list] : members) {
    for (const auto& c : list) {
      const auto [it, ok] = owner.emplace(c, region);
      if (!ok && it->second != region) {
        throw DataError("country " + c + " belongs to both " + it->second + " and " + region);
      }
    }
  }
}

RegionMap RegionMap::load(const std::filesystem::path& regions, const std::optional<std::filesystem::path>& excluded) {
  RegionMap m;
  const CsvTable t = read_csv(regions);
  const int cr = t.column("region"), ci = t.column("iso3");
  for (const auto& row : t.rows) {
    m.members[row.at(static_cast<std::size_t>(cr))].push_back(row.at(static_cast<std::size_t>(ci)));
  }
  if (excluded) {
    const CsvTable e = read_csv(*excluded);
    const int c = e.column("iso3");
    for (const auto& row : e.rows) m.excluded.insert(row.at(static_cast<std::size_t>(c)));
  }
  m.validate();
  return m;
}

RegionMap RegionMap::builtin() {
  const std::filesystem::path dir = E3S2_DATA_DIR;
  return load(dir / "ssp_regions.csv", dir / "excluded_countries.csv");
}

RegionData aggregate_region(const std::vector<CountryRecord>& records, const RegionMap& map,
                            const AggregateConfig& cfg) {
  RegionData out;
  out.region = cfg.region;
  const auto members = map.included(cfg.region);
  const std::set<std::string> member_set(members.begin(), members.end());

  // country -> variable -> year -> value
  std::map<std::string, std::map<std::string, std::map<int, double>>> data;
  std::set<std::string> noticed;
  for (const auto& r : records) {
    if (map.excluded.count(r.iso3)) {
      if (noticed.insert(r.iso3).second) out.notices.push_back("excluded country " + r.iso3 + " ignored");
      continue;
    }
    if (!member_set.count(r.iso3)) {
      if (map.region_of(r.iso3).empty() && noticed.insert(r.iso3).second) {
        out.notices.push_back("country " + r.iso3 + " not in any region; ignored");
      }
      continue;
    }
    data[r.iso3][r.variable][r.year] = r.value;
  }
  for (const auto& n : out.notices) spdlog::info("{}", n);

  std::set<int> year_set;
  for (const auto& [c, vars] : data) {
    for (const auto& [v, series] : vars) {
      for (const auto& [y, _] : series) year_set.insert(y);
    }
  }
  if (year_set.empty()) throw DataError("no data for region " + cfg.region);
  const std::vector<int> years(year_set.begin(), year_set.end());

  const std::vector<std::string> energy_vars = {"coal", "oil", "gas", "nuclear", "renewables"};
  std::map<std::string, std::vector<double>> sums;
  for (const auto& v : energy_vars) sums[v].assign(years.size(), 0.0);
  sums["emissions"].assign(years.size(), 0.0);
  sums["gdp"].assign(years.size(), 0.0);

  auto gap = [&](const std::string& c, int y, const std::string& v) {
    if (!cfg.allow_gaps) {
      throw DataError("coverage gap: country " + c + ", year " + std::to_string(y) + ", variable " + v);
    }
  };
  for (const auto& c : members) {
    const auto cit = data.find(c);
    if (cit == data.end()) {
      gap(c, years.front(), "all");
      continue;
    }
    const auto& vars = cit->second;
    auto value = [&](const std::string& v, int y, double& out_v) {
      const auto vit = vars.find(v);
      if (vit == vars.end()) return false;
      const auto yit = vit->second.find(y);
      if (yit == vit->second.end()) return false;
      out_v = yit->second;
      return true;
    };
    for (std::size_t t = 0; t < years.size(); ++t) {
      const int y = years[t];
      for (const auto& v : energy_vars) {
        double x;
        if (value(v, y, x)) sums[v][t] += x; else gap(c, y, v);
      }
      double e;
      if (value("emissions", y, e)) sums["emissions"][t] += e; else gap(c, y, "emissions");
      double gdp;
      if (value("gdp", y, gdp)) {
        sums["gdp"][t] += gdp;
      } else {
        double lcu, ppp, defl, base;
        const bool ok = value("gdp_lcu", y, lcu) && value("ppp", y, ppp) && value("deflator", y, defl);
        if (!ok) {
          gap(c, y, "gdp");
          continue;
        }
        if (!value("deflator", cfg.gdp_base_year, base)) {
          gap(c, cfg.gdp_base_year, "deflator");
          continue;
        }
        sums["gdp"][t] += gdp_normalize(lcu, ppp, defl, base);
      }
    }
  }

  for (const auto& r : cfg.overrides) {
    if (r.iso3 != cfg.region || r.year >= cfg.override_before) continue;
    const auto it = std::find(years.begin(), years.end(), r.year);
    if (it == years.end() || !sums.count(r.variable)) continue;
    sums[r.variable][static_cast<std::size_t>(it - years.begin())] = r.value;
  }

  out.energy.years = years;
  out.energy.coal = sums["coal"];
  out.energy.oil = sums["oil"];
  out.energy.gas = sums["gas"];
  out.energy.nuclear = sums["nuclear"];
  out.energy.renewables = sums["renewables"];
  out.obs.years = years;
  out.obs.emissions = sums["emissions"];
  out.obs.gdp = sums["gdp"];
  out.obs.renewables = sums["renewables"];
  out.energy.validate();
  return out;
}

RegionData load_region_dataset(const std::filesystem::path& dir, const std::string& region,
                               const AggregateConfig& base) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw DataError("data directory " + dir.string() + " does not exist");
  if (region != "WORLD" && std::find(kRegions.begin(), kRegions.end(), region) == kRegions.end()) {
    throw DataError("unknown region '" + region + "'");
  }
  std::vector<CountryRecord> records;
  for (const char* name : {"energy.csv", "observations.csv"}) {
    const auto loaded = load_table(dir / name);
    records.insert(records.end(), loaded.records.begin(), loaded.records.end());
  }
  RegionMap map;
  if (fs::exists(dir / "regions.csv")) {
    std::optional<fs::path> ex;
    if (fs::exists(dir / "excluded.csv")) ex = dir / "excluded.csv";
    map = RegionMap::load(dir / "regions.csv", ex);
  } else {
    map = RegionMap::builtin();
  }
  AggregateConfig cfg = base;
  cfg.region = region;
  if (fs::exists(dir / "overrides.csv")) {
    FormatSpec f;
    f.layout = TableLayout::Long;
    const auto ov = load_table(dir / "overrides.csv", f);
    cfg.overrides.insert(cfg.overrides.end(), ov.records.begin(), ov.records.end());
  }
  return aggregate_region(records, map, cfg);
}

}  // namespace e3s2
