#include "doctest.h"

#include "e3s2/data_io.hpp"
#include "e3s2/synthetic.hpp"
#include "test_support.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

using namespace e3s2;

namespace {

RegionMap two_region_map() {
  RegionMap m;
  m.members["LAM"] = {"BRA", "MEX", "ABW"};
  m.members["OECD"] = {"USA"};
  m.excluded = {"ABW"};
  return m;
}

std::string country_csv() {
  return "iso3,year,coal,oil,gas,nuclear,renewables,emissions,gdp\n"
         "BRA,1990,3,10,4,1,20,50,800\n"
         "BRA,1991,3.5,11,4.2,1,21,52,820\n"
         "MEX,1990,4,12,6,0.5,5,60,600\n"
         "MEX,1991,4.1,12.5,6.1,0.5,5.5,61,610\n"
         "USA,1990,400,700,450,150,90,5000,9000\n"
         "USA,1991,395,705,455,152,92,5010,9100\n"
         "ABW,1990,0,1,0,0,0,2,3\n";
}

}  // namespace

TEST_CASE("well-formed table loads every row") {
  const std::string text =
      "iso3,year,coal,unit\n"
      "BRA,1990,3,mtoe\n"
      "MEX,1990,4,mtoe\n"
      "USA,1990,400,mtoe\n";
  const LoadResult r = parse_table(text, {});
  CHECK(r.records.size() == 3);
  CHECK(r.errors.empty());
  CHECK(r.records[1].iso3 == "MEX");
  CHECK(r.records[1].value == 4.0);
  CHECK(r.records[1].line == 3);
}

TEST_CASE("unit conversion to the canonical energy unit") {
  const LoadResult r = parse_table("iso3,year,coal,unit\nBRA,1990,1000,ktoe\n", {});
  REQUIRE(r.records.size() == 1);
  CHECK(r.records[0].value == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(r.records[0].unit == "mtoe");
  CHECK(unit_registry().at("EJ").factor == 23.8846);
  CHECK(unit_registry().at("PJ").factor == 0.0238846);
  FormatSpec f;
  f.implied_unit = "EJ";
  const LoadResult e = parse_table("iso3,year,oil\nBRA,1990,2\n", f);
  CHECK(e.records[0].value == doctest::Approx(2 * 23.8846));
}

TEST_CASE("duplicates are reported with both lines") {
  FormatSpec f;
  f.max_invalid_fraction = 0.5;
  const LoadResult r = parse_table("iso3,year,coal\nBRA,1990,3\nMEX,1990,4\nBRA,1990,5\n", f);
  CHECK(r.records.size() == 2);
  REQUIRE(r.errors.size() == 1);
  CHECK(r.errors[0].line == 4);
  CHECK(r.errors[0].message.find("lines 2 and 4") != std::string::npos);
  CHECK_THROWS_AS(parse_table("iso3,year,coal\nBRA,1990,3\nBRA,1990,5\n", {}), DataError);
}

TEST_CASE("row diagnostics and file-level failure") {
  FormatSpec f;
  f.max_invalid_fraction = 0.5;
  const LoadResult r = parse_table("iso3,year,coal,unit\nBRA,1990,x,mtoe\nMEX,1990,1,furlong\nUSA,1990,3,mtoe\nCAN,1990,2,mtoe\n", f);
  CHECK(r.records.size() == 2);
  REQUIRE(r.errors.size() == 2);
  CHECK(r.errors[0].line == 2);
  CHECK(r.errors[1].line == 3);
  CHECK(r.errors[1].message.find("furlong") != std::string::npos);
  f.max_invalid_fraction = 0.1;
  CHECK_THROWS_AS(parse_table("iso3,year,coal,unit\nBRA,1990,x,mtoe\nUSA,1990,3,mtoe\n", f), DataError);
}

TEST_CASE("mixed units in one variable are rejected") {
  const std::string text = "iso3,year,coal,unit\nBRA,1990,3,mtoe\nMEX,1990,4000,ktoe\n";
  CHECK_THROWS_AS(parse_table(text, {}), DataError);
  FormatSpec f;
  f.allow_mixed_units = true;
  const LoadResult r = parse_table(text, f);
  CHECK(r.records[1].value == doctest::Approx(4.0));
}

TEST_CASE("long layout and round trip") {
  FormatSpec f;
  f.layout = TableLayout::Long;
  const std::string text =
      "iso3,year,variable,value,unit\n"
      "BRA,1990,coal,3.25,mtoe\n"
      "BRA,1990,emissions,50.5,MtCO2\n"
      "MEX,1991,gdp,600.125,usd_bn\n"
      "MEX,1991,oil,0.1,mtoe\n";
  const LoadResult a = parse_table(text, f);
  REQUIRE(a.records.size() == 4);
  std::ostringstream os;
  write_records(os, a.records);
  const LoadResult b = parse_table(os.str(), f);
  REQUIRE(b.records.size() == a.records.size());
  for (std::size_t i = 0; i < a.records.size(); ++i) CHECK(a.records[i].same_data(b.records[i]));
  std::ostringstream again;
  write_records(again, b.records);
  CHECK(again.str() == os.str());
}

TEST_CASE("GDP normalization") {
  CHECK(gdp_normalize(5e9, 1.0, 1.0, 1.0) == 5.0);
  CHECK(gdp_normalize(5e9, 1.0, 2.0, 1.0) == 2.5);
  CHECK(gdp_normalize(8e9, 4.0, 110.0, 100.0) == doctest::Approx(2.0 / 1.1).epsilon(1e-14));
  CHECK_THROWS_AS(gdp_normalize(5e9, 0.0, 1.0, 1.0), DataError);
  CHECK_THROWS_AS(gdp_normalize(5e9, 1.0, 1.0, -1.0), DataError);
}

TEST_CASE("two countries sum to the region") {
  const LoadResult r = parse_table(country_csv(), {});
  AggregateConfig cfg;
  cfg.region = "LAM";
  const RegionData d = aggregate_region(r.records, two_region_map(), cfg);
  CHECK(d.energy.years == std::vector<int>{1990, 1991});
  CHECK(d.energy.coal[0] == 7.0);
  CHECK(d.energy.renewables[1] == 26.5);
  CHECK(d.obs.renewables == d.energy.renewables);
  CHECK(d.obs.emissions[0] == 110.0);
  CHECK(d.obs.gdp[1] == 1430.0);
  REQUIRE(d.notices.size() == 1);
  CHECK(d.notices[0].find("ABW") != std::string::npos);

  // Brute-force re-summation over the parsed records.
  for (const std::string var : {"coal", "oil", "gas", "nuclear", "renewables", "emissions", "gdp"}) {
    for (std::size_t t = 0; t < 2; ++t) {
      double s = 0.0;
      for (const auto& x : r.records) {
        if (x.variable == var && x.year == d.energy.years[t] && (x.iso3 == "BRA" || x.iso3 == "MEX")) s += x.value;
      }
      const double got = var == "emissions" ? d.obs.emissions[t] : var == "gdp" ? d.obs.gdp[t]
                         : var == "coal" ? d.energy.coal[t] : var == "oil" ? d.energy.oil[t]
                         : var == "gas" ? d.energy.gas[t] : var == "nuclear" ? d.energy.nuclear[t]
                         : d.energy.renewables[t];
      CHECK(got == doctest::Approx(s).epsilon(1e-15));
    }
  }
}

TEST_CASE("aggregation is linear over disjoint country sets") {
  const LoadResult r = parse_table(country_csv(), {});
  RegionMap m = two_region_map();
  AggregateConfig cfg;
  const RegionData world = aggregate_region(r.records, m, cfg);
  cfg.region = "LAM";
  const RegionData lam = aggregate_region(r.records, m, cfg);
  cfg.region = "OECD";
  const RegionData oecd = aggregate_region(r.records, m, cfg);
  for (std::size_t t = 0; t < 2; ++t) {
    CHECK(world.energy.oil[t] == lam.energy.oil[t] + oecd.energy.oil[t]);
    CHECK(world.obs.emissions[t] == lam.obs.emissions[t] + oecd.obs.emissions[t]);
    CHECK(world.obs.gdp[t] == lam.obs.gdp[t] + oecd.obs.gdp[t]);
  }
}

TEST_CASE("GDP from local currency, PPP and deflator") {
  const std::string text =
      "iso3,year,coal,oil,gas,nuclear,renewables,emissions,gdp_lcu,ppp,deflator\n"
      "BRA,2004,1,1,1,1,1,1,2e12,2,90\n"
      "BRA,2005,1,1,1,1,1,1,3e12,2,100\n"
      "MEX,2004,1,1,1,1,1,1,5e12,10,95\n"
      "MEX,2005,1,1,1,1,1,1,6e12,10,100\n";
  const LoadResult r = parse_table(text, {});
  AggregateConfig cfg;
  cfg.region = "LAM";
  const RegionData d = aggregate_region(r.records, two_region_map(), cfg);
  CHECK(d.obs.gdp[0] == doctest::Approx(1000.0 / 0.9 + 500.0 / 0.95).epsilon(1e-14));
  CHECK(d.obs.gdp[1] == doctest::Approx(1500.0 + 600.0).epsilon(1e-14));
  cfg.gdp_base_year = 2010;
  try {
    aggregate_region(r.records, two_region_map(), cfg);
    FAIL("expected a gap error");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("deflator") != std::string::npos);
  }
}

TEST_CASE("coverage gaps name the country, year and variable") {
  std::string text = country_csv();
  text.replace(text.find("MEX,1991,4.1"), 12, "MEX,1991,");
  const LoadResult r = parse_table(text, {});
  AggregateConfig cfg;
  cfg.region = "LAM";
  try {
    aggregate_region(r.records, two_region_map(), cfg);
    FAIL("expected a gap error");
  } catch (const DataError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("MEX") != std::string::npos);
    CHECK(msg.find("1991") != std::string::npos);
    CHECK(msg.find("coal") != std::string::npos);
  }
  cfg.allow_gaps = true;
  const RegionData d = aggregate_region(r.records, two_region_map(), cfg);
  CHECK(d.energy.coal[1] == 3.5);
}

TEST_CASE("region overrides before a cutoff year") {
  const LoadResult r = parse_table(country_csv(), {});
  AggregateConfig cfg;
  cfg.region = "LAM";
  cfg.override_before = 1991;
  cfg.overrides = {{"LAM", 1990, "coal", 99.0, "mtoe", 0}, {"LAM", 1991, "coal", 77.0, "mtoe", 0}};
  const RegionData d = aggregate_region(r.records, two_region_map(), cfg);
  CHECK(d.energy.coal[0] == 99.0);
  CHECK(d.energy.coal[1] == 7.6);
}

TEST_CASE("shipped region map") {
  const RegionMap m = RegionMap::builtin();
  CHECK(m.members.size() == 5);
  for (const auto& r : kRegions) CHECK(m.members.count(r) == 1);
  CHECK(m.excluded.size() == 44);
  const auto world = m.included("WORLD");
  CHECK(world.size() == 146);
  std::set<std::string> seen;
  std::size_t total = 0;
  for (const auto& r : kRegions) {
    for (const auto& c : m.included(r)) {
      CHECK(m.region_of(c) == r);
      seen.insert(c);
      ++total;
    }
  }
  CHECK(total == world.size());
  CHECK(seen.size() == world.size());
  for (const auto& c : m.excluded) CHECK(m.region_of(c).empty());
  CHECK(m.region_of("USA") == "OECD");
  CHECK(m.region_of("RUS") == "REF");
  CHECK(m.region_of("BRA") == "LAM");
  CHECK(m.region_of("GUM").empty());
  CHECK_THROWS_AS(m.included("MARS"), DataError);

  RegionMap bad;
  bad.members["LAM"] = {"BRA"};
  bad.members["OECD"] = {"BRA"};
  CHECK_THROWS_AS(bad.validate(), DataError);
}

TEST_CASE("fixture dataset loads per region") {
  testing::TempDir dir("dataio");
  write_fixture_dataset(dir.path(), lam_setup(40), 3);
  const RegionData d = load_region_dataset(dir.path(), "LAM");
  CHECK(d.energy.size() == 40);
  CHECK(d.obs.size() == 40);
  CHECK(d.energy.years.front() == 1971);
  CHECK_FALSE(d.notices.empty());
  for (std::size_t t = 0; t < d.energy.size(); ++t) {
    CHECK(d.energy.coal[t] > 0);
    CHECK(std::isfinite(d.obs.gdp[t]));
  }
  CHECK_THROWS_AS(load_region_dataset(dir.path(), "MARS"), DataError);
  CHECK_THROWS_AS(load_region_dataset(dir.path() / "missing", "LAM"), DataError);
}

TEST_CASE("CSV parsing details") {
  const CsvTable t = parse_csv("\xEF\xBB\xBF" "a;b\r\n\"x;y\" ; 2\r\n\n", ';');
  CHECK(t.header == std::vector<std::string>{"a", "b"});
  REQUIRE(t.rows.size() == 1);
  CHECK(t.rows[0][0] == "x;y");
  CHECK(t.number(0, 1) == 2.0);
  CHECK_THROWS_AS(t.number(0, 0), DataError);
  CHECK_THROWS_AS(t.column("c"), DataError);
  CHECK_THROWS_AS(parse_csv(""), DataError);
}
