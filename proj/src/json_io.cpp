#include "e3s2/json_io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

namespace e3s2 {

std::string format_number(double v) {
  if (std::isnan(v)) return "NaN";
  if (std::isinf(v)) return v > 0 ? "Inf" : "-Inf";
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

Json json_number(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

double number_from_json(const Json& j) {
  if (j.is_null()) return std::numeric_limits<double>::quiet_NaN();
  if (!j.is_number()) throw SpecError("expected a number, got " + j.dump());
  return j.get<double>();
}

Json spec_to_json(const ModelSpec& spec) {
  Json j;
  j["variant"] = std::string(to_string(spec.variant));
  j["tv_beta_C"] = spec.tv_beta_C;
  j["tv_beta_O"] = spec.tv_beta_O;
  j["tv_beta_G"] = spec.tv_beta_G;
  j["ll_beta_Y"] = spec.ll_beta_Y;
  j["ll_R"] = spec.ll_R;
  j["exogenous_R"] = spec.exogenous_R;
  j["emissions_only"] = spec.emissions_only;
  auto d = Json::array();
  for (const auto& dm : spec.dummies) {
    d.push_back({{"target", std::string(to_string(dm.target))},
                 {"placement", std::string(to_string(dm.placement))},
                 {"year", dm.year}});
  }
  j["dummies"] = std::move(d);
  j["two_stage_break"] = spec.two_stage_break ? Json(*spec.two_stage_break) : Json(nullptr);
  auto pinned = Json::array();
  for (Param p : spec.pinned) pinned.push_back(std::string(to_string(p)));
  j["pinned"] = std::move(pinned);
  return j;
}

ModelSpec spec_from_json(const Json& j) {
  if (!j.is_object()) throw SpecError("spec must be a JSON object");
  static const std::set<std::string> known = {"variant", "tv_beta_C", "tv_beta_O", "tv_beta_G", "ll_beta_Y",
                                              "ll_R", "exogenous_R", "emissions_only", "dummies",
                                              "two_stage_break", "pinned", "params", "fixed"};
  for (const auto& [key, _] : j.items()) {
    if (!known.count(key)) throw SpecError("unknown spec key '" + key + "'");
  }
  ModelSpec s;
  auto flag = [&](const char* key, bool& out) {
    if (!j.contains(key)) return;
    if (!j[key].is_boolean()) throw SpecError(std::string("spec key '") + key + "' must be boolean");
    out = j[key].get<bool>();
  };
  try {
    if (j.contains("variant")) {
      const auto v = j["variant"].get<std::string>();
      s.variant = (v == "g" || v == "e3s2-g") ? Variant::E3S2_G : variant_from_string(v);
    }
    flag("tv_beta_C", s.tv_beta_C);
    flag("tv_beta_O", s.tv_beta_O);
    flag("tv_beta_G", s.tv_beta_G);
    flag("ll_beta_Y", s.ll_beta_Y);
    flag("ll_R", s.ll_R);
    flag("exogenous_R", s.exogenous_R);
    flag("emissions_only", s.emissions_only);
    if (j.contains("dummies")) {
      for (const auto& d : j["dummies"]) {
        DummySpec dm;
        dm.target = observable_from_string(d.at("target").get<std::string>());
        dm.placement = placement_from_string(d.value("placement", std::string("measurement")));
        dm.year = d.at("year").get<int>();
        s.dummies.push_back(dm);
      }
    }
    if (j.contains("two_stage_break") && !j["two_stage_break"].is_null()) {
      s.two_stage_break = j["two_stage_break"].get<int>();
    }
    if (j.contains("pinned")) {
      for (const auto& p : j["pinned"]) s.pinned.push_back(param_from_string(p.get<std::string>()));
    }
  } catch (const nlohmann::json::exception& e) {
    throw SpecError(std::string("malformed spec: ") + e.what());
  }
  s.validate();
  return s;
}

Json params_to_json(const ModelSpec& spec, const ParameterVector& p) {
  Json j = Json::object();
  for (const auto& fp : free_parameters(spec)) j[fp.name] = json_number(get(p, fp.ref));
  return j;
}

void params_from_json(const ModelSpec& spec, const Json& j, ParameterVector& p) {
  if (!j.is_object()) throw SpecError("params must be a JSON object");
  if (p.dummies().size() != spec.dummies.size()) p.dummies().resize(spec.dummies.size(), 0.0);
  for (const auto& [key, value] : j.items()) {
    bool found = false;
    for (std::size_t i = 0; i < spec.dummies.size(); ++i) {
      if (spec.dummies[i].name() == key) {
        p.dummies()[i] = number_from_json(value);
        found = true;
      }
    }
    if (!found) p[param_from_string(key)] = number_from_json(value);
  }
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
  if (!out) throw DataError("write failed for " + path.string());
}

}  // namespace e3s2
