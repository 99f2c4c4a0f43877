#pragma once

#include <json.hpp>
#include <toml.hpp>

#include <cstdint>
#include <filesystem>
#include <initializer_list>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "iae/dataset.hpp"
#include "iae/error.hpp"
#include "iae/mechanisms.hpp"
#include "iae/metrics.hpp"
#include "iae/regress.hpp"

namespace iae {

using Json = nlohmann::json;

namespace detail {

inline Json toml_to_json(const toml::node& node) {
  if (const auto* table = node.as_table()) {
    Json out = Json::object();
    for (const auto& [key, value] : *table) out[std::string(key.str())] = toml_to_json(value);
    return out;
  }
  if (const auto* array = node.as_array()) {
    Json out = Json::array();
    for (const auto& value : *array) out.push_back(toml_to_json(value));
    return out;
  }
  if (const auto* v = node.as_string()) return v->get();
  if (const auto* v = node.as_integer()) return v->get();
  if (const auto* v = node.as_floating_point()) return v->get();
  if (const auto* v = node.as_boolean()) return v->get();
  fail(Errc::ConfigError, "unsupported TOML value (dates and times are not accepted)");
}

inline void check_keys(const Json& obj, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!obj.is_object()) fail(Errc::ConfigError, where + " must be a table/object");
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, _] : obj.items()) {
    if (!ok.count(key)) fail(Errc::ConfigError, "unknown key '" + key + "' in " + where);
  }
}

template <typename T>
T get_or(const Json& obj, const char* key, T fallback) {
  if (!obj.contains(key)) return fallback;
  try {
    return obj.at(key).get<T>();
  } catch (const Json::exception& e) {
    fail(Errc::ConfigError, std::string("key '") + key + "': " + e.what());
  }
}

inline std::pair<double, double> get_range(const Json& obj, const char* key, std::pair<double, double> fallback) {
  if (!obj.contains(key)) return fallback;
  const auto v = get_or<std::vector<double>>(obj, key, {});
  if (v.size() != 2) fail(Errc::ConfigError, std::string("key '") + key + "' must be a two-element [min, max] array");
  return {v[0], v[1]};
}

inline SplitRatios get_ratios(const Json& obj, const char* key, SplitRatios fallback) {
  if (!obj.contains(key)) return fallback;
  const auto v = get_or<std::vector<double>>(obj, key, {});
  if (v.size() != 3) fail(Errc::ConfigError, std::string("key '") + key + "' must be [train, val, test]");
  SplitRatios r{v[0], v[1], v[2]};
  r.validate();
  return r;
}

}  // namespace detail

/// Parses a JSON or TOML document; the format follows the file extension
/// (.toml, anything else is JSON).
inline Json load_config_tree(const std::string& path) {
  const std::string text = read_file(path);
  if (std::filesystem::path(path).extension() == ".toml") {
    try {
      return detail::toml_to_json(toml::parse(text, path));
    } catch (const toml::parse_error& e) {
      fail(Errc::ConfigError, path + ": " + std::string(e.description()));
    }
  }
  try {
    return Json::parse(text);
  } catch (const Json::parse_error& e) {
    fail(Errc::ConfigError, path + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------

inline SchemaConfig schema_from_json(const Json& j, const std::string& where = "schema") {
  detail::check_keys(j, {"target_column", "class_column", "nc_value", "dg_value", "feature_columns", "missing_policy"},
                     where);
  SchemaConfig s;
  s.target_column = detail::get_or<std::string>(j, "target_column", s.target_column);
  if (!j.contains("class_column") || !j.contains("nc_value")) {
    fail(Errc::ConfigError, where + " requires class_column and nc_value");
  }
  s.class_column = detail::get_or<std::string>(j, "class_column", "");
  // nc_value may be written as a number in TOML/JSON
  const Json& nc = j.at("nc_value");
  s.nc_value = nc.is_string() ? nc.get<std::string>() : nc.dump();
  if (j.contains("dg_value")) {
    const Json& dg = j.at("dg_value");
    s.dg_value = dg.is_string() ? dg.get<std::string>() : dg.dump();
  }
  if (j.contains("feature_columns")) {
    const Json& f = j.at("feature_columns");
    if (f.is_string()) {
      if (f.get<std::string>() != "all") fail(Errc::ConfigError, "feature_columns must be \"all\" or a list");
    } else {
      s.feature_columns = detail::get_or<std::vector<std::string>>(j, "feature_columns", {});
    }
  }
  const auto policy = detail::get_or<std::string>(j, "missing_policy", "drop_row");
  if (policy != "drop_row") fail(Errc::ConfigError, "missing_policy must be drop_row");
  if (s.target_column == s.class_column) fail(Errc::ConfigError, "target_column and class_column must differ");
  return s;
}

inline Json to_json(const SchemaConfig& s) {
  Json j{{"target_column", s.target_column},
         {"class_column", s.class_column},
         {"nc_value", s.nc_value},
         {"missing_policy", "drop_row"}};
  if (s.dg_value) j["dg_value"] = *s.dg_value;
  j["feature_columns"] = s.feature_columns ? Json(*s.feature_columns) : Json("all");
  return j;
}

inline RegressorConfig regressor_from_json(const Json& j) {
  detail::check_keys(j, {"backend", "kernel", "gamma", "degree", "coef0", "c", "epsilon", "ridge", "tol", "max_passes"},
                     "regressor");
  RegressorConfig r;
  const auto backend = detail::get_or<std::string>(j, "backend", "svr");
  if (backend == "svr" || backend == "epsilon_svr") {
    r.backend = Backend::EpsilonSvr;
  } else if (backend == "kernel_ridge" || backend == "krr") {
    r.backend = Backend::KernelRidge;
  } else {
    fail(Errc::ConfigError, "backend must be svr or kernel_ridge");
  }
  const auto kernel = detail::get_or<std::string>(j, "kernel", "rbf");
  if (kernel == "rbf") {
    r.kernel.kind = KernelKind::Rbf;
  } else if (kernel == "linear") {
    r.kernel.kind = KernelKind::Linear;
  } else if (kernel == "polynomial" || kernel == "poly") {
    r.kernel.kind = KernelKind::Polynomial;
  } else {
    fail(Errc::ConfigError, "kernel must be rbf, linear or polynomial");
  }
  if (j.contains("gamma") && !(j.at("gamma").is_string() && j.at("gamma") == "auto")) {
    r.kernel.gamma = detail::get_or<double>(j, "gamma", 0.0);
  }
  r.kernel.degree = detail::get_or<int>(j, "degree", r.kernel.degree);
  r.kernel.coef0 = detail::get_or<double>(j, "coef0", r.kernel.coef0);
  r.svr.c = detail::get_or<double>(j, "c", r.svr.c);
  r.svr.epsilon = detail::get_or<double>(j, "epsilon", r.svr.epsilon);
  r.svr.tol = detail::get_or<double>(j, "tol", r.svr.tol);
  r.svr.max_passes = detail::get_or<int>(j, "max_passes", r.svr.max_passes);
  r.ridge = detail::get_or<double>(j, "ridge", r.ridge);
  r.validate();
  return r;
}

inline Json to_json(const RegressorConfig& r) {
  static constexpr const char* kinds[] = {"rbf", "linear", "polynomial"};
  Json j{{"backend", r.backend == Backend::EpsilonSvr ? "svr" : "kernel_ridge"},
         {"kernel", kinds[static_cast<int>(r.kernel.kind)]},
         {"degree", r.kernel.degree},
         {"coef0", r.kernel.coef0},
         {"c", r.svr.c},
         {"epsilon", r.svr.epsilon},
         {"tol", r.svr.tol},
         {"max_passes", r.svr.max_passes},
         {"ridge", r.ridge}};
  j["gamma"] = r.kernel.gamma ? Json(*r.kernel.gamma) : Json("auto");
  return j;
}

inline Mechanism mechanism_from_string(const std::string& s) {
  if (s == "tae" || s == "TAE") return Mechanism::TAE;
  if (s == "pae" || s == "PAE") return Mechanism::PAE;
  if (s == "iae" || s == "IAE") return Mechanism::IAE;
  fail(Errc::ConfigError, "unknown mechanism '" + s + "' (expected tae, pae or iae)");
}

inline FitnessCriterion criterion_from_string(const std::string& s) {
  if (s == "sep" || s == "lambda1" || s == "separability") return FitnessCriterion::SeparabilityDistance;
  if (s == "corr" || s == "lambda2" || s == "correlation") return FitnessCriterion::ClassCorrelation;
  fail(Errc::ConfigError, "unknown criterion '" + s + "' (expected sep or corr)");
}

inline std::string criterion_name(FitnessCriterion c) {
  return c == FitnessCriterion::SeparabilityDistance ? "sep" : "corr";
}

}  // namespace iae
