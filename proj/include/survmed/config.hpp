#ifndef SURVMED_CONFIG_HPP
#define SURVMED_CONFIG_HPP

#include <fstream>
#include <nlohmann/json.hpp>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "survmed/core_data.hpp"
#include "survmed/dataset_io.hpp"
#include "survmed/error.hpp"
#include "survmed/pipeline.hpp"
#include "survmed/weights.hpp"

namespace survmed {

/// Everything an analysis config file declares.
struct StudyConfig {
  std::vector<double> visit_times;
  int exposure_levels = 2;
  int mediator_levels = 2;
  ColumnRoles columns;
  AnalysisSpec analysis;

  VisitSchedule schedule() const { return VisitSchedule(visit_times); }
  VariableSpec variables() const { return make_variable_spec(columns, exposure_levels, mediator_levels); }
};

namespace config_detail {

using nlohmann::json;

inline const json& need(const json& j, const std::string& key, const std::string& path) {
  if (!j.is_object() || !j.contains(key)) {
    throw Error("config", ErrorCode::ConfigError, "missing required key '" + path + key + "'");
  }
  return j.at(key);
}

template <class T>
T as(const json& j, const std::string& what) {
  try {
    return j.get<T>();
  } catch (const json::exception&) {
    throw Error("config", ErrorCode::ConfigError, "key '" + what + "' has the wrong type");
  }
}

template <class T>
T get_or(const json& j, const std::string& key, T fallback, const std::string& path) {
  if (!j.is_object() || !j.contains(key) || j.at(key).is_null()) return fallback;
  return as<T>(j.at(key), path + key);
}

inline std::optional<double> get_optional_double(const json& j, const std::string& key, const std::string& path) {
  if (!j.is_object() || !j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return as<double>(j.at(key), path + key);
}

}  // namespace config_detail

/// Parses the analysis config. Required keys: visit_times, exposure_levels,
/// mediator_levels, treatment_model.terms, mediator_model.terms (or
/// mediator_model.terms_by_visit with pooled = false), analysis.model.
inline StudyConfig parse_study_config(const nlohmann::json& j) {
  using namespace config_detail;
  if (!j.is_object()) throw Error("config", ErrorCode::ConfigError, "config must be a JSON object");
  StudyConfig c;
  c.visit_times = as<std::vector<double>>(need(j, "visit_times", ""), "visit_times");
  c.exposure_levels = as<int>(need(j, "exposure_levels", ""), "exposure_levels");
  c.mediator_levels = as<int>(need(j, "mediator_levels", ""), "mediator_levels");
  if (c.exposure_levels < 2 || c.mediator_levels < 2) {
    throw Error("config", ErrorCode::ConfigError, "exposure_levels and mediator_levels must be at least 2");
  }
  try {
    VisitSchedule check(c.visit_times);
  } catch (const Error& e) {
    throw Error("config", ErrorCode::ConfigError, e.detail());
  }

  if (j.contains("columns")) {
    const auto& col = j.at("columns");
    c.columns.id = get_or<std::string>(col, "id", c.columns.id, "columns.");
    c.columns.time = get_or<std::string>(col, "time", c.columns.time, "columns.");
    c.columns.status = get_or<std::string>(col, "status", c.columns.status, "columns.");
    c.columns.exposure = get_or<std::string>(col, "exposure", c.columns.exposure, "columns.");
    c.columns.mediator = get_or<std::string>(col, "mediator", c.columns.mediator, "columns.");
    c.columns.confounders = get_or<std::vector<std::string>>(col, "confounders", {}, "columns.");
    c.columns.baseline = get_or<std::vector<std::string>>(col, "baseline", {}, "columns.");
  }

  auto& s = c.analysis;
  s.study_end = get_optional_double(j, "study_end", "");
  s.treatment_terms =
      as<std::vector<std::string>>(need(need(j, "treatment_model", ""), "terms", "treatment_model."), "treatment_model.terms");

  const auto& med = need(j, "mediator_model", "");
  s.mediator_pooled = get_or<bool>(med, "pooled", true, "mediator_model.");
  if (s.mediator_pooled) {
    s.mediator_terms = as<std::vector<std::string>>(need(med, "terms", "mediator_model."), "mediator_model.terms");
  } else {
    s.mediator_terms_by_visit = as<std::vector<std::vector<std::string>>>(
        need(med, "terms_by_visit", "mediator_model."), "mediator_model.terms_by_visit");
  }
  if (j.contains("censoring_model")) {
    s.censoring_terms = as<std::vector<std::string>>(need(j.at("censoring_model"), "terms", "censoring_model."),
                                                     "censoring_model.terms");
  }

  const auto& an = need(j, "analysis", "");
  const auto kind = as<std::string>(need(an, "model", "analysis."), "analysis.model");
  if (auto k = model_kind_from(kind)) {
    s.model = *k;
  } else {
    throw Error("config", ErrorCode::ConfigError, "analysis.model must be no_interaction, interaction or conditional");
  }
  s.causes = get_or<std::vector<int>>(an, "causes", s.causes, "analysis.");
  const auto cens = get_or<std::string>(an, "censoring", "none", "analysis.");
  if (auto m = censoring_mode_from(cens)) {
    s.censoring = *m;
  } else {
    throw Error("config", ErrorCode::ConfigError, "unknown analysis.censoring '" + cens + "'");
  }
  if (an.contains("contrasts")) {
    s.contrasts.clear();
    for (const auto& p : an.at("contrasts")) {
      auto v = as<std::vector<int>>(p, "analysis.contrasts");
      if (v.size() != 2) throw Error("config", ErrorCode::ConfigError, "each contrast is a pair [a, a_star]");
      s.contrasts.emplace_back(v[0], v[1]);
    }
  }
  s.bootstrap_replicates = get_or<int>(an, "bootstrap", s.bootstrap_replicates, "analysis.");
  s.seed = get_or<std::uint64_t>(an, "seed", s.seed, "analysis.");
  s.truncate_pct = get_optional_double(an, "truncate_pct", "analysis.");
  s.baseline_terms = get_or<std::vector<std::string>>(an, "baseline_terms", {}, "analysis.");
  s.astar_baseline_interaction = get_or<bool>(an, "astar_baseline_interaction", false, "analysis.");
  return c;
}

/// Reads a JSON file; parse errors are config errors.
inline nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("config", ErrorCode::ConfigError, "cannot open '" + path + "'");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error("config", ErrorCode::ConfigError, "'" + path + "' is not valid JSON: " + e.what());
  }
}

/// The effective analysis settings written back into reports.
inline nlohmann::ordered_json to_json(const StudyConfig& c) {
  nlohmann::ordered_json j;
  j["visit_times"] = c.visit_times;
  j["exposure_levels"] = c.exposure_levels;
  j["mediator_levels"] = c.mediator_levels;
  if (c.analysis.study_end) j["study_end"] = *c.analysis.study_end;
  j["columns"] = {{"id", c.columns.id},
                  {"time", c.columns.time},
                  {"status", c.columns.status},
                  {"exposure", c.columns.exposure},
                  {"mediator", c.columns.mediator},
                  {"confounders", c.columns.confounders},
                  {"baseline", c.columns.baseline}};
  const auto& s = c.analysis;
  j["treatment_model"] = {{"terms", s.treatment_terms}};
  if (s.mediator_pooled) {
    j["mediator_model"] = {{"pooled", true}, {"terms", s.mediator_terms}};
  } else {
    j["mediator_model"] = {{"pooled", false}, {"terms_by_visit", s.mediator_terms_by_visit}};
  }
  if (!s.censoring_terms.empty()) j["censoring_model"] = {{"terms", s.censoring_terms}};
  nlohmann::ordered_json an;
  an["model"] = to_string(s.model);
  an["causes"] = s.causes;
  an["censoring"] = to_string(s.censoring);
  nlohmann::ordered_json contrasts = nlohmann::ordered_json::array();
  for (auto [a, as] : s.contrasts) contrasts.push_back({a, as});
  an["contrasts"] = contrasts;
  an["bootstrap"] = s.bootstrap_replicates;
  an["seed"] = s.seed;
  an["truncate_pct"] = s.truncate_pct ? nlohmann::ordered_json(*s.truncate_pct) : nlohmann::ordered_json(nullptr);
  an["baseline_terms"] = s.baseline_terms;
  an["astar_baseline_interaction"] = s.astar_baseline_interaction;
  j["analysis"] = an;
  return j;
}

}  // namespace survmed

#endif  // SURVMED_CONFIG_HPP
