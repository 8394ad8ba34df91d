#ifndef SURVMED_REPORT_HPP
#define SURVMED_REPORT_HPP

#include <Eigen/Dense>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "survmed/config.hpp"
#include "survmed/error.hpp"
#include "survmed/pipeline.hpp"

namespace survmed {

inline constexpr const char* kSoftwareName = "survmed";
inline constexpr const char* kSoftwareVersion = "0.1.0";

namespace report_detail {

using oj = nlohmann::ordered_json;

inline oj interval(const std::optional<Interval>& ci) {
  if (!ci) return nullptr;
  return oj::array({ci->lower, ci->upper});
}

inline oj optional_number(const std::optional<double>& v) {
  if (!v) return nullptr;
  return *v;
}

inline oj effect(const EffectEstimate& e, const char* value_key) {
  oj j;
  j[value_key] = e.value;
  j["ci"] = interval(e.ci);
  j["p_value"] = optional_number(e.p_value);
  return j;
}

inline oj summary(const ComponentSummary& s) { return oj{{"min", s.min}, {"max", s.max}, {"mean", s.mean}}; }

inline oj glm_table(const FittedGlm& fit) {
  oj rows = oj::array();
  for (Eigen::Index c = 0; c < fit.coefficients.rows(); ++c) {
    for (Eigen::Index k = 0; k < fit.coefficients.cols(); ++k) {
      rows.push_back(oj{{"category", c + 1},
                        {"term", fit.column_names[static_cast<std::size_t>(k)]},
                        {"estimate", fit.coefficients(c, k)}});
    }
  }
  return oj{{"converged", fit.converged},
            {"iterations", fit.iterations},
            {"log_likelihood", fit.log_likelihood},
            {"coefficients", rows}};
}

inline oj cox_table(const CoxFit& fit) {
  oj rows = oj::array();
  for (Eigen::Index k = 0; k < fit.coefficients.size(); ++k) {
    rows.push_back(oj{{"term", fit.covariate_names[static_cast<std::size_t>(k)]}, {"estimate", fit.coefficients(k)}});
  }
  return oj{{"converged", fit.converged},
            {"iterations", fit.iterations},
            {"log_partial_likelihood", fit.log_partial_likelihood},
            {"coefficients", rows}};
}

}  // namespace report_detail

/// Run report with a fixed key order. Timing is left out so that reruns
/// produce identical bytes.
inline nlohmann::ordered_json make_report(const StudyConfig& config, const AnalysisResult& result,
                                          const std::string& config_sha256, const std::string& data_sha256,
                                          const std::string& fingerprint) {
  using report_detail::oj;
  const auto& fit = result.fit;
  const auto& dec = result.decomposition;
  oj r;
  r["software"] = oj{{"name", kSoftwareName}, {"version", kSoftwareVersion}};
  r["fingerprint"] = oj{{"config_sha256", config_sha256}, {"data_sha256", data_sha256}, {"combined", fingerprint}};
  r["config"] = to_json(config);

  oj events = oj::object();
  for (const auto& cf : fit.causes) events[std::to_string(cf.cause)] = cf.events;
  r["data"] = oj{{"subjects", fit.subjects},
                 {"long_rows", fit.long_rows},
                 {"expanded_rows", fit.expanded_rows},
                 {"expanded_events", events}};

  oj nuisance;
  nuisance["treatment"] = report_detail::glm_table(fit.nuisance.treatment.fit);
  oj med = oj::array();
  for (const auto& m : fit.nuisance.mediator.fits) med.push_back(report_detail::glm_table(m));
  nuisance["mediator"] = med;
  nuisance["censoring"] = fit.nuisance.censoring ? report_detail::cox_table(fit.nuisance.censoring->fit) : oj(nullptr);
  nuisance["censoring_stabilizer"] =
      fit.nuisance.stabilizer ? report_detail::cox_table(fit.nuisance.stabilizer->fit) : oj(nullptr);
  r["nuisance_models"] = nuisance;

  const auto& d = fit.diagnostics;
  r["weights"] = oj{{"treatment", report_detail::summary(d.treatment)},
                    {"mediator", report_detail::summary(d.mediator)},
                    {"censoring", report_detail::summary(d.censoring)},
                    {"total", report_detail::summary(d.total)},
                    {"clipped_censoring_factors", d.clipped_censoring_factors},
                    {"effective_sample_size", d.effective_sample_size},
                    {"truncated", d.truncated},
                    {"truncation_caps", d.lower_cap ? oj::array({*d.lower_cap, *d.upper_cap}) : oj(nullptr)}};

  oj causes = oj::array();
  std::size_t idx = 0;
  for (const auto& cf : fit.causes) {
    oj coefs = oj::array();
    for (Eigen::Index k = 0; k < cf.cox.coefficients.size(); ++k) {
      const auto& c = dec.coefficients.at(idx++);
      coefs.push_back(oj{{"term", c.name},
                         {"estimate", c.estimate},
                         {"ci", report_detail::interval(c.ci)},
                         {"p_value", report_detail::optional_number(c.p_value)}});
    }
    causes.push_back(oj{{"cause", cf.cause},
                        {"events", cf.events},
                        {"converged", cf.cox.converged},
                        {"iterations", cf.cox.iterations},
                        {"log_partial_likelihood", cf.cox.log_partial_likelihood},
                        {"coefficients", coefs},
                        {"baseline_hazard",
                         oj{{"times", cf.baseline.jump_times}, {"increments", cf.baseline.increments}}}});
  }
  r["natural_effect_model"] = oj{{"model", to_string(fit.model)}, {"causes", causes}};

  oj decomposition = oj::array();
  for (const auto& e : dec.entries) {
    oj row;
    row["cause"] = e.cause;
    row["a"] = e.a;
    row["a_star"] = e.a_star;
    row["total"] = report_detail::effect(e.total, "hr");
    row["direct"] = report_detail::effect(e.direct, "hr");
    row["indirect"] = report_detail::effect(e.indirect, "hr");
    row["mediated_proportion"] =
        e.mediated_proportion ? report_detail::effect(*e.mediated_proportion, "value") : oj(nullptr);
    decomposition.push_back(row);
  }
  r["decomposition"] = decomposition;

  oj failures = oj::object();
  for (const auto& [code, n] : dec.bootstrap.failures) failures[code] = n;
  r["bootstrap"] = oj{{"replicates_requested", dec.bootstrap.requested},
                      {"replicates_failed", dec.bootstrap.failed},
                      {"failures", failures},
                      {"seed", dec.bootstrap.seed},
                      {"interval", "percentile 2.5/97.5"},
                      {"p_value_method", "two-sided normal approximation, bootstrap SE on the log scale"}};
  return r;
}

/// Rebuilds the natural effect fit (coefficients and baselines) from a report.
inline NaturalEffectFit fit_from_report(const nlohmann::json& r) {
  try {
    NaturalEffectFit fit;
    const auto& ne = r.at("natural_effect_model");
    auto kind = model_kind_from(ne.at("model").get<std::string>());
    if (!kind) throw Error("cuminc", ErrorCode::InvalidInput, "unknown model in report");
    fit.model = *kind;
    for (const auto& c : ne.at("causes")) {
      CauseFit cf;
      cf.cause = c.at("cause").get<int>();
      cf.cox.cause = cf.cause;
      const auto& coefs = c.at("coefficients");
      cf.cox.coefficients.resize(static_cast<Eigen::Index>(coefs.size()));
      for (std::size_t k = 0; k < coefs.size(); ++k) {
        cf.cox.coefficients(static_cast<Eigen::Index>(k)) = coefs[k].at("estimate").get<double>();
        cf.cox.covariate_names.push_back(coefs[k].at("term").get<std::string>());
      }
      cf.cox.converged = c.at("converged").get<bool>();
      cf.baseline.cause = cf.cause;
      cf.baseline.jump_times = c.at("baseline_hazard").at("times").get<std::vector<double>>();
      cf.baseline.increments = c.at("baseline_hazard").at("increments").get<std::vector<double>>();
      if (fit.covariate_names.empty()) fit.covariate_names = cf.cox.covariate_names;
      fit.causes.push_back(std::move(cf));
    }
    return fit;
  } catch (const nlohmann::json::exception& e) {
    throw Error("cuminc", ErrorCode::InvalidInput, std::string("malformed report: ") + e.what());
  }
}

}  // namespace survmed

#endif  // SURVMED_REPORT_HPP
