#ifndef SURVMED_PIPELINE_HPP
#define SURVMED_PIPELINE_HPP

#include <Eigen/Dense>
#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "survmed/core_data.hpp"
#include "survmed/cox.hpp"
#include "survmed/error.hpp"
#include "survmed/glm.hpp"
#include "survmed/reshape.hpp"
#include "survmed/terms.hpp"
#include "survmed/weights.hpp"

namespace survmed {

enum class ModelKind { NoInteraction, Interaction, ConditionalOnBaseline };

inline std::string to_string(ModelKind k) {
  switch (k) {
    case ModelKind::NoInteraction: return "no_interaction";
    case ModelKind::Interaction: return "interaction";
    case ModelKind::ConditionalOnBaseline: return "conditional";
  }
  return "no_interaction";
}

inline std::optional<ModelKind> model_kind_from(const std::string& s) {
  if (s == "no_interaction" || s == "1") return ModelKind::NoInteraction;
  if (s == "interaction" || s == "2") return ModelKind::Interaction;
  if (s == "conditional" || s == "5") return ModelKind::ConditionalOnBaseline;
  return std::nullopt;
}

struct AnalysisSpec {
  ModelKind model = ModelKind::NoInteraction;
  std::vector<int> causes{1, 2};
  CensoringMode censoring = CensoringMode::None;
  std::vector<std::pair<int, int>> contrasts{{0, 1}};  // (a, a*)
  int bootstrap_replicates = 5000;
  std::uint64_t seed = 1;
  std::optional<double> truncate_pct;
  unsigned threads = 1;

  std::vector<std::string> treatment_terms;
  bool mediator_pooled = true;
  std::vector<std::string> mediator_terms;
  std::vector<std::vector<std::string>> mediator_terms_by_visit;
  std::vector<std::string> censoring_terms;
  std::vector<std::string> baseline_terms;  // conditional model only
  bool astar_baseline_interaction = false;
  std::optional<double> study_end;
};

struct CauseFit {
  int cause = 1;
  CoxFit cox;
  BaselineHazard baseline;
  std::size_t events = 0;
};

struct NaturalEffectFit {
  ModelKind model = ModelKind::NoInteraction;
  std::vector<std::string> covariate_names;
  std::vector<CauseFit> causes;
  WeightDiagnostics diagnostics;
  NuisanceModels nuisance;
  std::size_t subjects = 0, long_rows = 0, expanded_rows = 0;

  const CauseFit* find(int cause) const {
    for (const auto& c : causes) {
      if (c.cause == cause) return &c;
    }
    return nullptr;
  }
};

struct Interval {
  double lower = 0.0;
  double upper = 0.0;
};

struct EffectEstimate {
  double value = 1.0;  // hazard ratio, or a proportion for the mediated proportion
  std::optional<Interval> ci;
  std::optional<double> p_value;
};

struct DecompositionEntry {
  int cause = 1;
  int a = 0;
  int a_star = 1;
  EffectEstimate total, direct, indirect;
  std::optional<EffectEstimate> mediated_proportion;  // absent when log HR_TE = 0
};

struct CoefficientSummary {
  int cause = 1;
  std::string name;
  double estimate = 0.0;
  std::optional<Interval> ci;
  std::optional<double> p_value;
};

struct BootstrapSummary {
  int requested = 0;
  int failed = 0;
  std::uint64_t seed = 0;
  std::map<std::string, int> failures;  // by error code
};

struct EffectDecomposition {
  std::vector<DecompositionEntry> entries;
  std::vector<CoefficientSummary> coefficients;
  BootstrapSummary bootstrap;
};

/// Hazard-ratio decomposition for the contrast a -> a*. Coefficients are
/// (alpha_1, alpha_2[, alpha_3]); any further entries are ignored (they are
/// baseline terms of the conditional model, so effects refer to L_0 = 0).
/// HR_TE is formed as HR_DE * HR_IE so the identity is exact.
inline DecompositionEntry decompose(const Eigen::VectorXd& coefficients, ModelKind kind, int a, int a_star,
                                    int cause = 1) {
  if (coefficients.size() < 2 || (kind == ModelKind::Interaction && coefficients.size() < 3)) {
    throw Error("decompose", ErrorCode::InvalidInput, "too few coefficients for the natural effect model");
  }
  const double d = a_star - a;
  const double a1 = coefficients(0), a2 = coefficients(1);
  const double a3 = kind == ModelKind::Interaction ? coefficients(2) : 0.0;
  DecompositionEntry e;
  e.cause = cause;
  e.a = a;
  e.a_star = a_star;
  const double log_de = (a1 + a3 * a_star) * d;
  const double log_ie = (a2 + a3 * a) * d;
  e.direct.value = std::exp(log_de);
  e.indirect.value = std::exp(log_ie);
  e.total.value = e.direct.value * e.indirect.value;
  const double log_te = log_de + log_ie;
  if (log_te != 0.0) e.mediated_proportion = EffectEstimate{log_ie / log_te, std::nullopt, std::nullopt};
  return e;
}

/// Everything run_analysis builds along the way, for diagnostics output.
struct AnalysisArtifacts {
  std::vector<CountingProcessRow> rows;
  std::vector<ExpandedRow> expanded;
  std::vector<WeightBundle> weights;
};

namespace pipeline_detail {

template <class F>
auto staged(const char* stage, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const Error& e) {
    if (e.stage() == "config" || e.stage() == "weights") throw;
    throw Error(stage, e.code(), e.detail());
  }
}

inline Formula baseline_formula(const std::vector<std::string>& terms, const VariableSpec& vars) {
  Formula f = Formula::parse(terms, vars);
  for (const auto& t : f.terms) {
    for (const auto& fac : t.factors()) {
      if (fac.kind != Term::Kind::Baseline) {
        throw Error("config", ErrorCode::ConfigError, "term '" + t.label() + "' must use baseline covariates only");
      }
    }
  }
  return f;
}

inline void check_spec(const Dataset& data, const AnalysisSpec& spec) {
  const int P = data.variables.exposure_levels;
  if (spec.causes.empty()) throw Error("config", ErrorCode::ConfigError, "no causes requested");
  for (int c : spec.causes) {
    if (c != 1 && c != 2) throw Error("config", ErrorCode::ConfigError, "cause must be 1 or 2");
  }
  for (auto [a, as] : spec.contrasts) {
    if (a < 0 || a >= P || as < 0 || as >= P) {
      throw Error("config", ErrorCode::ConfigError, "contrast outside the exposure levels");
    }
  }
  if (spec.bootstrap_replicates < 0) throw Error("config", ErrorCode::ConfigError, "bootstrap replicates must be >= 0");
  if (spec.censoring != CensoringMode::None && spec.censoring != CensoringMode::ExposureOnly &&
      spec.censoring_terms.empty()) {
    throw Error("config", ErrorCode::ConfigError, "history censoring weights need censoring_model.terms");
  }
}

inline NuisanceModels fit_nuisance(const Dataset& data, const std::vector<CountingProcessRow>& rows,
                                   const AnalysisSpec& spec) {
  const auto& vars = data.variables;
  NuisanceModels m;
  m.treatment = staged("treatment_model",
                       [&] { return fit_treatment_model(data, baseline_formula(spec.treatment_terms, vars)); });
  m.mediator = staged("mediator_model", [&] {
    std::vector<Formula> fs;
    if (spec.mediator_pooled) {
      fs.push_back(Formula::parse(spec.mediator_terms, vars));
    } else {
      for (const auto& t : spec.mediator_terms_by_visit) fs.push_back(Formula::parse(t, vars));
    }
    return fit_mediator_model(data, std::move(fs), spec.mediator_pooled);
  });
  auto exposure_only = [&] { return fit_censoring_model(data, rows, Formula::parse({"a"}, vars), spec.study_end); };
  switch (spec.censoring) {
    case CensoringMode::None: break;
    case CensoringMode::ExposureOnly: m.censoring = staged("censoring_model", exposure_only); break;
    case CensoringMode::HistoryStabilized:
      m.stabilizer = staged("censoring_model", exposure_only);
      [[fallthrough]];
    case CensoringMode::HistoryUnstabilized:
      m.censoring = staged("censoring_model", [&] {
        return fit_censoring_model(data, rows, Formula::parse(spec.censoring_terms, vars), spec.study_end);
      });
      break;
  }
  return m;
}

}  // namespace pipeline_detail

/// Steps 1-6 on one dataset: point estimates only.
inline NaturalEffectFit fit_natural_effect(const Dataset& data, const AnalysisSpec& spec,
                                           AnalysisArtifacts* artifacts = nullptr) {
  pipeline_detail::check_spec(data, spec);
  const int P = data.variables.exposure_levels;
  const Formula base = pipeline_detail::baseline_formula(
      spec.model == ModelKind::ConditionalOnBaseline ? spec.baseline_terms : std::vector<std::string>{},
      data.variables);

  NaturalEffectFit fit;
  fit.model = spec.model;
  auto rows = pipeline_detail::staged("reshape", [&] { return to_counting_process(data); });
  fit.nuisance = pipeline_detail::fit_nuisance(data, rows, spec);
  auto expanded = expand_counterfactual(rows, P);
  auto bundles = assign_weights(data, rows, expanded, fit.nuisance, spec.censoring, spec.truncate_pct, &fit.diagnostics);

  // Natural effect design: a, a*, [a*a*], [L0 terms], [a* x L0 terms].
  fit.covariate_names = {"a", "astar"};
  if (spec.model == ModelKind::Interaction) fit.covariate_names.push_back("a:astar");
  const bool conditional = spec.model == ModelKind::ConditionalOnBaseline;
  if (conditional) {
    for (const auto& l : base.labels()) fit.covariate_names.push_back(l);
    if (spec.astar_baseline_interaction) {
      for (const auto& l : base.labels()) fit.covariate_names.push_back("astar:" + l);
    }
  }
  const auto p = static_cast<Eigen::Index>(fit.covariate_names.size());
  std::vector<Eigen::VectorXd> base_values(data.subjects.size());
  if (conditional) {
    for (std::size_t i = 0; i < data.subjects.size(); ++i) {
      base_values[i].resize(static_cast<Eigen::Index>(base.size()));
      base.eval_into(RowContext{&data.subjects[i], 0, 0.0, data.subjects[i].exposure}, base_values[i]);
    }
  }

  SurvivalRows sr;
  const std::size_t n = expanded.size();
  sr.start.resize(n);
  sr.stop.resize(n);
  sr.status.resize(n);
  sr.weight.resize(n);
  sr.X.resize(static_cast<Eigen::Index>(n), p);
  sr.covariate_names = fit.covariate_names;
  for (std::size_t e = 0; e < n; ++e) {
    const auto& r = rows[expanded[e].row];
    const auto i = static_cast<Eigen::Index>(e);
    sr.start[e] = r.start;
    sr.stop[e] = r.stop;
    sr.status[e] = code_of(r.status);
    sr.weight[e] = expanded[e].case_weight;
    const double a = r.exposure, as = expanded[e].hypothetical_exposure;
    sr.X(i, 0) = a;
    sr.X(i, 1) = as;
    Eigen::Index c = 2;
    if (spec.model == ModelKind::Interaction) sr.X(i, c++) = a * as;
    if (conditional) {
      const auto& b = base_values[r.subject];
      const auto nb = b.size();
      sr.X.row(i).segment(c, nb) = b.transpose();
      c += nb;
      if (spec.astar_baseline_interaction) sr.X.row(i).segment(c, nb) = as * b.transpose();
    }
  }

  for (int cause : spec.causes) {
    CauseFit cf;
    cf.cause = cause;
    cf.events = static_cast<std::size_t>(std::count(sr.status.begin(), sr.status.end(), cause));
    cf.cox = fit_weighted_cox(sr, cause);
    if (!cf.cox.converged) {
      throw Error("cox", ErrorCode::NotConverged, "natural effect model for cause " + std::to_string(cause));
    }
    cf.baseline = breslow_baseline(cf.cox, sr);
    fit.causes.push_back(std::move(cf));
  }
  fit.subjects = data.subjects.size();
  fit.long_rows = rows.size();
  fit.expanded_rows = expanded.size();
  if (artifacts) {
    artifacts->rows = std::move(rows);
    artifacts->expanded = std::move(expanded);
    artifacts->weights = std::move(bundles);
  }
  return fit;
}

/// Point decomposition for every requested cause and contrast.
inline EffectDecomposition decompose_all(const NaturalEffectFit& fit, const AnalysisSpec& spec) {
  EffectDecomposition out;
  for (const auto& cf : fit.causes) {
    for (Eigen::Index j = 0; j < cf.cox.coefficients.size(); ++j) {
      out.coefficients.push_back({cf.cause, fit.covariate_names[static_cast<std::size_t>(j)], cf.cox.coefficients(j),
                                  std::nullopt, std::nullopt});
    }
  }
  for (const auto& cf : fit.causes) {
    for (auto [a, as] : spec.contrasts) out.entries.push_back(decompose(cf.cox.coefficients, fit.model, a, as, cf.cause));
  }
  return out;
}

namespace pipeline_detail {

// Flattened per-replicate statistics: coefficients, then per entry
// (HR_TE, HR_DE, HR_IE, mediated proportion or NaN).
inline std::vector<double> replicate_stats(const NaturalEffectFit& fit, const AnalysisSpec& spec) {
  std::vector<double> s;
  for (const auto& cf : fit.causes) {
    for (Eigen::Index j = 0; j < cf.cox.coefficients.size(); ++j) s.push_back(cf.cox.coefficients(j));
  }
  for (const auto& cf : fit.causes) {
    for (auto [a, as] : spec.contrasts) {
      auto e = decompose(cf.cox.coefficients, fit.model, a, as, cf.cause);
      s.push_back(e.total.value);
      s.push_back(e.direct.value);
      s.push_back(e.indirect.value);
      s.push_back(e.mediated_proportion ? e.mediated_proportion->value : std::nan(""));
    }
  }
  return s;
}

inline Dataset resample(const Dataset& data, std::uint64_t seed, std::uint64_t replicate) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(replicate), static_cast<std::uint32_t>(replicate >> 32)};
  std::mt19937_64 rng(seq);
  const std::size_t n = data.subjects.size();
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  Dataset out;
  out.schedule = data.schedule;
  out.variables = data.variables;
  out.subjects.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.subjects.push_back(data.subjects[pick(rng)]);
  return out;
}

inline double normal_two_sided_p(double est, double se) {
  if (!(se > 0.0)) return est == 0.0 ? 1.0 : 0.0;
  return std::erfc(std::abs(est) / se / std::sqrt(2.0));
}

struct Column {
  std::vector<double> values;

  Interval percentile() const { return {quantile7(values, 0.025), quantile7(values, 0.975)}; }
  double sd() const {
    if (values.size() < 2) return std::nan("");
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= static_cast<double>(values.size());
    double ss = 0.0;
    for (double v : values) ss += (v - mean) * (v - mean);
    return std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
};

}  // namespace pipeline_detail

struct AnalysisResult {
  NaturalEffectFit fit;
  EffectDecomposition decomposition;
};

/// Nonparametric bootstrap over subjects. Replicate r draws from an RNG seeded
/// by (seed, r) alone; results are collected by index, so thread count and
/// scheduling do not affect the output. Percentile intervals on the HR scale;
/// p-values from the bootstrap SE on the log-HR / coefficient scale.
inline void bootstrap(const Dataset& data, const AnalysisSpec& spec, const NaturalEffectFit& point,
                      EffectDecomposition& out) {
  const int B = spec.bootstrap_replicates;
  out.bootstrap.requested = B;
  out.bootstrap.seed = spec.seed;
  if (B <= 0) return;

  std::vector<std::optional<std::vector<double>>> results(static_cast<std::size_t>(B));
  std::vector<std::string> errors(static_cast<std::size_t>(B));
  std::atomic<int> next{0};
  auto worker = [&] {
    for (int r = next++; r < B; r = next++) {
      try {
        Dataset d = pipeline_detail::resample(data, spec.seed, static_cast<std::uint64_t>(r));
        auto f = fit_natural_effect(d, spec);
        results[static_cast<std::size_t>(r)] = pipeline_detail::replicate_stats(f, spec);
      } catch (const Error& e) {
        errors[static_cast<std::size_t>(r)] = std::string(to_string(e.code()));
      }
    }
  };
  const unsigned T = std::max(1u, std::min<unsigned>(spec.threads, static_cast<unsigned>(B)));
  if (T == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < T; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  const auto point_stats = pipeline_detail::replicate_stats(point, spec);
  std::vector<pipeline_detail::Column> cols(point_stats.size());
  for (int r = 0; r < B; ++r) {
    const auto& res = results[static_cast<std::size_t>(r)];
    if (!res) {
      ++out.bootstrap.failed;
      ++out.bootstrap.failures[errors[static_cast<std::size_t>(r)]];
      continue;
    }
    for (std::size_t j = 0; j < cols.size(); ++j) {
      if (std::isfinite((*res)[j])) cols[j].values.push_back((*res)[j]);
    }
  }
  if (out.bootstrap.failed > 0.05 * B) {
    throw Error("bootstrap", ErrorCode::TooManyFailedReplicates,
                std::to_string(out.bootstrap.failed) + " of " + std::to_string(B) + " replicates failed");
  }

  std::size_t j = 0;
  for (auto& c : out.coefficients) {
    const auto& col = cols[j++];
    if (col.values.empty()) continue;
    c.ci = col.percentile();
    c.p_value = pipeline_detail::normal_two_sided_p(c.estimate, col.sd());
  }
  for (auto& e : out.entries) {
    for (EffectEstimate* est : {&e.total, &e.direct, &e.indirect}) {
      auto& col = cols[j++];
      if (col.values.empty()) continue;
      est->ci = col.percentile();
      for (double& v : col.values) v = std::log(v);
      est->p_value = pipeline_detail::normal_two_sided_p(std::log(est->value), col.sd());
    }
    const auto& col = cols[j++];
    if (e.mediated_proportion && !col.values.empty()) e.mediated_proportion->ci = col.percentile();
  }
}

/// Steps 1-7.
inline AnalysisResult run_analysis(const Dataset& data, const AnalysisSpec& spec,
                                   AnalysisArtifacts* artifacts = nullptr) {
  AnalysisResult res;
  res.fit = fit_natural_effect(data, spec, artifacts);
  res.decomposition = decompose_all(res.fit, spec);
  bootstrap(data, spec, res.fit, res.decomposition);
  return res;
}

}  // namespace survmed

#endif  // SURVMED_PIPELINE_HPP
