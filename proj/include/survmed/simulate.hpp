#ifndef SURVMED_SIMULATE_HPP
#define SURVMED_SIMULATE_HPP

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <nlohmann/json.hpp>
#include <optional>
#include <random>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "survmed/core_data.hpp"
#include "survmed/error.hpp"

namespace survmed {

// Discrete-time structural model on the visit grid. Interval k (1..K+1) is
// (t_{k-1}, t_k] with t_{K+1} = study_end. Within interval k, censoring is
// checked at its midpoint, then events at its end t_k; on surviving a visit
// k <= K, L_k and then M_k are drawn.
//
// Features visible to the laws (zero before they exist):
//   a                 exposure (the hypothetical a* in mediator laws of the oracle)
//   l0                baseline confounder
//   l, m              L and M at the current visit: L_k, M_k for the mediator law
//                     at visit k; L_{k-1}, M_{k-1} for interval k hazards
//   l_prev, m_prev    one visit earlier than l, m (for the confounder law at
//                     visit k: L_{k-1}, M_{k-1})
//   u_l, u_m, u_mt    binary latents
//   k                 visit or interval index
namespace sim {

enum Feature : int { One = 0, A, L0, L, M, LPrev, MPrev, UL, UM, UMT, Kidx, FeatureCount };

inline std::optional<Feature> feature_from(const std::string& s) {
  static const std::map<std::string, Feature> names{{"1", One},       {"a", A},         {"l0", L0},  {"l", L},
                                                    {"m", M},         {"l_prev", LPrev}, {"m_prev", MPrev},
                                                    {"u_l", UL},      {"u_m", UM},      {"u_mt", UMT}, {"k", Kidx}};
  auto it = names.find(s);
  if (it == names.end()) return std::nullopt;
  return it->second;
}

using Features = std::array<double, FeatureCount>;

/// Sum of coefficient * product of features.
struct Linear {
  std::vector<std::pair<std::vector<Feature>, double>> terms;

  double eval(const Features& x) const {
    double s = 0.0;
    for (const auto& [f, c] : terms) {
      double v = c;
      for (Feature g : f) v *= x[g];
      s += v;
    }
    return s;
  }
  bool uses(Feature g) const {
    for (const auto& [f, c] : terms) {
      for (Feature h : f) {
        if (h == g && c != 0.0) return true;
      }
    }
    return false;
  }
};

/// Categorical law over categories 0..C-1.
struct Law {
  enum class Kind { Logit, Multinomial, Table } kind = Kind::Logit;
  std::vector<Linear> predictors;  // C-1 linear predictors (Logit: one)
  struct Rule {
    std::vector<std::pair<Feature, double>> when;
    std::vector<double> probs;
  };
  std::vector<Rule> rules;
  int categories = 2;

  std::vector<double> probs(const Features& x) const {
    std::vector<double> p(static_cast<std::size_t>(categories), 0.0);
    if (kind == Kind::Table) {
      for (const auto& r : rules) {
        bool ok = true;
        for (const auto& [f, v] : r.when) ok = ok && x[f] == v;
        if (ok) return r.probs;
      }
      throw Error("simulate", ErrorCode::InvalidInput, "no table rule matches a reachable state");
    }
    double mx = 0.0;
    std::vector<double> eta(static_cast<std::size_t>(categories), 0.0);
    for (int c = 1; c < categories; ++c) {
      eta[static_cast<std::size_t>(c)] = predictors[static_cast<std::size_t>(c - 1)].eval(x);
      mx = std::max(mx, eta[static_cast<std::size_t>(c)]);
    }
    double total = 0.0;
    for (int c = 0; c < categories; ++c) {
      p[static_cast<std::size_t>(c)] = std::exp(eta[static_cast<std::size_t>(c)] - mx);
      total += p[static_cast<std::size_t>(c)];
    }
    for (double& v : p) v /= total;
    return p;
  }

  bool uses(Feature g) const {
    for (const auto& l : predictors) {
      if (l.uses(g)) return true;
    }
    for (const auto& r : rules) {
      for (const auto& [f, v] : r.when) {
        if (f == g) return true;
      }
    }
    return false;
  }
};

/// Discrete hazard baseline[k-1] * exp(linear) for interval k.
struct Hazard {
  std::vector<double> baseline;  // K+1 entries
  Linear linear;

  double eval(const Features& x, std::size_t interval) const {
    const double b = baseline[interval - 1];
    return b == 0.0 ? 0.0 : b * std::exp(linear.eval(x));
  }
};

}  // namespace sim

enum class DgpCensoring { None, ExposureOnly, HistoryDependent };

struct DgpConfig {
  std::vector<double> visit_times;
  double study_end = 0.0;
  int mediator_levels = 2;
  std::vector<double> l0_values{0.0};
  std::vector<double> l0_probs{1.0};
  std::vector<double> confounder_values{0.0, 1.0};
  std::array<double, 3> latent_probs{0.0, 0.0, 0.0};  // Pr(u_l=1), Pr(u_m=1), Pr(u_mt=1)
  sim::Law exposure;
  sim::Law confounder;
  sim::Law mediator;
  sim::Hazard cause1;
  // Cause 2 is either its own hazard, or total - cause 1 with the total given.
  sim::Hazard cause2;
  bool cause2_is_total = false;
  DgpCensoring censoring_mode = DgpCensoring::None;
  sim::Hazard censoring;

  std::size_t K() const { return visit_times.size(); }
  double interval_end(std::size_t k) const { return k <= K() ? visit_times[k - 1] : study_end; }
  double interval_start(std::size_t k) const { return k == 1 ? 0.0 : visit_times[k - 2]; }

  std::array<double, 2> event_hazards(const sim::Features& x, std::size_t k) const {
    const double h1 = cause1.eval(x, k);
    double h2 = cause2.eval(x, k);
    if (cause2_is_total) h2 -= h1;
    if (h1 < 0.0 || h2 < -1e-15 || h1 + h2 >= 1.0) {
      throw Error("simulate", ErrorCode::InvalidInput,
                  "event hazards out of range in interval " + std::to_string(k));
    }
    return {h1, std::max(h2, 0.0)};
  }
  double censoring_hazard(const sim::Features& x, std::size_t k) const {
    if (censoring_mode == DgpCensoring::None) return 0.0;
    const double c = censoring.eval(x, k);
    if (c < 0.0 || c >= 1.0) {
      throw Error("simulate", ErrorCode::InvalidInput, "censoring hazard out of range in interval " + std::to_string(k));
    }
    return c;
  }
};

namespace sim {

using nlohmann::json;

inline const json& need(const json& j, const char* key, const std::string& where) {
  if (!j.is_object() || !j.contains(key)) {
    throw Error("config", ErrorCode::ConfigError, "missing required key '" + where + key + "'");
  }
  return j.at(key);
}

inline Linear parse_linear(const json& j, const std::string& where) {
  Linear lin;
  if (!j.is_object()) throw Error("config", ErrorCode::ConfigError, where + " must be an object of coefficients");
  for (const auto& [key, value] : j.items()) {
    std::vector<Feature> fs;
    std::size_t pos = 0;
    while (true) {
      auto star = key.find('*', pos);
      std::string piece = key.substr(pos, star == std::string::npos ? std::string::npos : star - pos);
      auto f = feature_from(piece);
      if (!f) throw Error("config", ErrorCode::ConfigError, "unknown feature '" + piece + "' in " + where);
      if (*f != One) fs.push_back(*f);
      if (star == std::string::npos) break;
      pos = star + 1;
    }
    lin.terms.emplace_back(std::move(fs), value.get<double>());
  }
  return lin;
}

inline Law parse_law(const json& j, int categories, const std::string& where) {
  Law law;
  law.categories = categories;
  if (j.contains("logit")) {
    if (categories != 2) throw Error("config", ErrorCode::ConfigError, where + ": logit laws need two categories");
    law.kind = Law::Kind::Logit;
    law.predictors.push_back(parse_linear(j.at("logit"), where));
  } else if (j.contains("multinomial")) {
    law.kind = Law::Kind::Multinomial;
    const auto& arr = j.at("multinomial");
    if (!arr.is_array() || static_cast<int>(arr.size()) != categories - 1) {
      throw Error("config", ErrorCode::ConfigError, where + ": multinomial needs one predictor per non-reference category");
    }
    for (const auto& p : arr) law.predictors.push_back(parse_linear(p, where));
  } else if (j.contains("table")) {
    law.kind = Law::Kind::Table;
    for (const auto& r : j.at("table")) {
      Law::Rule rule;
      if (r.contains("when")) {
        for (const auto& [key, value] : r.at("when").items()) {
          auto f = feature_from(key);
          if (!f) throw Error("config", ErrorCode::ConfigError, "unknown feature '" + key + "' in " + where);
          rule.when.emplace_back(*f, value.get<double>());
        }
      }
      rule.probs = need(r, "probs", where + ".table[].").get<std::vector<double>>();
      double total = 0.0;
      for (double p : rule.probs) {
        if (p < 0.0) throw Error("config", ErrorCode::ConfigError, where + ": negative probability");
        total += p;
      }
      if (static_cast<int>(rule.probs.size()) != categories || std::abs(total - 1.0) > 1e-9) {
        throw Error("config", ErrorCode::ConfigError, where + ": table probabilities must sum to one");
      }
      law.rules.push_back(std::move(rule));
    }
  } else {
    throw Error("config", ErrorCode::ConfigError, where + " needs one of 'logit', 'multinomial', 'table'");
  }
  return law;
}

inline Hazard parse_hazard(const json& j, const char* base_key, const char* coef_key, std::size_t intervals,
                           const std::string& where) {
  Hazard h;
  h.baseline = need(j, base_key, where + ".").get<std::vector<double>>();
  if (h.baseline.size() != intervals) {
    throw Error("config", ErrorCode::ConfigError,
                where + "." + base_key + " needs " + std::to_string(intervals) + " entries (one per interval)");
  }
  if (j.contains(coef_key)) h.linear = parse_linear(j.at(coef_key), where + "." + coef_key);
  return h;
}

}  // namespace sim

inline DgpConfig parse_dgp(const nlohmann::json& j) {
  using sim::need;
  DgpConfig c;
  c.visit_times = need(j, "visit_times", "").get<std::vector<double>>();
  VisitSchedule check(c.visit_times);
  c.study_end = need(j, "study_end", "").get<double>();
  if (!(c.study_end > c.visit_times.back())) {
    throw Error("config", ErrorCode::ConfigError, "study_end must be after the last visit");
  }
  c.mediator_levels = j.value("mediator_levels", 2);
  if (j.contains("l0")) {
    c.l0_values = need(j.at("l0"), "values", "l0.").get<std::vector<double>>();
    c.l0_probs = need(j.at("l0"), "probs", "l0.").get<std::vector<double>>();
    if (c.l0_values.size() != c.l0_probs.size() || c.l0_values.empty()) {
      throw Error("config", ErrorCode::ConfigError, "l0.values and l0.probs must have equal, nonzero length");
    }
  }
  if (j.contains("latents")) {
    const auto& l = j.at("latents");
    c.latent_probs = {l.value("u_l", 0.0), l.value("u_m", 0.0), l.value("u_mt", 0.0)};
  }
  c.exposure = sim::parse_law(need(j, "exposure", ""), 2, "exposure");
  for (auto g : {sim::A, sim::L, sim::M, sim::LPrev, sim::MPrev, sim::UL, sim::UM, sim::UMT, sim::Kidx}) {
    if (c.exposure.uses(g)) throw Error("config", ErrorCode::ConfigError, "exposure law may depend on l0 only");
  }
  const auto& conf = need(j, "confounder", "");
  c.confounder_values = conf.value("values", std::vector<double>{0.0, 1.0});
  c.confounder = sim::parse_law(need(conf, "law", "confounder."), static_cast<int>(c.confounder_values.size()),
                                "confounder.law");
  if (c.confounder.uses(sim::L) || c.confounder.uses(sim::M)) {
    throw Error("config", ErrorCode::ConfigError, "confounder law sees l_prev and m_prev, not l or m");
  }
  c.mediator = sim::parse_law(need(need(j, "mediator", ""), "law", "mediator."), c.mediator_levels, "mediator.law");
  if (c.mediator.uses(sim::M)) throw Error("config", ErrorCode::ConfigError, "mediator law cannot use m (itself)");

  const std::size_t intervals = c.K() + 1;
  const auto& ev = need(j, "events", "");
  c.cause1 = sim::parse_hazard(need(ev, "cause1", "events."), "baseline", "coef", intervals, "events.cause1");
  const auto& c2 = need(ev, "cause2", "events.");
  if (c2.contains("total_baseline")) {
    c.cause2_is_total = true;
    c.cause2 = sim::parse_hazard(c2, "total_baseline", "total_coef", intervals, "events.cause2");
  } else {
    c.cause2 = sim::parse_hazard(c2, "baseline", "coef", intervals, "events.cause2");
  }
  if (j.contains("censoring")) {
    const auto& cj = j.at("censoring");
    const std::string mode = cj.value("mode", "none");
    if (mode == "none") {
      c.censoring_mode = DgpCensoring::None;
    } else if (mode == "exposure_only") {
      c.censoring_mode = DgpCensoring::ExposureOnly;
    } else if (mode == "history_dependent") {
      c.censoring_mode = DgpCensoring::HistoryDependent;
    } else {
      throw Error("config", ErrorCode::ConfigError, "unknown censoring mode '" + mode + "'");
    }
    if (c.censoring_mode != DgpCensoring::None) {
      c.censoring = sim::parse_hazard(cj, "baseline", "coef", intervals, "censoring");
      if (c.censoring_mode == DgpCensoring::ExposureOnly) {
        for (const auto& [fs, coef] : c.censoring.linear.terms) {
          for (auto g : fs) {
            if (g != sim::A) throw Error("config", ErrorCode::ConfigError, "exposure_only censoring may use a only");
          }
        }
      }
    }
  }
  return c;
}

namespace sim {

// Per-subject stream: seeded from (seed, subject) only.
class Stream {
 public:
  Stream(std::uint64_t seed, std::uint64_t subject) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(subject), static_cast<std::uint32_t>(subject >> 32), 0x5eedu};
    rng_.seed(seq);
  }
  double uniform() { return static_cast<double>(rng_() >> 11) * 0x1.0p-53; }
  std::size_t pick(const std::vector<double>& probs) {
    const double u = uniform();
    double acc = 0.0;
    for (std::size_t i = 0; i + 1 < probs.size(); ++i) {
      acc += probs[i];
      if (u < acc) return i;
    }
    return probs.size() - 1;
  }

 private:
  std::mt19937_64 rng_;
};

}  // namespace sim

/// Draws n subjects. Columns: confounder "l" (l_0 = the baseline draw),
/// mediator "m", no other baseline covariates.
inline Dataset generate(const DgpConfig& cfg, std::size_t n, std::uint64_t seed) {
  using namespace sim;
  Dataset data;
  data.schedule = VisitSchedule(cfg.visit_times);
  data.variables.exposure_levels = 2;
  data.variables.mediator_levels = cfg.mediator_levels;
  data.variables.baseline_names = {"l_0"};
  data.variables.confounder_names = {"l"};
  const std::size_t K = cfg.K();
  data.subjects.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Stream rng(seed, i);
    SubjectRecord s;
    s.id = std::to_string(i + 1);
    s.mediator.assign(K, std::nullopt);
    s.confounders.assign(K, std::vector<std::optional<double>>(1));
    Features x{};
    x[One] = 1.0;
    x[L0] = cfg.l0_values[rng.pick(cfg.l0_probs)];
    for (int u = 0; u < 3; ++u) x[UL + u] = rng.uniform() < cfg.latent_probs[static_cast<std::size_t>(u)] ? 1.0 : 0.0;
    s.baseline = {x[L0]};
    s.exposure = static_cast<int>(rng.pick(cfg.exposure.probs(x)));
    x[A] = s.exposure;

    for (std::size_t k = 1; k <= K + 1; ++k) {
      x[Kidx] = static_cast<double>(k);
      if (rng.uniform() < cfg.censoring_hazard(x, k)) {
        s.followup_time = 0.5 * (cfg.interval_start(k) + cfg.interval_end(k));
        s.status = EventStatus::Censored;
        break;
      }
      const auto h = cfg.event_hazards(x, k);
      const double u = rng.uniform();
      if (u < h[0] + h[1]) {
        s.followup_time = cfg.interval_end(k);
        s.status = u < h[0] ? EventStatus::MainEvent : EventStatus::CompetingEvent;
        break;
      }
      if (k == K + 1) {
        s.followup_time = cfg.study_end;
        s.status = EventStatus::Censored;
        break;
      }
      // Visit k: L_k from (l_prev, m_prev) = (L_{k-1}, M_{k-1}), then M_k.
      Features xl = x;
      xl[LPrev] = x[L];
      xl[MPrev] = x[M];
      xl[L] = 0.0;
      xl[M] = 0.0;
      const double l = cfg.confounder_values[rng.pick(cfg.confounder.probs(xl))];
      Features xm = xl;
      xm[L] = l;
      const int m = static_cast<int>(rng.pick(cfg.mediator.probs(xm)));
      x[LPrev] = x[L];
      x[MPrev] = x[M];
      x[L] = l;
      x[M] = m;
      s.confounders[k - 1][0] = l;
      s.mediator[k - 1] = m;
    }
    data.subjects.push_back(std::move(s));
  }
  return data;
}

/// Counterfactual cause-specific hazards per interval.
struct OracleHazards {
  int a = 0;
  int a_star = 0;
  std::vector<double> interval_end;
  std::vector<double> at_risk;                // Pr(T > t_{k-1})
  std::vector<std::array<double, 2>> hazard;  // per interval, causes 1 and 2
};

inline constexpr std::size_t kOracleStateLimit = 1000000;

/// Exact forward recursion over the Markov state (l0, latents, l_prev, m_prev,
/// l, m): confounder laws and event hazards under a, mediator laws under a*.
/// hazard_j(k) = expected cause-j events in interval k / Pr(at risk).
inline OracleHazards oracle_counterfactual_hazards(const DgpConfig& cfg, int a, int a_star,
                                                   std::size_t state_limit = kOracleStateLimit) {
  using namespace sim;
  struct Key {
    std::array<double, 9> v;  // l0, u_l, u_m, u_mt, l_prev, m_prev, l, m, unused
    bool operator<(const Key& o) const { return v < o.v; }
  };
  auto features_of = [](const Key& key) {
    Features x{};
    x[One] = 1.0;
    x[L0] = key.v[0];
    x[UL] = key.v[1];
    x[UM] = key.v[2];
    x[UMT] = key.v[3];
    x[LPrev] = key.v[4];
    x[MPrev] = key.v[5];
    x[L] = key.v[6];
    x[M] = key.v[7];
    return x;
  };

  std::map<Key, double> mass;
  for (std::size_t i = 0; i < cfg.l0_values.size(); ++i) {
    for (int ul = 0; ul < 2; ++ul) {
      for (int um = 0; um < 2; ++um) {
        for (int umt = 0; umt < 2; ++umt) {
          double p = cfg.l0_probs[i];
          const int us[3] = {ul, um, umt};
          for (int u = 0; u < 3; ++u) {
            const double q = cfg.latent_probs[static_cast<std::size_t>(u)];
            p *= us[u] ? q : 1.0 - q;
          }
          if (p == 0.0) continue;
          mass[Key{{cfg.l0_values[i], double(ul), double(um), double(umt), 0, 0, 0, 0, 0}}] += p;
        }
      }
    }
  }

  OracleHazards out;
  out.a = a;
  out.a_star = a_star;
  const std::size_t K = cfg.K();
  for (std::size_t k = 1; k <= K + 1; ++k) {
    double R = 0.0, E1 = 0.0, E2 = 0.0;
    std::map<Key, double> next;
    for (const auto& [key, p] : mass) {
      Features x = features_of(key);
      x[A] = a;
      x[Kidx] = static_cast<double>(k);
      const auto h = cfg.event_hazards(x, k);
      R += p;
      E1 += p * h[0];
      E2 += p * h[1];
      const double alive = p * (1.0 - h[0] - h[1]);
      if (k > K || alive == 0.0) continue;
      Features xl = x;
      xl[LPrev] = x[L];
      xl[MPrev] = x[M];
      xl[L] = 0.0;
      xl[M] = 0.0;
      const auto pl = cfg.confounder.probs(xl);
      for (std::size_t li = 0; li < pl.size(); ++li) {
        if (pl[li] == 0.0) continue;
        Features xm = xl;
        xm[L] = cfg.confounder_values[li];
        xm[A] = a_star;
        const auto pm = cfg.mediator.probs(xm);
        for (std::size_t mi = 0; mi < pm.size(); ++mi) {
          if (pm[mi] == 0.0) continue;
          Key nk = key;
          nk.v[4] = key.v[6];
          nk.v[5] = key.v[7];
          nk.v[6] = cfg.confounder_values[li];
          nk.v[7] = static_cast<double>(mi);
          next[nk] += alive * pl[li] * pm[mi];
          if (next.size() > state_limit) {
            throw Error("oracle", ErrorCode::StateSpaceTooLarge,
                        "more than " + std::to_string(state_limit) + " states at visit " + std::to_string(k));
          }
        }
      }
    }
    out.interval_end.push_back(cfg.interval_end(k));
    out.at_risk.push_back(R);
    out.hazard.push_back({R > 0.0 ? E1 / R : 0.0, R > 0.0 ? E2 / R : 0.0});
    mass = std::move(next);
  }
  return out;
}

struct TrueEffects {
  int cause = 1;
  int a = 0;
  int a_star = 1;
  double te = 1.0, de = 1.0, ie = 1.0;
};

inline constexpr double kProportionalityTolerance = 1e-9;

/// True hazard ratios with DE = lambda_{a*,a} / lambda_{a,a} and
/// IE = lambda_{a*,a*} / lambda_{a*,a}. Intervals where every hazard involved
/// is zero are skipped; the ratio must be the same (within 1e-9 on the log
/// scale) on all others.
inline std::vector<TrueEffects> oracle_true_hrs(const DgpConfig& cfg, const std::vector<std::pair<int, int>>& contrasts,
                                                const std::vector<int>& causes = {1, 2}) {
  std::vector<TrueEffects> out;
  std::map<std::pair<int, int>, OracleHazards> cache;
  auto haz = [&](int a, int as) -> const OracleHazards& {
    auto it = cache.find({a, as});
    if (it == cache.end()) it = cache.emplace(std::make_pair(a, as), oracle_counterfactual_hazards(cfg, a, as)).first;
    return it->second;
  };
  for (int cause : causes) {
    const auto j = static_cast<std::size_t>(cause - 1);
    for (auto [a, as] : contrasts) {
      const auto& aa = haz(a, a);
      const auto& sa = haz(as, a);
      const auto& ss = haz(as, as);
      std::optional<double> log_de, log_ie;
      for (std::size_t k = 0; k < aa.hazard.size(); ++k) {
        const double h_aa = aa.hazard[k][j], h_sa = sa.hazard[k][j], h_ss = ss.hazard[k][j];
        if (h_aa == 0.0 && h_sa == 0.0 && h_ss == 0.0) continue;
        if (h_aa == 0.0 || h_sa == 0.0 || h_ss == 0.0) {
          throw Error("oracle", ErrorCode::NonProportionalTruth,
                      "cause " + std::to_string(cause) + " hazard vanishes in only some worlds");
        }
        const double d = std::log(h_sa / h_aa), i = std::log(h_ss / h_sa);
        if (!log_de) {
          log_de = d;
          log_ie = i;
        } else if (std::abs(d - *log_de) > kProportionalityTolerance ||
                   std::abs(i - *log_ie) > kProportionalityTolerance) {
          throw Error("oracle", ErrorCode::NonProportionalTruth,
                      "cause " + std::to_string(cause) + " hazard ratio changes at interval " + std::to_string(k + 1));
        }
      }
      TrueEffects t;
      t.cause = cause;
      t.a = a;
      t.a_star = as;
      t.de = std::exp(log_de.value_or(0.0));
      t.ie = std::exp(log_ie.value_or(0.0));
      t.te = t.de * t.ie;
      out.push_back(t);
    }
  }
  return out;
}

}  // namespace survmed

#endif  // SURVMED_SIMULATE_HPP
