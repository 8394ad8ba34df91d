#ifndef SURVMED_CORE_DATA_HPP
#define SURVMED_CORE_DATA_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "survmed/error.hpp"

namespace survmed {

// Absolute tolerance used when comparing a time against a visit time.
inline constexpr double kTimeTolerance = 1e-9;

enum class EventStatus : int { Censored = 0, MainEvent = 1, CompetingEvent = 2 };

inline std::optional<EventStatus> status_from_code(int code) {
  if (code < 0 || code > 2) return std::nullopt;
  return static_cast<EventStatus>(code);
}

inline int code_of(EventStatus s) { return static_cast<int>(s); }

/// Planned visit times t_1 < ... < t_K; t_0 = 0 is implicit.
class VisitSchedule {
 public:
  VisitSchedule() = default;

  explicit VisitSchedule(std::vector<double> times) : times_(std::move(times)) {
    if (times_.empty()) {
      throw Error("core_data", ErrorCode::InvalidInput, "visit schedule needs at least one visit");
    }
    double prev = 0.0;
    for (double t : times_) {
      if (!std::isfinite(t) || t <= prev) {
        throw Error("core_data", ErrorCode::InvalidInput,
                    "visit times must be positive and strictly increasing");
      }
      prev = t;
    }
  }

  std::size_t size() const { return times_.size(); }
  std::span<const double> times() const { return times_; }

  // Visit index k in [0, K]; visit 0 is time zero.
  double time(std::size_t k) const { return k == 0 ? 0.0 : times_.at(k - 1); }

  static bool same_time(double a, double b) { return std::abs(a - b) <= kTimeTolerance; }

  // Number of visits t_k with t_k < t, treating |t - t_k| <= tol as equal.
  std::size_t visits_before(double t) const {
    std::size_t k = 0;
    while (k < times_.size() && times_[k] < t - kTimeTolerance) ++k;
    return k;
  }

 private:
  std::vector<double> times_;
};

/// Declares the variables present in a dataset.
struct VariableSpec {
  int exposure_levels = 2;                   // P
  int mediator_levels = 2;                   // Q + 1
  std::vector<std::string> baseline_names;   // L_0 (includes <conf>_0 columns)
  std::vector<std::string> confounder_names; // longitudinal L, measured at visits 1..K

  std::optional<std::size_t> baseline_index(const std::string& name) const {
    auto it = std::find(baseline_names.begin(), baseline_names.end(), name);
    if (it == baseline_names.end()) return std::nullopt;
    return static_cast<std::size_t>(it - baseline_names.begin());
  }
  std::optional<std::size_t> confounder_index(const std::string& name) const {
    auto it = std::find(confounder_names.begin(), confounder_names.end(), name);
    if (it == confounder_names.end()) return std::nullopt;
    return static_cast<std::size_t>(it - confounder_names.begin());
  }
};

/// One subject in short format. Per-visit vectors are indexed by visit k-1.
struct SubjectRecord {
  std::string id;
  int exposure = 0;
  std::vector<double> baseline;  // aligned with VariableSpec::baseline_names
  double followup_time = 0.0;
  EventStatus status = EventStatus::Censored;
  std::vector<std::optional<int>> mediator;
  // confounders[k-1][c]: value of confounder c at visit k
  std::vector<std::vector<std::optional<double>>> confounders;

  int mediator_at(std::size_t visit) const {
    return visit == 0 ? 0 : mediator[visit - 1].value_or(0);
  }
  double confounder_at(std::size_t visit, std::size_t c) const {
    return visit == 0 ? 0.0 : confounders[visit - 1][c].value_or(0.0);
  }
};

struct Dataset {
  std::vector<SubjectRecord> subjects;
  VisitSchedule schedule;
  VariableSpec variables;
};

struct ValidationFinding {
  std::string subject_id;
  std::string field;
  std::string rule;

  friend bool operator==(const ValidationFinding&, const ValidationFinding&) = default;
};

/// Checks every subject against the measurement-while-at-risk rule and the
/// declared cardinalities. Findings are data; nothing is thrown.
inline std::vector<ValidationFinding> validate(const Dataset& data) {
  std::vector<ValidationFinding> out;
  const auto& vars = data.variables;
  const std::size_t K = data.schedule.size();
  std::unordered_set<std::string> seen;

  for (const auto& s : data.subjects) {
    auto add = [&](std::string field, std::string rule) {
      out.push_back({s.id, std::move(field), std::move(rule)});
    };
    if (!seen.insert(s.id).second) add("id", "duplicate id");
    if (s.exposure < 0 || s.exposure >= vars.exposure_levels) add("exposure", "exposure out of range");
    if (!std::isfinite(s.followup_time) || s.followup_time < 0.0) add("time", "negative or non-finite follow-up time");
    if (code_of(s.status) < 0 || code_of(s.status) > 2) add("status", "unknown status code");
    if (s.baseline.size() != vars.baseline_names.size()) {
      add("baseline", "baseline covariate count mismatch");
    } else {
      for (std::size_t j = 0; j < s.baseline.size(); ++j) {
        if (!std::isfinite(s.baseline[j])) add(vars.baseline_names[j], "non-finite baseline covariate");
      }
    }
    if (s.mediator.size() != K || s.confounders.size() != K) {
      add("visits", "per-visit measurements do not match schedule length");
      continue;
    }

    // Gaps are reported once per field, at the first gap.
    bool mediator_gap = false;
    std::vector<bool> confounder_gap(vars.confounder_names.size(), false);
    for (std::size_t k = 1; k <= K; ++k) {
      const bool at_risk = s.followup_time > data.schedule.time(k) + kTimeTolerance;
      const std::string mname = "m" + std::to_string(k);
      const auto& m = s.mediator[k - 1];
      if (m && !at_risk) {
        add(mname, "measurement after event");
      } else if (!m && at_risk && !mediator_gap) {
        add(mname, "missing while at risk");
        mediator_gap = true;
      }
      if (m && (*m < 0 || *m >= vars.mediator_levels)) add(mname, "mediator level out of range");

      const auto& conf = s.confounders[k - 1];
      if (conf.size() != vars.confounder_names.size()) {
        add("confounders", "confounder count mismatch at visit " + std::to_string(k));
        continue;
      }
      for (std::size_t c = 0; c < conf.size(); ++c) {
        const std::string cname = vars.confounder_names[c] + "_" + std::to_string(k);
        if (conf[c] && !at_risk) {
          add(cname, "measurement after event");
        } else if (!conf[c] && at_risk && !confounder_gap[c]) {
          add(cname, "missing while at risk");
          confounder_gap[c] = true;
        }
        if (conf[c] && !std::isfinite(*conf[c])) add(cname, "non-finite confounder");
      }
    }
  }
  return out;
}

}  // namespace survmed

#endif  // SURVMED_CORE_DATA_HPP
