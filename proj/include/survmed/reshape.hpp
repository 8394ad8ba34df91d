#ifndef SURVMED_RESHAPE_HPP
#define SURVMED_RESHAPE_HPP

#include <cstddef>
#include <ostream>
#include <string>
#include <vector>

#include "survmed/core_data.hpp"
#include "survmed/dataset_io.hpp"
#include "survmed/error.hpp"

namespace survmed {

/// Last visit whose measurements exist strictly before t: t_{k-1} when t
/// equals t_k, t_k when t_k < t < t_{k+1}, and 0 before the first visit.
inline double floor_time(double t, const VisitSchedule& schedule) {
  return schedule.time(schedule.visits_before(t));
}

// Visit index of floor_time(t).
inline std::size_t floor_visit(double t, const VisitSchedule& schedule) {
  return schedule.visits_before(t);
}

/// One at-risk interval (start, stop] of one subject. History columns are not
/// stored: they are the subject's measurements up to visit `visit`, which is
/// the visit at `start` (0 for the first interval).
struct CountingProcessRow {
  std::size_t subject = 0;  // index into Dataset::subjects
  std::size_t visit = 0;
  double start = 0.0;
  double stop = 0.0;
  EventStatus status = EventStatus::Censored;
  int exposure = 0;
};

/// A CountingProcessRow replicated under hypothetical exposure A*.
struct ExpandedRow {
  std::size_t row = 0;  // index into the counting-process table
  int hypothetical_exposure = 0;
  double case_weight = 1.0;
};

/// Splits each subject's follow-up at the visit times strictly before the
/// follow-up time; the last row carries the subject's status.
inline std::vector<CountingProcessRow> to_counting_process(const Dataset& data) {
  std::vector<CountingProcessRow> rows;
  rows.reserve(data.subjects.size() * (data.schedule.size() + 1));
  for (std::size_t i = 0; i < data.subjects.size(); ++i) {
    const auto& s = data.subjects[i];
    if (!(s.followup_time > 0.0)) {
      throw Error("reshape", ErrorCode::InvalidInput, "subject " + s.id + " has zero follow-up time");
    }
    const std::size_t completed = floor_visit(s.followup_time, data.schedule);
    for (std::size_t k = 0; k <= completed; ++k) {
      CountingProcessRow r;
      r.subject = i;
      r.visit = k;
      r.start = data.schedule.time(k);
      r.stop = k == completed ? s.followup_time : data.schedule.time(k + 1);
      r.status = k == completed ? s.status : EventStatus::Censored;
      r.exposure = s.exposure;
      rows.push_back(r);
    }
  }
  return rows;
}

/// Copies the long table P times; the first block keeps A* = A and the
/// remaining blocks walk the other exposure values in increasing order.
inline std::vector<ExpandedRow> expand_counterfactual(const std::vector<CountingProcessRow>& rows, int P) {
  if (P < 2) throw Error("reshape", ErrorCode::InvalidInput, "need at least two exposure levels");
  std::vector<ExpandedRow> out;
  out.reserve(rows.size() * static_cast<std::size_t>(P));
  for (std::size_t i = 0; i < rows.size(); ++i) out.push_back({i, rows[i].exposure, 1.0});
  for (int block = 1; block < P; ++block) {
    for (std::size_t i = 0; i < rows.size(); ++i) {
      // block b holds the b-th value of {0..P-1} \ {A}
      const int a = rows[i].exposure;
      const int a_star = block - 1 < a ? block - 1 : block;
      out.push_back({i, a_star, 1.0});
    }
  }
  return out;
}

// Mediator history [M_t, M_t-1, ..., M_t-(K-1)] at a row, zero-padded.
inline std::vector<int> mediator_history(const SubjectRecord& s, std::size_t visit, std::size_t depth) {
  std::vector<int> h(depth, 0);
  for (std::size_t lag = 0; lag < depth && lag < visit; ++lag) h[lag] = s.mediator_at(visit - lag);
  return h;
}

inline std::vector<double> confounder_history(const SubjectRecord& s, std::size_t c, std::size_t visit,
                                              std::size_t depth) {
  std::vector<double> h(depth, 0.0);
  for (std::size_t lag = 0; lag < depth && lag < visit; ++lag) h[lag] = s.confounder_at(visit - lag, c);
  return h;
}

inline std::string lag_suffix(std::size_t lag) {
  return lag == 0 ? "_t" : "_t-" + std::to_string(lag);
}

/// Writes the long (or expanded, when `expanded` is non-null) table with the
/// column layout Individual, Start, Stop, Status, A, [Astar,] M_t, M_t-1, ...,
/// <conf>_t, <conf>_t-1, ..., baseline covariates.
inline void write_long_csv(std::ostream& out, const Dataset& data, const std::vector<CountingProcessRow>& rows,
                           const std::vector<ExpandedRow>* expanded = nullptr, bool with_weights = false) {
  const std::size_t K = data.schedule.size();
  const auto& vars = data.variables;
  out << "Individual,Start,Stop,Status,A";
  if (expanded) out << ",Astar";
  for (std::size_t lag = 0; lag < K; ++lag) out << ",M" << lag_suffix(lag);
  for (const auto& c : vars.confounder_names) {
    for (std::size_t lag = 0; lag < K; ++lag) out << ',' << c << lag_suffix(lag);
  }
  for (const auto& b : vars.baseline_names) out << ',' << b;
  if (expanded && with_weights) out << ",Weight";
  out << '\n';

  auto emit = [&](const CountingProcessRow& r, const ExpandedRow* e) {
    const auto& s = data.subjects[r.subject];
    out << s.id << ',' << format_number(r.start) << ',' << format_number(r.stop) << ',' << code_of(r.status)
        << ',' << r.exposure;
    if (e) out << ',' << e->hypothetical_exposure;
    for (int m : mediator_history(s, r.visit, K)) out << ',' << m;
    for (std::size_t c = 0; c < vars.confounder_names.size(); ++c) {
      for (double v : confounder_history(s, c, r.visit, K)) out << ',' << format_number(v);
    }
    for (double b : s.baseline) out << ',' << format_number(b);
    if (e && with_weights) out << ',' << format_number(e->case_weight);
    out << '\n';
  };
  if (expanded) {
    for (const auto& e : *expanded) emit(rows[e.row], &e);
  } else {
    for (const auto& r : rows) emit(r, nullptr);
  }
}

}  // namespace survmed

#endif  // SURVMED_RESHAPE_HPP
