#ifndef SURVMED_DATASET_IO_HPP
#define SURVMED_DATASET_IO_HPP

#include <charconv>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "survmed/core_data.hpp"
#include "survmed/error.hpp"

namespace survmed {

/// Maps the short-format CSV columns onto dataset roles.
struct ColumnRoles {
  std::string id = "id";
  std::string time = "time";
  std::string status = "status";
  std::string exposure = "a";
  std::string mediator = "m";              // columns m1..mK
  std::vector<std::string> confounders;    // columns <conf>_0..<conf>_K
  std::vector<std::string> baseline;       // plain baseline columns
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline std::vector<std::string_view> split_csv_line(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t pos = 0;
  while (true) {
    auto comma = line.find(',', pos);
    if (comma == std::string_view::npos) {
      cells.push_back(trim(line.substr(pos)));
      break;
    }
    cells.push_back(trim(line.substr(pos, comma - pos)));
    pos = comma + 1;
  }
  return cells;
}

inline double parse_double(std::string_view cell, const std::string& where) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
  if (ec != std::errc() || ptr != cell.data() + cell.size()) {
    throw Error("io", ErrorCode::InvalidInput, "cannot parse number '" + std::string(cell) + "' at " + where);
  }
  return v;
}

inline int parse_int(std::string_view cell, const std::string& where) {
  const double v = parse_double(cell, where);
  const int i = static_cast<int>(v);
  if (static_cast<double>(i) != v) {
    throw Error("io", ErrorCode::InvalidInput, "expected an integer at " + where);
  }
  return i;
}

}  // namespace detail

/// Shortest decimal text that parses back to the same double.
inline std::string format_number(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

inline std::vector<std::string> baseline_column_names(const ColumnRoles& roles) {
  std::vector<std::string> names;
  for (const auto& c : roles.confounders) names.push_back(c + "_0");
  for (const auto& b : roles.baseline) names.push_back(b);
  return names;
}

inline VariableSpec make_variable_spec(const ColumnRoles& roles, int exposure_levels, int mediator_levels) {
  VariableSpec v;
  v.exposure_levels = exposure_levels;
  v.mediator_levels = mediator_levels;
  v.baseline_names = baseline_column_names(roles);
  v.confounder_names = roles.confounders;
  return v;
}

/// Parses the short format: one row per subject, empty cell = not measured.
inline Dataset read_dataset_csv(std::istream& in, const ColumnRoles& roles, const VisitSchedule& schedule,
                                const VariableSpec& vars) {
  std::string line;
  if (!std::getline(in, line)) throw Error("io", ErrorCode::InvalidInput, "empty CSV input");
  std::map<std::string, std::size_t, std::less<>> col;
  {
    auto header = detail::split_csv_line(line);
    for (std::size_t i = 0; i < header.size(); ++i) col.emplace(std::string(header[i]), i);
  }
  auto need = [&](const std::string& name) -> std::size_t {
    auto it = col.find(name);
    if (it == col.end()) throw Error("io", ErrorCode::InvalidInput, "missing column '" + name + "'");
    return it->second;
  };

  const std::size_t K = schedule.size();
  const std::size_t c_id = need(roles.id), c_time = need(roles.time), c_status = need(roles.status),
                    c_a = need(roles.exposure);
  std::vector<std::size_t> c_med;
  for (std::size_t k = 1; k <= K; ++k) c_med.push_back(need(roles.mediator + std::to_string(k)));
  std::vector<std::vector<std::size_t>> c_conf;  // [c][k-1]
  for (const auto& conf : roles.confounders) {
    std::vector<std::size_t> idx;
    for (std::size_t k = 1; k <= K; ++k) idx.push_back(need(conf + "_" + std::to_string(k)));
    c_conf.push_back(std::move(idx));
  }
  std::vector<std::size_t> c_base;
  for (const auto& b : vars.baseline_names) c_base.push_back(need(b));

  Dataset data;
  data.schedule = schedule;
  data.variables = vars;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    auto cells = detail::split_csv_line(line);
    const std::string where = "line " + std::to_string(line_no);
    auto cell = [&](std::size_t i) -> std::string_view {
      if (i >= cells.size()) throw Error("io", ErrorCode::InvalidInput, "too few cells at " + where);
      return cells[i];
    };
    SubjectRecord s;
    s.id = std::string(cell(c_id));
    s.followup_time = detail::parse_double(cell(c_time), where);
    auto status = status_from_code(detail::parse_int(cell(c_status), where));
    if (!status) throw Error("io", ErrorCode::InvalidInput, "status must be 0, 1 or 2 at " + where);
    s.status = *status;
    s.exposure = detail::parse_int(cell(c_a), where);
    for (std::size_t b : c_base) s.baseline.push_back(detail::parse_double(cell(b), where));
    s.mediator.resize(K);
    s.confounders.assign(K, std::vector<std::optional<double>>(roles.confounders.size()));
    for (std::size_t k = 0; k < K; ++k) {
      auto m = cell(c_med[k]);
      if (!m.empty()) s.mediator[k] = detail::parse_int(m, where);
      for (std::size_t c = 0; c < c_conf.size(); ++c) {
        auto v = cell(c_conf[c][k]);
        if (!v.empty()) s.confounders[k][c] = detail::parse_double(v, where);
      }
    }
    data.subjects.push_back(std::move(s));
  }
  return data;
}

inline Dataset read_dataset_csv(const std::string& path, const ColumnRoles& roles, const VisitSchedule& schedule,
                                const VariableSpec& vars) {
  std::ifstream in(path);
  if (!in) throw Error("io", ErrorCode::InvalidInput, "cannot open '" + path + "'");
  return read_dataset_csv(in, roles, schedule, vars);
}

/// Writes the short format with the column order
/// id, time, status, a, m1..mK, <conf>_0..<conf>_K, baseline.
inline void write_dataset_csv(std::ostream& out, const Dataset& data, const ColumnRoles& roles) {
  const std::size_t K = data.schedule.size();
  const auto& vars = data.variables;
  std::vector<std::string> header{roles.id, roles.time, roles.status, roles.exposure};
  for (std::size_t k = 1; k <= K; ++k) header.push_back(roles.mediator + std::to_string(k));
  for (const auto& c : roles.confounders) {
    for (std::size_t k = 0; k <= K; ++k) header.push_back(c + "_" + std::to_string(k));
  }
  for (const auto& b : roles.baseline) header.push_back(b);
  for (std::size_t i = 0; i < header.size(); ++i) out << (i ? "," : "") << header[i];
  out << '\n';

  for (const auto& s : data.subjects) {
    out << s.id << ',' << format_number(s.followup_time) << ',' << code_of(s.status) << ',' << s.exposure;
    for (std::size_t k = 0; k < K; ++k) {
      out << ',';
      if (s.mediator[k]) out << *s.mediator[k];
    }
    for (std::size_t c = 0; c < roles.confounders.size(); ++c) {
      auto b = vars.baseline_index(roles.confounders[c] + "_0");
      out << ',' << format_number(s.baseline.at(b.value()));
      for (std::size_t k = 0; k < K; ++k) {
        out << ',';
        if (s.confounders[k][c]) out << format_number(*s.confounders[k][c]);
      }
    }
    for (const auto& name : roles.baseline) {
      out << ',' << format_number(s.baseline.at(vars.baseline_index(name).value()));
    }
    out << '\n';
  }
}

}  // namespace survmed

#endif  // SURVMED_DATASET_IO_HPP
