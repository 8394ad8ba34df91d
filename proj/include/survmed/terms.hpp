#ifndef SURVMED_TERMS_HPP
#define SURVMED_TERMS_HPP

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "survmed/core_data.hpp"
#include "survmed/dataset_io.hpp"
#include "survmed/error.hpp"

namespace survmed {

/// Where a model row reads its regressors from: one subject at one visit,
/// with the exposure possibly overridden (a counterfactual value).
struct RowContext {
  const SubjectRecord* subject = nullptr;
  std::size_t visit = 0;
  double visit_time = 0.0;
  int exposure = 0;
};

/// A regressor: a product of variables, each optionally turned into an
/// indicator `name=value`. Recognised names:
///   a                 exposure
///   t                 time of the row's visit
///   M_t, M_t-1, ...   mediator at the row's visit and before (0 padded)
///   <conf>_t, ...     longitudinal confounder history (0 padded)
///   <baseline name>   baseline covariate, e.g. <conf>_0
class Term {
 public:
  enum class Kind { Exposure, VisitTime, Baseline, Mediator, Confounder };

  struct Factor {
    Kind kind = Kind::Exposure;
    std::size_t index = 0;  // baseline or confounder index
    std::size_t lag = 0;
    std::optional<double> equals;
  };

  static Term parse(std::string_view text, const VariableSpec& vars) {
    Term term;
    term.label_ = std::string(text);
    std::size_t pos = 0;
    while (pos <= text.size()) {
      auto star = text.find('*', pos);
      auto piece = detail::trim(text.substr(pos, star == std::string_view::npos ? std::string_view::npos : star - pos));
      term.factors_.push_back(parse_factor(piece, vars, text));
      if (star == std::string_view::npos) break;
      pos = star + 1;
    }
    return term;
  }

  const std::string& label() const { return label_; }
  const std::vector<Factor>& factors() const { return factors_; }

  bool uses_exposure() const {
    for (const auto& f : factors_) {
      if (f.kind == Kind::Exposure) return true;
    }
    return false;
  }

  // Deepest mediator lag read by this term, if any.
  std::optional<std::size_t> mediator_lag() const {
    std::optional<std::size_t> out;
    for (const auto& f : factors_) {
      if (f.kind == Kind::Mediator && (!out || f.lag > *out)) out = f.lag;
    }
    return out;
  }

  double eval(const RowContext& ctx) const {
    double v = 1.0;
    for (const auto& f : factors_) {
      double x = 0.0;
      switch (f.kind) {
        case Kind::Exposure: x = ctx.exposure; break;
        case Kind::VisitTime: x = ctx.visit_time; break;
        case Kind::Baseline: x = ctx.subject->baseline[f.index]; break;
        case Kind::Mediator:
          x = f.lag < ctx.visit ? ctx.subject->mediator_at(ctx.visit - f.lag) : 0.0;
          break;
        case Kind::Confounder:
          x = f.lag < ctx.visit ? ctx.subject->confounder_at(ctx.visit - f.lag, f.index) : 0.0;
          break;
      }
      if (f.equals) x = (x == *f.equals) ? 1.0 : 0.0;
      v *= x;
    }
    return v;
  }

 private:
  static std::optional<std::size_t> parse_lag(std::string_view suffix) {
    if (suffix == "_t") return 0;
    if (suffix.size() > 3 && suffix.substr(0, 3) == "_t-") {
      std::size_t lag = 0;
      for (char c : suffix.substr(3)) {
        if (c < '0' || c > '9') return std::nullopt;
        lag = lag * 10 + static_cast<std::size_t>(c - '0');
      }
      return lag;
    }
    return std::nullopt;
  }

  static Factor parse_factor(std::string_view piece, const VariableSpec& vars, std::string_view whole) {
    Factor f;
    auto eq = piece.find('=');
    std::string_view name = piece;
    if (eq != std::string_view::npos) {
      name = detail::trim(piece.substr(0, eq));
      f.equals = detail::parse_double(detail::trim(piece.substr(eq + 1)), "term '" + std::string(whole) + "'");
    }
    if (name == "a") {
      f.kind = Kind::Exposure;
      return f;
    }
    if (name == "t") {
      f.kind = Kind::VisitTime;
      return f;
    }
    if (name.size() >= 3 && name.substr(0, 1) == "M") {
      if (auto lag = parse_lag(name.substr(1))) {
        f.kind = Kind::Mediator;
        f.lag = *lag;
        return f;
      }
    }
    for (std::size_t c = 0; c < vars.confounder_names.size(); ++c) {
      const auto& cname = vars.confounder_names[c];
      if (name.size() > cname.size() && name.substr(0, cname.size()) == cname) {
        if (auto lag = parse_lag(name.substr(cname.size()))) {
          f.kind = Kind::Confounder;
          f.index = c;
          f.lag = *lag;
          return f;
        }
      }
    }
    if (auto b = vars.baseline_index(std::string(name))) {
      f.kind = Kind::Baseline;
      f.index = *b;
      return f;
    }
    throw Error("config", ErrorCode::ConfigError,
                "unknown variable '" + std::string(name) + "' in term '" + std::string(whole) + "'");
  }

  std::string label_;
  std::vector<Factor> factors_;
};

/// An ordered list of terms; an intercept is added by the GLM design, not here.
struct Formula {
  std::vector<Term> terms;

  static Formula parse(const std::vector<std::string>& texts, const VariableSpec& vars) {
    Formula f;
    for (const auto& t : texts) f.terms.push_back(Term::parse(t, vars));
    return f;
  }

  std::size_t size() const { return terms.size(); }

  std::vector<std::string> labels() const {
    std::vector<std::string> out;
    for (const auto& t : terms) out.push_back(t.label());
    return out;
  }

  template <class Out>
  void eval_into(const RowContext& ctx, Out&& out) const {
    for (std::size_t j = 0; j < terms.size(); ++j) out[j] = terms[j].eval(ctx);
  }
};

}  // namespace survmed

#endif  // SURVMED_TERMS_HPP
