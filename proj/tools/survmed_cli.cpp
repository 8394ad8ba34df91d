// survmed command-line front end: reshape | fit | cuminc | simulate | oracle.

#include <openssl/evp.h>

#include <CLI11.hpp>
#include <chrono>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <iterator>
#include <sstream>
#include <string>
#include <thread>

#include "survmed/survmed.hpp"

namespace {

using namespace survmed;

std::string sha256_hex(const std::string& bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr);
  std::ostringstream out;
  for (unsigned int i = 0; i < len; ++i) out << std::hex << std::setw(2) << std::setfill('0') << int(digest[i]);
  return out.str();
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("io", ErrorCode::InvalidInput, "cannot open '" + path + "'");
  return std::string(std::istreambuf_iterator<char>(in), {});
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("io", ErrorCode::InvalidInput, "cannot write '" + path + "'");
  return out;
}

std::pair<int, int> parse_contrast(const std::string& s) {
  auto comma = s.find(',');
  if (comma == std::string::npos) throw Error("config", ErrorCode::ConfigError, "--contrast expects a,astar");
  try {
    return {std::stoi(s.substr(0, comma)), std::stoi(s.substr(comma + 1))};
  } catch (const std::exception&) {
    throw Error("config", ErrorCode::ConfigError, "--contrast expects two integers a,astar");
  }
}

// Loads and validates; findings are printed and turned into exit code 1.
Dataset load_dataset(const std::string& path, const StudyConfig& cfg) {
  Dataset data = read_dataset_csv(path, cfg.columns, cfg.schedule(), cfg.variables());
  auto findings = validate(data);
  if (!findings.empty()) {
    for (const auto& f : findings) {
      std::cerr << "stage=validate code=InvalidInput detail=subject " << f.subject_id << " field " << f.field << ": "
                << f.rule << '\n';
    }
    throw Error("validate", ErrorCode::InvalidInput, std::to_string(findings.size()) + " validation finding(s)");
  }
  return data;
}

struct Options {
  std::string data, config, dgp, out, weights_out, expanded_out, fit, contrast = "0,1", censoring;
  std::optional<int> bootstrap;
  std::optional<std::uint64_t> seed;
  std::optional<double> truncate_pct;
  unsigned threads = 1;
  std::size_t n = 1000;
  bool timing = false;
};

int cmd_reshape(const Options& o) {
  StudyConfig cfg = parse_study_config(read_json_file(o.config));
  Dataset data = load_dataset(o.data, cfg);
  auto rows = to_counting_process(data);
  {
    auto out = open_out(o.out);
    write_long_csv(out, data, rows);
  }
  if (!o.expanded_out.empty()) {
    auto expanded = expand_counterfactual(rows, cfg.exposure_levels);
    auto out = open_out(o.expanded_out);
    write_long_csv(out, data, rows, &expanded);
  }
  return 0;
}

int cmd_fit(const Options& o) {
  StudyConfig cfg = parse_study_config(read_json_file(o.config));
  if (o.bootstrap) cfg.analysis.bootstrap_replicates = *o.bootstrap;
  if (o.seed) cfg.analysis.seed = *o.seed;
  if (o.truncate_pct) cfg.analysis.truncate_pct = *o.truncate_pct;
  if (!o.censoring.empty()) {
    auto m = censoring_mode_from(o.censoring);
    if (!m) throw Error("config", ErrorCode::ConfigError, "--censoring must be none, exposure or history");
    cfg.analysis.censoring = *m;
  }
  cfg.analysis.threads = std::max(1u, o.threads);
  Dataset data = load_dataset(o.data, cfg);

  const auto start = std::chrono::steady_clock::now();
  AnalysisArtifacts artifacts;
  AnalysisResult result = run_analysis(data, cfg.analysis, o.weights_out.empty() ? nullptr : &artifacts);
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  const std::string config_sha = sha256_hex(to_json(cfg).dump());
  const std::string data_sha = sha256_hex(slurp(o.data));
  auto report = make_report(cfg, result, config_sha, data_sha, sha256_hex(config_sha + ":" + data_sha));
  if (o.timing) report["timing"] = {{"seconds", seconds}};
  {
    auto out = open_out(o.out);
    out << report.dump(2) << '\n';
  }
  if (!o.weights_out.empty()) {
    auto out = open_out(o.weights_out);
    write_weights_csv(out, data, artifacts.rows, artifacts.expanded, artifacts.weights);
  }
  return 0;
}

int cmd_cuminc(const Options& o) {
  const auto report = read_json_file(o.fit);
  const NaturalEffectFit fit = fit_from_report(report);
  const auto [a, as] = parse_contrast(o.contrast);
  CifDiagnostics diag;
  auto curves = cumulative_incidence(fit, a, as, &diag);
  if (diag.clipped_hazards > 0) {
    std::cerr << "stage=cuminc code=ClippedHazard detail=" << diag.clipped_hazards
              << " grid point(s) with total hazard above 1\n";
  }
  auto out = open_out(o.out);
  write_cif_csv(out, curves);
  return 0;
}

int cmd_simulate(const Options& o) {
  const DgpConfig cfg = parse_dgp(read_json_file(o.dgp));
  const Dataset data = generate(cfg, o.n, o.seed.value_or(1));
  ColumnRoles roles;
  roles.confounders = {"l"};
  auto out = open_out(o.out);
  write_dataset_csv(out, data, roles);
  return 0;
}

int cmd_oracle(const Options& o) {
  const DgpConfig cfg = parse_dgp(read_json_file(o.dgp));
  const auto [a, as] = parse_contrast(o.contrast);
  nlohmann::ordered_json j;
  j["a"] = a;
  j["a_star"] = as;
  nlohmann::ordered_json worlds = nlohmann::ordered_json::array();
  for (auto [x, y] : {std::pair{a, a}, std::pair{as, a}, std::pair{a, as}, std::pair{as, as}}) {
    const auto h = oracle_counterfactual_hazards(cfg, x, y);
    nlohmann::ordered_json w;
    w["a"] = x;
    w["a_star"] = y;
    w["interval_end"] = h.interval_end;
    w["at_risk"] = h.at_risk;
    std::vector<double> h1, h2;
    for (const auto& v : h.hazard) {
      h1.push_back(v[0]);
      h2.push_back(v[1]);
    }
    w["hazard_cause1"] = h1;
    w["hazard_cause2"] = h2;
    worlds.push_back(w);
  }
  j["worlds"] = worlds;
  nlohmann::ordered_json effects = nlohmann::ordered_json::array();
  for (int cause : {1, 2}) {
    nlohmann::ordered_json e;
    e["cause"] = cause;
    try {
      const auto t = oracle_true_hrs(cfg, {{a, as}}, {cause}).at(0);
      e["hr_te"] = t.te;
      e["hr_de"] = t.de;
      e["hr_ie"] = t.ie;
    } catch (const Error& err) {
      if (err.code() != ErrorCode::NonProportionalTruth) throw;
      e["hr_te"] = nullptr;
      e["hr_de"] = nullptr;
      e["hr_ie"] = nullptr;
      e["note"] = err.detail();
    }
    effects.push_back(e);
  }
  j["true_effects"] = effects;
  if (o.out.empty()) {
    std::cout << j.dump(2) << '\n';
  } else {
    auto out = open_out(o.out);
    out << j.dump(2) << '\n';
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Natural direct and indirect effects on competing-risk hazards with a repeatedly measured mediator"};
  app.require_subcommand(1);
  Options o;

  auto* reshape = app.add_subcommand("reshape", "Write the counting-process (and expanded) tables");
  reshape->add_option("--data", o.data, "Short-format CSV")->required();
  reshape->add_option("--config", o.config, "Analysis config JSON")->required();
  reshape->add_option("--out", o.out, "Long-format CSV output")->required();
  reshape->add_option("--expanded-out", o.expanded_out, "Expanded (A*) CSV output");

  auto* fit = app.add_subcommand("fit", "Run the weighted natural effect analysis and bootstrap");
  fit->add_option("--data", o.data, "Short-format CSV")->required();
  fit->add_option("--config", o.config, "Analysis config JSON")->required();
  fit->add_option("--out", o.out, "Report JSON output")->required();
  fit->add_option("--bootstrap", o.bootstrap, "Bootstrap replicates (overrides config)");
  fit->add_option("--seed", o.seed, "Bootstrap seed (overrides config)");
  fit->add_option("--threads", o.threads, "Concurrent bootstrap replicates");
  fit->add_option("--weights-out", o.weights_out, "Per-row weight components CSV");
  fit->add_option("--truncate-pct", o.truncate_pct, "Cap weights at the p-th and (100-p)-th percentiles");
  fit->add_option("--censoring", o.censoring, "Censoring weights: none | exposure | history");
  fit->add_flag("--timing", o.timing, "Add wall-clock timing to the report");

  auto* cuminc = app.add_subcommand("cuminc", "Counterfactual cumulative incidence curves from a report");
  cuminc->add_option("--fit", o.fit, "Report JSON from 'fit'")->required();
  cuminc->add_option("--contrast", o.contrast, "a,astar (default 0,1)");
  cuminc->add_option("--out", o.out, "CSV output")->required();

  auto* simulate = app.add_subcommand("simulate", "Draw a synthetic cohort");
  simulate->add_option("--dgp", o.dgp, "Data-generating config JSON")->required();
  simulate->add_option("--n", o.n, "Number of subjects");
  simulate->add_option("--seed", o.seed, "Seed");
  simulate->add_option("--out", o.out, "Short-format CSV output")->required();

  auto* oracle = app.add_subcommand("oracle", "Exact counterfactual hazards and hazard ratios");
  oracle->add_option("--dgp", o.dgp, "Data-generating config JSON")->required();
  oracle->add_option("--contrast", o.contrast, "a,astar (default 0,1)");
  oracle->add_option("--out", o.out, "JSON output (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*reshape) return cmd_reshape(o);
    if (*fit) return cmd_fit(o);
    if (*cuminc) return cmd_cuminc(o);
    if (*simulate) return cmd_simulate(o);
    if (*oracle) return cmd_oracle(o);
  } catch (const Error& e) {
    std::cerr << e.what() << '\n';
    return is_input_error(e.code()) ? 1 : 2;
  } catch (const std::exception& e) {
    std::cerr << "stage=cli code=InvalidInput detail=" << e.what() << '\n';
    return 1;
  }
  return 0;
}
