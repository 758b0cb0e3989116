#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "rsd/adaptive.hpp"
#include "rsd/design.hpp"
#include "rsd/error_model.hpp"
#include "rsd/errors.hpp"
#include "rsd/montecarlo.hpp"

namespace rsd {

using nlohmann::json;

namespace cfg {

inline const json& field(const json& j, const std::string& path, const char* key) {
  if (!j.is_object()) throw schema_error(path, "expected an object");
  auto it = j.find(key);
  if (it == j.end()) throw schema_error(path + "." + key, "missing required field");
  return *it;
}

inline double as_double(const json& j, const std::string& path) {
  if (!j.is_number()) throw schema_error(path, "expected a number");
  return j.get<double>();
}

inline int as_int(const json& j, const std::string& path) {
  if (!j.is_number_integer()) throw schema_error(path, "expected an integer");
  return j.get<int>();
}

inline std::uint64_t as_u64(const json& j, const std::string& path) {
  if (j.is_number_unsigned()) return j.get<std::uint64_t>();
  if (j.is_number_integer()) {
    const auto v = j.get<std::int64_t>();
    if (v < 0) throw schema_error(path, "expected a nonnegative integer");
    return static_cast<std::uint64_t>(v);
  }
  throw schema_error(path, "expected a nonnegative integer");
}

inline std::string as_string(const json& j, const std::string& path) {
  if (!j.is_string()) throw schema_error(path, "expected a string");
  return j.get<std::string>();
}

inline Eigen::VectorXd as_vector(const json& j, const std::string& path) {
  if (!j.is_array()) throw schema_error(path, "expected an array of numbers");
  Eigen::VectorXd v(j.size());
  for (std::size_t i = 0; i < j.size(); ++i)
    v[static_cast<int>(i)] = as_double(j[i], path + "[" + std::to_string(i) + "]");
  return v;
}

inline Eigen::MatrixXd as_matrix(const json& j, const std::string& path) {
  if (!j.is_array() || j.empty()) throw schema_error(path, "expected a non-empty array of rows");
  const std::size_t cols = j[0].is_array() ? j[0].size() : 0;
  if (cols == 0) throw schema_error(path, "expected rows to be non-empty arrays");
  Eigen::MatrixXd m(j.size(), cols);
  for (std::size_t r = 0; r < j.size(); ++r) {
    const std::string rp = path + "[" + std::to_string(r) + "]";
    if (!j[r].is_array() || j[r].size() != cols) throw schema_error(rp, "ragged matrix rows");
    for (std::size_t c = 0; c < cols; ++c)
      m(static_cast<int>(r), static_cast<int>(c)) = as_double(j[r][c], rp);
  }
  return m;
}

inline json vector_to_json(const Eigen::VectorXd& v) {
  json a = json::array();
  for (int i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

inline json matrix_to_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (int r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (int c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(row);
  }
  return rows;
}

}  // namespace cfg

// ---------------------------------------------------------------- model

inline ErrorModel model_from_json(const json& j, const std::string& path = "model") {
  const std::string family = cfg::as_string(cfg::field(j, path, "family"), path + ".family");
  if (family == "cauchy") {
    const double tau = cfg::as_double(cfg::field(j, path, "tau"), path + ".tau");
    if (!(tau > 0.0)) throw schema_error(path + ".tau", "must be > 0");
    return ErrorModel::cauchy(tau);
  }
  if (family == "generalized_normal") {
    const double zeta = cfg::as_double(cfg::field(j, path, "zeta"), path + ".zeta");
    const double tau = cfg::as_double(cfg::field(j, path, "tau"), path + ".tau");
    if (!(zeta >= 2.0)) throw schema_error(path + ".zeta", "must be >= 2");
    if (!(tau > 0.0)) throw schema_error(path + ".tau", "must be > 0");
    return ErrorModel::generalized_normal(zeta, tau);
  }
  if (family == "hetero_normal_gamma") {
    const double alpha = cfg::as_double(cfg::field(j, path, "alpha"), path + ".alpha");
    const double beta = cfg::as_double(cfg::field(j, path, "beta"), path + ".beta");
    if (!(alpha > 0.0)) throw schema_error(path + ".alpha", "must be > 0");
    if (!(beta > 0.0)) throw schema_error(path + ".beta", "must be > 0");
    return ErrorModel::hetero_normal_gamma(alpha, beta);
  }
  throw schema_error(path + ".family",
                     "unknown family (expected cauchy, generalized_normal or hetero_normal_gamma)");
}

inline json model_to_json(const ErrorModel& m) {
  switch (m.family()) {
    case Family::Cauchy:
      return {{"family", "cauchy"}, {"tau", m.tau()}};
    case Family::GeneralizedNormal:
      return {{"family", "generalized_normal"}, {"zeta", m.zeta()}, {"tau", m.tau()}};
    case Family::HeteroNormalGamma:
      return {{"family", "hetero_normal_gamma"}, {"alpha", m.alpha()}, {"beta", m.beta()}};
  }
  throw invalid_input("model_to_json: unknown family");
}

// ---------------------------------------------------------------- design

struct ParsedDesign {
  ParsedDesign(Design det, Basis b) : deterministic(std::move(det)), basis(b) {}
  Design deterministic;
  std::optional<RandomDesign> randomized;
  Basis basis;
  bool use_randomized = false;
};

/// Design block: either {"builtin": name[, "variant": "deterministic"|"randomized"]}
/// or a custom block {"support": [[..]..], "weights": [...], "basis": name}
/// or a custom random block {"support": [[..]..], "basis": name,
///   "atoms": [{"weights": [...], "probability": p}, ...]}. The budget n is
/// injected by the caller.
inline ParsedDesign design_from_json(const json& j, int n, const std::string& path = "design") {
  if (j.contains("builtin")) {
    const std::string name = cfg::as_string(cfg::field(j, path, "builtin"), path + ".builtin");
    BuiltinDesign built = [&] {
      try {
        return builtin_design(builtin_design_from_name(name), n);
      } catch (const invalid_input& e) {
        throw schema_error(path + ".builtin", e.what());
      }
    }();
    ParsedDesign parsed(built.deterministic, built.basis);
    parsed.randomized = built.randomized;
    if (j.contains("variant")) {
      const std::string variant = cfg::as_string(j["variant"], path + ".variant");
      if (variant == "randomized") {
        if (!parsed.randomized)
          throw schema_error(path + ".variant", "no randomized variant exists for this design");
        parsed.use_randomized = true;
      } else if (variant != "deterministic") {
        throw schema_error(path + ".variant", "expected deterministic or randomized");
      }
    }
    return parsed;
  }
  const Basis basis =
      [&] {
        try {
          return Basis::from_name(cfg::as_string(cfg::field(j, path, "basis"), path + ".basis"));
        } catch (const invalid_input& e) {
          throw schema_error(path + ".basis", e.what());
        }
      }();
  const Eigen::MatrixXd support = cfg::as_matrix(cfg::field(j, path, "support"), path + ".support");
  if (static_cast<int>(support.cols()) != basis.input_dim())
    throw schema_error(path + ".support", "support dimension does not match the basis");
  if (j.contains("atoms")) {
    const json& atoms = j["atoms"];
    if (!atoms.is_array() || atoms.empty())
      throw schema_error(path + ".atoms", "expected a non-empty array");
    RandomDesign rd;
    for (std::size_t k = 0; k < atoms.size(); ++k) {
      const std::string ap = path + ".atoms[" + std::to_string(k) + "]";
      Design atom;
      atom.support = support;
      atom.n = n;
      atom.weights = cfg::as_vector(cfg::field(atoms[k], ap, "weights"), ap + ".weights");
      const double prob = cfg::as_double(cfg::field(atoms[k], ap, "probability"), ap + ".probability");
      rd.atoms.push_back({std::move(atom), prob});
    }
    try {
      rd.validate();
    } catch (const invalid_input& e) {
      throw schema_error(path + ".atoms", e.what());
    }
    ParsedDesign parsed(rd.atoms.front().design, basis);
    parsed.randomized = std::move(rd);
    parsed.use_randomized = true;
    return parsed;
  }
  Design d;
  d.support = support;
  d.weights = cfg::as_vector(cfg::field(j, path, "weights"), path + ".weights");
  d.n = n;
  try {
    d.validate();
  } catch (const invalid_input& e) {
    throw schema_error(path, e.what());
  }
  return ParsedDesign(std::move(d), basis);
}

inline json design_to_json(const Design& d, const Basis& basis) {
  return {{"support", cfg::matrix_to_json(d.support)},
          {"weights", cfg::vector_to_json(d.weights)},
          {"basis", std::string(basis.name())}};
}

// ---------------------------------------------------------------- criterion

inline Criterion criterion_from_json(const json& j, const std::string& path = "criterion") {
  const std::string kind = cfg::as_string(cfg::field(j, path, "kind"), path + ".kind");
  Criterion c;
  if (kind == "D")
    c.kind = Criterion::Kind::D;
  else if (kind == "A")
    c.kind = Criterion::Kind::A;
  else if (kind == "G")
    c.kind = Criterion::Kind::G;
  else
    throw schema_error(path + ".kind", "expected D, A or G");
  if (j.contains("g_grid")) {
    c.g_grid = cfg::as_int(j["g_grid"], path + ".g_grid");
    if (c.g_grid < 2) throw schema_error(path + ".g_grid", "must be >= 2");
  }
  return c;
}

// ---------------------------------------------------------------- scenario

inline ScenarioConfig scenario_from_json(const json& j) {
  if (!j.is_object()) throw schema_error("", "expected a JSON object");
  if (j.contains("schema_version") && cfg::as_int(j["schema_version"], "schema_version") != 1)
    throw schema_error("schema_version", "unsupported schema version");
  const int n = cfg::as_int(cfg::field(j, "", "n"), "n");
  if (n < 1) throw schema_error("n", "must be >= 1");
  const ErrorModel model = model_from_json(cfg::field(j, "", "model"));
  ParsedDesign parsed = design_from_json(cfg::field(j, "", "design"), n);

  ScenarioConfig config(model, parsed.basis, parsed.deterministic);
  if (parsed.use_randomized) config.random_design = parsed.randomized;

  const std::string strategy = cfg::as_string(cfg::field(j, "", "strategy"), "strategy");
  if (strategy == "fixed")
    config.strategy = Strategy::Fixed;
  else if (strategy == "rrsd")
    config.strategy = Strategy::RRSD;
  else if (strategy == "drsd")
    config.strategy = Strategy::DRSD;
  else
    throw schema_error("strategy", "expected fixed, rrsd or drsd");

  config.theta_true = cfg::as_vector(cfg::field(j, "", "theta_true"), "theta_true");
  if (config.theta_true.size() != config.basis.dim())
    throw schema_error("theta_true", "dimension does not match the design basis");

  if (config.strategy != Strategy::Fixed) {
    config.n1 = cfg::as_int(cfg::field(j, "", "n1"), "n1");
    if (config.n1 < config.design.d() || config.n1 > n)
      throw schema_error("n1", "adaptive strategies need d <= n1 <= n");
  } else if (j.contains("n1")) {
    config.n1 = cfg::as_int(j["n1"], "n1");
  }

  if (j.contains("iterations")) {
    config.iterations = cfg::as_int(j["iterations"], "iterations");
    if (config.iterations < 1) throw schema_error("iterations", "must be >= 1");
  }
  config.seed = cfg::as_u64(cfg::field(j, "", "seed"), "seed");
  if (j.contains("contrast")) {
    config.contrast = cfg::as_vector(j["contrast"], "contrast");
    if (config.contrast->size() != config.basis.dim())
      throw schema_error("contrast", "dimension does not match the design basis");
  }
  if (j.contains("criterion")) config.criterion = criterion_from_json(j["criterion"]);
  if (j.contains("threads")) {
    config.threads = cfg::as_int(j["threads"], "threads");
    if (config.threads < 1) throw schema_error("threads", "must be >= 1");
  }
  return config;
}

// ---------------------------------------------------------------- report

struct ReportExtras {
  std::optional<double> var_eff;
  std::optional<double> lb_eff_psi;
  std::optional<Eigen::MatrixXd> reference_crlb;
  std::optional<std::string> criterion_kind;
};

inline json report_to_json(const SimulationReport& report, const json& config_echo,
                           const ReportExtras& extras = {}) {
  json out{{"schema_version", 1},
           {"kind", "simulation_report"},
           {"config", config_echo},
           {"seed", report.seed},
           {"iterations_requested", report.r_requested},
           {"iterations_effective", report.r_effective},
           {"failed_iterations", report.failed_iterations},
           {"crlb", cfg::matrix_to_json(report.crlb)},
           {"mean_hinv", cfg::matrix_to_json(report.mean_hinv)},
           {"se_mean_hinv", cfg::matrix_to_json(report.se_mean_hinv)},
           {"var_mle", cfg::matrix_to_json(report.var_mle)},
           {"se_var_mle", cfg::matrix_to_json(report.se_var_mle)},
           {"mean_theta", cfg::vector_to_json(report.mean_theta)},
           {"se_mean_theta", cfg::vector_to_json(report.se_mean_theta)}};
  if (report.lb_eff) {
    out["lb_eff"] = *report.lb_eff;
    out["lb_eff_mc_se"] = *report.lb_eff_se;
    out["lb_eff_paper_orientation"] = *report.lb_eff_paper_orientation;
    out["contrast"] = cfg::vector_to_json(*report.contrast);
  }
  if (extras.var_eff) out["var_eff"] = *extras.var_eff;
  if (extras.lb_eff_psi) out["lb_eff_psi"] = *extras.lb_eff_psi;
  if (extras.reference_crlb) out["reference_crlb"] = cfg::matrix_to_json(*extras.reference_crlb);
  if (extras.criterion_kind) out["criterion"] = *extras.criterion_kind;
  return out;
}

// ---------------------------------------------------------------- CSV

struct CsvRow {
  int n = 0;
  std::string strategy;
  std::string metric;
  double value = 0.0;
  double mc_se = 0.0;
};

inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline std::string csv_table(const std::vector<CsvRow>& rows) {
  std::string out = "n,strategy,metric,value,mc_se\n";
  for (const auto& r : rows) {
    out += std::to_string(r.n);
    out += ',';
    out += r.strategy;
    out += ',';
    out += r.metric;
    out += ',';
    out += format_double(r.value);
    out += ',';
    out += format_double(r.mc_se);
    out += '\n';
  }
  return out;
}

// ---------------------------------------------------------------- files

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw invalid_input("cannot open file for reading: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw invalid_input("cannot open file for writing: " + path);
  out << content;
  if (!out) throw invalid_input("failed writing file: " + path);
}

inline json parse_json_file(const std::string& path) {
  try {
    return json::parse(read_text_file(path));
  } catch (const json::parse_error& e) {
    throw schema_error("", std::string("invalid JSON in ") + path + ": " + e.what());
  }
}

// ---------------------------------------------------------------- advise state

/// A sequential experiment in flight plus its allocation stream.
struct AdviseState {
  AdviseState(ExperimentState s, Stream st) : state(std::move(s)), stream(st) {}
  ExperimentState state;
  Stream stream;
};

namespace cfg {

inline std::uint64_t fnv1a(const std::string& text) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

inline json plan_to_json(const RunPlan& plan) {
  json out{{"size", plan.size}, {"capped", plan.capped}};
  if (plan.probs.size() > 0) out["probs"] = vector_to_json(plan.probs);
  if (plan.chosen_index >= 0) out["chosen_support"] = plan.chosen_index + 1;
  json alloc = json::array();
  for (int a : plan.allocations) alloc.push_back(a + 1);
  out["allocations"] = alloc;
  return out;
}

inline RunPlan plan_from_json(const json& j, int d, const std::string& path) {
  RunPlan plan;
  plan.size = as_int(field(j, path, "size"), path + ".size");
  if (j.contains("capped")) plan.capped = j["capped"].get<bool>();
  if (j.contains("probs")) plan.probs = as_vector(j["probs"], path + ".probs");
  if (j.contains("chosen_support"))
    plan.chosen_index = as_int(j["chosen_support"], path + ".chosen_support") - 1;
  const json& alloc = field(j, path, "allocations");
  if (!alloc.is_array()) throw schema_error(path + ".allocations", "expected an array");
  for (std::size_t k = 0; k < alloc.size(); ++k) {
    const int idx = as_int(alloc[k], path + ".allocations[" + std::to_string(k) + "]") - 1;
    if (idx < 0 || idx >= d)
      throw schema_error(path + ".allocations[" + std::to_string(k) + "]",
                         "support index out of range");
    plan.allocations.push_back(idx);
  }
  return plan;
}

}  // namespace cfg

inline json advise_state_to_json(const AdviseState& adv) {
  const ExperimentState& s = adv.state;
  json obs = json::array();
  for (const auto& o : s.observations) {
    json rec{{"support", o.support_index + 1}, {"response", o.response}};
    if (o.has_precision) rec["precision"] = o.precision;
    obs.push_back(rec);
  }
  json out{{"schema_version", 1},
           {"kind", "experiment_state"},
           {"model", model_to_json(s.model)},
           {"design", design_to_json(s.design, s.basis)},
           {"n", s.design.n},
           {"n1", s.n1},
           {"mode", s.mode == Mode::RRSD ? "rrsd" : "drsd"},
           {"run_index", s.run_index},
           {"remaining", s.remaining},
           {"capped", s.capped},
           {"observations", obs},
           {"stream",
            {{"seed", adv.stream.seed()},
             {"substream", adv.stream.substream()},
             {"drawn", adv.stream.drawn()}}}};
  if (s.pending) out["pending"] = cfg::plan_to_json(*s.pending);
  out["state_hash"] = cfg::fnv1a(out.dump());
  return out;
}

inline AdviseState advise_state_from_json(const json& j) {
  if (!j.is_object()) throw schema_error("", "expected a JSON object");
  if (cfg::as_string(cfg::field(j, "", "kind"), "kind") != "experiment_state")
    throw schema_error("kind", "not an experiment state file");
  {
    json copy = j;
    if (!copy.contains("state_hash")) throw schema_error("state_hash", "missing");
    const std::uint64_t given = cfg::as_u64(copy["state_hash"], "state_hash");
    copy.erase("state_hash");
    if (cfg::fnv1a(copy.dump()) != given)
      throw schema_error("state_hash", "stale or hand-edited state file");
  }
  const ErrorModel model = model_from_json(cfg::field(j, "", "model"));
  const int n = cfg::as_int(cfg::field(j, "", "n"), "n");
  ParsedDesign parsed = design_from_json(cfg::field(j, "", "design"), n);
  const std::string mode_name = cfg::as_string(cfg::field(j, "", "mode"), "mode");
  if (mode_name != "rrsd" && mode_name != "drsd")
    throw schema_error("mode", "expected rrsd or drsd");
  const Mode mode = mode_name == "rrsd" ? Mode::RRSD : Mode::DRSD;

  ExperimentState state(parsed.deterministic, parsed.basis, model, mode);
  state.n1 = cfg::as_int(cfg::field(j, "", "n1"), "n1");
  state.run_index = cfg::as_int(cfg::field(j, "", "run_index"), "run_index");
  state.capped = j.value("capped", false);
  const int d = state.design.d();
  state.groups.resize(static_cast<std::size_t>(d));
  for (int i = 0; i < d; ++i) state.groups[static_cast<std::size_t>(i)].support_index = i;
  state.h_current = Eigen::VectorXd::Zero(d);

  const json& obs = cfg::field(j, "", "observations");
  if (!obs.is_array()) throw schema_error("observations", "expected an array");
  const bool weighted = model.family() == Family::HeteroNormalGamma;
  for (std::size_t k = 0; k < obs.size(); ++k) {
    const std::string path = "observations[" + std::to_string(k) + "]";
    Observation o;
    o.support_index = cfg::as_int(cfg::field(obs[k], path, "support"), path + ".support") - 1;
    if (o.support_index < 0 || o.support_index >= d)
      throw schema_error(path + ".support", "support index out of range");
    o.response = cfg::as_double(cfg::field(obs[k], path, "response"), path + ".response");
    if (weighted) {
      o.precision = cfg::as_double(cfg::field(obs[k], path, "precision"), path + ".precision");
      o.has_precision = true;
      state.groups[static_cast<std::size_t>(o.support_index)].precisions.push_back(o.precision);
    }
    state.groups[static_cast<std::size_t>(o.support_index)].responses.push_back(o.response);
    state.observations.push_back(o);
  }
  state.remaining = cfg::as_int(cfg::field(j, "", "remaining"), "remaining");
  if (state.remaining != n - state.observed())
    throw schema_error("remaining", "inconsistent with the observation log");
  for (int i = 0; i < d; ++i) detail::refit_group(state, i);
  detail::recompute_uv(state);
  if (j.contains("pending")) state.pending = cfg::plan_from_json(j["pending"], d, "pending");

  const json& stream_j = cfg::field(j, "", "stream");
  Stream stream(cfg::as_u64(cfg::field(stream_j, "stream", "seed"), "stream.seed"),
                cfg::as_u64(cfg::field(stream_j, "stream", "substream"), "stream.substream"),
                cfg::as_u64(cfg::field(stream_j, "stream", "drawn"), "stream.drawn"));
  return AdviseState(std::move(state), stream);
}

}  // namespace rsd
