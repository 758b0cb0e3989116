// Command-line driver: scenario simulation, built-in study reproduction,
// run-by-run advice for live sequential experiments, and information
// diagnostics.

#include <CLI11.hpp>
#include <Eigen/Dense>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <string>
#include <vector>

#include "rsd/adaptive.hpp"
#include "rsd/config.hpp"
#include "rsd/design.hpp"
#include "rsd/error_model.hpp"
#include "rsd/errors.hpp"
#include "rsd/information.hpp"
#include "rsd/montecarlo.hpp"
#include "rsd/studies.hpp"

namespace {

using rsd::json;

struct CommonOpts {
  int threads = 0;  // 0 = leave scenario value
  bool quiet = false;
  std::uint64_t seed = 0;
  bool seed_set = false;
};

std::string criterion_name(const rsd::Criterion& c) {
  switch (c.kind) {
    case rsd::Criterion::Kind::D: return "D";
    case rsd::Criterion::Kind::A: return "A";
    case rsd::Criterion::Kind::G: return "G";
  }
  return "?";
}

// Standard error of a criterion efficiency by batching iterations into blocks.
template <class Metric>
double block_se(const rsd::SimulationReport& report, Metric&& metric, int blocks = 20) {
  const int r = static_cast<int>(report.theta_samples.rows());
  const int min_block = 4 * static_cast<int>(report.theta_samples.cols());
  blocks = std::min(blocks, r / std::max(2, min_block));
  if (blocks < 2) return 0.0;  // too few iterations for a block estimate
  std::vector<double> values;
  values.reserve(static_cast<std::size_t>(blocks));
  const int width = r / blocks;
  for (int b = 0; b < blocks; ++b) {
    const int lo = b * width;
    const int len = b == blocks - 1 ? r - lo : width;
    try {
      values.push_back(metric(report.theta_samples.middleRows(lo, len),
                              report.hinv_samples.middleRows(lo, len)));
    } catch (const std::exception&) {
      return 0.0;  // a degenerate block: no usable error estimate
    }
  }
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= blocks;
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return std::sqrt(ss / (blocks - 1.0) / blocks);
}

double var_eff_of(const Eigen::MatrixXd& theta_samples, const rsd::Criterion& criterion,
                  const Eigen::MatrixXd& reference, const rsd::Basis& basis) {
  const Eigen::MatrixXd cov = rsd::detail::sample_covariance(theta_samples);
  return rsd::criterion_value_inverse_scale(reference, criterion, basis) /
         rsd::criterion_value_inverse_scale(cov, criterion, basis);
}

double lb_eff_psi_of(const Eigen::MatrixXd& hinv_samples, int p, const rsd::Criterion& criterion,
                     const Eigen::MatrixXd& reference, const rsd::Basis& basis) {
  Eigen::MatrixXd mean = Eigen::MatrixXd::Zero(p, p);
  for (int a = 0; a < p; ++a)
    for (int b = 0; b < p; ++b) mean(a, b) = hinv_samples.col(a * p + b).mean();
  return rsd::criterion_value_inverse_scale(reference, criterion, basis) /
         rsd::criterion_value_inverse_scale(mean, criterion, basis);
}

int cmd_simulate(const std::string& config_path, const std::string& out_path,
                 const std::string& csv_path, const CommonOpts& opts) {
  const json config_json = rsd::parse_json_file(config_path);
  rsd::ScenarioConfig config = rsd::scenario_from_json(config_json);
  if (opts.seed_set) config.seed = opts.seed;
  if (opts.threads > 0) config.threads = opts.threads;

  const rsd::SimulationReport report = rsd::run_scenario(config);

  rsd::ReportExtras extras;
  std::vector<rsd::CsvRow> rows;
  if (report.lb_eff)
    rows.push_back({config.n(), "scenario", "lb_eff", *report.lb_eff, *report.lb_eff_se});
  if (config.criterion) {
    rsd::Design ref;
    ref.support = config.design.support;
    ref.n = config.n();
    ref.weights = rsd::reference_weights(*config.criterion, ref.support, config.basis);
    const Eigen::MatrixXd fref = rsd::fisher_matrix(ref, config.basis, config.model);
    const Eigen::MatrixXd ref_crlb =
        Eigen::LLT<Eigen::MatrixXd>(fref).solve(Eigen::MatrixXd::Identity(fref.rows(), fref.cols()));
    extras.reference_crlb = ref_crlb;
    extras.criterion_kind = criterion_name(*config.criterion);
    extras.var_eff = rsd::var_efficiency(report, *config.criterion, ref_crlb, config.basis);
    extras.lb_eff_psi = rsd::lb_efficiency_psi(report, *config.criterion, ref_crlb, config.basis);
    const auto& crit = *config.criterion;
    const auto& basis = config.basis;
    rows.push_back({config.n(), "scenario", "var_eff_" + criterion_name(crit), *extras.var_eff,
                    block_se(report, [&](const auto& th, const auto&) {
                      return var_eff_of(th, crit, ref_crlb, basis);
                    })});
    rows.push_back({config.n(), "scenario", "lb_eff_psi_" + criterion_name(crit),
                    *extras.lb_eff_psi, block_se(report, [&](const auto&, const auto& hi) {
                      return lb_eff_psi_of(hi, basis.dim(), crit, ref_crlb, basis);
                    })});
  }

  rsd::write_text_file(out_path, rsd::report_to_json(report, config_json, extras).dump(2) + "\n");
  if (!csv_path.empty()) rsd::write_text_file(csv_path, rsd::csv_table(rows));
  if (!opts.quiet) {
    std::cout << "wrote " << out_path << " (R_eff=" << report.r_effective << "/"
              << report.r_requested << ")";
    if (report.lb_eff) std::cout << "  lb_eff=" << *report.lb_eff;
    if (extras.var_eff) std::cout << "  var_eff=" << *extras.var_eff;
    std::cout << "\n";
  }
  return 0;
}

const char* strategy_name(rsd::Strategy s) {
  switch (s) {
    case rsd::Strategy::Fixed: return "fixed";
    case rsd::Strategy::RRSD: return "rrsd";
    case rsd::Strategy::DRSD: return "drsd";
  }
  return "?";
}

int cmd_reproduce(const std::string& target, const std::string& out_dir, int iterations,
                  int max_n, const CommonOpts& opts) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  const int threads = opts.threads > 0 ? opts.threads : 2;
  auto out = [&out_dir](const std::string& name) { return (fs::path(out_dir) / name).string(); };

  if (target == "fig1") {
    json summary{{"schema_version", 1}, {"kind", "fig1"}, {"iterations", iterations}};
    for (const double alpha : {0.25, 0.125}) {
      std::vector<rsd::CsvRow> rows;
      std::vector<int> sweep;
      for (int n = 12; n <= 40; n += 4)
        if (n * alpha / 2.0 > 1.0) sweep.push_back(n);  // finite bound needs n*w*alpha > 1
      for (int n : sweep) {
        for (rsd::Strategy strategy :
             {rsd::Strategy::Fixed, rsd::Strategy::RRSD, rsd::Strategy::DRSD}) {
          auto config = rsd::studies::nig_two_treatment(alpha, alpha, n, strategy, iterations,
                                                        rsd::studies::kSeedTwoTreatment, threads);
          const auto report = rsd::run_scenario(config);
          rows.push_back({n, strategy_name(strategy), "lb_eff", *report.lb_eff, *report.lb_eff_se});
          if (!opts.quiet)
            std::cout << "fig1 alpha=" << alpha << " n=" << n << " " << strategy_name(strategy)
                      << " lb_eff=" << *report.lb_eff << "\n";
        }
      }
      const std::string name = alpha == 0.25 ? "fig1_alpha_0.25.csv" : "fig1_alpha_0.125.csv";
      rsd::write_text_file(out(name), rsd::csv_table(rows));
      summary["files"].push_back(name);
    }
    rsd::write_text_file(out("fig1.json"), summary.dump(2) + "\n");
    return 0;
  }

  if (target == "table1") {
    const int n = 60;
    json summary{{"schema_version", 1}, {"kind", "table1"}, {"n", n}, {"iterations", iterations}};
    std::vector<rsd::CsvRow> rows;
    for (rsd::Strategy strategy :
         {rsd::Strategy::Fixed, rsd::Strategy::RRSD, rsd::Strategy::DRSD}) {
      auto config =
          rsd::studies::cauchy_factorial(n, strategy, iterations, rsd::studies::kSeedFactorial, threads);
      const auto report = rsd::run_scenario(config);
      const std::string name = strategy_name(strategy);
      summary["n_mean_hinv"][name] = rsd::cfg::matrix_to_json(n * report.mean_hinv);
      summary["n_var_mle"][name] = rsd::cfg::matrix_to_json(n * report.var_mle);
      for (int a = 0; a < 4; ++a)
        for (int b = 0; b < 4; ++b) {
          const std::string suffix =
              "[" + std::to_string(a + 1) + "][" + std::to_string(b + 1) + "]";
          rows.push_back({n, name, "n_mean_hinv" + suffix, n * report.mean_hinv(a, b),
                          n * report.se_mean_hinv(a, b)});
          rows.push_back({n, name, "n_var_mle" + suffix, n * report.var_mle(a, b),
                          n * report.se_var_mle(a, b)});
        }
      if (!opts.quiet)
        std::cout << "table1 " << name << " nE[Hinv](1,1)=" << n * report.mean_hinv(0, 0)
                  << " nVar(1,1)=" << n * report.var_mle(0, 0) << "\n";
      if (strategy == rsd::Strategy::Fixed)
        summary["n_crlb"] = rsd::cfg::matrix_to_json(n * report.crlb);
    }
    rsd::write_text_file(out("table1.csv"), rsd::csv_table(rows));
    rsd::write_text_file(out("table1.json"), summary.dump(2) + "\n");
    return 0;
  }

  if (target == "fig2") {
    const rsd::ErrorModel model = rsd::ErrorModel::generalized_normal(10.0, 1.0);
    std::vector<int> sweep = {8};
    for (int n = 10; n <= max_n; n += 3) sweep.push_back(n);
    json summary{{"schema_version", 1}, {"kind", "fig2"}, {"iterations", iterations}};
    std::vector<rsd::CsvRow> rows_g, rows_d;
    for (int n : sweep) {
      auto arms = rsd::studies::quadratic_minimax_arms(n, iterations,
                                                       rsd::studies::kSeedMinimaxQuadratic, threads);
      const std::pair<const char*, rsd::ScenarioConfig*> labelled[] = {
          {"xi_g", &arms.fixed_deterministic},
          {"pi_g", &arms.fixed_randomized},
          {"drsd_xi_g", &arms.adaptive_deterministic},
          {"drsd_pi_g", &arms.adaptive_randomized}};
      for (auto [label, config] : labelled) {
        const auto report = rsd::run_scenario(*config);
        for (auto kind : {rsd::Criterion::Kind::G, rsd::Criterion::Kind::D}) {
          rsd::Criterion criterion{kind, 1001};
          const Eigen::MatrixXd ref = rsd::studies::quadratic_reference_crlb(criterion, n, model);
          const double ve = rsd::var_efficiency(report, criterion, ref, config->basis);
          const double le = rsd::lb_efficiency_psi(report, criterion, ref, config->basis);
          const auto& basis = config->basis;
          auto& rows = kind == rsd::Criterion::Kind::G ? rows_g : rows_d;
          rows.push_back({n, label, "var_eff_psi", ve,
                          block_se(report, [&](const auto& th, const auto&) {
                            return var_eff_of(th, criterion, ref, basis);
                          })});
          rows.push_back({n, label, "lb_eff_psi", le,
                          block_se(report, [&](const auto&, const auto& hi) {
                            return lb_eff_psi_of(hi, basis.dim(), criterion, ref, basis);
                          })});
          if (!opts.quiet)
            std::cout << "fig2 n=" << n << " " << label << " " << criterion_name(criterion)
                      << ": var_eff=" << ve << " lb_eff=" << le << "\n";
        }
      }
    }
    rsd::write_text_file(out("fig2_G.csv"), rsd::csv_table(rows_g));
    rsd::write_text_file(out("fig2_D.csv"), rsd::csv_table(rows_d));
    rsd::write_text_file(out("fig2.json"), summary.dump(2) + "\n");
    return 0;
  }

  throw rsd::invalid_input("unknown reproduce target: " + target +
                           " (expected fig1, fig2 or table1)");
}

void print_plan(const rsd::ExperimentState& state) {
  if (!state.pending) {
    std::cout << "experiment complete: all " << state.design.n << " observations recorded\n";
    return;
  }
  const rsd::RunPlan& plan = *state.pending;
  std::cout << "next run " << state.run_index + 1 << ": " << plan.size << " observation(s)\n";
  if (plan.chosen_index >= 0)
    std::cout << "  chosen support point: " << plan.chosen_index + 1 << "\n";
  if (plan.probs.size() > 0) {
    std::cout << "  allocation probabilities:";
    for (int i = 0; i < plan.probs.size(); ++i) std::cout << " " << plan.probs[i];
    std::cout << "\n";
  }
  std::cout << "  allocations (support point per observation):";
  for (int a : plan.allocations) std::cout << " " << a + 1;
  std::cout << "\n";
}

int cmd_advise(const std::string& config_path, const std::string& state_path,
               const std::string& responses_path, const std::string& out_path,
               const CommonOpts& opts) {
  if (!config_path.empty()) {  // start a new experiment
    const json j = rsd::parse_json_file(config_path);
    rsd::ScenarioConfig config = rsd::scenario_from_json(j);
    if (config.strategy == rsd::Strategy::Fixed)
      throw rsd::invalid_input("advise: strategy must be rrsd or drsd");
    if (opts.seed_set) config.seed = opts.seed;
    rsd::Stream stream(config.seed, 0);
    const rsd::Design& realized = config.random_design
                                      ? rsd::sample_design(*config.random_design, stream)
                                      : config.design;
    const rsd::Mode mode =
        config.strategy == rsd::Strategy::RRSD ? rsd::Mode::RRSD : rsd::Mode::DRSD;
    rsd::AdviseState adv(rsd::initialize(realized, config.basis, config.model, config.n1, mode,
                                         stream),
                         stream);
    adv.stream = stream;
    rsd::write_text_file(out_path, rsd::advise_state_to_json(adv).dump(2) + "\n");
    if (!opts.quiet) {
      for (const auto& w : adv.state.warnings) std::cout << "warning: " << w << "\n";
      print_plan(adv.state);
      std::cout << "state written to " << out_path << "\n";
    }
    return 0;
  }

  rsd::AdviseState adv = rsd::advise_state_from_json(rsd::parse_json_file(state_path));
  if (responses_path.empty()) {  // just re-emit the pending plan
    if (!opts.quiet) print_plan(adv.state);
    if (!out_path.empty())
      rsd::write_text_file(out_path, rsd::advise_state_to_json(adv).dump(2) + "\n");
    return 0;
  }

  if (!adv.state.pending) throw rsd::invalid_input("advise: no pending run awaits responses");
  const json rj = rsd::parse_json_file(responses_path);
  const Eigen::VectorXd responses =
      rsd::cfg::as_vector(rsd::cfg::field(rj, "", "responses"), "responses");
  std::vector<double> resp(responses.data(), responses.data() + responses.size());
  std::vector<double> prec;
  if (rj.contains("precisions")) {
    const Eigen::VectorXd p = rsd::cfg::as_vector(rj["precisions"], "precisions");
    prec.assign(p.data(), p.data() + p.size());
  }
  rsd::record_run(adv.state, *adv.state.pending, resp, adv.stream, prec);
  if (!adv.state.complete()) rsd::next_plan(adv.state, adv.stream);
  rsd::write_text_file(out_path, rsd::advise_state_to_json(adv).dump(2) + "\n");
  if (!opts.quiet) {
    print_plan(adv.state);
    std::cout << "state written to " << out_path << "\n";
  }
  return 0;
}

int cmd_info(const std::string& model_path, const std::string& data_path, const CommonOpts&) {
  const json mj = rsd::parse_json_file(model_path);
  const rsd::ErrorModel model = rsd::model_from_json(mj, "model");
  const rsd::MomentTable table = model.moment_table();
  std::cout << std::setprecision(10);
  std::cout << "mu              = " << table.mu << "\n";
  std::cout << "nu_20           = " << table.nu20 << "\n";
  std::cout << "nu_02           = " << table.nu02 << "\n";
  std::cout << "nu_11           = " << table.nu11 << "\n";
  std::cout << "gamma (formula) = " << table.gamma_formula << "\n";
  std::cout << "gamma (direct)  = " << table.gamma_alt << "\n";
  if (data_path.empty()) return 0;

  const json dj = rsd::parse_json_file(data_path);
  const Eigen::VectorXd w = rsd::cfg::as_vector(rsd::cfg::field(dj, "", "weights"), "weights");
  const json& groups_j = rsd::cfg::field(dj, "", "groups");
  if (!groups_j.is_array() || groups_j.size() != static_cast<std::size_t>(w.size()))
    throw rsd::schema_error("groups", "expected one group per weight");
  const int d = static_cast<int>(w.size());
  Eigen::VectorXd h(d), eta(d);
  int n_obs = 0;
  for (int i = 0; i < d; ++i) {
    const std::string path = "groups[" + std::to_string(i) + "]";
    rsd::SupportGroup grp;
    grp.support_index = i;
    if (groups_j[i].contains("responses")) {
      const Eigen::VectorXd y = rsd::cfg::as_vector(groups_j[i]["responses"], path + ".responses");
      grp.responses.assign(y.data(), y.data() + y.size());
    }
    if (groups_j[i].contains("precisions")) {
      const Eigen::VectorXd a =
          rsd::cfg::as_vector(groups_j[i]["precisions"], path + ".precisions");
      grp.precisions.assign(a.data(), a.data() + a.size());
    }
    if (model.is_location_family()) {
      if (grp.responses.empty()) throw rsd::schema_error(path + ".responses", "missing");
      grp.eta_hat = rsd::mle_location(model, grp.responses);
      n_obs += static_cast<int>(grp.responses.size());
    } else {
      if (grp.precisions.empty()) throw rsd::schema_error(path + ".precisions", "missing");
      n_obs += static_cast<int>(grp.precisions.size());
      if (!grp.responses.empty()) {
        double num = 0.0, den = 0.0;
        for (std::size_t k = 0; k < grp.responses.size(); ++k) {
          num += grp.precisions[k] * grp.responses[k];
          den += grp.precisions[k];
        }
        grp.eta_hat = num / den;
      } else {
        grp.eta_hat = std::numeric_limits<double>::quiet_NaN();
      }
    }
    eta[i] = grp.eta_hat;
    h[i] = rsd::relevant_info_eta(model, grp);
  }
  if (dj.contains("n")) n_obs = rsd::cfg::as_int(dj["n"], "n");
  const Eigen::VectorXd g = h / model.elemental_info();
  auto [u, v] = rsd::uv_statistics(g, w, static_cast<double>(n_obs));
  for (int i = 0; i < d; ++i) {
    std::cout << "group " << i + 1 << ": eta_hat = " << eta[i] << "  h = " << h[i]
              << "  g = " << g[i] << "  u = " << u[i] << "  v = " << v[i] << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"relevant-subset adaptive experimental design toolkit"};
  app.require_subcommand(1);
  CommonOpts opts;

  std::string config_path, out_path, csv_path, state_path, responses_path, model_path, data_path;
  std::string target;
  int iterations = 2000;
  int max_n = 100;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--threads", opts.threads, "worker threads (results identical at any count)");
    sub->add_flag("--quiet", opts.quiet, "suppress progress output");
  };

  CLI::App* simulate = app.add_subcommand("simulate", "run one scenario from a config file");
  simulate->add_option("--config", config_path, "scenario config (JSON)")->required();
  simulate->add_option("--out", out_path, "report output path (JSON)")->required();
  simulate->add_option("--csv", csv_path, "optional flat metric table (CSV)");
  simulate->add_option("--seed", opts.seed, "seed override")->each([&](const std::string&) {
    opts.seed_set = true;
  });
  add_common(simulate);

  CLI::App* reproduce = app.add_subcommand("reproduce", "regenerate a built-in study's tables");
  reproduce->add_option("--target", target, "fig1 | fig2 | table1")->required();
  reproduce->add_option("--out", out_path, "output directory")->required();
  reproduce->add_option("--iterations", iterations, "Monte Carlo iterations (default 2000)");
  reproduce->add_option("--max-n", max_n, "largest sample size in the fig2 sweep");
  add_common(reproduce);

  CLI::App* advise = app.add_subcommand("advise", "plan the next run of a live experiment");
  advise->add_option("--config", config_path, "scenario config to start a new experiment");
  advise->add_option("--state", state_path, "serialized experiment state");
  advise->add_option("--responses", responses_path, "responses for the pending run (JSON)");
  advise->add_option("--out", out_path, "updated state output path");
  advise->add_option("--seed", opts.seed, "seed override (new experiments)")
      ->each([&](const std::string&) { opts.seed_set = true; });
  add_common(advise);

  CLI::App* info = app.add_subcommand("info", "print a model's information constants");
  info->add_option("--model", model_path, "model spec (JSON)")->required();
  info->add_option("--data", data_path, "grouped data file (JSON)");
  add_common(info);

  CLI11_PARSE(app, argc, argv);

  try {
    if (simulate->parsed()) return cmd_simulate(config_path, out_path, csv_path, opts);
    if (reproduce->parsed()) return cmd_reproduce(target, out_path, iterations, max_n, opts);
    if (advise->parsed()) {
      if (config_path.empty() && state_path.empty())
        throw rsd::invalid_input("advise: need --config (new experiment) or --state");
      if (!config_path.empty() && out_path.empty())
        throw rsd::invalid_input("advise: --out is required when starting an experiment");
      if (!responses_path.empty() && out_path.empty())
        throw rsd::invalid_input("advise: --out is required when recording responses");
      return cmd_advise(config_path, state_path, responses_path, out_path, opts);
    }
    if (info->parsed()) return cmd_info(model_path, data_path, opts);
  } catch (const rsd::schema_error& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const rsd::invalid_input& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return 2;
  } catch (const rsd::numeric_error& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
