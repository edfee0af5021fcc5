// hyposde command-line front-end: model I/O, experiment configuration,
// deterministic seeding, and report emission.
//
// Subcommands: check | simulate | compare | probe | cover.
// Exit codes: 0 success/pass, 2 domain-level failure (hypothesis violation,
// comparison fail, cover abort), 1 usage/config error.

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <json.hpp>

#include "hyposde/localizer.hpp"
#include "hyposde/models.hpp"
#include "hyposde/oukernel.hpp"
#include "hyposde/sdesim.hpp"
#include "hyposde/verifier.hpp"

using nlohmann::json;
using namespace hyposde;

namespace {

constexpr const char* kVersion = "0.1.0";

constexpr int kExitPass = 0;
constexpr int kExitUsage = 1;
constexpr int kExitDomainFail = 2;

json to_json(const VectorXd& v) {
  json a = json::array();
  for (int i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

json to_json(const MatrixXd& m) {
  json rows = json::array();
  for (int i = 0; i < m.rows(); ++i) {
    json r = json::array();
    for (int c = 0; c < m.cols(); ++c) r.push_back(m(i, c));
    rows.push_back(r);
  }
  return rows;
}

// Builtin name first, else a path to a model JSON file.
ModelSpec load_model(const std::string& name_or_path) {
  try {
    return builtin(name_or_path);
  } catch (const std::invalid_argument&) {
  }
  std::ifstream in(name_or_path);
  if (!in)
    throw std::invalid_argument("model '" + name_or_path +
                                "' is not a builtin name or a readable file");
  json j;
  in >> j;
  return model_from_json(j);
}

VectorXd resolve_z0(const std::vector<double>& z0_flag, int d) {
  if (z0_flag.empty()) return VectorXd::Zero(d);
  if (static_cast<int>(z0_flag.size()) != d)
    throw std::invalid_argument("--z0 must have exactly " + std::to_string(d) +
                                " components");
  return Eigen::Map<const VectorXd>(z0_flag.data(), d);
}

PathEnsemble run_scheme(const ModelSpec& spec, const std::string& scheme,
                        const VectorXd& z0, double h, double T, int n,
                        std::uint64_t seed, unsigned threads) {
  SDEModel m = spec.to_sde();
  if (scheme == "euler") return euler_maruyama(m, z0, h, T, n, seed, threads);
  if (scheme == "exp-euler") return exp_euler(m, z0, h, T, n, seed, threads);
  if (scheme == "frozen-dyadic") {
    int level = static_cast<int>(std::lround(-std::log2(h)));
    if (std::ldexp(1.0, -level) != h)
      throw std::invalid_argument(
          "frozen-dyadic: --h must be a dyadic step 2^-m, got " +
          std::to_string(h));
    return frozen_dyadic_scheme(m, level, z0, T, n, seed, threads);
  }
  throw std::invalid_argument("unknown scheme '" + scheme +
                              "'; valid: euler, exp-euler, frozen-dyadic");
}

// Merge a JSON config file under explicit-flag precedence: a key only takes
// effect when the matching flag was not given on the command line.
class ConfigMerger {
 public:
  ConfigMerger(CLI::App* sub, const std::string& path) : sub_(sub) {
    if (path.empty()) return;
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot read config file '" + path + "'");
    in >> j_;
  }

  template <typename T>
  void merge(const std::string& flag, const std::string& key, T& var) const {
    if (!j_.contains(key)) return;
    if (sub_->count(flag) > 0) return;
    var = j_.at(key).get<T>();
  }

  const json& raw() const { return j_; }

 private:
  CLI::App* sub_;
  json j_ = json::object();
};

void emit_report(json& report, const json& config,
                 std::chrono::steady_clock::time_point start) {
  double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                              start)
                    .count();
  report["tool_version"] = kVersion;
  report["config"] = config;
  report["wall_clock_seconds"] = wall;  // informational; not part of the
                                        // reproducible numeric payload
  std::cout << report.dump(2) << "\n";
}

// -----------------------------------------------------------------------
// check
// -----------------------------------------------------------------------

int cmd_check(const std::string& model_arg, double R, int n_probes,
              std::uint64_t seed) {
  auto start = std::chrono::steady_clock::now();
  ModelSpec spec = load_model(model_arg);
  HypothesisReport rep = validate(spec, R, n_probes, seed);

  json payload;
  payload["model"] = spec.name;
  payload["kalman"] = {{"k", rep.kalman.k ? json(*rep.kalman.k) : json(nullptr)},
                       {"rank_sequence", rep.kalman.rank_sequence}};
  payload["min_ellipticity"] = rep.min_ellipticity;
  payload["ellipticity_witness"] =
      rep.ellipticity_witness ? to_json(*rep.ellipticity_witness) : json(nullptr);
  payload["b0_sup"] = rep.b0_sup;
  if (rep.lyapunov_max_ratio) {
    payload["lyapunov"] = {{"max_ratio", *rep.lyapunov_max_ratio},
                           {"declared_C", *rep.lyapunov_declared_C},
                           {"violation", rep.lyapunov_violation}};
  } else {
    payload["lyapunov"] = nullptr;
  }
  json osc = json::array();
  for (const auto& s : rep.continuity_modulus)
    osc.push_back({{"dist", s.dist}, {"q_diff", s.q_diff}});
  payload["oscillation_table"] = osc;
  payload["violations"] = rep.has_violation();

  json config = {{"command", "check"}, {"model", model_arg}, {"R", R},
                 {"n_probes", n_probes}, {"seed", seed}};
  emit_report(payload, config, start);
  return rep.has_violation() ? kExitDomainFail : kExitPass;
}

// -----------------------------------------------------------------------
// simulate
// -----------------------------------------------------------------------

std::string format_csv_value(double v) { return fmt::format("{}", v); }

void write_ensemble_csv(const PathEnsemble& ens, const std::filesystem::path& p) {
  std::ofstream out(p);
  if (!out) throw std::invalid_argument("cannot write '" + p.string() + "'");
  const int d = ens.dim();
  out << "path_id,t";
  for (int c = 0; c < d; ++c) out << ",z_" << (c + 1);
  out << ",stopped\n";
  for (int pth = 0; pth < ens.n_paths(); ++pth) {
    for (int i = 0; i < ens.n_times(); ++i) {
      out << pth << ',' << format_csv_value(ens.times[i]);
      for (int c = 0; c < d; ++c)
        out << ',' << format_csv_value(ens.states[pth](i, c));
      bool stopped = ens.stopped[pth] && ens.times[i] >= ens.exit_time[pth];
      out << ',' << (stopped ? 1 : 0) << '\n';
    }
  }
}

int cmd_simulate(const std::string& model_arg, const std::string& scheme,
                 double h, double T, int n, const std::vector<double>& z0_flag,
                 std::uint64_t seed, unsigned threads,
                 const std::string& out_dir) {
  auto start = std::chrono::steady_clock::now();
  ModelSpec spec = load_model(model_arg);
  VectorXd z0 = resolve_z0(z0_flag, spec.d);
  PathEnsemble ens = run_scheme(spec, scheme, z0, h, T, n, seed, threads);

  json config = {{"command", "simulate"}, {"model", model_arg},
                 {"scheme", scheme},      {"h", h},
                 {"T", T},                {"n_paths", n},
                 {"z0", to_json(z0)},     {"seed", seed},
                 {"threads", threads}};

  std::filesystem::path dir(out_dir);
  std::filesystem::create_directories(dir);
  write_ensemble_csv(ens, dir / "data.csv");

  int n_diverged = 0;
  for (bool b : ens.diverged) n_diverged += b ? 1 : 0;
  json meta = {{"tool_version", kVersion},
               {"config", config},
               {"seed", seed},
               {"scheme_tag", ens.scheme_tag},
               {"n_paths", ens.n_paths()},
               {"n_times", ens.n_times()},
               {"n_diverged", n_diverged},
               {"wall_clock_seconds",
                std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                              start)
                    .count()}};
  std::ofstream meta_out(dir / "meta.json");
  meta_out << meta.dump(2) << "\n";

  std::cout << "wrote " << (dir / "data.csv").string() << " ("
            << ens.n_paths() * ens.n_times() << " rows)\n";
  return kExitPass;
}

// -----------------------------------------------------------------------
// compare
// -----------------------------------------------------------------------

FunctionBattery select_battery(int d, const std::vector<std::string>& labels) {
  FunctionBattery full = default_battery(d);
  if (labels.empty()) return full;
  FunctionBattery picked;
  for (const auto& want : labels) {
    bool found = false;
    for (const auto& f : full.members)
      if (f.label == want) {
        picked.members.push_back(f);
        found = true;
      }
    if (!found) {
      std::string valid;
      for (const auto& f : full.members)
        valid += (valid.empty() ? "" : ", ") + f.label;
      throw std::invalid_argument("unknown battery member '" + want +
                                  "'; valid: " + valid);
    }
  }
  return picked;
}

int cmd_compare(const std::string& model_arg, const std::string& scheme_a,
                const std::string& scheme_b, double h_a, double h_b, double T,
                int n, const std::vector<double>& z0_flag,
                const std::vector<double>& lambdas,
                const std::vector<std::string>& battery_labels,
                std::uint64_t seed_a, std::uint64_t seed_b, unsigned threads,
                const std::string& out_dir) {
  auto start = std::chrono::steady_clock::now();
  ModelSpec spec = load_model(model_arg);
  VectorXd z0 = resolve_z0(z0_flag, spec.d);
  FunctionBattery battery = select_battery(spec.d, battery_labels);

  PathEnsemble ens_a = run_scheme(spec, scheme_a, z0, h_a, T, n, seed_a, threads);
  PathEnsemble ens_b = run_scheme(spec, scheme_b, z0, h_b, T, n, seed_b, threads);
  LawComparison cmp = compare_laws(ens_a, ens_b, battery, lambdas);

  json pairs = json::array();
  for (const auto& p : cmp.pairs)
    pairs.push_back({{"f_id", p.f_id},
                     {"lambda", p.lambda},
                     {"valueA", p.a.value},
                     {"stderrA", p.a.stderr_},
                     {"valueB", p.b.value},
                     {"stderrB", p.b.stderr_},
                     {"zscore", p.zscore},
                     {"verdict", std::abs(p.zscore) <= cmp.z_crit ? "pass" : "fail"}});
  json payload = {{"model", spec.name},
                  {"pairs", pairs},
                  {"pass", cmp.pass},
                  {"z_crit", cmp.z_crit},
                  {"step_mismatch", cmp.step_mismatch}};
  json config = {{"command", "compare"},
                 {"model", model_arg},
                 {"schemeA", scheme_a},
                 {"schemeB", scheme_b},
                 {"hA", h_a},
                 {"hB", h_b},
                 {"T", T},
                 {"n_paths", n},
                 {"z0", to_json(z0)},
                 {"lambda_grid", lambdas},
                 {"seedA", seed_a},
                 {"seedB", seed_b},
                 {"threads", threads}};

  if (!out_dir.empty()) {
    std::filesystem::path dir(out_dir);
    std::filesystem::create_directories(dir);
    std::ofstream csv(dir / "pairs.csv");
    csv << "f_id,lambda,valueA,stderrA,valueB,stderrB,zscore,verdict\n";
    for (const auto& p : cmp.pairs)
      csv << p.f_id << ',' << format_csv_value(p.lambda) << ','
          << format_csv_value(p.a.value) << ',' << format_csv_value(p.a.stderr_)
          << ',' << format_csv_value(p.b.value) << ','
          << format_csv_value(p.b.stderr_) << ',' << format_csv_value(p.zscore)
          << ',' << (std::abs(p.zscore) <= cmp.z_crit ? "pass" : "fail") << '\n';
  }

  emit_report(payload, config, start);
  return cmp.pass ? kExitPass : kExitDomainFail;
}

// -----------------------------------------------------------------------
// probe
// -----------------------------------------------------------------------

std::vector<VectorXd> probe_grid(int d, double radius, int n_points,
                                 std::uint64_t seed) {
  RngStream stream(seed, 777);
  std::vector<VectorXd> grid;
  grid.push_back(VectorXd::Zero(d));
  for (int i = 1; i < n_points; ++i) {
    VectorXd dir = stream.normal_vector(d);
    dir.normalize();
    grid.push_back(radius * std::pow(stream.uniform(), 1.0 / d) * dir);
  }
  return grid;
}

int cmd_probe(const std::string& model_arg, const std::string& probe,
              double lambda, double p, double grid_radius, int grid_points,
              int mc_budget, double fd_step, std::uint64_t seed) {
  auto start = std::chrono::steady_clock::now();
  ModelSpec spec = load_model(model_arg);
  OUModel frozen = spec.frozen_ou();

  json config = {{"command", "probe"},   {"model", model_arg},
                 {"probe", probe},       {"lambda", lambda},
                 {"p", p},               {"grid_radius", grid_radius},
                 {"grid_points", grid_points}, {"mc_budget", mc_budget},
                 {"fd_step", fd_step},   {"seed", seed}};
  json payload = {{"model", spec.name}, {"kalman_index", frozen.k}};
  int code = kExitPass;

  if (probe == "det-slope") {
    SlopeFit fit = det_smalltime_fit(frozen);
    double bound = 2.0 * frozen.k + 1.0;
    bool ok = fit.slope >= bound - 0.05;
    payload["slope"] = fit.slope;
    payload["intercept"] = fit.intercept;
    payload["fit_residual"] = fit.residual;
    payload["lower_bound_exponent"] = bound;
    payload["bound_satisfied"] = ok;
    code = ok ? kExitPass : kExitDomainFail;
  } else if (probe == "sup-lp") {
    auto grid = probe_grid(frozen.d, grid_radius, grid_points, seed);
    ScalarField f = default_battery(frozen.d).members[0];
    SupLpProbe rep = probe_sup_lp(frozen, f, lambda, p, grid, mc_budget, seed);
    payload["f_id"] = f.label;
    payload["sup_estimate"] = rep.sup_estimate;
    payload["lp_norm"] = rep.lp_norm;
    payload["ratio"] = rep.ratio;
    payload["ratio_defined"] = rep.ratio_defined;
    code = rep.ratio_defined ? kExitPass : kExitDomainFail;
  } else if (probe == "d2x") {
    auto grid = probe_grid(frozen.d, grid_radius, grid_points, seed);
    ScalarField f = default_battery(frozen.d).members[0];
    SecondDerivativeProbe rep =
        probe_second_derivative(frozen, f, lambda, p, grid, fd_step, mc_budget, seed);
    payload["f_id"] = f.label;
    payload["lp_of_hessian_x"] = rep.lp_of_hessian_x;
    payload["lp_of_f"] = rep.lp_of_f;
    payload["ratio"] = rep.ratio;
    payload["conclusive"] = rep.conclusive;
    code = rep.conclusive ? kExitPass : kExitDomainFail;
  } else {
    throw std::invalid_argument("unknown probe '" + probe +
                                "'; valid: det-slope, sup-lp, d2x");
  }

  emit_report(payload, config, start);
  return code;
}

// -----------------------------------------------------------------------
// cover
// -----------------------------------------------------------------------

int cmd_cover(const std::string& model_arg, double R, double gamma,
              int probe_density, int oversample, std::uint64_t seed) {
  auto start = std::chrono::steady_clock::now();
  ModelSpec spec = load_model(model_arg);
  SDEModel m = spec.to_sde();
  Q0Evaluator Q0 = [&m](const VectorXd& z) { return m.Q0_at(z); };

  json config = {{"command", "cover"},         {"model", model_arg},
                 {"R", R},                     {"gamma", gamma},
                 {"probe_density", probe_density}, {"oversample", oversample},
                 {"seed", seed}};

  CoverAtlas atlas;
  try {
    atlas = build_cover(Q0, spec.d, R, [gamma](double) { return gamma; },
                        probe_density, seed);
  } catch (const std::runtime_error& e) {
    json payload = {{"model", spec.name}, {"error", e.what()}, {"built", false}};
    emit_report(payload, config, start);
    return kExitDomainFail;
  }
  CoverVerification ver = verify_cover(atlas, Q0, oversample, seed + 1);

  json charts = json::array();
  for (const auto& c : atlas.charts)
    charts.push_back({{"center", to_json(c.center)},
                      {"delta", c.delta},
                      {"eta", c.eta},
                      {"gamma", c.gamma},
                      {"annulus", c.annulus},
                      {"verified", c.verified}});
  json verdicts = json::array();
  for (const auto& v : ver.verdicts)
    if (!v.pass)
      verdicts.push_back({{"chart", v.chart}, {"failure", v.failure}});
  json payload = {{"model", spec.name},
                  {"built", true},
                  {"n_charts", atlas.charts.size()},
                  {"region_radius", atlas.region_radius},
                  {"charts", charts},
                  {"coverage_ok", ver.coverage_ok},
                  {"failed_charts", verdicts},
                  {"verified", ver.all_pass()}};
  emit_report(payload, config, start);
  return ver.all_pass() ? kExitPass : kExitDomainFail;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"hyposde: simulation and law-verification toolkit for "
               "degenerate SDEs"};
  app.set_help_flag("--help", "print usage");  // frees -h for the step size
  app.set_version_flag("--version", std::string("hyposde ") + kVersion);
  app.require_subcommand(1);

  // check ------------------------------------------------------------
  auto* check = app.add_subcommand("check", "sample structural hypotheses");
  std::string check_model, check_config;
  double check_R = 3.0;
  int check_probes = 400;
  std::uint64_t check_seed = 424242;
  check->add_option("model", check_model, "builtin name or model JSON path");
  check->add_option("--R", check_R, "probe-region radius");
  check->add_option("--probes", check_probes, "number of sample points");
  check->add_option("--seed", check_seed, "RNG seed");
  check->add_option("--config", check_config, "JSON config file");

  // simulate ----------------------------------------------------------
  auto* sim = app.add_subcommand("simulate", "run a scheme, write CSV + meta");
  std::string sim_model, sim_scheme = "exp-euler", sim_out = "out", sim_config;
  double sim_h = 1.0 / 1024, sim_T = 1.0;
  int sim_n = 100;
  std::vector<double> sim_z0;
  std::uint64_t sim_seed = 1;
  unsigned sim_threads = 1;
  sim->add_option("model", sim_model, "builtin name or model JSON path");
  sim->add_option("--scheme", sim_scheme, "euler | exp-euler | frozen-dyadic");
  sim->add_option("--h", sim_h, "step size");
  sim->add_option("--T", sim_T, "horizon");
  sim->add_option("--n", sim_n, "number of paths");
  sim->add_option("--z0", sim_z0, "initial point (comma-separated)")
      ->delimiter(',');
  sim->add_option("--seed", sim_seed, "RNG seed");
  sim->add_option("--threads", sim_threads, "worker threads");
  sim->add_option("--out", sim_out, "output directory");
  sim->add_option("--config", sim_config, "JSON config file");

  // compare -----------------------------------------------------------
  auto* cmp = app.add_subcommand("compare", "two-scheme law comparison");
  std::string cmp_model, cmp_scheme_a = "euler", cmp_scheme_b = "exp-euler";
  std::string cmp_out, cmp_config;
  double cmp_h = 1.0 / 1024, cmp_h_a = 0, cmp_h_b = 0, cmp_T = 1.0;
  int cmp_n = 10000;
  std::vector<double> cmp_z0, cmp_lambdas = {2.0, 4.0, 8.0};
  std::vector<std::string> cmp_battery;
  std::uint64_t cmp_seed_a = 1, cmp_seed_b = 2;
  unsigned cmp_threads = 1;
  cmp->add_option("model", cmp_model, "builtin name or model JSON path");
  cmp->add_option("--scheme-a", cmp_scheme_a, "first scheme");
  cmp->add_option("--scheme-b", cmp_scheme_b, "second scheme");
  cmp->add_option("--h", cmp_h, "step size for both schemes");
  cmp->add_option("--h-a", cmp_h_a, "step size override, first scheme");
  cmp->add_option("--h-b", cmp_h_b, "step size override, second scheme");
  cmp->add_option("--T", cmp_T, "horizon");
  cmp->add_option("--n", cmp_n, "paths per ensemble");
  cmp->add_option("--z0", cmp_z0, "initial point (comma-separated)")
      ->delimiter(',');
  cmp->add_option("--lambdas", cmp_lambdas, "resolvent lambda grid")
      ->delimiter(',');
  cmp->add_option("--battery", cmp_battery,
                  "test-function labels (default: full battery)")
      ->delimiter(',');
  cmp->add_option("--seed-a", cmp_seed_a, "seed, first ensemble");
  cmp->add_option("--seed-b", cmp_seed_b, "seed, second ensemble");
  cmp->add_option("--threads", cmp_threads, "worker threads");
  cmp->add_option("--out", cmp_out, "optional directory for pairs.csv");
  cmp->add_option("--config", cmp_config, "JSON config file");

  // probe ---------------------------------------------------------------
  auto* prb = app.add_subcommand("probe", "frozen-coefficient OU probes");
  std::string prb_model, prb_kind = "det-slope", prb_config;
  double prb_lambda = 4.0, prb_p = 3.0, prb_grid_R = 2.0, prb_fd_step = 0.05;
  int prb_grid_n = 8, prb_budget = 4000;
  std::uint64_t prb_seed = 31415;
  prb->add_option("model", prb_model, "builtin name or model JSON path");
  prb->add_option("--probe", prb_kind, "det-slope | sup-lp | d2x");
  prb->add_option("--lambda", prb_lambda, "resolvent parameter");
  prb->add_option("--p", prb_p, "L^p exponent");
  prb->add_option("--grid-R", prb_grid_R, "probe-grid radius");
  prb->add_option("--grid-n", prb_grid_n, "probe-grid size");
  prb->add_option("--budget", prb_budget, "Monte Carlo budget per grid point");
  prb->add_option("--fd-step", prb_fd_step, "finite-difference step (d2x)");
  prb->add_option("--seed", prb_seed, "RNG seed");
  prb->add_option("--config", prb_config, "JSON config file");

  // cover -----------------------------------------------------------------
  auto* cov = app.add_subcommand("cover", "build and verify a chart atlas");
  std::string cov_model, cov_config;
  double cov_R = 3.0, cov_gamma = 0.1;
  int cov_density = 256, cov_oversample = 4;
  std::uint64_t cov_seed = 20240501;
  cov->add_option("model", cov_model, "builtin name or model JSON path");
  cov->add_option("--R", cov_R, "region radius");
  cov->add_option("--gamma", cov_gamma, "oscillation budget");
  cov->add_option("--density", cov_density, "construction samples per annulus");
  cov->add_option("--oversample", cov_oversample, "verification oversampling");
  cov->add_option("--seed", cov_seed, "RNG seed");
  cov->add_option("--config", cov_config, "JSON config file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (app.got_subcommand(check)) {
      ConfigMerger cfg(check, check_config);
      cfg.merge("model", "model", check_model);
      cfg.merge("--R", "R", check_R);
      cfg.merge("--probes", "n_probes", check_probes);
      cfg.merge("--seed", "seed", check_seed);
      if (check_model.empty())
        throw std::invalid_argument("check: model argument required");
      return cmd_check(check_model, check_R, check_probes, check_seed);
    }
    if (app.got_subcommand(sim)) {
      ConfigMerger cfg(sim, sim_config);
      cfg.merge("model", "model", sim_model);
      cfg.merge("--scheme", "scheme", sim_scheme);
      cfg.merge("--h", "h", sim_h);
      cfg.merge("--T", "T", sim_T);
      cfg.merge("--n", "n_paths", sim_n);
      cfg.merge("--z0", "z0", sim_z0);
      cfg.merge("--seed", "seed", sim_seed);
      cfg.merge("--threads", "threads", sim_threads);
      cfg.merge("--out", "out", sim_out);
      if (sim_model.empty())
        throw std::invalid_argument("simulate: model argument required");
      return cmd_simulate(sim_model, sim_scheme, sim_h, sim_T, sim_n, sim_z0,
                          sim_seed, sim_threads, sim_out);
    }
    if (app.got_subcommand(cmp)) {
      ConfigMerger cfg(cmp, cmp_config);
      cfg.merge("model", "model", cmp_model);
      cfg.merge("--scheme-a", "schemeA", cmp_scheme_a);
      cfg.merge("--scheme-b", "schemeB", cmp_scheme_b);
      cfg.merge("--h", "h", cmp_h);
      cfg.merge("--h-a", "hA", cmp_h_a);
      cfg.merge("--h-b", "hB", cmp_h_b);
      cfg.merge("--T", "T", cmp_T);
      cfg.merge("--n", "n_paths", cmp_n);
      cfg.merge("--z0", "z0", cmp_z0);
      cfg.merge("--lambdas", "lambda_grid", cmp_lambdas);
      cfg.merge("--battery", "battery", cmp_battery);
      cfg.merge("--seed-a", "seedA", cmp_seed_a);
      cfg.merge("--seed-b", "seedB", cmp_seed_b);
      cfg.merge("--threads", "threads", cmp_threads);
      cfg.merge("--out", "out", cmp_out);
      if (cmp_model.empty())
        throw std::invalid_argument("compare: model argument required");
      double h_a = cmp_h_a > 0 ? cmp_h_a : cmp_h;
      double h_b = cmp_h_b > 0 ? cmp_h_b : cmp_h;
      return cmd_compare(cmp_model, cmp_scheme_a, cmp_scheme_b, h_a, h_b, cmp_T,
                         cmp_n, cmp_z0, cmp_lambdas, cmp_battery, cmp_seed_a,
                         cmp_seed_b, cmp_threads, cmp_out);
    }
    if (app.got_subcommand(prb)) {
      ConfigMerger cfg(prb, prb_config);
      cfg.merge("model", "model", prb_model);
      cfg.merge("--probe", "probe", prb_kind);
      cfg.merge("--lambda", "lambda", prb_lambda);
      cfg.merge("--p", "p", prb_p);
      cfg.merge("--grid-R", "grid_radius", prb_grid_R);
      cfg.merge("--grid-n", "grid_points", prb_grid_n);
      cfg.merge("--budget", "mc_budget", prb_budget);
      cfg.merge("--fd-step", "fd_step", prb_fd_step);
      cfg.merge("--seed", "seed", prb_seed);
      if (prb_model.empty())
        throw std::invalid_argument("probe: model argument required");
      return cmd_probe(prb_model, prb_kind, prb_lambda, prb_p, prb_grid_R,
                       prb_grid_n, prb_budget, prb_fd_step, prb_seed);
    }
    // cover
    ConfigMerger cfg(cov, cov_config);
    cfg.merge("model", "model", cov_model);
    cfg.merge("--R", "R", cov_R);
    cfg.merge("--gamma", "gamma", cov_gamma);
    cfg.merge("--density", "probe_density", cov_density);
    cfg.merge("--oversample", "oversample", cov_oversample);
    cfg.merge("--seed", "seed", cov_seed);
    if (cov_model.empty())
      throw std::invalid_argument("cover: model argument required");
    return cmd_cover(cov_model, cov_R, cov_gamma, cov_density, cov_oversample,
                     cov_seed);
  } catch (const ExprError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const json::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
}
