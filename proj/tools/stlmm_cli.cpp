// stlmm: fit skew-t linear mixed models, simulate from the study designs,
// run Monte Carlo studies and tabulate random-effect densities.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "stlmm/inference.hpp"
#include "stlmm/io.hpp"
#include "stlmm/parallel.hpp"

using namespace stlmm;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitError = 1;
constexpr int kExitNotConverged = 2;

struct RunConfig {
  std::string command;
  std::string input;
  std::string output;
  // model
  ColumnInfo columns{"subject", "y", {"1", "x"}, {"1", "x"}};
  std::string family = "ST";
  int rank = 2;
  std::string structure = "full";
  // fitter
  double tolerance = 1e-6;
  int max_iter = 500;
  std::vector<int> nu_grid = FitConfig::default_nu_grid();
  std::string init = "best-of";
  std::uint64_t seed = 1;
  // flags
  bool se_louis = true;
  bool se_numerical = false;
  bool random_effects = false;
  // simulation
  std::string scenario = "study1";
  std::optional<int> n_subjects;
  int replicas = 100;
  GridSpec grid;
};

std::vector<int> parse_nu_grid(const std::string& s) {
  std::vector<int> out;
  const auto colon = s.find(':');
  try {
    if (colon != std::string::npos) {
      const int lo = std::stoi(s.substr(0, colon));
      const int hi = std::stoi(s.substr(colon + 1));
      for (int v = lo; v <= hi; ++v) out.push_back(v);
    } else {
      std::stringstream ss(s);
      std::string item;
      while (std::getline(ss, item, ',')) out.push_back(std::stoi(item));
    }
  } catch (const std::exception&) {
    throw Error(ErrorCode::InvalidArgument, "cannot read nu grid '" + s + "' (use lo:hi or a comma list)");
  }
  return out;
}

std::vector<std::string> split_names(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

template <class T>
void take(const Json& j, const char* key, T& into) {
  if (j.contains(key) && !j.at(key).is_null()) into = j.at(key).get<T>();
}

void load_config(const std::string& path, RunConfig& c) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open config '" + path + "'");
  Json j;
  try {
    j = Json::parse(in);
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::Parse, "config '" + path + "': " + e.what());
  }
  try {
    take(j, "command", c.command);
    take(j, "input", c.input);
    take(j, "output", c.output);
    if (j.contains("model")) {
      const Json& m = j.at("model");
      take(m, "family", c.family);
      take(m, "rank", c.rank);
      take(m, "structure", c.structure);
      take(m, "subject", c.columns.subject);
      take(m, "response", c.columns.response);
      take(m, "fixed", c.columns.fixed);
      take(m, "random", c.columns.random);
    }
    if (j.contains("fitter")) {
      const Json& f = j.at("fitter");
      take(f, "tolerance", c.tolerance);
      take(f, "max_iter", c.max_iter);
      take(f, "nu_grid", c.nu_grid);
      take(f, "init", c.init);
      take(f, "seed", c.seed);
    }
    if (j.contains("flags")) {
      const Json& f = j.at("flags");
      take(f, "se_louis", c.se_louis);
      take(f, "se_numerical", c.se_numerical);
      take(f, "random_effects", c.random_effects);
    }
    if (j.contains("simulation")) {
      const Json& s = j.at("simulation");
      take(s, "scenario", c.scenario);
      if (s.contains("N")) c.n_subjects = s.at("N").get<int>();
      take(s, "replicas", c.replicas);
      if (s.contains("grid")) {
        const Json& g = s.at("grid");
        take(g, "x_min", c.grid.x_min);
        take(g, "x_max", c.grid.x_max);
        take(g, "y_min", c.grid.y_min);
        take(g, "y_max", c.grid.y_max);
        take(g, "nx", c.grid.nx);
        take(g, "ny", c.grid.ny);
      }
    }
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::Parse, "config '" + path + "': " + e.what());
  }
}

FitConfig fit_config(const RunConfig& c) {
  FitConfig f;
  f.family = parse_family(c.family);
  f.rank = c.rank;
  f.structure = parse_structure(c.structure);
  f.tolerance = c.tolerance;
  f.max_iter = c.max_iter;
  f.nu_grid = c.nu_grid;
  f.init = parse_init_strategy(c.init);
  f.seed = c.seed;
  f.compute_se = c.se_louis;
  f.random_effects = c.random_effects;
  return f;
}

void require_output(const RunConfig& c) {
  if (c.output.empty()) throw Error(ErrorCode::InvalidArgument, "an output path is required (--output)");
}

int cmd_fit(const RunConfig& c) {
  if (c.input.empty()) throw Error(ErrorCode::InvalidArgument, "an input CSV is required (--input)");
  require_output(c);
  const LongDataset data = read_long_csv(c.input, c.columns);
  const FitConfig fc = fit_config(c);
  if (fc.init == InitStrategy::TrueValues)
    throw Error(ErrorCode::InvalidArgument, "true-values initialization is only available in simulations");
  const FitResult r = fit(data, fc);
  std::optional<VectorXd> se_n;
  if (c.se_numerical) {
    const HessianSe h = numerical_hessian_se(r.theta, data, 1e-4, fc.qmc);
    se_n = h.se;
    if (!h.se) std::cerr << "stlmm: numerical standard errors unavailable: " << h.message << '\n';
  }
  write_atomic(c.output, fit_report(r, data, se_n).dump(2) + "\n");
  if (!r.converged) {
    std::cerr << "stlmm: no convergence after " << r.n_iter << " iterations";
    if (!r.message.empty()) std::cerr << " (" << r.message << ")";
    std::cerr << '\n';
    return kExitNotConverged;
  }
  return kExitOk;
}

int cmd_simulate(const RunConfig& c) {
  require_output(c);
  const Scenario s = make_scenario(c.scenario, c.n_subjects);
  const SimulatedData sim = generate_dataset(s, c.seed);
  write_atomic(c.output, long_csv(sim.data));
  write_atomic(c.output + ".truth.json", truth_sidecar(s, c.seed).dump(2) + "\n");
  return kExitOk;
}

int cmd_mc_study(const RunConfig& c) {
  require_output(c);
  const Scenario s = make_scenario(c.scenario, c.n_subjects);
  McConfig mc;
  mc.replicas = c.replicas;
  mc.seed = c.seed;
  mc.fit = fit_config(c);
  mc.fit.structure = s.truth.structure;
  mc.numerical_se = c.se_numerical;
  const McSummary sum = run_monte_carlo(s, mc);
  write_atomic(c.output, mc_summary_csv(sum));
  Json side = Json::object();
  side["scenario"] = s.name;
  side["N"] = s.N;
  side["replicas"] = sum.requested;
  side["fitted"] = sum.fitted;
  side["converged"] = sum.converged;
  side["louis_available"] = sum.louis_ok;
  side["hessian_available"] = sum.hessian_ok;
  side["failures"] = sum.failures;
  write_atomic(c.output + ".meta.json", side.dump(2) + "\n");
  if (sum.fitted == 0) {
    std::cerr << "stlmm: no replica could be fitted\n";
    return kExitError;
  }
  return kExitOk;
}

int cmd_density_grid(const RunConfig& c) {
  require_output(c);
  const Scenario s = make_scenario(c.scenario, c.n_subjects);
  const MatrixXd d = contour_grid(effects_law(s.truth), c.grid);
  write_atomic(c.output, density_csv(d, c.grid));
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Skew-t linear mixed models: fitting, simulation and density grids"};
  app.set_version_flag("--version", "stlmm 0.1.0");
  app.fallthrough();
  std::string config_path;
  std::optional<int> threads;
  app.add_option("--config", config_path, "JSON run configuration; flags override its values");
  app.add_option("--threads", threads, "worker threads (default: STLMM_THREADS or all cores)");

  // flag overrides, applied on top of the config file
  std::optional<std::string> input, output, family, structure, init, subject, response, fixed, random, nu_grid,
      scenario;
  std::optional<int> rank, max_iter, n_subjects, replicas, nx, ny;
  std::optional<double> tolerance, x_min, x_max, y_min, y_max;
  std::optional<std::uint64_t> seed;
  bool no_se = false, se_numerical = false, random_effects = false;

  auto model_opts = [&](CLI::App* s) {
    s->add_option("--family", family, "N, T, SN or ST");
    s->add_option("--rank", rank, "skewness rank r (1-4)");
    s->add_option("--structure", structure, "full or diagonal");
    s->add_option("--tol", tolerance, "relative log-likelihood tolerance");
    s->add_option("--max-iter", max_iter, "iteration cap");
    s->add_option("--nu-grid", nu_grid, "nu search grid, lo:hi or a comma list");
    s->add_option("--init", init, "true-values, normal-plus-grid, sn-warmstart, hybrid or best-of");
    s->add_option("--seed", seed, "seed (STLMM_SEED overrides the config, this flag overrides both)");
    s->add_flag("--se-numerical", se_numerical, "also compute numerical-Hessian standard errors");
  };
  auto sim_opts = [&](CLI::App* s) {
    s->add_option("--scenario", scenario, "scenario name");
    s->add_option("-N,--subjects", n_subjects, "number of subjects");
  };

  CLI::App* fit_cmd = app.add_subcommand("fit", "fit a model to a long-format CSV");
  fit_cmd->add_option("-i,--input", input, "input CSV");
  fit_cmd->add_option("-o,--output", output, "report JSON");
  fit_cmd->add_option("--subject", subject, "subject column");
  fit_cmd->add_option("--response", response, "response column");
  fit_cmd->add_option("--fixed", fixed, "fixed-effect columns, comma separated; 1 is the intercept");
  fit_cmd->add_option("--random", random, "random-effect columns, comma separated; 1 is the intercept");
  fit_cmd->add_flag("--no-se", no_se, "skip Louis standard errors");
  fit_cmd->add_flag("--random-effects", random_effects, "report per-subject random-effect estimates");
  model_opts(fit_cmd);

  CLI::App* sim_cmd = app.add_subcommand("simulate", "write one simulated data set");
  sim_cmd->add_option("-o,--output", output, "output CSV (truth goes to <output>.truth.json)");
  sim_cmd->add_option("--seed", seed, "seed");
  sim_opts(sim_cmd);

  CLI::App* mc_cmd = app.add_subcommand("mc-study", "Monte Carlo study of the estimator");
  mc_cmd->add_option("-o,--output", output, "summary CSV");
  mc_cmd->add_option("--replicas", replicas, "number of replicas (default 100)");
  sim_opts(mc_cmd);
  model_opts(mc_cmd);

  CLI::App* grid_cmd = app.add_subcommand("density-grid", "random-effect density on a grid");
  grid_cmd->add_option("-o,--output", output, "output CSV");
  grid_cmd->add_option("--nx", nx, "points along the first coordinate");
  grid_cmd->add_option("--ny", ny, "points along the second coordinate");
  grid_cmd->add_option("--x-min", x_min);
  grid_cmd->add_option("--x-max", x_max);
  grid_cmd->add_option("--y-min", y_min);
  grid_cmd->add_option("--y-max", y_max);
  sim_opts(grid_cmd);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitError;
  }

  try {
    RunConfig c;
    if (!config_path.empty()) load_config(config_path, c);
    if (const char* env = std::getenv("STLMM_SEED")) {
      try {
        c.seed = std::stoull(env);
      } catch (const std::exception&) {
        throw Error(ErrorCode::InvalidArgument, std::string("STLMM_SEED is not an integer: '") + env + "'");
      }
    }
    for (auto* s : {fit_cmd, sim_cmd, mc_cmd, grid_cmd})
      if (s->parsed()) c.command = s->get_name();
    if (input) c.input = *input;
    if (output) c.output = *output;
    if (family) c.family = *family;
    if (rank) c.rank = *rank;
    if (structure) c.structure = *structure;
    if (tolerance) c.tolerance = *tolerance;
    if (max_iter) c.max_iter = *max_iter;
    if (nu_grid) c.nu_grid = parse_nu_grid(*nu_grid);
    if (init) c.init = *init;
    if (seed) c.seed = *seed;
    if (subject) c.columns.subject = *subject;
    if (response) c.columns.response = *response;
    if (fixed) c.columns.fixed = split_names(*fixed);
    if (random) c.columns.random = split_names(*random);
    if (no_se) c.se_louis = false;
    if (se_numerical) c.se_numerical = true;
    if (random_effects) c.random_effects = true;
    if (scenario) c.scenario = *scenario;
    if (n_subjects) c.n_subjects = *n_subjects;
    if (replicas) c.replicas = *replicas;
    if (nx) c.grid.nx = *nx;
    if (ny) c.grid.ny = *ny;
    if (x_min) c.grid.x_min = *x_min;
    if (x_max) c.grid.x_max = *x_max;
    if (y_min) c.grid.y_min = *y_min;
    if (y_max) c.grid.y_max = *y_max;
    if (threads) set_thread_count(*threads);
    if (c.rank > kMaxTruncRank || c.rank < 1) throw Error(ErrorCode::UnsupportedRank, "unsupported skewness rank");

    if (c.command == "fit") return cmd_fit(c);
    if (c.command == "simulate") return cmd_simulate(c);
    if (c.command == "mc-study") return cmd_mc_study(c);
    if (c.command == "density-grid") return cmd_density_grid(c);
    std::cerr << "stlmm: no command given (fit, simulate, mc-study or density-grid)\n" << app.help();
    return kExitError;
  } catch (const std::exception& e) {
    std::cerr << "stlmm: " << e.what() << '\n';
    return kExitError;
  }
}
