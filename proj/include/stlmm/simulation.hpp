#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "stlmm/ecme.hpp"

namespace stlmm {

/// A generator design: y_i = X beta + Z b_i + eps_i with a common time grid x,
/// X = [1, x (, x^2)], Z = [1, x], and (b_i, eps_i) from the joint ST law.
struct Scenario {
  std::string name;
  int N = 200;
  VectorXd x;
  bool quadratic = false;  // adds x^2 to X
  Theta truth;
  std::string note;
};

/// illus-a..illus-d (nu = 10 as given), illus-a-nu5..illus-d-nu5, study1, study2.
std::vector<std::string> scenario_names();
/// Throws InvalidArgument listing the valid names.
Scenario make_scenario(const std::string& name, std::optional<int> N = std::nullopt);

/// Law of b_i: ST_{q,r}(b(nu) Delta 1, D, Delta, nu).
CfustParams effects_law(const Theta& truth);

struct SimulatedData {
  LongDataset data;
  Theta truth;
  MatrixXd effects;  // N x q, row i is b_i in dataset order
};

SimulatedData generate_dataset(const Scenario& scenario, std::uint64_t replica_seed);

/// Counter-derived seed for replica k.
std::uint64_t replica_seed(std::uint64_t base, std::uint64_t k);

struct McConfig {
  int replicas = 100;
  std::uint64_t seed = 2024;
  FitConfig fit;
  bool numerical_se = false;
};

struct McRow {
  std::string parameter;
  double truth;
  double mc_av;
  std::optional<double> mc_sd;  // absent with a single replica
  std::optional<double> se_l_mean;
  std::optional<double> se_n_mean;
  int n_ok;
};

struct McSummary {
  std::vector<McRow> rows;
  int requested = 0;
  int fitted = 0;         // replicas with estimates
  int converged = 0;
  int louis_ok = 0;
  int hessian_ok = 0;
  std::vector<std::string> names;       // theta* names followed by nu when estimated
  MatrixXd estimates;                   // fitted x names
  std::vector<std::string> failures;    // one message per failed replica
  std::vector<std::string> init_chosen; // per fitted replica
};

McSummary run_monte_carlo(const Scenario& scenario, const McConfig& config);

struct GridSpec {
  double x_min = -4, x_max = 4;
  double y_min = -4, y_max = 4;
  int nx = 101, ny = 101;
};

/// Density of a bivariate law on a rectangular grid: entry (i, j) is at
/// (x_j, y_i), rows running along y.
MatrixXd contour_grid(const CfustParams& params, const GridSpec& grid);

}  // namespace stlmm
