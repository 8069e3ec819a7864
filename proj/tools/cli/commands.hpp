#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace rtk::cli {

struct SystemOptions {
  std::string matrix;  // Matrix Market file; empty generates one
  std::string rhs;     // vector file; empty draws a Gaussian right-hand side
  long n = 500;
  double density = 0.16;
  double diag = 10.0;
  std::uint64_t seed = 1;
  std::string kind = "spd";  // spd | nonsymmetric
};

struct GenMatrixOptions {
  SystemOptions system;
  std::string out;
  std::string rhs_out;
};

struct SolveOptions {
  SystemOptions system;
  std::string method = "cg";
  std::string estimator = "as";  // det | as | rr
  double eta = 10.0;
  int rr_min = 0;
  double rr_lambda = 0.05;
  double tol = 1e-8;
  int maxit = 10000;
  std::uint64_t trial_seed = 7;
  std::string history;
  std::string schedule_out;
  std::string solution_out;
};

struct TradeoffOptions {
  long n = 200;
  double density = 0.5;
  std::vector<double> diags{10.0};
  std::uint64_t seed = 1;
  std::uint64_t trial_seed = 7;
  long trials = 20000;
  double tol = 1e-8;
  int maxit = 10000;
  std::string method = "cg";
  std::vector<double> etas;  // empty: match AS costs to the RR grid
  std::vector<double> rr_lambdas{0.05, 0.10};
  std::vector<int> rr_mins{0, 10, 20, 30, 40};
  bool unmatched = false;    // use rr_mins for every lambda instead of matching costs
  std::string mode = "replay";
  int workers = 1;
  std::string out_prefix = "tradeoff";
  bool full_scale = false;
  // which size fields were given explicitly (full scale fills the rest)
  bool n_set = false, density_set = false, trials_set = false;
};

struct OracleCheckOptions {
  std::string suite = "all";  // diminishing | adversarial | edge | all
  int instances = 5;
  int size = 8;
  std::uint64_t seed = 3;
  int restarts = 50;
  int workers = 1;
  std::string out;
};

struct GpTrainOptions {
  std::string data;  // headerless CSV; empty uses synthetic data
  int target_col = -1;
  long n = 300;
  long d = 4;
  std::uint64_t data_seed = 15;
  double true_gamma = 1.0, true_l = 0.7, true_sigma2 = 0.15;
  double init_gamma = 1.0, init_l = 1.0, init_sigma2 = 0.2;
  std::vector<std::string> solvers{"cholesky"};
  int cg_iters = 20;
  double eta = 10.0;
  int rr_min = 0;
  double rr_lambda = 0.05;
  double tol = 1e-10;
  int steps = 100;
  double lr = 0.01;
  int probes = 30;
  std::uint64_t seed = 5;
  bool single_solve = false;
  bool no_warm_start = false;
  std::string out_prefix = "gp";
};

struct CalibrateOptions {
  std::string system_kind = "linear";  // linear | gp
  SystemOptions system;
  std::string method = "cg";
  double tol = 1e-8;
  int maxit = 10000;
  double target = 0.0;
  std::vector<double> rr_lambdas{0.05, 0.10};
  GpTrainOptions gp;  // data and init parameters when system_kind = gp
  std::string out;
};

void cmd_gen_matrix(const GenMatrixOptions& o, std::ostream& out);
void cmd_solve(const SolveOptions& o, std::ostream& out);
void cmd_tradeoff(const TradeoffOptions& o, std::ostream& out);
/// Returns false when any check failed.
bool cmd_oracle_check(const OracleCheckOptions& o, std::ostream& out);
void cmd_gp_train(const GpTrainOptions& o, std::ostream& out);
void cmd_calibrate_cost(const CalibrateOptions& o, std::ostream& out);

}  // namespace rtk::cli
