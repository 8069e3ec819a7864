#include "cli/cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <fstream>
#include <ostream>
#include <set>

#include "cli/commands.hpp"
#include "rtk/errors.hpp"

namespace rtk::cli {

namespace {

void add_system(CLI::App* app, SystemOptions& s) {
  app->add_option("--matrix", s.matrix, "Matrix Market input (generated when omitted)");
  app->add_option("--rhs", s.rhs, "right-hand side vector file (Gaussian when omitted)");
  app->add_option("--n", s.n, "generated matrix size")->capture_default_str();
  app->add_option("--density", s.density, "off-diagonal fill of the generator factor")
      ->capture_default_str();
  app->add_option("--diag", s.diag, "diagonal of the generator factor")->capture_default_str();
  app->add_option("--seed", s.seed, "matrix and right-hand side seed")->capture_default_str();
  app->add_option("--kind", s.kind, "generated matrix kind")
      ->check(CLI::IsMember({"spd", "nonsymmetric"}))
      ->capture_default_str();
}

const auto kMethods = CLI::IsMember({"cg", "cr", "gmres"});

// Turns `--config FILE` into leading arguments. Keys given on the command
// line win; list-valued keys are not merged.
std::vector<std::string> expand_config(CLI::App* sub, std::vector<std::string> rest) {
  std::string path;
  std::vector<std::string> kept;
  for (std::size_t i = 0; i < rest.size(); ++i) {
    if (rest[i] == "--config") {
      if (i + 1 >= rest.size()) throw ValidationError("--config needs a file name");
      path = rest[++i];
    } else if (rest[i].rfind("--config=", 0) == 0) {
      path = rest[i].substr(9);
    } else {
      kept.push_back(rest[i]);
    }
  }
  if (path.empty()) return kept;

  std::ifstream in(path);
  if (!in) throw ValidationError("cannot read config file " + path);
  std::set<std::string> given;
  for (const auto& a : kept)
    if (a.rfind("--", 0) == 0) given.insert(a.substr(2, a.find('=') == std::string::npos ? std::string::npos : a.find('=') - 2));

  std::vector<std::string> expanded;
  for (const auto& item : CLI::ConfigTOML().from_config(in)) {
    if (!item.parents.empty()) throw ValidationError("config sections are not supported: " + item.fullname());
    const CLI::Option* opt = sub->get_option_no_throw("--" + item.name);
    if (opt == nullptr) throw ValidationError("unknown config key '" + item.name + "'");
    if (given.count(item.name)) continue;
    if (opt->get_expected_max() == 0) {
      const std::string v = item.inputs.empty() ? "true" : item.inputs.front();
      if (v == "true" || v == "1" || v == "yes" || v == "on") expanded.push_back("--" + item.name);
      else if (v != "false" && v != "0" && v != "no" && v != "off")
        throw ValidationError("config key '" + item.name + "' expects a boolean");
      continue;
    }
    expanded.push_back("--" + item.name);
    for (const auto& v : item.inputs) expanded.push_back(v);
  }
  expanded.insert(expanded.end(), kept.begin(), kept.end());
  return expanded;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Randomized truncation of Krylov solvers", "rtk"};
  app.require_subcommand(1);
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);

  GenMatrixOptions gen;
  auto* c_gen = app.add_subcommand("gen-matrix", "write a random sparse test matrix");
  add_system(c_gen, gen.system);
  c_gen->add_option("--out", gen.out, "output Matrix Market file")->required();
  c_gen->add_option("--rhs-out", gen.rhs_out, "also write the right-hand side");

  SolveOptions solve;
  auto* c_solve = app.add_subcommand("solve", "one randomized (or deterministic) solve");
  add_system(c_solve, solve.system);
  c_solve->add_option("--method", solve.method)->check(kMethods)->capture_default_str();
  c_solve->add_option("--estimator", solve.estimator)
      ->check(CLI::IsMember({"det", "as", "rr"}))
      ->capture_default_str();
  c_solve->add_option("--eta", solve.eta, "AS parameter")->capture_default_str();
  c_solve->add_option("--rr-min", solve.rr_min, "RR deterministic prefix")->capture_default_str();
  c_solve->add_option("--rr-lambda", solve.rr_lambda, "RR temperature")->capture_default_str();
  c_solve->add_option("--tol", solve.tol)->capture_default_str();
  c_solve->add_option("--maxit", solve.maxit)->capture_default_str();
  c_solve->add_option("--trial-seed", solve.trial_seed)->capture_default_str();
  c_solve->add_option("--history", solve.history, "per-iteration CSV of the deterministic run");
  c_solve->add_option("--schedule-out", solve.schedule_out, "realized truncation schedule CSV");
  c_solve->add_option("--solution-out", solve.solution_out, "estimate vector file");

  TradeoffOptions trade;
  auto* c_trade = app.add_subcommand("tradeoff", "error versus average cost sweeps");
  auto* o_n = c_trade->add_option("--n", trade.n)->capture_default_str();
  auto* o_dens = c_trade->add_option("--density", trade.density)->capture_default_str();
  c_trade->add_option("--diags", trade.diags, "one system per diagonal value")
      ->delimiter(',')
      ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll)
      ->capture_default_str();
  c_trade->add_option("--seed", trade.seed, "matrix seed")->capture_default_str();
  c_trade->add_option("--trial-seed", trade.trial_seed)->capture_default_str();
  auto* o_trials = c_trade->add_option("--trials", trade.trials)->capture_default_str();
  c_trade->add_option("--tol", trade.tol)->capture_default_str();
  c_trade->add_option("--maxit", trade.maxit)->capture_default_str();
  c_trade->add_option("--method", trade.method)->check(kMethods)->capture_default_str();
  c_trade->add_option("--etas", trade.etas, "explicit AS grid (default: matched to RR costs)")
      ->delimiter(',')
      ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
  c_trade->add_option("--rr-lambdas", trade.rr_lambdas)
      ->delimiter(',')
      ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll)
      ->capture_default_str();
  c_trade->add_option("--rr-mins", trade.rr_mins)
      ->delimiter(',')
      ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll)
      ->capture_default_str();
  c_trade->add_flag("--unmatched", trade.unmatched, "use --rr-mins for every lambda");
  c_trade->add_option("--mode", trade.mode)
      ->check(CLI::IsMember({"replay", "live"}))
      ->capture_default_str();
  c_trade->add_option("--workers", trade.workers)->capture_default_str();
  c_trade->add_option("--out-prefix", trade.out_prefix)->capture_default_str();
  c_trade->add_flag("--full-scale", trade.full_scale, "n=500, density 0.16, 300000 trials");

  OracleCheckOptions oracle;
  auto* c_oracle = app.add_subcommand("oracle-check", "compare AS schedules with the numerical optimum");
  c_oracle->add_option("--suite", oracle.suite)
      ->check(CLI::IsMember({"diminishing", "adversarial", "edge", "all"}))
      ->capture_default_str();
  c_oracle->add_option("--instances", oracle.instances)->capture_default_str();
  c_oracle->add_option("--size", oracle.size, "iterations per instance")->capture_default_str();
  c_oracle->add_option("--seed", oracle.seed)->capture_default_str();
  c_oracle->add_option("--restarts", oracle.restarts)->capture_default_str();
  c_oracle->add_option("--workers", oracle.workers)->capture_default_str();
  c_oracle->add_option("--out", oracle.out, "CSV copy of the table");

  GpTrainOptions gpo;
  auto add_gp_data = [](CLI::App* c, GpTrainOptions& g) {
    c->add_option("--data", g.data, "headerless numeric CSV (synthetic when omitted)");
    c->add_option("--target-col", g.target_col, "target column, negative counts from the end")
        ->capture_default_str();
    c->add_option("--n", g.n, "synthetic points")->capture_default_str();
    c->add_option("--d", g.d, "synthetic input dimension")->capture_default_str();
    c->add_option("--data-seed", g.data_seed)->capture_default_str();
    c->add_option("--true-gamma", g.true_gamma)->capture_default_str();
    c->add_option("--true-l", g.true_l)->capture_default_str();
    c->add_option("--true-sigma2", g.true_sigma2)->capture_default_str();
    c->add_option("--init-gamma", g.init_gamma)->capture_default_str();
    c->add_option("--init-l", g.init_l)->capture_default_str();
    c->add_option("--init-sigma2", g.init_sigma2)->capture_default_str();
  };
  auto* c_gp = app.add_subcommand("gp-train", "train GP hyperparameters with Adam");
  add_gp_data(c_gp, gpo);
  c_gp->add_option("--solver", gpo.solvers, "cholesky, cg, as, rr (comma list)")
      ->delimiter(',')
      ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll)
      ->check(CLI::IsMember({"cholesky", "cg", "as", "rr"}))
      ->capture_default_str();
  c_gp->add_option("--cg-iters", gpo.cg_iters)->capture_default_str();
  c_gp->add_option("--eta", gpo.eta)->capture_default_str();
  c_gp->add_option("--rr-min", gpo.rr_min)->capture_default_str();
  c_gp->add_option("--rr-lambda", gpo.rr_lambda)->capture_default_str();
  c_gp->add_option("--tol", gpo.tol)->capture_default_str();
  c_gp->add_option("--steps", gpo.steps)->capture_default_str();
  c_gp->add_option("--lr", gpo.lr)->capture_default_str();
  c_gp->add_option("--probes", gpo.probes)->capture_default_str();
  c_gp->add_option("--seed", gpo.seed)->capture_default_str();
  c_gp->add_flag("--single-solve", gpo.single_solve, "reuse one solve in the quadratic term");
  c_gp->add_flag("--no-warm-start", gpo.no_warm_start);
  c_gp->add_option("--out-prefix", gpo.out_prefix)->capture_default_str();

  CalibrateOptions cal;
  auto* c_cal = app.add_subcommand("calibrate-cost", "find AS/RR parameters for a target cost");
  c_cal->add_option("--system", cal.system_kind)
      ->check(CLI::IsMember({"linear", "gp"}))
      ->capture_default_str();
  c_cal->add_option("--matrix", cal.system.matrix);
  c_cal->add_option("--rhs", cal.system.rhs);
  c_cal->add_option("--density", cal.system.density)->capture_default_str();
  c_cal->add_option("--diag", cal.system.diag)->capture_default_str();
  c_cal->add_option("--seed", cal.system.seed)->capture_default_str();
  c_cal->add_option("--kind", cal.system.kind)
      ->check(CLI::IsMember({"spd", "nonsymmetric"}))
      ->capture_default_str();
  c_cal->add_option("--method", cal.method)->check(kMethods)->capture_default_str();
  c_cal->add_option("--tol", cal.tol)->capture_default_str();
  c_cal->add_option("--maxit", cal.maxit)->capture_default_str();
  c_cal->add_option("--target", cal.target, "average iterations to match")->required();
  c_cal->add_option("--rr-lambdas", cal.rr_lambdas)
      ->delimiter(',')
      ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll)
      ->capture_default_str();
  c_cal->add_option("--out", cal.out, "CSV copy of the result");
  add_gp_data(c_cal, cal.gp);  // --n is shared: matrix size or GP points

  try {
    std::vector<std::string> argv = args;
    if (!argv.empty()) {
      if (CLI::App* sub = app.get_subcommand_no_throw(argv.front())) {
        std::vector<std::string> rest(argv.begin() + 1, argv.end());
        rest = expand_config(sub, rest);
        argv.assign(1, argv.front());
        argv.insert(argv.end(), rest.begin(), rest.end());
      }
    }
    std::reverse(argv.begin(), argv.end());
    app.parse(argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return 0;
    err << "error: " << e.what() << '\n';
    return 1;
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }

  try {
    if (c_gen->parsed()) {
      cmd_gen_matrix(gen, out);
    } else if (c_solve->parsed()) {
      cmd_solve(solve, out);
    } else if (c_trade->parsed()) {
      trade.n_set = o_n->count() > 0;
      trade.density_set = o_dens->count() > 0;
      trade.trials_set = o_trials->count() > 0;
      cmd_tradeoff(trade, out);
    } else if (c_oracle->parsed()) {
      if (!cmd_oracle_check(oracle, out)) {
        err << "error: oracle checks failed\n";
        return 2;
      }
    } else if (c_gp->parsed()) {
      cmd_gp_train(gpo, out);
    } else if (c_cal->parsed()) {
      cal.system.n = c_cal->get_option("--n")->count() > 0 ? cal.gp.n : SystemOptions{}.n;
      cmd_calibrate_cost(cal, out);
    }
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  } catch (const NumericalError& e) {
    err << "numerical failure: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

}  // namespace rtk::cli
