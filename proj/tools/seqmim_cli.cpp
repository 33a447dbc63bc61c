// seqmim: replica solver, GAMP / rBP / ERM experiments and the verification
// checks, driven by a JSON config. Run `seqmim --help` for the flags.

#include <CLI11.hpp>

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <sstream>
#include <thread>

#include "seqmim/io.hpp"
#include "seqmim/verify.hpp"

using namespace seqmim;
namespace fs = std::filesystem;

namespace {

constexpr const char* kVersion = "0.1.0";

struct Common {
  std::string config_path;
  std::string out_dir = ".";
  std::optional<std::uint64_t> seed;
  int workers = 1;
  std::optional<long> mc_samples;
  Json config = Json::object();
};

int default_workers() {
  if (const char* env = std::getenv("SEQMIM_WORKERS")) {
    try {
      const int w = std::stoi(env);
      if (w >= 1) return w;
    } catch (const std::exception&) {
    }
    fail(ErrorCode::validation, std::string("SEQMIM_WORKERS must be a positive integer, got '") + env + "'");
  }
  return 1;
}

std::string config_hash(const Json& j) {
  // FNV-1a over the canonical dump
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char ch : j.dump()) h = (h ^ ch) * 1099511628211ull;
  std::ostringstream s;
  s << std::hex << h;
  return s.str();
}

Table with_meta(Table t, const Common& c, const std::string& command, const std::string& seeds) {
  t.meta.insert(t.meta.begin(), {{"tool", std::string("seqmim ") + kVersion},
                                 {"command", command},
                                 {"config_hash", config_hash(c.config)},
                                 {"seeds", seeds}});
  return t;
}

std::string out_path(const Common& c, const std::string& name) {
  fs::create_directories(c.out_dir);
  return (fs::path(c.out_dir) / name).string();
}

std::string fmt(double x) { return format_number(x); }

template <class T>
T get_or(const Json& j, const char* key, T fallback) {
  if (!j.is_object() || !j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const Json::exception& e) {
    fail(ErrorCode::validation, std::string("config key '") + key + "': " + e.what());
  }
}

const Json& section(const Json& j, const char* key) {
  static const Json empty = Json::object();
  return j.contains(key) ? j.at(key) : empty;
}

ZooInstance load_model(const Common& c) {
  if (!c.config.contains("model")) fail(ErrorCode::validation, "config needs a 'model' section");
  return model_from_json(c.config.at("model"));
}

ZooInstance at_alpha(ZooInstance z, double alpha) {
  if (!(alpha >= 0)) fail(ErrorCode::validation, "alpha must be non-negative");
  z.spec.dims.alpha = alpha;
  return z;
}

std::vector<double> grid(const Common& c, const char* key, double fallback) {
  if (!c.config.contains(key)) return {fallback};
  const auto g = get_or<std::vector<double>>(c.config, key, {});
  if (g.empty()) fail(ErrorCode::validation, std::string("grid '") + key + "' is empty");
  return g;
}

std::vector<std::uint64_t> seeds_of(const Common& c) {
  if (c.seed) return {*c.seed};
  const auto s = get_or<std::vector<std::uint64_t>>(c.config, "seeds", {1});
  if (s.empty()) fail(ErrorCode::validation, "seed list is empty");
  return s;
}

std::string seed_list(const std::vector<std::uint64_t>& s) {
  std::string out;
  for (auto x : s) out += (out.empty() ? "" : " ") + std::to_string(x);
  return out;
}

SolverConfig solver_config(const Common& c) {
  SolverConfig cfg = solver_config_from_json(section(c.config, "solver"));
  cfg.mc_plan = mc_plan_from_json(section(c.config, "mc"));
  if (c.mc_samples) cfg.mc_plan.n_samples = *c.mc_samples;
  if (c.seed) cfg.mc_plan.seed = *c.seed;
  cfg.mc_plan.workers = c.workers;
  return cfg;
}

GampOptions gamp_options(const Json& j) {
  GampOptions o;
  o.max_iters = get_or(j, "max_iters", o.max_iters);
  o.tol = get_or(j, "tol", o.tol);
  o.damping = get_or(j, "damping", o.damping);
  o.adaptive_damping = get_or(j, "adaptive_damping", o.adaptive_damping);
  if (!(o.damping >= 0 && o.damping < 1)) fail(ErrorCode::validation, "gamp.damping must lie in [0, 1)");
  return o;
}

RbpOptions rbp_options(const Json& j) {
  RbpOptions o;
  o.max_iters = get_or(j, "max_iters", o.max_iters);
  o.tol = get_or(j, "tol", o.tol);
  o.damping = get_or(j, "damping", o.damping);
  if (!(o.damping >= 0 && o.damping < 1)) fail(ErrorCode::validation, "rbp.damping must lie in [0, 1)");
  return o;
}

int dimension(const Common& c, const ZooInstance& z) {
  const int d = get_or(c.config, "d", z.spec.dims.d);
  if (d < 1) fail(ErrorCode::validation, "d must be >= 1");
  return d;
}

long n_test(const Common& c) { return get_or<long>(c.config, "n_test", 20000); }

// ----- solve-se -----

int cmd_solve_se(const Common& c, bool cold) {
  const ZooInstance base = load_model(c);
  const auto alphas = grid(c, "alphas", base.spec.dims.alpha);
  const SolverConfig cfg = solver_config(c);

  Table t;
  t.columns = {"alpha", "eps_g", "eps_g_stderr", "eps_t", "phi", "phi_stderr", "iterations", "converged", "error"};
  std::optional<OrderParameters> previous;
  for (double alpha : alphas) {
    const ZooInstance z = at_alpha(base, alpha);
    SolverConfig run = cfg;
    if (previous && !cold) {
      run.init = InitKind::warm;
      run.warm_start = previous;
    }
    try {
      const auto rep = solve_fixed_point(z.spec, z.nu, run);
      t.add_row({fmt(alpha), fmt(rep.test_error.value), fmt(rep.test_error.stderr_), fmt(rep.train_loss.value),
                 fmt(rep.free_entropy.value), fmt(rep.free_entropy.stderr_), std::to_string(rep.iterations),
                 rep.converged ? "1" : "0", ""});
      write_json_file(out_path(c, "report_alpha_" + fmt(alpha) + ".json"), report_to_json(rep));
      if (run.record_trajectory)
        write_table(out_path(c, "se_trajectory_alpha_" + fmt(alpha) + ".csv"),
                    with_meta(se_trajectory_table(rep), c, "solve-se", std::to_string(run.mc_plan.seed)));
      if (rep.converged) previous = rep.params;
    } catch (const Error& e) {
      const std::string nan = fmt(std::nan(""));
      t.add_row({fmt(alpha), nan, nan, nan, nan, nan, "0", "0", std::string(e.what())});
    }
  }
  const Table out = with_meta(t, c, "solve-se", std::to_string(cfg.mc_plan.seed));
  write_table(out_path(c, "learning_curve.csv"), out);
  write_table(std::cout, out);
  return 0;
}

// ----- sweep -----

int cmd_sweep(const Common& c) {
  const ZooInstance base = load_model(c);
  const auto alphas = grid(c, "alphas", base.spec.dims.alpha);
  const auto lambdas = grid(c, "lambdas", base.spec.dims.lambda);
  SolverConfig cfg = solver_config(c);
  cfg.mc_plan.workers = 1;  // parallelism is across grid points here

  struct Point {
    double alpha, lambda;
    std::vector<std::string> row;
  };
  std::vector<Point> points;
  for (double l : lambdas)
    for (double a : alphas) points.push_back({a, l, {}});

  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i; (i = next++) < points.size();) {
      Point& p = points[i];
      try {
        ZooInstance z = at_alpha(base, p.alpha);
        z.spec.dims.lambda = p.lambda;
        const auto rep = solve_fixed_point(z.spec, z.nu, cfg);
        p.row = {fmt(p.alpha), fmt(p.lambda), fmt(rep.test_error.value), fmt(rep.train_loss.value),
                 fmt(rep.free_entropy.value), std::to_string(rep.iterations), rep.converged ? "1" : "0", ""};
      } catch (const Error& e) {
        const std::string nan = fmt(std::nan(""));
        p.row = {fmt(p.alpha), fmt(p.lambda), nan, nan, nan, "0", "0",
                 std::string(e.what())};
      }
    }
  };
  std::vector<std::thread> pool;
  const int n_threads = std::max(1, std::min<int>(c.workers, static_cast<int>(points.size())));
  for (int i = 1; i < n_threads; ++i) pool.emplace_back(work);
  work();
  for (auto& th : pool) th.join();

  Table t;
  t.columns = {"alpha", "lambda", "eps_g", "eps_t", "phi", "iterations", "converged", "error"};
  for (auto& p : points) t.add_row(std::move(p.row));
  const Table out = with_meta(t, c, "sweep", std::to_string(cfg.mc_plan.seed));
  write_table(out_path(c, "sweep.csv"), out);
  write_table(std::cout, out);
  return 0;
}

// ----- run-gamp / run-rbp -----

template <class F>
auto with_seed(std::uint64_t seed, F&& f) {
  try {
    return f();
  } catch (const Error& e) {
    std::string msg = e.what();
    const std::string prefix = std::string(to_string(e.code())) + ": ";
    if (msg.rfind(prefix, 0) == 0) msg.erase(0, prefix.size());
    throw Error(e.code(), "seed " + std::to_string(seed) + ": " + msg);
  }
}

int cmd_run_mp(const Common& c, bool gamp, bool rbp) {
  const ZooInstance base = load_model(c);
  const int d = dimension(c, base);
  const auto seeds = seeds_of(c);
  const GampOptions gopts = gamp_options(section(c.config, "gamp"));
  const RbpOptions ropts = rbp_options(section(c.config, "rbp"));
  const long n = std::lround(base.spec.dims.alpha * d);
  const std::string command = gamp ? "run-gamp" : "run-rbp";

  Table t;
  t.columns = {"seed", "algorithm", "iterations", "converged", "gradient_norm", "train_loss", "eps_g", "eps_g_stderr"};
  Json report = {{"model", model_to_json(base)}, {"d", d}, {"n", n}, {"runs", Json::array()}};
  for (std::uint64_t seed : seeds) {
    const Dataset ds = with_seed(seed, [&] { return generate_dataset(base.spec, base.nu, d, n, seed); });
    if (c.config.contains("save_dataset") && c.config.at("save_dataset").get<bool>())
      write_dataset(out_path(c, "dataset_seed_" + std::to_string(seed) + ".bin"), ds);
    auto finish = [&](const std::string& algo, const Matrix& w, int iters, bool conv,
                      const std::vector<SummaryStats>& traj) {
      const double gn = gd_gradient_norm(w, ds, base.spec, base.spec.loss);
      const double train = empirical_risk(w, ds, base.spec, base.spec.loss).value / d;
      const auto eg = empirical_test_error(w, base.spec, base.nu, base.spec.loss.test_eval, n_test(c),
                                           mix_seed(seed, 99));
      t.add_row({std::to_string(seed), algo, std::to_string(iters), conv ? "1" : "0", fmt(gn), fmt(train),
                 fmt(eg.value), fmt(eg.stderr_)});
      write_table(out_path(c, algo + "_trajectory_seed_" + std::to_string(seed) + ".csv"),
                  with_meta(stats_trajectory_table(traj), c, command, std::to_string(seed)));
      report["runs"].push_back({{"seed", seed}, {"algorithm", algo}, {"iterations", iters}, {"converged", conv},
                                {"gradient_norm", gn}, {"train_loss", train}, {"eps_g", eg.value},
                                {"eps_g_stderr", eg.stderr_}});
    };
    if (gamp) {
      const auto res = with_seed(seed, [&] { return gamp_run(ds, base.spec, base.spec.loss, gopts); });
      finish("gamp", res.w_hat, res.iterations, res.converged, res.trajectory);
    }
    if (rbp) {
      const auto res = with_seed(seed, [&] { return rbp_run(ds, base.spec, base.spec.loss, ropts); });
      finish("rbp", res.w_hat, res.iterations, res.converged, res.trajectory);
    }
  }
  const Table out = with_meta(t, c, command, seed_list(seeds));
  write_table(out_path(c, command == "run-gamp" ? "gamp_runs.csv" : "rbp_runs.csv"), out);
  write_json_file(out_path(c, command == "run-gamp" ? "gamp_report.json" : "rbp_report.json"), report);
  write_table(std::cout, out);
  return 0;
}

// ----- run-erm -----

TrainConfig train_config(const Json& j) {
  TrainConfig tc;
  tc.max_epochs = get_or(j, "max_epochs", tc.max_epochs);
  tc.grad_threshold = get_or(j, "grad_threshold", tc.grad_threshold);
  tc.step = get_or(j, "step", tc.step);
  const auto policy = get_or<std::string>(j, "step_policy", "backtracking");
  if (policy == "fixed") tc.step_policy = StepPolicy::fixed;
  else if (policy != "backtracking") fail(ErrorCode::validation, "unknown erm.step_policy '" + policy + "'");
  const auto init = get_or<std::string>(j, "init", "zero");
  if (init == "gaussian") tc.init = WeightInit::gaussian;
  else if (init != "zero") fail(ErrorCode::validation, "erm.init must be 'zero' or 'gaussian'");
  tc.init_sigma = get_or(j, "init_sigma", tc.init_sigma);
  return tc;
}

int cmd_run_erm(const Common& c) {
  const ZooInstance base = load_model(c);
  const auto alphas = grid(c, "alphas", base.spec.dims.alpha);
  const int d = dimension(c, base);
  const auto seeds = seeds_of(c);
  TrainConfig tc = train_config(section(c.config, "erm"));

  Table t;
  bool have_stat_columns = false;
  for (double alpha : alphas) {
    const ZooInstance z = at_alpha(base, alpha);
    const long n = std::lround(alpha * d);
    for (std::uint64_t seed : seeds) {
      with_seed(seed, [&] {
        const Dataset ds = generate_dataset(z.spec, z.nu, d, n, seed);
        tc.seed = seed;
        const TrainResult tr = erm_train(ds, z.spec, z.spec.loss, tc);
        const auto eg =
            empirical_test_error(tr.w_hat, z.spec, z.nu, z.spec.loss.test_eval, n_test(c), mix_seed(seed, 99));
        const SummaryStats st = summary_statistics(tr.w_hat, ds);
        if (!have_stat_columns) {
          t.columns = {"alpha", "seed", "eps_g", "eps_g_stderr", "train_loss", "grad_norm", "iterations", "converged"};
          const Table s = stats_trajectory_table({st});
          for (std::size_t k = 1; k < s.columns.size(); ++k)
            if (s.columns[k] != "residual") t.columns.push_back(s.columns[k]);
          have_stat_columns = true;
        }
        std::vector<std::string> row{fmt(alpha),         std::to_string(seed), fmt(eg.value),
                                     fmt(eg.stderr_),    fmt(tr.train_loss_per_sample),
                                     fmt(tr.grad_norm),  std::to_string(tr.iterations),
                                     tr.converged ? "1" : "0"};
        for (double x : flatten_stats(st)) row.push_back(fmt(x));
        t.add_row(std::move(row));
        return 0;
      });
    }
  }
  const Table out = with_meta(t, c, "run-erm", seed_list(seeds));
  write_table(out_path(c, "erm_curve.csv"), out);
  write_table(std::cout, out);
  return 0;
}

// ----- verify -----

int cmd_verify(const Common& c, std::string name, bool break_onsager) {
  if (name.empty()) name = get_or<std::string>(c.config, "instance", "");
  if (name.empty()) fail(ErrorCode::validation, "verify needs an instance name");
  const Json& vj = section(c.config, "verify");
  const double alpha = get_or(vj, "alpha", 1.0);
  ZooInstance z = make_instance(name, alpha);

  std::vector<CheckResult> checks;
  auto add = [&](CheckResult r) {
    std::cout << format_check(r) << "\n" << std::flush;
    checks.push_back(std::move(r));
  };
  auto guarded = [&](const std::string& label, const std::function<CheckResult()>& f) {
    try {
      add(f());
    } catch (const Error& e) {
      add({label, false, std::nan(""), 0.0, std::string(e.what())});
    }
  };

  McPlan gh;
  gh.method = QuadratureMethod::gauss_hermite;
  gh.gh_order = z.spec.dims.L * z.spec.dims.r > 1 ? 10 : 20;

  SolverConfig cfg = solver_config(c);
  if (!section(c.config, "mc").contains("method") && !c.mc_samples) cfg.mc_plan = gh;
  cfg.mc_plan.workers = c.workers;
  cfg.tol = get_or(section(c.config, "solver"), "tol", 1e-10);
  cfg.max_iters = get_or(section(c.config, "solver"), "max_iters", 3000);

  std::optional<FixedPointReport> rep;
  guarded("saddle-point solve", [&] {
    rep = solve_fixed_point(z.spec, z.nu, cfg);
    return CheckResult{"saddle-point solve converged", rep->converged,
                       rep->residual_history.empty() ? 0.0 : rep->residual_history.back(), cfg.tol,
                       name + ", alpha=" + fmt(alpha) + ", " + std::to_string(rep->iterations) + " iterations"};
  });
  if (rep) {
    McPlan fresh;
    fresh.n_samples = get_or<long>(vj, "fresh_samples", 200000);
    fresh.seed = get_or<std::uint64_t>(vj, "fresh_seed", 777);
    fresh.workers = c.workers;
    guarded("fixed-point residual", [&] { return check_fixed_point_residual(z, *rep, cfg.tol, fresh, cfg.mc_plan); });
    guarded("invariants", [&] { return check_invariants_hold(z, *rep); });
    guarded("free-energy identity", [&] { return check_free_energy_identity(name, *rep, cfg.tol); });
  }

  SeGampCheck se;
  se.d = get_or(vj, "se_d", se.d);
  se.iterations = get_or(vj, "se_iterations", se.iterations);
  se.seeds = get_or(vj, "se_seeds", se.seeds);
  se.onsager = !break_onsager;
  se.plan = gh;
  se.plan.workers = c.workers;
  guarded("SE tracks GAMP", [&] { return check_se_tracks_gamp(z, se); });

  GampCriticalCheck gc;
  gc.d = get_or(vj, "critical_d", gc.d);
  gc.gamp.tol = 1e-12;
  gc.gamp.max_iters = 3000;
  const double critical_alpha = get_or(vj, "critical_alpha", 2.0);
  guarded("GAMP critical point", [&] { return check_gamp_critical_point(at_alpha(z, critical_alpha), gc); });

  if (z.spec.dims.L == 1) {
    RbpGampCheck rb;
    guarded("rBP matches GAMP", [&] { return check_rbp_matches_gamp(at_alpha(z, double(rb.n) / rb.d), rb); });
  }

  if (get_or(vj, "erm", name == "logistic_gmm")) {
    ErmCheck ec;
    ec.d = get_or(vj, "erm_d", ec.d);
    ec.seeds = get_or(vj, "erm_seeds", ec.seeds);
    ec.train.grad_threshold = 1e-7;
    ec.solver.mc_plan = gh;
    ec.solver.mc_plan.gh_order = 40;
    ec.solver.tol = 1e-10;
    ec.solver.max_iters = 3000;
    ec.test_plan.n_samples = 1000000;
    ec.test_plan.seed = 2024;
    guarded("replica predicts ERM", [&] { return check_replica_predicts_erm(z, ec); });
  }

  int failed = 0;
  Json report = {{"instance", name}, {"alpha", alpha}, {"break_onsager", break_onsager}, {"checks", Json::array()}};
  for (const auto& r : checks) {
    failed += !r.passed;
    report["checks"].push_back(
        {{"name", r.name}, {"passed", r.passed}, {"value", r.value}, {"tolerance", r.tolerance}, {"detail", r.detail}});
  }
  report["passed"] = failed == 0;
  write_json_file(out_path(c, "verify_" + name + ".json"), report);
  std::cout << (failed ? "FAILED " : "ALL PASSED ") << checks.size() - failed << "/" << checks.size() << "\n";
  return failed ? 1 : 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Replica saddle-point solver, GAMP/rBP/ERM experiments and cross-checks for the sequence "
               "multi-index model"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  Common c;
  std::optional<int> workers;
  app.add_option("--config", c.config_path, "JSON config file")->check(CLI::ExistingFile);
  app.add_option("--out", c.out_dir, "output directory (created if missing)")->capture_default_str();
  app.add_option("--seed", c.seed, "override the seed (dataset seed list or Monte Carlo seed)");
  app.add_option("--workers", workers, "worker threads (default: $SEQMIM_WORKERS or 1)")->check(CLI::PositiveNumber);
  app.add_option("--mc-samples", c.mc_samples, "Monte Carlo sample count for the solver")->check(CLI::PositiveNumber);

  bool cold = false;
  auto* solve = app.add_subcommand("solve-se", "solve the saddle-point equations over the alpha grid");
  solve->add_flag("--cold", cold, "cold start at every alpha instead of warm-starting from the previous one");
  auto* gamp = app.add_subcommand("run-gamp", "run GAMP on generated datasets");
  bool also_rbp = false;
  gamp->add_flag("--rbp", also_rbp, "also run rBP on the same datasets");
  auto* rbp = app.add_subcommand("run-rbp", "run relaxed belief propagation on generated datasets");
  auto* erm = app.add_subcommand("run-erm", "gradient-descent ERM learning curves");
  auto* sweep = app.add_subcommand("sweep", "alpha x lambda grid of independent solves (parallel over points)");
  std::string instance;
  bool break_onsager = false;
  auto* verify = app.add_subcommand("verify", "cross-check solver, GAMP, rBP and gradient descent on a zoo instance");
  verify->add_option("instance", instance, "ridge, logistic_gmm, square_gmm or multitoken");
  verify->add_flag("--break-onsager", break_onsager, "drop the Onsager terms from GAMP (the SE check must fail)");

  for (auto* sub : {solve, gamp, rbp, erm, sweep, verify}) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    c.workers = workers ? *workers : default_workers();
    if (!c.config_path.empty()) c.config = read_json_file(c.config_path);
    if (!c.config.is_object()) fail(ErrorCode::validation, "config must be a JSON object");
    if (*solve) return cmd_solve_se(c, cold);
    if (*gamp) return cmd_run_mp(c, true, also_rbp);
    if (*rbp) return cmd_run_mp(c, false, true);
    if (*erm) return cmd_run_erm(c);
    if (*sweep) return cmd_sweep(c);
    if (*verify) return cmd_verify(c, instance, break_onsager);
  } catch (const Error& e) {
    std::cerr << "seqmim: " << e.what() << "\n";
    return exit_status(e.code());
  } catch (const std::exception& e) {
    std::cerr << "seqmim: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
