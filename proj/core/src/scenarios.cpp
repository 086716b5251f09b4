#include "thermistor/scenarios.hpp"

#include "thermistor/carleman.hpp"
#include "thermistor/control.hpp"
#include "thermistor/errors.hpp"
#include "thermistor/simulator.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

namespace thermistor {

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

class CsvFile {
 public:
  CsvFile(const std::string& dir, const std::string& name) {
    std::filesystem::create_directories(dir);
    path_ = dir + "/" + name;
    out_.open(path_, std::ios::trunc);
    if (!out_) throw IoError("cannot open " + path_ + " for writing");
  }
  void header(const std::vector<std::string>& cols) {
    for (std::size_t i = 0; i < cols.size(); ++i) out_ << (i ? "," : "") << cols[i];
    out_ << "\n";
  }
  void row(const std::vector<double>& vals) {
    for (std::size_t i = 0; i < vals.size(); ++i) out_ << (i ? "," : "") << fmt(vals[i]);
    out_ << "\n";
  }
  void raw_row(const std::vector<std::string>& vals) {
    for (std::size_t i = 0; i < vals.size(); ++i) out_ << (i ? "," : "") << vals[i];
    out_ << "\n";
  }

 private:
  std::string path_;
  std::ofstream out_;
};

void write_report(const std::string& dir, const RunReport& rep) {
  CsvFile csv(dir, "report.csv");
  std::vector<std::string> cols{"scenario", "exit_code"};
  std::vector<std::string> vals{rep.scenario, std::to_string(rep.exit_code)};
  for (const auto& [k, v] : rep.metrics) {
    cols.push_back(k);
    vals.push_back(fmt(v));
  }
  csv.header(cols);
  csv.raw_row(vals);
}

void write_trajectory(const std::string& dir, const TrajectoryPair& traj) {
  CsvFile csv(dir, "trajectory.csv");
  csv.header({"t", "y_l2", "y_h1_semi", "y_lap_l2", "p_l2", "p_h1_semi", "p_lap_l2"});
  for (int j = 0; j <= traj.tgrid.n_steps; ++j) {
    const FieldNorms ny = norms(traj.y[static_cast<std::size_t>(j)], traj.grid);
    const FieldNorms np = norms(traj.p[static_cast<std::size_t>(j)], traj.grid);
    csv.row({traj.tgrid.times[static_cast<std::size_t>(j)], ny.l2, ny.h1_semi, ny.lap_l2, np.l2,
             np.h1_semi, np.lap_l2});
  }
}

void write_energy(const std::string& dir, const EnergySeries& es) {
  CsvFile csv(dir, "energy.csv");
  csv.header({"t", "S", "y_l2_sq", "y_h1_sq", "y_lap_sq", "y_t_h1_sq", "p_l2_sq", "p_h1_sq",
              "p_lap_sq", "p_t_h1_sq"});
  for (std::size_t j = 0; j < es.times.size(); ++j) {
    std::vector<double> row{es.times[j], es.S[j]};
    for (const auto& c : es.comp) row.push_back(c[j]);
    csv.row(row);
  }
}

void write_weights(const std::string& dir, const WeightFamily& w, const TimeGrid& tgrid) {
  CsvFile csv(dir, "weights.csv");
  csv.header({"t", "log_rho", "log_rho0", "log_rho1", "log_rho2", "log_rho3", "log_rho4",
              "log_rho5", "log_rho6"});
  for (int j = 0; j <= tgrid.n_steps; ++j) {
    const double t = tgrid.times[static_cast<std::size_t>(j)];
    std::vector<double> row{t, w.log_rho(t)};
    for (int k = 0; k <= 6; ++k) row.push_back(w.log_rho_k(k, t));
    csv.row(row);
  }
}

void write_control(const std::string& dir, const ControlGrid& v, const TrajectoryPair& traj,
                   const WeightFamily* weights, double omega_a, double omega_b) {
  CsvFile csv(dir, "control.csv");
  csv.header({"t", "x", "v"});
  const Grid1D& grid = traj.grid;
  for (std::size_t j = 0; j < v.size(); ++j) {
    const double t = traj.tgrid.times[j];
    for (int i = 0; i < grid.n_interior(); ++i) {
      const double x = grid.interior_x(i);
      if (x >= omega_a && x <= omega_b) csv.row({t, x, v[j][i]});
    }
  }
  CsvFile sum(dir, "control_summary.csv");
  sum.header({"t", "y_l2", "p_l2", "log_rho2"});
  for (int j = 0; j <= traj.tgrid.n_steps; ++j) {
    const double t = traj.tgrid.times[static_cast<std::size_t>(j)];
    sum.row({t, l2_norm(traj.y[static_cast<std::size_t>(j)], grid),
             l2_norm(traj.p[static_cast<std::size_t>(j)], grid),
             weights ? weights->log_rho_k(2, t) : 0.0});
  }
}

void write_residual_history(const std::string& dir, const std::vector<double>& history) {
  CsvFile csv(dir, "residual_history.csv");
  csv.header({"iteration", "z_residual"});
  for (std::size_t i = 0; i < history.size(); ++i)
    csv.row({static_cast<double>(i), history[i]});
}

WeightFamily make_weights(const RunConfig& c, double horizon) {
  Eta0 eta = build_eta0(c.x_lo, c.x_hi, c.omega_a, c.omega_b);
  return WeightFamily(
      WeightParams::make(horizon, std::move(eta), c.lambda, c.s_mult, c.tau1, c.tau2, c.c0));
}

void run_validation_gate(const ProblemData& data) {
  const ValidationReport rep = validate_hypotheses(data, 64);
  if (!rep.all_passed()) {
    std::string failed;
    for (const auto& c : rep.checks)
      if (!c.passed) failed += (failed.empty() ? "" : ", ") + c.name;
    throw ValidationError("hypothesis validation failed: " + failed);
  }
}

}  // namespace

int run_validate(const RunConfig& config) {
  const ProblemData data = config.to_problem_data();
  const ValidationReport rep = validate_hypotheses(data, 128);
  for (const auto& c : rep.checks) {
    std::cout << (c.passed ? "[PASS] " : "[FAIL] ") << c.name << "  worst=" << fmt(c.worst_value)
              << (c.bound != 0.0 ? "  bound=" + fmt(c.bound) : "") << "  (" << c.note << ")\n";
  }
  std::cout << (rep.all_passed() ? "all hypotheses passed" : "validation FAILED") << "\n";
  return rep.all_passed() ? 0 : 2;
}

RunReport run_scenario(const RunConfig& config, const std::string& out_dir) {
  RunReport rep;
  rep.scenario = to_string(config.scenario);
  try {
    const ProblemData data = config.to_problem_data();
    const Grid1D grid = Grid1D::uniform(config.x_lo, config.x_hi, config.n_cells);
    const TimeGrid tgrid = TimeGrid::uniform(config.T, config.n_steps);
    run_validation_gate(data);

    switch (config.scenario) {
      case Scenario::Simulate: {
        const TrajectoryPair traj = solve_forward(data, grid, tgrid);
        write_trajectory(out_dir, traj);
        rep.metrics = {{"terminal_y_l2", l2_norm(traj.y.back(), grid)},
                       {"terminal_p_l2", l2_norm(traj.p.back(), grid)}};
        break;
      }
      case Scenario::Stability: {
        const TrajectoryPair traj = solve_forward(data, grid, tgrid);
        const EnergySeries es = energy_S(traj);
        const DecayFit fit = fit_decay_rate(es, 0.2 * config.T, config.T);
        write_trajectory(out_dir, traj);
        write_energy(out_dir, es);
        rep.metrics = {{"rho_hat", fit.rho_hat}, {"c_hat", fit.c_hat}, {"r2", fit.r2}};
        break;
      }
      case Scenario::Observability: {
        const LinearizedOperators ops = LinearizedOperators::from(data);
        const TrajectoryPair traj = solve_forward(data, grid, tgrid);
        write_trajectory(out_dir, traj);
        AdjointSolveFn solver = [&](const FieldVector& phiT, const FieldVector& psiT,
                                    std::vector<FieldVector>& phi, std::vector<FieldVector>& psi) {
          solve_adjoint(ops, grid, tgrid, nullptr, nullptr, phiT, psiT, phi, psi);
        };
        const ObservabilityResult obs = estimate_observability_constant(
            solver, grid, tgrid, config.omega_a, config.omega_b, config.observability_samples,
            config.seed);
        CsvFile csv(out_dir, "observability.csv");
        csv.header({"sample", "ratio"});
        for (std::size_t i = 0; i < obs.ratios.size(); ++i)
          csv.row({static_cast<double>(i), obs.ratios[i]});
        rep.metrics = {{"c_obs_max", obs.c_obs_max},
                       {"n_flagged", static_cast<double>(obs.n_flagged)},
                       {"n_samples", static_cast<double>(obs.n_samples)}};
        break;
      }
      case Scenario::LinearControl: {
        const WeightFamily weights = make_weights(config, config.T);
        const LinearizedOperators ops = LinearizedOperators::from(data);
        const VariationalSystem sys =
            assemble_variational(data, weights, ops, grid, tgrid, config.range_cap);
        const SpaceTimeField f = sample_space_time(data.f, grid, tgrid);
        const SpaceTimeField g = sample_space_time(data.g, grid, tgrid);
        const ControlSolution sol =
            solve_linear_control(f, g, sample_interior(data.y0, grid),
                                 sample_interior(data.p0, grid), sys, config.cg_tol);
        write_trajectory(out_dir, sol.traj);
        write_weights(out_dir, weights, tgrid);
        write_control(out_dir, sol.v, sol.traj, &weights, config.omega_a, config.omega_b);
        rep.metrics = {{"terminal_y_l2", sol.terminal_y_norm},
                       {"terminal_p_l2", sol.terminal_p_norm},
                       {"initial_y_l2", sol.initial_y_norm},
                       {"initial_p_l2", sol.initial_p_norm},
                       {"weighted_state_cost", sol.weighted_state_cost},
                       {"weighted_control_cost", sol.weighted_control_cost},
                       {"sup_rho3_state_sq", sol.sup_rho3_state_sq},
                       {"sup_rho4_grad_sq", sol.sup_rho4_grad_sq},
                       {"int_rho4_parabolic_sq", sol.int_rho4_parabolic_sq},
                       {"sup_rho5_lap_sq", sol.sup_rho5_lap_sq},
                       {"int_rho6_second_order_sq", sol.int_rho6_second_order_sq},
                       {"cg_iterations", static_cast<double>(sol.cg.iterations)},
                       {"cg_rel_residual", sol.cg.rel_residual}};
        break;
      }
      case Scenario::NonlinearControl: {
        const WeightFamily weights = make_weights(config, config.T);
        LiusternikOptions opts;
        opts.tol = config.liusternik_tol;
        opts.max_iter = config.max_iter;
        opts.cg_tol = config.cg_tol;
        opts.smallness_threshold = config.smallness_threshold;
        opts.weight_range_cap = config.range_cap;
        ControlSolution sol;
        try {
          sol = liusternik_iterate(data, weights, grid, tgrid, opts);
        } catch (const OutsideBasinError& e) {
          write_residual_history(out_dir, e.residual_history);
          throw;
        } catch (const SolverError& e) {
          write_residual_history(out_dir, e.residual_history);
          throw;
        }
        write_trajectory(out_dir, sol.traj);
        write_weights(out_dir, weights, tgrid);
        write_control(out_dir, sol.v, sol.traj, &weights, config.omega_a, config.omega_b);
        write_residual_history(out_dir, sol.liusternik_residuals);
        rep.metrics = {{"terminal_y_l2", sol.terminal_y_norm},
                       {"terminal_p_l2", sol.terminal_p_norm},
                       {"initial_y_l2", sol.initial_y_norm},
                       {"initial_p_l2", sol.initial_p_norm},
                       {"iterations", static_cast<double>(sol.liusternik_iterations)},
                       {"final_residual", sol.liusternik_residuals.back()},
                       {"weighted_state_cost", sol.weighted_state_cost},
                       {"weighted_control_cost", sol.weighted_control_cost}};
        break;
      }
      case Scenario::LargeTime: {
        LargeTimeOptions opts;
        opts.threshold = config.large_time_threshold;
        opts.inner.tol = config.liusternik_tol;
        opts.inner.max_iter = config.max_iter;
        opts.inner.cg_tol = config.cg_tol;
        opts.inner.smallness_threshold = config.smallness_threshold;
        opts.inner.weight_range_cap = config.range_cap;
        opts.weights_lambda = config.lambda;
        opts.weights_s_multiplier = config.s_mult;
        LargeTimeResult res;
        try {
          res = large_time_control(data, config.large_time_t0, config.T, config.n_cells,
                                   config.n_steps, opts);
        } catch (const OutsideBasinError& e) {
          write_residual_history(out_dir, e.residual_history);
          CsvFile csv(out_dir, "large_time_failure.csv");
          csv.header({"achieved_norm_sq", "threshold", "min_tbar_estimate"});
          csv.row({e.achieved_norm, config.large_time_threshold, e.min_tbar_estimate});
          throw;
        }
        const WeightFamily window_weights = make_weights(config, config.large_time_t0);
        write_trajectory(out_dir, res.phase2.traj);
        write_energy(out_dir, energy_S(res.phase1));
        write_weights(out_dir, window_weights,
                      TimeGrid::uniform(config.large_time_t0, config.n_steps));
        write_control(out_dir, res.phase2.v, res.phase2.traj, &window_weights, config.omega_a,
                      config.omega_b);
        write_residual_history(out_dir, res.phase2.liusternik_residuals);
        rep.metrics = {{"decayed_norm_sq", res.decayed_norm_sq},
                       {"threshold", res.threshold},
                       {"phase1_rho_hat", res.decay_fit.rho_hat},
                       {"phase1_r2", res.decay_fit.r2},
                       {"terminal_y_l2", res.phase2.terminal_y_norm},
                       {"terminal_p_l2", res.phase2.terminal_p_norm},
                       {"iterations", static_cast<double>(res.phase2.liusternik_iterations)}};
        break;
      }
    }
  } catch (const OutsideBasinError& e) {
    rep.exit_code = 4;
    rep.message = e.what();
  } catch (const SolverError& e) {
    rep.exit_code = 3;
    rep.message = e.what();
  } catch (const ValidationError& e) {
    rep.exit_code = 2;
    rep.message = e.what();
  } catch (const IoError& e) {
    rep.exit_code = 5;
    rep.message = e.what();
  }
  write_report(out_dir, rep);
  return rep;
}

}  // namespace thermistor
