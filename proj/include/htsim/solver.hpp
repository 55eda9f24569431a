#pragma once

#include <Eigen/IterativeLinearSolvers>
#include <Eigen/SparseCholesky>
#include <Eigen/SparseLU>
#include <cmath>
#include <functional>
#include <ostream>

#include "htsim/assembly.hpp"

namespace htsim {

struct NewtonConfig {
  double rtol = 1e-10;   // relative to the step reference norm
  double atol = 0.0;     // absolute option (benchmark mode: 1e-4)
  int max_iterations = 25;
  int max_backtracks = 10;
  // accepted constraint violation |C H - I| at convergence, relative to the
  // run's current scale
  double constraint_tol = 1e-8;
  // when the line search stalls at the floating-point floor, accept the
  // iterate if |R| <= stagnation_rtol * ref (0 disables; creep-dominated
  // quasi-steady phases sit exactly at that floor)
  double stagnation_rtol = 0.0;
};

struct NewtonReport {
  bool converged = false;
  int iterations = 0; // linear solves performed
  std::vector<double> residual_norms;
  std::vector<double> betas;
  std::string failure;
};

enum class LinearSolverKind { direct, cg };

/// Direct (default) or CG solve of an assembled system. The CG path is only
/// admissible without the constraint row.
inline Eigen::VectorXd linear_solve(const SparseSystem& sys,
                                    LinearSolverKind kind = LinearSolverKind::direct,
                                    bool* ok = nullptr) {
  if (ok) *ok = true;
  if (kind == LinearSolverKind::cg) {
    HTSIM_REQUIRE(!sys.has_constraint, PreconditionError,
                  "CG path does not support the constraint row");
    Eigen::ConjugateGradient<Eigen::SparseMatrix<double>,
                             Eigen::Lower | Eigen::Upper>
        cg(sys.matrix);
    cg.setTolerance(1e-12);
    cg.setMaxIterations(20 * sys.matrix.rows());
    Eigen::VectorXd x = cg.solve(sys.rhs);
    if (cg.info() != Eigen::Success) {
      if (ok) *ok = false;
      else throw SolverError("CG did not reach the requested tolerance");
    }
    return x;
  }
  if (sys.spd) {
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(sys.matrix);
    if (ldlt.info() == Eigen::Success) {
      Eigen::VectorXd x = ldlt.solve(sys.rhs);
      if (ldlt.info() == Eigen::Success) return x;
    }
    // fall through to LU on numerical failure
  }
  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
  lu.analyzePattern(sys.matrix);
  lu.factorize(sys.matrix);
  if (lu.info() != Eigen::Success) {
    if (ok) {
      *ok = false;
      return Eigen::VectorXd::Zero(sys.rhs.size());
    }
    throw SolverError("sparse LU factorization failed (singular system?)");
  }
  return lu.solve(sys.rhs);
}

/// Cubic backtracking on f(beta) = |R(x + beta dx)|^2 for an exact Newton
/// direction (f'(0) = -2 f(0)). First rejection falls back to the quadratic
/// model, later ones to the cubic model through the last two trials, with
/// step safeguards [0.1, 0.5] * beta_prev. Non-finite trial values are
/// treated as rejections.
template <typename F>
bool cubic_backtracking(F&& fnorm2, double f0, int max_trials, double* beta_out,
                        double* f_out) {
  const double alpha = 1e-4;
  const double g0 = -2.0 * f0;
  double beta = 1.0;
  double beta_prev = 0.0, f_prev = 0.0;
  for (int trial = 0; trial < max_trials; ++trial) {
    double f = fnorm2(beta);
    if (std::isfinite(f) && f <= f0 + alpha * beta * g0) {
      *beta_out = beta;
      *f_out = f;
      return true;
    }
    double next;
    if (!std::isfinite(f)) {
      next = 0.5 * beta;
    } else if (trial == 0) {
      next = -g0 / (2.0 * (f - f0 - g0));
    } else {
      // cubic through (beta, f) and (beta_prev, f_prev)
      const double r1 = f - f0 - g0 * beta;
      const double r2 = f_prev - f0 - g0 * beta_prev;
      const double den = beta - beta_prev;
      const double a = (r1 / (beta * beta) - r2 / (beta_prev * beta_prev)) / den;
      const double b = (-beta_prev * r1 / (beta * beta) +
                        beta * r2 / (beta_prev * beta_prev)) / den;
      if (std::abs(a) < 1e-30) {
        next = -g0 / (2.0 * b);
      } else {
        const double disc = b * b - 3.0 * a * g0;
        next = disc > 0.0 ? (-b + std::sqrt(disc)) / (3.0 * a) : 0.5 * beta;
      }
    }
    if (!std::isfinite(next)) next = 0.5 * beta;
    next = std::min(std::max(next, 0.1 * beta), 0.5 * beta);
    beta_prev = beta;
    f_prev = f;
    beta = next;
  }
  return false;
}

/// Newton-Raphson with exact Jacobian and cubic backtracking, over
/// caller-supplied residual/jacobian callbacks.
struct NewtonCallbacks {
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> residual;
  std::function<SparseSystem(const Eigen::VectorXd&)> jacobian;
  // optional extra acceptance veto evaluated at the converged point
  std::function<bool(const Eigen::VectorXd&)> accept;
  // reference for the relative criterion (step right-hand-side norm);
  // falls back to the initial residual when unset
  double reference = 0.0;
};

inline NewtonReport newton_solve(const NewtonCallbacks& cb, Eigen::VectorXd& x,
                                 const NewtonConfig& cfg,
                                 LinearSolverKind kind = LinearSolverKind::direct) {
  NewtonReport rep;
  Eigen::VectorXd r = cb.residual(x);
  double rnorm = r.norm();
  rep.residual_norms.push_back(rnorm);
  const double ref = cb.reference > 0.0 ? cb.reference : rnorm;
  auto converged = [&](double v) {
    return v <= std::max(cfg.rtol * ref, cfg.atol);
  };
  if (converged(rnorm) || rnorm == 0.0) {
    rep.converged = !cb.accept || cb.accept(x);
    if (!rep.converged) rep.failure = "constraint residual above tolerance";
    return rep;
  }
  for (int it = 0; it < cfg.max_iterations; ++it) {
    SparseSystem sys = cb.jacobian(x);
    sys.rhs = -r;
    bool ok = true;
    Eigen::VectorXd dx = linear_solve(sys, kind, &ok);
    if (!ok) {
      rep.failure = "linear solver failure";
      return rep;
    }
    ++rep.iterations;
    const double f0 = rnorm * rnorm;
    double beta = 1.0, fb = 0.0;
    Eigen::VectorXd r_trial;
    auto fnorm2 = [&](double b) {
      r_trial = cb.residual(x + b * dx);
      return r_trial.squaredNorm();
    };
    if (!cubic_backtracking(fnorm2, f0, cfg.max_backtracks, &beta, &fb)) {
      if (cfg.stagnation_rtol > 0.0 && rnorm <= cfg.stagnation_rtol * ref &&
          (!cb.accept || cb.accept(x))) {
        rep.converged = true; // stalled at the attainable floor
        return rep;
      }
      rep.failure = "line search failed to reduce the residual";
      return rep;
    }
    x += beta * dx;
    r = r_trial;
    rnorm = std::sqrt(fb);
    rep.residual_norms.push_back(rnorm);
    rep.betas.push_back(beta);
    if (converged(rnorm)) {
      if (cb.accept && !cb.accept(x)) continue; // keep iterating
      rep.converged = true;
      return rep;
    }
  }
  rep.failure = "maximum Newton iterations exceeded";
  return rep;
}

// --- adaptive time stepping -------------------------------------------------

struct TimeStepper {
  double dt_min;
  double dt_max;
  double dt_init = 0.0; // 0: start from dt_min
  double kappa = 5.0;   // target nonlinear iterations
  double theta = 1.0;   // 1 = backward Euler
  double t_end;
};

/// dt update from the last converged step's iteration count, clamped.
inline double adapt_dt(double dt_prev, int iterations, const TimeStepper& ts) {
  HTSIM_REQUIRE(iterations >= 0, PreconditionError, "negative iteration count");
  const double trial = ts.kappa / std::max(iterations, 1) * dt_prev;
  return std::clamp(trial, ts.dt_min, ts.dt_max);
}

template <int dim>
struct StepRecord {
  double t;
  double dt;
  int newton_iterations;
  double final_residual;
  std::vector<double> betas;
  SystemState<dim> state;
  double power = 0.0; // instantaneous HTS dissipation, W (W/m in 2D)
};

template <int dim>
struct TimeSeries {
  std::vector<StepRecord<dim>> steps;
  bool completed = false;
  std::string failure;
};

/// Scenario closures driving one transient solve.
template <int dim>
struct TransientProblem {
  std::shared_ptr<Assembler<dim>> assembler;
  std::function<Vec<dim>(const Vec<dim>&, double)> boundary; // Dirichlet datum
  std::function<double(double)> applied_current;             // with a section
  std::function<Vec<dim>(const Vec<dim>&, double)> source;   // optional
  std::vector<double> event_times; // discontinuities the stepper must hit
};

/// Transient driver: starts from H = 0, re-evaluates boundary data and the
/// applied current each step, grows dt from the Newton history, halves dt on
/// nonconvergence, and shortens the last step to land exactly on t_end.
template <int dim>
TimeSeries<dim> run_transient(const TransientProblem<dim>& prob,
                              const TimeStepper& ts, const NewtonConfig& cfg,
                              std::ostream* log = nullptr,
                              LinearSolverKind kind = LinearSolverKind::direct) {
  HTSIM_REQUIRE(ts.dt_min > 0 && ts.dt_min <= ts.dt_max, PreconditionError,
                "time stepper bounds must satisfy 0 < dt_min <= dt_max");
  auto& a = *prob.assembler;
  const auto& space = a.space();
  TimeSeries<dim> series;

  // current scale for the constraint acceptance check
  double i_scale = 1.0;
  if (a.has_section() && prob.applied_current) {
    for (int i = 0; i <= 1000; ++i)
      i_scale = std::max(
          i_scale, std::abs(prob.applied_current(ts.t_end * i / 1000.0)));
    for (double ev : prob.event_times) {
      i_scale = std::max(i_scale, std::abs(prob.applied_current(ev)));
      i_scale =
          std::max(i_scale, std::abs(prob.applied_current(
                                std::min(ev + 1e-9 * ts.t_end, ts.t_end))));
    }
  }

  double t = 0.0;
  Eigen::VectorXd bc_prev = space.interpolate_dirichlet(
      [&](const Vec<dim>& x) { return prob.boundary(x, 0.0); });
  Eigen::VectorXd prev_full =
      space.materialize(Eigen::VectorXd::Zero(space.n_free()), bc_prev);
  double lambda_prev = 0.0;

  double dt = ts.dt_init > 0.0 ? std::clamp(ts.dt_init, ts.dt_min, ts.dt_max)
                               : ts.dt_min;
  int step_index = 0;
  while (t < ts.t_end - 1e-14 * ts.t_end) {
    // shorten to events and the end time
    double dt_step = std::min(dt, ts.t_end - t);
    for (double ev : prob.event_times)
      if (ev > t + 1e-12 * ts.t_end && ev < t + dt_step - 1e-12 * ts.t_end)
        dt_step = ev - t;

    const double t_new = t + dt_step;
    Eigen::VectorXd bc_now = space.interpolate_dirichlet(
        [&](const Vec<dim>& x) { return prob.boundary(x, t_new); });

    StepData<dim> data;
    data.prev_full = &prev_full;
    data.dt = dt_step;
    data.time = t_new;
    data.theta = ts.theta;
    data.source = prob.source;
    const double s_scale = kMu0 / dt_step;
    if (a.has_section())
      data.I_app = prob.applied_current ? prob.applied_current(t_new) : 0.0;

    Eigen::VectorXd x(a.n_unknowns());
    x.head(space.n_free()) = space.restrict_free(prev_full);
    if (a.has_section()) x[space.n_free()] = lambda_prev / s_scale;

    NewtonCallbacks cb;
    cb.residual = [&](const Eigen::VectorXd& y) {
      return a.residual(y, bc_now, data);
    };
    cb.jacobian = [&](const Eigen::VectorXd& y) {
      return a.jacobian(y, bc_now, data);
    };
    cb.reference = a.rhs_norm(data);
    if (a.has_section())
      cb.accept = [&](const Eigen::VectorXd& y) {
        Eigen::VectorXd full =
            space.materialize(y.head(space.n_free()), bc_now);
        const double viol = std::abs(a.constraint_value(full) - *data.I_app);
        return viol <= cfg.constraint_tol * i_scale;
      };

    NewtonReport rep = newton_solve(cb, x, cfg, kind);
    if (!rep.converged) {
      if (log)
        (*log) << step_index << ';' << t_new << ';' << dt_step << ";retry;"
               << rep.residual_norms.back() << ';' << rep.failure << '\n';
      if (dt_step > ts.dt_min) {
        dt = std::max(0.5 * dt_step, ts.dt_min);
        continue;
      }
      series.failure = "newton failed at t = " + std::to_string(t_new) +
                       " with dt at the lower bound: " + rep.failure;
      return series;
    }

    StepRecord<dim> rec;
    rec.t = t_new;
    rec.dt = dt_step;
    rec.newton_iterations = rep.iterations;
    rec.final_residual = rep.residual_norms.back();
    rec.betas = rep.betas;
    rec.state.full = space.materialize(x.head(space.n_free()), bc_now);
    rec.state.lambda = a.has_section() ? s_scale * x[space.n_free()] : 0.0;
    rec.state.time = t_new;
    rec.power = a.hts_dissipation(rec.state.full);
    if (log) {
      (*log) << step_index << ';' << t_new << ';' << dt_step << ';'
             << rep.iterations << ';' << rec.final_residual << ';';
      for (std::size_t b = 0; b < rep.betas.size(); ++b)
        (*log) << (b ? "|" : "") << rep.betas[b];
      (*log) << '\n';
    }
    prev_full = rec.state.full;
    lambda_prev = rec.state.lambda;
    series.steps.push_back(std::move(rec));
    t = t_new;
    ++step_index;
    dt = adapt_dt(dt_step, rep.iterations, ts);
  }
  series.completed = true;
  return series;
}

} // namespace htsim
