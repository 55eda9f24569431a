#pragma once

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iomanip>

#include "htsim/mesh_io.hpp"
#include "htsim/scenario.hpp"
#include "htsim/version.hpp"

namespace htsim {

struct RunResult {
  int exit_code = 0; // 0 ok, 2 config error, 3 solver/runtime failure
  std::string message;
};

namespace detail {

inline std::ofstream open_out(const std::filesystem::path& p) {
  std::ofstream os(p);
  HTSIM_REQUIRE(os.good(), SolverError, "cannot open " + p.string());
  os << std::setprecision(16);
  return os;
}

template <int dim>
void write_profile_csv(const std::filesystem::path& path,
                       const std::vector<ProfileRow<dim>>& rows) {
  auto os = open_out(path);
  os << "arc_m;";
  const char* ax = "xyz";
  for (int a = 0; a < dim; ++a) os << ax[a] << "_mm;";
  for (int a = 0; a < dim; ++a) os << 'H' << ax[a] << "_A_per_m;";
  for (int a = 0; a < dim; ++a) os << 'B' << ax[a] << "_T;";
  if constexpr (dim == 2) os << "Jz_A_per_m2";
  else os << "Jx_A_per_m2;Jy_A_per_m2;Jz_A_per_m2";
  os << '\n';
  for (const auto& r : rows) {
    os << r.arc << ';';
    for (int a = 0; a < dim; ++a) os << r.x[a] * 1e3 << ';';
    for (int a = 0; a < dim; ++a) os << r.h[a] << ';';
    for (int a = 0; a < dim; ++a) os << r.h[a] * kMu0 << ';';
    for (int a = 0; a < r.j.size(); ++a)
      os << r.j[a] << (a + 1 < r.j.size() ? ";" : "");
    os << '\n';
  }
}

} // namespace detail

template <int dim>
RunResult run_scenario_dim(const ScenarioConfig& cfg, bool dry_run,
                           std::ostream& info) {
  namespace fs = std::filesystem;
  const auto t_start = std::chrono::steady_clock::now();
  Scenario<dim> s = build_scenario<dim>(cfg);
  const fs::path out(cfg.out_dir);
  fs::create_directories(out);

  info << "mesh: " << s.mesh->n_cells() << " cells, max level "
       << s.mesh->max_level() << "; space: " << s.space->n_dofs()
       << " dofs (" << s.space->n_free() << " free, " << s.space->n_hanging()
       << " hanging, " << s.space->n_dirichlet() << " dirichlet)\n";
  info << "hts: " << s.hts_cells.size() << " cells, volume " << s.hts_volume
       << (dim == 2 ? " m^2" : " m^3") << '\n';

  if (cfg.mesh_vtk || cfg.mesh_text) {
    std::map<std::string, std::vector<double>> cell_data;
    std::vector<double> level(s.mesh->n_cells()), mat(s.mesh->n_cells(), 1.0);
    for (int c = 0; c < s.mesh->n_cells(); ++c)
      level[std::size_t(c)] = s.mesh->cell(c).level;
    for (int c : s.hts_cells) mat[std::size_t(c)] = 0.0;
    cell_data["level"] = level;
    cell_data["material"] = mat;
    if (cfg.mesh_vtk) write_mesh_vtk(*s.mesh, (out / "mesh.vtk").string(), cell_data);
    if (cfg.mesh_text) write_mesh_text(*s.mesh, (out / "mesh.txt").string());
  }

  json manifest;
  manifest["config"] = serialize_config(cfg);
  manifest["version"] = kVersion;
  manifest["cells"] = s.mesh->n_cells();
  manifest["dofs"] = s.space->n_dofs();
  manifest["free_dofs"] = s.space->n_free();
  manifest["hanging_dofs"] = s.space->n_hanging();
  manifest["dirichlet_dofs"] = s.space->n_dirichlet();
  manifest["hts_cells"] = int(s.hts_cells.size());
  manifest["dry_run"] = dry_run;

  auto finish = [&](bool completed, const std::string& failure) {
    manifest["completed"] = completed;
    if (!failure.empty()) manifest["failure"] = failure;
    manifest["wall_time_s"] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                      t_start)
            .count();
    auto os = detail::open_out(out / "manifest.json");
    os << manifest.dump(2) << '\n';
  };

  if (dry_run) {
    finish(true, "");
    return RunResult{0, "dry run complete"};
  }

  if (cfg.dump_system) {
    StepData<dim> data;
    data.dt = cfg.dt_min_s;
    data.time = 0.0;
    Eigen::VectorXd bc0 = s.space->interpolate_dirichlet(
        [&](const Vec<dim>& x) { return s.problem.boundary(x, 0.0); });
    Eigen::VectorXd prev0 =
        s.space->materialize(Eigen::VectorXd::Zero(s.space->n_free()), bc0);
    data.prev_full = &prev0;
    if (s.assembler->has_section()) data.I_app = 0.0;
    SparseSystem sys = s.assembler->jacobian(
        Eigen::VectorXd::Zero(s.assembler->n_unknowns()), bc0, data);
    write_matrix_market(sys.matrix, (out / "system.mtx").string());
  }

  std::ofstream step_log;
  if (cfg.write_series) {
    step_log.open(out / "steps.csv");
    step_log << "step;t_s;dt_s;newton_iterations;final_residual;betas\n";
    step_log << std::setprecision(16);
  }
  TimeSeries<dim> series =
      run_transient(s.problem, s.stepper, s.newton,
                    cfg.write_series ? &step_log : nullptr);

  // per-step instantaneous power
  if (cfg.write_series) {
    auto os = detail::open_out(out / "power.csv");
    os << "t_s;power_W\n";
    for (const auto& st : series.steps) os << st.t << ';' << st.power << '\n';
  }

  // magnetization trace (projection on the applied-field direction when one
  // exists, otherwise on the first axis)
  MagnetizationTrace<dim> trace;
  if (cfg.write_magnetization && !series.steps.empty()) {
    MagVec<dim> dir = MagVec<dim>::Zero();
    if (s.alpha_dir.norm() > 0) dir = s.alpha_dir;
    else dir[0] = 1.0;
    std::function<double(double)> h_app = s.h_alpha_applied;
    if (!h_app) h_app = [](double) { return 0.0; };
    trace = build_magnetization_trace(*s.space, s.hts_cells, series,
                                      s.hts_center, dir, h_app);
    auto os = detail::open_out(out / "magnetization.csv");
    os << "t_s;H_alpha_A_per_m";
    const char* ax = "xyz";
    for (int a = 0; a < trace.m.front().size(); ++a)
      os << ";M" << ax[a] << "_A_per_m";
    os << ";M_alpha_A_per_m;M_alpha_normalized\n";
    const double b_side = s.hts_box.hi[0] - s.hts_box.lo[0];
    const double m_norm = cfg.J_c * b_side;
    for (std::size_t i = 0; i < trace.time.size(); ++i) {
      os << trace.time[i] << ';' << trace.h_alpha[i];
      for (int a = 0; a < trace.m[i].size(); ++a) os << ';' << trace.m[i][a];
      os << ';' << trace.m_alpha[i] << ';' << trace.m_alpha[i] / m_norm << '\n';
    }
  }

  // loss report
  if (cfg.write_losses && !series.steps.empty()) {
    double w0 = 0.0, w1 = 0.0, q_je = 0.0, q_mh = 0.0;
    bool have_je = false, have_mh = false, closed = true;
    if (!cfg.loss_window_s.empty()) {
      w0 = cfg.loss_window_s[0];
      w1 = cfg.loss_window_s[1];
    } else if (s.period_s > 0 && series.steps.back().t >= s.period_s - 1e-12) {
      w0 = 0.5 * s.period_s;
      w1 = s.period_s;
    }
    if (w1 > w0) {
      q_je = ac_loss_qje(series, w0, w1);
      have_je = true;
      if (cfg.write_magnetization && s.period_s > 0 &&
          !trace.time.empty()) {
        // peak-to-peak window of the applied sine: [T/4, min(5T/4, end)]
        const double p0 = 0.25 * s.period_s;
        const double p1 =
            std::min(1.25 * s.period_s, series.steps.back().t);
        if (p1 > p0 + 0.5 * s.period_s) {
          q_mh = ac_loss_qmh(trace, p0, p1, s.hts_volume, &closed);
          have_mh = true;
        }
      }
    }
    auto os = detail::open_out(out / "losses.csv");
    os << "quantity;value_J;window_begin_s;window_end_s;note\n";
    if (have_je) os << "Q_JE;" << q_je << ';' << w0 << ';' << w1 << ";\n";
    if (have_mh) {
      os << "Q_MH;" << q_mh << ';' << 0.25 * s.period_s << ';'
         << std::min(1.25 * s.period_s, series.steps.back().t) << ';'
         << (closed ? "" : "loop closed by final segment") << '\n';
      if (have_je && q_je > 0)
        os << "relative_gap;" << std::abs(q_je - q_mh) / q_je << ";;;\n";
    }
    manifest["q_je_J"] = have_je ? q_je : 0.0;
    manifest["q_mh_J"] = have_mh ? q_mh : 0.0;
  }

  // requested line profiles
  for (std::size_t pi = 0; pi < cfg.profiles.size(); ++pi) {
    const auto& ps = cfg.profiles[pi];
    Vec<dim> a, b;
    for (int d2 = 0; d2 < dim; ++d2) {
      a[d2] = ps.from_mm[std::size_t(d2)] * 1e-3;
      b[d2] = ps.to_mm[std::size_t(d2)] * 1e-3;
    }
    std::vector<std::pair<std::string, const StepRecord<dim>*>> picks;
    if (ps.at == "final" && !series.steps.empty()) {
      picks.emplace_back("final", &series.steps.back());
    } else if (ps.at == "plateau_ends" && cfg.plateau_s > 0) {
      for (std::size_t k = 1; k <= cfg.levels_A.size(); ++k) {
        const double tk = std::min(cfg.plateau_s * double(k), cfg.t_end_s);
        const StepRecord<dim>* best = nullptr;
        for (const auto& st : series.steps)
          if (std::abs(st.t - tk) < 1e-9 * cfg.t_end_s) best = &st;
        if (best) picks.emplace_back("level" + std::to_string(k), best);
      }
    } else if (ps.at == "times") {
      for (double tw : ps.times_s) {
        const StepRecord<dim>* best = nullptr;
        double dist = 1e300;
        for (const auto& st : series.steps)
          if (std::abs(st.t - tw) < dist) {
            dist = std::abs(st.t - tw);
            best = &st;
          }
        if (best) picks.emplace_back("t" + std::to_string(tw), best);
      }
    }
    for (const auto& [tag, rec] : picks) {
      auto rows = line_profile(*s.space, rec->state.full, a, b, ps.samples);
      detail::write_profile_csv<dim>(
          out / (ps.name + "_" + tag + ".csv"), rows);
    }
  }

  if (!series.completed) {
    finish(false, series.failure);
    return RunResult{3, "solver failure: " + series.failure +
                            " (partial artifacts kept)"};
  }
  manifest["steps"] = int(series.steps.size());
  finish(true, "");
  return RunResult{0, "completed " + std::to_string(series.steps.size()) +
                          " steps"};
}

inline RunResult run_scenario(const ScenarioConfig& cfg, bool dry_run,
                              std::ostream& info) {
  try {
    if (cfg.dim == 2) return run_scenario_dim<2>(cfg, dry_run, info);
    return run_scenario_dim<3>(cfg, dry_run, info);
  } catch (const ConfigError& e) {
    return RunResult{2, e.what()};
  } catch (const std::exception& e) {
    return RunResult{3, e.what()};
  }
}

} // namespace htsim
