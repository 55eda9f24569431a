#pragma once

#include <cmath>
#include <vector>

#include "htsim/solver.hpp"

namespace htsim {

template <int dim>
using MagVec = Vec<dim == 2 ? 2 : 3>;

/// Per-cycle loss from the recorded instantaneous power: the half-cycle
/// integral over [w0, w1] is taken by trapezoid on the adaptive grid (with
/// linear interpolation at the window ends) and doubled.
template <int dim>
struct LossReport {
  double q_je = 0.0;
  double q_mh = 0.0;
  double window_begin = 0.0;
  double window_end = 0.0;
  bool loop_closed = true;
};

template <int dim>
double ac_loss_qje(const TimeSeries<dim>& series, double w0, double w1) {
  HTSIM_REQUIRE(!series.steps.empty(), PreconditionError,
                "ac_loss_qje: empty series");
  HTSIM_REQUIRE(w1 > w0, PreconditionError, "ac_loss_qje: bad window");
  std::vector<double> t, p;
  t.push_back(0.0);
  p.push_back(0.0); // H(0) = 0 carries no dissipation
  for (const auto& s : series.steps) {
    t.push_back(s.t);
    p.push_back(s.power);
  }
  const double tol = 1e-9 * (t.back() - t.front());
  HTSIM_REQUIRE(w0 >= t.front() - tol && w1 <= t.back() + tol,
                PreconditionError, "ac_loss_qje: window outside the series");
  auto interp = [&](double tw) {
    auto it = std::lower_bound(t.begin(), t.end(), tw);
    std::size_t i = std::size_t(it - t.begin());
    if (i == 0) return p.front();
    if (i >= t.size()) return p.back();
    double a = (tw - t[i - 1]) / (t[i] - t[i - 1]);
    return p[i - 1] + a * (p[i] - p[i - 1]);
  };
  double acc = 0.0;
  double t_prev = w0, p_prev = interp(w0);
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (t[i] <= w0 || t[i] >= w1) continue;
    acc += 0.5 * (p_prev + p[i]) * (t[i] - t_prev);
    t_prev = t[i];
    p_prev = p[i];
  }
  acc += 0.5 * (p_prev + interp(w1)) * (w1 - t_prev);
  return 2.0 * acc;
}

/// Volume-average magnetization of the current density over the given cells.
/// 3D: (1/2V) integral of r x J. 2D (per unit out-of-plane depth): the half
/// factor is dropped because the return path of an infinitely long system
/// carries the other half of the moment.
template <int dim>
MagVec<dim> magnetization(const EdgeSpace<dim>& space,
                          const std::vector<int>& cells,
                          const Eigen::VectorXd& full, const Vec<dim>& center,
                          int nq = 0) {
  if (nq <= 0) nq = space.order() + 2;
  const auto& table = BasisTable<dim>::get(space.order(), nq);
  MagVec<dim> acc = MagVec<dim>::Zero();
  double volume = 0.0;
  for (int c : cells) {
    const Vec<dim> lo = space.mesh().cell_lo(c);
    const Vec<dim> h = space.mesh().cell_size(c);
    double jxw_base = 1.0;
    for (int a = 0; a < dim; ++a) jxw_base *= h[a];
    volume += jxw_base;
    for (std::size_t q = 0; q < table.rule.points.size(); ++q) {
      Vec<dim> x;
      for (int a = 0; a < dim; ++a)
        x[a] = lo[a] + table.rule.points[q][a] * h[a];
      Curl<dim> j = space.curl_in_cell(c, x, full);
      const double jxw = table.rule.weights[q] * jxw_base;
      if constexpr (dim == 2) {
        acc[0] += jxw * (x[1] - center[1]) * j[0];
        acc[1] -= jxw * (x[0] - center[0]) * j[0];
      } else {
        Vec<3> r = x - center;
        acc += jxw * 0.5 * r.cross(Vec<3>(j));
      }
    }
  }
  HTSIM_REQUIRE(volume > 0.0, PreconditionError, "magnetization: empty region");
  return acc / volume;
}

/// Magnetization history projected on the applied-field direction.
template <int dim>
struct MagnetizationTrace {
  std::vector<double> time;
  std::vector<MagVec<dim>> m;
  std::vector<double> m_alpha;
  std::vector<double> h_alpha; // applied field projection, A/m
};

template <int dim, typename AppliedH>
MagnetizationTrace<dim> build_magnetization_trace(
    const EdgeSpace<dim>& space, const std::vector<int>& cells,
    const TimeSeries<dim>& series, const Vec<dim>& center,
    const MagVec<dim>& alpha_dir, AppliedH&& h_applied_alpha) {
  MagnetizationTrace<dim> trace;
  MagVec<dim> dir = alpha_dir.normalized();
  for (const auto& s : series.steps) {
    MagVec<dim> m = magnetization(space, cells, s.state.full, center);
    trace.time.push_back(s.t);
    trace.m.push_back(m);
    trace.m_alpha.push_back(m.dot(dir));
    trace.h_alpha.push_back(h_applied_alpha(s.t));
  }
  return trace;
}

/// Loss from the magnetization loop: mu0 V |loop integral of M_a dH_a| over
/// the peak-to-peak window [w0, w1]; an unclosed window is closed by a final
/// segment back to the first point (flagged via *closed = false).
template <int dim>
double ac_loss_qmh(const MagnetizationTrace<dim>& trace, double w0, double w1,
                   double hts_volume, bool* closed = nullptr) {
  const auto& t = trace.time;
  HTSIM_REQUIRE(t.size() >= 3, PreconditionError, "ac_loss_qmh: short trace");
  HTSIM_REQUIRE(w1 > w0 && w0 >= t.front() - 1e-12 &&
                    w1 <= t.back() + 1e-9 * (t.back() - t.front()),
                PreconditionError, "ac_loss_qmh: window outside the trace");
  auto interp = [&](const std::vector<double>& v, double tw) {
    auto it = std::lower_bound(t.begin(), t.end(), tw);
    std::size_t i = std::size_t(it - t.begin());
    if (i == 0) return v.front();
    if (i >= t.size()) return v.back();
    double a = (tw - t[i - 1]) / (t[i] - t[i - 1]);
    return v[i - 1] + a * (v[i] - v[i - 1]);
  };
  std::vector<double> m, h;
  m.push_back(interp(trace.m_alpha, w0));
  h.push_back(interp(trace.h_alpha, w0));
  for (std::size_t i = 0; i < t.size(); ++i)
    if (t[i] > w0 && t[i] < w1) {
      m.push_back(trace.m_alpha[i]);
      h.push_back(trace.h_alpha[i]);
    }
  m.push_back(interp(trace.m_alpha, w1));
  h.push_back(interp(trace.h_alpha, w1));
  double acc = 0.0;
  for (std::size_t i = 1; i < m.size(); ++i)
    acc += 0.5 * (m[i] + m[i - 1]) * (h[i] - h[i - 1]);
  const double h_span = *std::max_element(h.begin(), h.end()) -
                        *std::min_element(h.begin(), h.end());
  bool is_closed = std::abs(h.back() - h.front()) <= 1e-6 * h_span;
  if (!is_closed) acc += 0.5 * (m.front() + m.back()) * (h.front() - h.back());
  if (closed) *closed = is_closed;
  return kMu0 * hts_volume * std::abs(acc);
}

// --- sampled line data -------------------------------------------------------

template <int dim>
struct ProfileRow {
  double arc;     // m from the segment start
  Vec<dim> x;     // position, m
  Vec<dim> h;     // magnetic field, A/m
  Curl<dim> j;    // current density components
};

/// Field and curl samples along a segment (endpoints included).
template <int dim>
std::vector<ProfileRow<dim>> line_profile(const EdgeSpace<dim>& space,
                                          const Eigen::VectorXd& full,
                                          const Vec<dim>& a, const Vec<dim>& b,
                                          int samples) {
  HTSIM_REQUIRE(samples >= 2, PreconditionError, "line_profile: samples < 2");
  std::vector<ProfileRow<dim>> rows;
  rows.reserve(samples);
  const double len = (b - a).norm();
  for (int i = 0; i < samples; ++i) {
    const double s = double(i) / (samples - 1);
    ProfileRow<dim> row;
    row.x = a + s * (b - a);
    row.arc = s * len;
    const int cell = space.mesh().locate(row.x); // throws when outside
    row.h = space.value_in_cell(cell, row.x, full);
    row.j = space.curl_in_cell(cell, row.x, full);
    rows.push_back(row);
  }
  return rows;
}

// --- weak solenoidality audit -----------------------------------------------

/// Max |(H, grad phi_v)| over interior conforming nodal hats phi_v of the
/// lowest-order scalar space on the same mesh, with hanging vertices folded
/// into their owner entities' corners.
template <int dim>
double max_gradient_pairing(const EdgeSpace<dim>& space,
                            const Eigen::VectorXd& full) {
  const auto& mesh = space.mesh();
  using Topo = CellTopology<dim>;
  const int nv = Topo::n_vertices;
  std::vector<double> pairing(mesh.vertices().size(), 0.0);

  // vertex position lookup for owner corner resolution
  std::map<typename TreeMesh<dim>::IVec, int> vindex;
  for (std::size_t v = 0; v < mesh.vertices().size(); ++v)
    vindex[mesh.vertices()[v].pos] = int(v);

  // weights of a (possibly hanging) vertex onto conforming vertices
  auto masters = [&](int v) {
    std::vector<std::pair<int, double>> out;
    const auto& vert = mesh.vertices()[v];
    if (vert.hang == HangKind::none) {
      out.emplace_back(v, 1.0);
    } else if (vert.hang == HangKind::on_edge) {
      const auto& e = mesh.edges()[vert.owner];
      auto p = e.pos;
      out.emplace_back(vindex.at(p), 0.5);
      p[e.axis] += e.len;
      out.emplace_back(vindex.at(p), 0.5);
    } else {
      const auto& f = mesh.faces()[vert.owner];
      auto tr = Topo::transverse(f.axis);
      for (int c = 0; c < 4; ++c) {
        auto p = f.pos;
        p[tr[0]] += (c & 1) ? f.size : 0;
        p[tr[1]] += (c & 2) ? f.size : 0;
        out.emplace_back(vindex.at(p), 0.25);
      }
    }
    return out;
  };

  const auto& table = BasisTable<dim>::get(space.order(), space.order() + 2);
  for (int c = 0; c < mesh.n_cells(); ++c) {
    const Vec<dim> lo = mesh.cell_lo(c);
    const Vec<dim> h = mesh.cell_size(c);
    double jxw_base = 1.0;
    for (int a = 0; a < dim; ++a) jxw_base *= h[a];
    std::array<double, 1 << dim> local{};
    for (std::size_t q = 0; q < table.rule.points.size(); ++q) {
      const Vec<dim>& xi = table.rule.points[q];
      Vec<dim> x;
      for (int a = 0; a < dim; ++a) x[a] = lo[a] + xi[a] * h[a];
      Vec<dim> hv = space.value_in_cell(c, x, full);
      const double jxw = table.rule.weights[q] * jxw_base;
      for (int l = 0; l < nv; ++l) {
        auto off = Topo::vertex_offsets(l);
        // grad of the Q1 hat at local node l
        double dot = 0.0;
        for (int a = 0; a < dim; ++a) {
          double g = (off[a] ? 1.0 : -1.0) / h[a];
          for (int b = 0; b < dim; ++b)
            if (b != a) g *= off[b] ? xi[b] : 1.0 - xi[b];
          dot += hv[a] * g;
        }
        local[l] += jxw * dot;
      }
    }
    for (int l = 0; l < nv; ++l)
      for (const auto& [v, w] : masters(mesh.cell_vertices(c)[l]))
        pairing[v] += w * local[l];
  }

  double worst = 0.0;
  for (std::size_t v = 0; v < mesh.vertices().size(); ++v) {
    const auto& vert = mesh.vertices()[v];
    if (vert.boundary || vert.hang != HangKind::none) continue;
    worst = std::max(worst, std::abs(pairing[v]));
  }
  return worst;
}

} // namespace htsim
