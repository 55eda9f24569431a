#pragma once

#include <Eigen/Dense>
#include <functional>
#include <map>
#include <memory>
#include <vector>

#include "htsim/fe_basis.hpp"
#include "htsim/mesh.hpp"

namespace htsim {

enum class DofClass : std::uint8_t { free = 0, hanging = 1, dirichlet = 2 };

/// Arbitrary-order curl-conforming edge space over a balanced TreeMesh.
///
/// Global DoFs are canonical moments attached to mesh entities: k Legendre
/// moments per edge, 2k(k-1) per face (3D), and the interior block per cell.
/// Moments are taken in normalized min-corner parametrization along global
/// axes, so cells sharing an entity agree on every functional without
/// orientation bookkeeping. DoFs on hanging entities are constrained to the
/// closure DoFs of their owner entity (computed generically by applying the
/// child moments to the owner's trace shape functions); DoFs on the domain
/// boundary are fixed by Dirichlet interpolation. Both kinds are eliminated
/// from assembled systems.
template <int dim>
class EdgeSpace {
 public:
  using Mesh = TreeMesh<dim>;
  using Element = EdgeElement<dim>;
  using Topo = CellTopology<dim>;

  EdgeSpace(std::shared_ptr<const Mesh> mesh, int k,
            bool dirichlet_boundary = true)
      : mesh_(std::move(mesh)), k_(k), dirichlet_boundary_(dirichlet_boundary) {
    HTSIM_REQUIRE(k_ >= 1 && k_ <= 3, PreconditionError,
                  "edge space order must be in 1..3");
    number_dofs();
    classify_dofs();
    build_constraints();
    index_dofs();
  }

  const Mesh& mesh() const { return *mesh_; }
  std::shared_ptr<const Mesh> mesh_ptr() const { return mesh_; }
  int order() const { return k_; }
  int n_dofs() const { return n_dofs_; }
  int n_free() const { return n_free_; }
  int n_dirichlet() const { return n_dirichlet_; }
  int n_hanging() const { return n_hanging_; }

  DofClass dof_class(int g) const { return dof_class_[g]; }
  int free_index(int g) const { return free_index_[g]; }
  int dirichlet_index(int g) const { return dirichlet_index_[g]; }
  const std::vector<int>& free_to_global() const { return free_to_global_; }

  /// Affine dependency of a hanging DoF on its masters (free or Dirichlet).
  const std::vector<std::pair<int, double>>& constraint(int g) const {
    return constraints_[g];
  }

  const std::vector<int>& cell_dofs(int c) const { return cell_dofs_[c]; }
  int dofs_per_cell() const { return Element::get(k_).n_dofs(); }

  // --- interpolation -------------------------------------------------------

  /// Canonical moments of an arbitrary field on every entity (full vector).
  template <typename F>
  Eigen::VectorXd interpolate(F&& g) const {
    Eigen::VectorXd out = Eigen::VectorXd::Zero(n_dofs_);
    const GaussRule rule = gauss_rule(k_ + 2);
    for (std::size_t e = 0; e < mesh_->edges().size(); ++e)
      for (int m = 0; m < k_; ++m)
        out[edge_offset_[e] + m] = edge_moment(int(e), m, g, rule);
    if constexpr (dim == 3) {
      for (std::size_t f = 0; f < mesh_->faces().size(); ++f)
        for (int m = 0; m < Element::moments_per_face(k_); ++m)
          out[face_offset_[f] + m] = face_moment(int(f), m, g, rule);
    }
    for (int c = 0; c < mesh_->n_cells(); ++c)
      for (int m = 0; m < Element::moments_per_interior(k_); ++m)
        out[cell_offset_[c] + m] = interior_moment(c, m, g, rule);
    return out;
  }

  /// Moments of the boundary datum on Dirichlet entities only; the result is
  /// indexed by dirichlet_index.
  template <typename F>
  Eigen::VectorXd interpolate_dirichlet(F&& g) const {
    Eigen::VectorXd out = Eigen::VectorXd::Zero(n_dirichlet_);
    const GaussRule rule = gauss_rule(k_ + 2);
    for (std::size_t e = 0; e < mesh_->edges().size(); ++e) {
      if (!mesh_->edges()[e].boundary || !dirichlet_boundary_) continue;
      for (int m = 0; m < k_; ++m)
        out[dirichlet_index_[edge_offset_[e] + m]] =
            edge_moment(int(e), m, g, rule);
    }
    if constexpr (dim == 3) {
      for (std::size_t f = 0; f < mesh_->faces().size(); ++f) {
        if (!mesh_->faces()[f].boundary || !dirichlet_boundary_) continue;
        for (int m = 0; m < Element::moments_per_face(k_); ++m)
          out[dirichlet_index_[face_offset_[f] + m]] =
              face_moment(int(f), m, g, rule);
      }
    }
    return out;
  }

  /// Expands free coefficients (+ Dirichlet values) into the full DoF vector,
  /// resolving hanging constraints.
  Eigen::VectorXd materialize(const Eigen::VectorXd& free_values,
                              const Eigen::VectorXd& dirichlet_values) const {
    HTSIM_REQUIRE(free_values.size() == n_free_, PreconditionError,
                  "materialize: free vector size mismatch");
    HTSIM_REQUIRE(dirichlet_values.size() == n_dirichlet_, PreconditionError,
                  "materialize: dirichlet vector size mismatch");
    Eigen::VectorXd full = Eigen::VectorXd::Zero(n_dofs_);
    for (int g = 0; g < n_dofs_; ++g) {
      if (dof_class_[g] == DofClass::free) full[g] = free_values[free_index_[g]];
      else if (dof_class_[g] == DofClass::dirichlet)
        full[g] = dirichlet_values[dirichlet_index_[g]];
    }
    for (int g = 0; g < n_dofs_; ++g)
      if (dof_class_[g] == DofClass::hanging) {
        double v = 0.0;
        for (const auto& [m, w] : constraints_[g]) v += w * full[m];
        full[g] = v;
      }
    return full;
  }

  Eigen::VectorXd restrict_free(const Eigen::VectorXd& full) const {
    Eigen::VectorXd out(n_free_);
    for (int i = 0; i < n_free_; ++i) out[i] = full[free_to_global_[i]];
    return out;
  }

  // --- evaluation ----------------------------------------------------------

  /// Scaling of local shape function i on a cell of size h: the physical
  /// basis is h[comp(i)] * diag(1/h) * reference shape.
  Vec<dim> map_point(int c, const Vec<dim>& x) const {
    Vec<dim> lo = mesh_->cell_lo(c), h = mesh_->cell_size(c);
    Vec<dim> xi;
    for (int a = 0; a < dim; ++a) xi[a] = (x[a] - lo[a]) / h[a];
    return xi;
  }

  Vec<dim> value_in_cell(int c, const Vec<dim>& x,
                         const Eigen::VectorXd& full) const {
    const Element& el = Element::get(k_);
    const Vec<dim> h = mesh_->cell_size(c);
    Eigen::MatrixXd vals = el.values(map_point(c, x));
    Vec<dim> out = Vec<dim>::Zero();
    const auto& gd = cell_dofs_[c];
    for (int i = 0; i < el.n_dofs(); ++i) {
      const double scale = h[el.dofs()[i].comp] * full[gd[i]];
      for (int a = 0; a < dim; ++a) out[a] += scale * vals(i, a) / h[a];
    }
    return out;
  }

  Curl<dim> curl_in_cell(int c, const Vec<dim>& x,
                         const Eigen::VectorXd& full) const {
    const Element& el = Element::get(k_);
    const Vec<dim> h = mesh_->cell_size(c);
    Eigen::MatrixXd curls = el.curls(map_point(c, x));
    Curl<dim> out = Curl<dim>::Zero();
    const auto& gd = cell_dofs_[c];
    for (int i = 0; i < el.n_dofs(); ++i) {
      const double ci = h[el.dofs()[i].comp] * full[gd[i]];
      if constexpr (dim == 2) {
        out[0] += ci * curls(i, 0) / (h[0] * h[1]);
      } else {
        out[0] += ci * curls(i, 0) / (h[1] * h[2]);
        out[1] += ci * curls(i, 1) / (h[0] * h[2]);
        out[2] += ci * curls(i, 2) / (h[0] * h[1]);
      }
    }
    return out;
  }

 private:
  void number_dofs() {
    const int epm = k_;
    const int fpm = Element::moments_per_face(k_);
    const int ipm = Element::moments_per_interior(k_);
    int next = 0;
    edge_offset_.resize(mesh_->edges().size());
    for (std::size_t e = 0; e < mesh_->edges().size(); ++e) {
      edge_offset_[e] = next;
      next += epm;
    }
    if constexpr (dim == 3) {
      face_offset_.resize(mesh_->faces().size());
      for (std::size_t f = 0; f < mesh_->faces().size(); ++f) {
        face_offset_[f] = next;
        next += fpm;
      }
    }
    cell_offset_.resize(mesh_->n_cells());
    for (int c = 0; c < mesh_->n_cells(); ++c) {
      cell_offset_[c] = next;
      next += ipm;
    }
    n_dofs_ = next;

    const Element& el = Element::get(k_);
    cell_dofs_.assign(mesh_->n_cells(), {});
    for (int c = 0; c < mesh_->n_cells(); ++c) {
      cell_dofs_[c].resize(el.n_dofs());
      for (int i = 0; i < el.n_dofs(); ++i) {
        const auto& d = el.dofs()[i];
        int g = -1;
        if (d.kind == Element::EntityKind::edge)
          g = edge_offset_[mesh_->cell_edges(c)[d.entity]] + d.moment;
        else if (d.kind == Element::EntityKind::interior)
          g = cell_offset_[c] + d.moment;
        else if constexpr (dim == 3)
          g = face_offset_[mesh_->cell_faces(c)[d.entity]] + d.moment;
        cell_dofs_[c][i] = g;
      }
    }
  }

  void classify_dofs() {
    dof_class_.assign(n_dofs_, DofClass::free);
    for (std::size_t e = 0; e < mesh_->edges().size(); ++e) {
      const auto& ed = mesh_->edges()[e];
      DofClass cl = DofClass::free;
      if (ed.boundary && dirichlet_boundary_) cl = DofClass::dirichlet;
      else if (ed.hang != HangKind::none) cl = DofClass::hanging;
      for (int m = 0; m < k_; ++m) dof_class_[edge_offset_[e] + m] = cl;
    }
    if constexpr (dim == 3) {
      for (std::size_t f = 0; f < mesh_->faces().size(); ++f) {
        const auto& fc = mesh_->faces()[f];
        DofClass cl = DofClass::free;
        if (fc.boundary && dirichlet_boundary_) cl = DofClass::dirichlet;
        else if (fc.hang != HangKind::none) cl = DofClass::hanging;
        for (int m = 0; m < Element::moments_per_face(k_); ++m)
          dof_class_[face_offset_[f] + m] = cl;
      }
    }
  }

  // Trace shape functions of an owner face live in the 2D edge element of the
  // same order; the face's closure DoFs in 2D-element local order are its two
  // pairs of edges followed by the face moments.
  std::vector<int> face_closure_dofs(int f) const
    requires(dim == 3)
  {
    const auto& fc = mesh_->faces()[f];
    auto tr = Topo::transverse(fc.axis);
    const int A = tr[0], B = tr[1];
    auto edge_id = [&](int axis, typename Mesh::IVec pos) {
      auto it = edge_lookup_.find(std::make_tuple(axis, pos, fc.size));
      HTSIM_REQUIRE(it != edge_lookup_.end(), PreconditionError,
                    "face closure edge missing (mesh not balanced?)");
      return it->second;
    };
    std::vector<int> ids;
    typename Mesh::IVec p = fc.pos;
    ids.reserve(4 * k_ + Element::moments_per_face(k_));
    // 2D local edge order: along-A at B=0/1, then along-B at A=0/1
    for (int side = 0; side < 2; ++side) {
      p = fc.pos;
      p[B] += side * fc.size;
      int e = edge_id(A, p);
      for (int m = 0; m < k_; ++m) ids.push_back(edge_offset_[e] + m);
    }
    for (int side = 0; side < 2; ++side) {
      p = fc.pos;
      p[A] += side * fc.size;
      int e = edge_id(B, p);
      for (int m = 0; m < k_; ++m) ids.push_back(edge_offset_[e] + m);
    }
    for (int m = 0; m < Element::moments_per_face(k_); ++m)
      ids.push_back(face_offset_[f] + m);
    return ids;
  }

  void build_constraints() {
    constraints_.assign(n_dofs_, {});
    if constexpr (dim == 3) {
      edge_lookup_.clear();
      for (std::size_t e = 0; e < mesh_->edges().size(); ++e)
        edge_lookup_[std::make_tuple(mesh_->edges()[e].axis,
                                     mesh_->edges()[e].pos,
                                     mesh_->edges()[e].len)] = int(e);
    }
    const GaussRule rule = gauss_rule(k_ + 2);
    const int nq = int(rule.points.size());

    for (std::size_t e = 0; e < mesh_->edges().size(); ++e) {
      const auto& ed = mesh_->edges()[e];
      if (ed.hang == HangKind::none) continue;
      if (dof_class_[edge_offset_[e]] != DofClass::hanging) continue;
      if (ed.hang == HangKind::on_edge) {
        // 1D trace: dual Legendre basis t_m = (2m+1) L_m on the owner arc
        const double h0 = 0.5 * ed.placement[1];
        for (int i = 0; i < k_; ++i) {
          auto& entry = constraints_[edge_offset_[e] + i];
          for (int m = 0; m < k_; ++m) {
            double w = 0.0;
            for (int q = 0; q < nq; ++q) {
              const double s = rule.points[q];
              w += rule.weights[q] * (2 * m + 1) *
                   legendre01(m, h0 + 0.5 * s) * legendre01(i, s);
            }
            if (std::abs(w) > 1e-14)
              entry.push_back({edge_offset_[int(ed.owner)] + m, w});
          }
        }
      } else if constexpr (dim == 3) {
        // edge inside the owner face: child moments of the face trace basis
        const auto& fc = mesh_->faces()[ed.owner];
        auto tr = Topo::transverse(fc.axis);
        const EdgeElement<2>& trace = EdgeElement<2>::get(k_);
        std::vector<int> masters = face_closure_dofs(ed.owner);
        const int slot = ed.placement[0];
        const double h0 = 0.5 * ed.placement[1];
        for (int i = 0; i < k_; ++i) {
          auto& entry = constraints_[edge_offset_[e] + i];
          for (int m = 0; m < trace.n_dofs(); ++m) {
            double w = 0.0;
            for (int q = 0; q < nq; ++q) {
              const double s = rule.points[q];
              Vec<2> xi;
              xi[slot] = h0 + 0.5 * s;
              xi[1 - slot] = 0.5;
              w += rule.weights[q] * trace.values(xi)(m, slot) *
                   legendre01(i, s);
            }
            if (std::abs(w) > 1e-13) entry.push_back({masters[m], w});
          }
        }
        (void)tr;
      }
    }

    if constexpr (dim == 3) {
      const EdgeElement<2>& trace = EdgeElement<2>::get(k_);
      const TensorRule<2> rule2 = tensor_rule<2>(k_ + 2);
      for (std::size_t f = 0; f < mesh_->faces().size(); ++f) {
        const auto& fc = mesh_->faces()[f];
        if (fc.hang != HangKind::on_face) continue;
        if (dof_class_[face_offset_[f]] != DofClass::hanging) continue;
        std::vector<int> masters = face_closure_dofs(fc.owner);
        const Vec<2> q0{0.5 * fc.placement[0], 0.5 * fc.placement[1]};
        const int per_slot = k_ * (k_ - 1);
        for (int i = 0; i < Element::moments_per_face(k_); ++i) {
          auto& entry = constraints_[face_offset_[f] + i];
          const int slot = i / per_slot;
          const int rem = i % per_slot;
          const int nfast = (slot == 0) ? k_ : k_ - 1; // tr0-degree count
          const int d0 = rem % nfast;
          const int d1 = rem / nfast;
          for (int m = 0; m < trace.n_dofs(); ++m) {
            double w = 0.0;
            for (std::size_t q = 0; q < rule2.points.size(); ++q) {
              const Vec<2>& s = rule2.points[q];
              Vec<2> xi = q0 + 0.5 * s;
              w += rule2.weights[q] * trace.values(xi)(m, slot) *
                   legendre01(d0, s[0]) * legendre01(d1, s[1]);
            }
            if (std::abs(w) > 1e-13) entry.push_back({masters[m], w});
          }
        }
      }
    }

    // fold out hanging masters (cannot appear on balanced meshes) and verify
    for (int g = 0; g < n_dofs_; ++g)
      for (const auto& [m, w] : constraints_[g])
        HTSIM_REQUIRE(dof_class_[m] != DofClass::hanging, PreconditionError,
                      "constraint depth > 1: mesh is not 2:1 balanced");
  }

  void index_dofs() {
    free_index_.assign(n_dofs_, -1);
    dirichlet_index_.assign(n_dofs_, -1);
    n_free_ = n_dirichlet_ = n_hanging_ = 0;
    for (int g = 0; g < n_dofs_; ++g) {
      if (dof_class_[g] == DofClass::free) {
        free_index_[g] = n_free_++;
        free_to_global_.push_back(g);
      } else if (dof_class_[g] == DofClass::dirichlet) {
        dirichlet_index_[g] = n_dirichlet_++;
      } else {
        ++n_hanging_;
      }
    }
  }

  // --- canonical moments of arbitrary fields over physical entities --------

  template <typename F>
  double edge_moment(int e, int m, F&& g, const GaussRule& rule) const {
    const auto& ed = mesh_->edges()[e];
    const Vec<dim> x0 = mesh_->to_physical(ed.pos);
    const double len = double(ed.len) * mesh_->unit_length(ed.axis);
    double acc = 0.0;
    for (std::size_t q = 0; q < rule.points.size(); ++q) {
      Vec<dim> x = x0;
      x[ed.axis] += rule.points[q] * len;
      acc += rule.weights[q] * g(x)[ed.axis] * legendre01(m, rule.points[q]);
    }
    return acc;
  }

  template <typename F>
  double face_moment(int f, int mom, F&& g, const GaussRule& rule) const
    requires(dim == 3)
  {
    const auto& fc = mesh_->faces()[f];
    auto tr = Topo::transverse(fc.axis);
    const Vec<dim> x0 = mesh_->to_physical(fc.pos);
    const double lenA = double(fc.size) * mesh_->unit_length(tr[0]);
    const double lenB = double(fc.size) * mesh_->unit_length(tr[1]);
    const int per_slot = k_ * (k_ - 1);
    const int slot = mom / per_slot;
    const int rem = mom % per_slot;
    const int nfast = (slot == 0) ? k_ : k_ - 1;
    const int d0 = rem % nfast; // degree along tr[0]
    const int d1 = rem / nfast; // degree along tr[1]
    const int comp = tr[slot];
    double acc = 0.0;
    for (std::size_t qa = 0; qa < rule.points.size(); ++qa)
      for (std::size_t qb = 0; qb < rule.points.size(); ++qb) {
        Vec<dim> x = x0;
        x[tr[0]] += rule.points[qa] * lenA;
        x[tr[1]] += rule.points[qb] * lenB;
        acc += rule.weights[qa] * rule.weights[qb] * g(x)[comp] *
               legendre01(d0, rule.points[qa]) *
               legendre01(d1, rule.points[qb]);
      }
    return acc;
  }

  template <typename F>
  double face_moment(int, int, F&&, const GaussRule&) const
    requires(dim == 2)
  {
    return 0.0;
  }

  template <typename F>
  double interior_moment(int c, int mom, F&& g, const GaussRule& rule) const {
    // recover (component, degrees) the same way the element enumerates them
    int m = mom;
    int comp = 0;
    std::array<int, dim> maxdeg{};
    for (comp = 0; comp < dim; ++comp) {
      for (int a = 0; a < dim; ++a) maxdeg[a] = (a == comp) ? k_ - 1 : k_ - 2;
      int total = 1;
      for (int a = 0; a < dim; ++a) total *= maxdeg[a] + 1;
      if (m < total) break;
      m -= total;
    }
    std::array<int, dim> deg{};
    int rem = m;
    for (int a = 0; a < dim; ++a) {
      deg[a] = rem % (maxdeg[a] + 1);
      rem /= maxdeg[a] + 1;
    }
    const Vec<dim> lo = mesh_->cell_lo(c), h = mesh_->cell_size(c);
    const int nq = int(rule.points.size());
    int total_q = 1;
    for (int a = 0; a < dim; ++a) total_q *= nq;
    double acc = 0.0;
    for (int q = 0; q < total_q; ++q) {
      int r = q;
      Vec<dim> xi, x;
      double w = 1.0;
      for (int a = 0; a < dim; ++a) {
        xi[a] = rule.points[r % nq];
        w *= rule.weights[r % nq] * legendre01(deg[a], xi[a]);
        x[a] = lo[a] + xi[a] * h[a];
        r /= nq;
      }
      acc += w * g(x)[comp];
    }
    return acc;
  }

  std::shared_ptr<const Mesh> mesh_;
  int k_;
  bool dirichlet_boundary_;

  std::vector<int> edge_offset_, face_offset_, cell_offset_;
  int n_dofs_ = 0, n_free_ = 0, n_dirichlet_ = 0, n_hanging_ = 0;
  std::vector<DofClass> dof_class_;
  std::vector<int> free_index_, dirichlet_index_, free_to_global_;
  std::vector<std::vector<std::pair<int, double>>> constraints_;
  std::vector<std::vector<int>> cell_dofs_;
  std::map<std::tuple<int, typename Mesh::IVec, std::int64_t>, int> edge_lookup_;
};

/// A field in the edge space: full DoF-value vector plus the space.
template <int dim>
class FEFunction {
 public:
  FEFunction(std::shared_ptr<const EdgeSpace<dim>> space, Eigen::VectorXd full)
      : space_(std::move(space)), full_(std::move(full)) {
    HTSIM_REQUIRE(full_.size() == space_->n_dofs(), PreconditionError,
                  "FEFunction: coefficient length does not match space");
  }

  const EdgeSpace<dim>& space() const { return *space_; }
  const Eigen::VectorXd& coefficients() const { return full_; }

  Vec<dim> value(const Vec<dim>& x) const {
    int c = space_->mesh().locate(x);
    return space_->value_in_cell(c, x, full_);
  }
  Curl<dim> curl(const Vec<dim>& x) const {
    int c = space_->mesh().locate(x);
    return space_->curl_in_cell(c, x, full_);
  }

 private:
  std::shared_ptr<const EdgeSpace<dim>> space_;
  Eigen::VectorXd full_;
};

} // namespace htsim
