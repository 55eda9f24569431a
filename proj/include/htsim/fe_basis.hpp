#pragma once

#include <Eigen/Dense>
#include <map>
#include <memory>
#include <vector>

#include "htsim/core.hpp"
#include "htsim/quadrature.hpp"
#include "htsim/topology.hpp"

namespace htsim {

/// Tensor Gauss rule on the reference cell [0,1]^dim.
template <int dim>
struct TensorRule {
  std::vector<Vec<dim>> points;
  std::vector<double> weights;
};

template <int dim>
TensorRule<dim> tensor_rule(int n) {
  GaussRule g = gauss_rule(n);
  TensorRule<dim> r;
  int total = 1;
  for (int a = 0; a < dim; ++a) total *= n;
  r.points.reserve(total);
  r.weights.reserve(total);
  for (int q = 0; q < total; ++q) {
    int rem = q;
    Vec<dim> p;
    double w = 1.0;
    for (int a = 0; a < dim; ++a) {
      p[a] = g.points[rem % n];
      w *= g.weights[rem % n];
      rem /= n;
    }
    r.points.push_back(p);
    r.weights.push_back(w);
  }
  return r;
}

/// First-kind edge (Nedelec) element on the reference square/cube, order
/// k = 1..3. The local space is Q_{k-1,k} x Q_{k,k-1} in 2D and its 3D
/// analogue. Degrees of freedom are moments against shifted Legendre weights:
/// tangential moments on edges, tangential-component moments on faces (3D),
/// and per-component interior moments. All moments are taken along the
/// positive axis directions with min-corner parametrization, so two cells
/// sharing an entity always agree on the functional and no orientation signs
/// are needed.
template <int dim>
class EdgeElement {
 public:
  using Topo = CellTopology<dim>;
  static constexpr int curl_comps = dim == 2 ? 1 : 3;

  enum class EntityKind : std::uint8_t { edge = 0, face = 1, interior = 2 };

  struct DofDesc {
    EntityKind kind;
    int entity;  // local edge/face index, -1 for interior
    int moment;  // moment index within the entity
    int comp;    // Cartesian component tested by the moment
  };

  explicit EdgeElement(int k) : k_(k) {
    HTSIM_REQUIRE(k >= 1 && k <= 3, PreconditionError,
                  "edge element order must be in 1..3");
    build_primitives();
    build_dofs();
    solve_coefficients();
  }

  int order() const { return k_; }
  int n_dofs() const { return int(dofs_.size()); }
  const std::vector<DofDesc>& dofs() const { return dofs_; }

  static int moments_per_edge(int k) { return k; }
  static int moments_per_face(int k) { return 2 * k * (k - 1); }
  static int moments_per_interior(int k) {
    return dim == 2 ? 2 * k * (k - 1) : 3 * k * (k - 1) * (k - 1);
  }

  /// Shape function values at a reference point; rows = dofs, cols = components.
  Eigen::MatrixXd values(const Vec<dim>& xi) const {
    Eigen::MatrixXd prim = primitive_values(xi); // nprim x dim
    return coef_.transpose() * prim;
  }

  /// Reference curls at a point; rows = dofs.
  Eigen::MatrixXd curls(const Vec<dim>& xi) const {
    Eigen::MatrixXd prim = primitive_curls(xi); // nprim x curl_comps
    return coef_.transpose() * prim;
  }

  /// Max deviation of the moment matrix of the shape functions from the
  /// identity (unisolvence audit).
  double moment_error() const {
    Eigen::MatrixXd m = moment_matrix(coef_);
    return (m - Eigen::MatrixXd::Identity(n_dofs(), n_dofs()))
        .cwiseAbs()
        .maxCoeff();
  }

  /// Shared element cache; elements are immutable after construction.
  static const EdgeElement& get(int k) {
    static std::map<int, std::unique_ptr<EdgeElement>> cache;
    auto it = cache.find(k);
    if (it == cache.end())
      it = cache.emplace(k, std::make_unique<EdgeElement>(k)).first;
    return *it->second;
  }

 private:
  struct Primitive {
    int comp;
    std::array<int, dim> deg;
  };

  void build_primitives() {
    for (int c = 0; c < dim; ++c) {
      std::array<int, dim> deg{};
      // anisotropic degrees: k-1 along the component axis, k across
      std::array<int, dim> maxdeg{};
      for (int a = 0; a < dim; ++a) maxdeg[a] = (a == c) ? k_ - 1 : k_;
      int total = 1;
      for (int a = 0; a < dim; ++a) total *= maxdeg[a] + 1;
      for (int m = 0; m < total; ++m) {
        int rem = m;
        for (int a = 0; a < dim; ++a) {
          deg[a] = rem % (maxdeg[a] + 1);
          rem /= maxdeg[a] + 1;
        }
        prims_.push_back(Primitive{c, deg});
      }
    }
  }

  void build_dofs() {
    for (int e = 0; e < Topo::n_edges; ++e)
      for (int i = 0; i < k_; ++i)
        dofs_.push_back(DofDesc{EntityKind::edge, e, i, Topo::edge_axis(e)});
    if constexpr (dim == 3) {
      for (int f = 0; f < Topo::n_faces; ++f) {
        auto tr = Topo::transverse(Topo::face_axis(f));
        int m = 0;
        for (int slot = 0; slot < 2; ++slot)
          for (int i = 0; i < k_; ++i)
            for (int j = 0; j < k_ - 1; ++j)
              dofs_.push_back(DofDesc{EntityKind::face, f, m++, tr[slot]});
      }
    }
    {
      int m = 0;
      for (int c = 0; c < dim; ++c) {
        std::array<int, dim> maxdeg{};
        for (int a = 0; a < dim; ++a) maxdeg[a] = (a == c) ? k_ - 1 : k_ - 2;
        int total = 1;
        for (int a = 0; a < dim; ++a) total *= maxdeg[a] + 1;
        if (k_ == 1) total = 0;
        for (int t = 0; t < total; ++t)
          dofs_.push_back(DofDesc{EntityKind::interior, -1, m++, c});
      }
    }
  }

  // Moment of an arbitrary reference vector field against local dof `d`.
  template <typename F>
  double apply_moment(const DofDesc& d, F&& field) const {
    const GaussRule g = gauss_rule(k_ + 2);
    const int n = int(g.points.size());
    double acc = 0.0;
    if (d.kind == EntityKind::edge) {
      const int e = d.entity;
      const int axis = Topo::edge_axis(e);
      auto tr = Topo::transverse(axis);
      auto off = Topo::edge_offsets(e);
      for (int q = 0; q < n; ++q) {
        Vec<dim> xi;
        xi[axis] = g.points[q];
        for (int t = 0; t < dim - 1; ++t) xi[tr[t]] = double(off[t]);
        acc += g.weights[q] * field(xi)[axis] * legendre01(d.moment, g.points[q]);
      }
    } else if (d.kind == EntityKind::face) {
      // moment layout matches the 2D interior moments of the trace element:
      // slot-major, then the tr[0] degree varying fastest
      const int f = d.entity;
      const int axis = Topo::face_axis(f);
      auto tr = Topo::transverse(axis);
      const int per_slot = k_ * (k_ - 1);
      const int slot = d.moment / per_slot;
      const int rem = d.moment % per_slot;
      const int nfast = (slot == 0) ? k_ : k_ - 1;
      const int d0 = rem % nfast; // degree along tr[0]
      const int d1 = rem / nfast; // degree along tr[1]
      const int T = tr[slot];
      for (int qa = 0; qa < n; ++qa)
        for (int qb = 0; qb < n; ++qb) {
          Vec<dim> xi;
          xi[axis] = double(Topo::face_side(f));
          xi[tr[0]] = g.points[qa];
          xi[tr[1]] = g.points[qb];
          acc += g.weights[qa] * g.weights[qb] * field(xi)[T] *
                 legendre01(d0, g.points[qa]) * legendre01(d1, g.points[qb]);
        }
    } else {
      // interior: recover (comp, degree multi-index) from the flat moment id
      int m = d.moment;
      int c = 0;
      std::array<int, dim> maxdeg{};
      for (c = 0; c < dim; ++c) {
        for (int a = 0; a < dim; ++a) maxdeg[a] = (a == c) ? k_ - 1 : k_ - 2;
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
      const TensorRule<dim> tr = tensor_rule<dim>(k_ + 2);
      for (std::size_t q = 0; q < tr.points.size(); ++q) {
        double w = tr.weights[q] * field(tr.points[q])[c];
        for (int a = 0; a < dim; ++a) w *= legendre01(deg[a], tr.points[q][a]);
        acc += w;
      }
    }
    return acc;
  }

  Eigen::MatrixXd primitive_values(const Vec<dim>& xi) const {
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(int(prims_.size()), dim);
    for (std::size_t m = 0; m < prims_.size(); ++m) {
      double v = 1.0;
      for (int a = 0; a < dim; ++a) v *= legendre01(prims_[m].deg[a], xi[a]);
      out(int(m), prims_[m].comp) = v;
    }
    return out;
  }

  Eigen::MatrixXd primitive_curls(const Vec<dim>& xi) const {
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(int(prims_.size()), curl_comps);
    for (std::size_t m = 0; m < prims_.size(); ++m) {
      const int c = prims_[m].comp;
      // value and single-axis derivative products
      std::array<double, dim> val, der;
      for (int a = 0; a < dim; ++a) {
        val[a] = legendre01(prims_[m].deg[a], xi[a]);
        der[a] = legendre01_deriv(prims_[m].deg[a], xi[a]);
      }
      auto partial = [&](int a) {
        double p = 1.0;
        for (int b = 0; b < dim; ++b) p *= (b == a) ? der[b] : val[b];
        return p;
      };
      if constexpr (dim == 2) {
        out(int(m), 0) = (c == 1) ? partial(0) : -partial(1);
      } else {
        if (c == 0) {
          out(int(m), 1) += partial(2);
          out(int(m), 2) -= partial(1);
        } else if (c == 1) {
          out(int(m), 0) -= partial(2);
          out(int(m), 2) += partial(0);
        } else {
          out(int(m), 0) += partial(1);
          out(int(m), 1) -= partial(0);
        }
      }
    }
    return out;
  }

  Eigen::MatrixXd moment_matrix(const Eigen::MatrixXd& coef) const {
    const int n = n_dofs();
    Eigen::MatrixXd m(n, n);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        m(i, j) = apply_moment(dofs_[i], [&](const Vec<dim>& xi) {
          Eigen::MatrixXd prim = primitive_values(xi);
          Eigen::RowVectorXd row = coef.col(j).transpose() * prim;
          Vec<dim> v;
          for (int a = 0; a < dim; ++a) v[a] = row(a);
          return v;
        });
      }
    }
    return m;
  }

  void solve_coefficients() {
    const int n = n_dofs();
    HTSIM_REQUIRE(int(prims_.size()) == n, PreconditionError,
                  "edge element: dof count does not match space dimension");
    Eigen::MatrixXd a(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        a(i, j) = apply_moment(dofs_[i], [&](const Vec<dim>& xi) {
          Eigen::MatrixXd prim = primitive_values(xi);
          Vec<dim> v;
          for (int c = 0; c < dim; ++c) v[c] = prim(j, c);
          return v;
        });
    coef_ = a.fullPivLu().solve(Eigen::MatrixXd::Identity(n, n));
  }

  int k_;
  std::vector<Primitive> prims_;
  std::vector<DofDesc> dofs_;
  Eigen::MatrixXd coef_; // column j = coefficients of shape function j
};

/// Cached tabulation of one element at a tensor Gauss rule.
template <int dim>
struct BasisTable {
  TensorRule<dim> rule;
  std::vector<Eigen::MatrixXd> values; // per point: ndof x dim
  std::vector<Eigen::MatrixXd> curls;  // per point: ndof x curl_comps

  static const BasisTable& get(int k, int nq) {
    static std::map<std::pair<int, int>, std::unique_ptr<BasisTable>> cache;
    auto key = std::make_pair(k, nq);
    auto it = cache.find(key);
    if (it == cache.end()) {
      auto t = std::make_unique<BasisTable>();
      const EdgeElement<dim>& el = EdgeElement<dim>::get(k);
      t->rule = tensor_rule<dim>(nq);
      for (const auto& p : t->rule.points) {
        t->values.push_back(el.values(p));
        t->curls.push_back(el.curls(p));
      }
      it = cache.emplace(key, std::move(t)).first;
    }
    return *it->second;
  }
};

} // namespace htsim
