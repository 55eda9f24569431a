#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <vector>

#include "htsim/core.hpp"
#include "htsim/topology.hpp"

namespace htsim {

template <int dim>
struct Box {
  Vec<dim> lo;
  Vec<dim> hi;

  double measure() const {
    double m = 1.0;
    for (int a = 0; a < dim; ++a) m *= hi[a] - lo[a];
    return m;
  }
  bool empty() const {
    for (int a = 0; a < dim; ++a)
      if (hi[a] <= lo[a]) return true;
    return false;
  }
};

enum class Mark : std::uint8_t { keep = 0, refine = 1 };

/// Per-leaf refinement marks for one TreeMesh snapshot.
struct RefinementFlags {
  std::vector<Mark> marks;
  bool any() const {
    return std::any_of(marks.begin(), marks.end(),
                       [](Mark m) { return m == Mark::refine; });
  }
};

enum class HangKind : std::uint8_t { none = 0, on_edge = 1, on_face = 2 };

/// Forest of quad/octrees over a structured grid of root cells in an
/// axis-aligned box. Cells carry integer anchors in a fixed-resolution index
/// space (kMaxLevel bits per root cell and axis), so all entity identification
/// and containment tests are exact. Leaves are kept in per-tree Morton order.
/// A constructed mesh is immutable; refinement returns a new mesh.
template <int dim>
class TreeMesh {
 public:
  static constexpr int kMaxLevel = 21;
  using IVec = std::array<std::int64_t, dim>;
  using Topo = CellTopology<dim>;

  struct Cell {
    int level;
    IVec anchor; // min corner in index units; multiples of size_units(level)
  };

  struct Vertex {
    IVec pos;
    bool boundary = false;
    HangKind hang = HangKind::none;
    int owner = -1; // owning edge (on_edge) or face (on_face) index
  };

  struct Edge {
    int axis;
    IVec pos; // min corner
    std::int64_t len;
    bool boundary = false;
    HangKind hang = HangKind::none;
    int owner = -1;
    // on_edge: half index 0/1 along the owner edge.
    // on_face: (tangent slot of the edge axis on the owner face, half index).
    std::array<int, 2> placement{-1, -1};
  };

  struct Face { // 3D only
    int axis; // normal
    IVec pos;
    std::int64_t size;
    bool boundary = false;
    HangKind hang = HangKind::none;
    int owner = -1;
    std::array<int, 2> placement{-1, -1}; // quadrant offsets (t1, t2) in {0,1}
  };

  static std::int64_t size_units(int level) {
    return std::int64_t(1) << (kMaxLevel - level);
  }

  TreeMesh() = default;

  static TreeMesh make_uniform(const Box<dim>& box,
                               const std::array<int, dim>& root_grid) {
    for (int a = 0; a < dim; ++a) {
      HTSIM_REQUIRE(box.hi[a] > box.lo[a], InvalidGeometryError,
                    "make_uniform: box extent must be positive");
      HTSIM_REQUIRE(root_grid[a] >= 1, InvalidGeometryError,
                    "make_uniform: root_grid must be >= 1 per axis");
    }
    TreeMesh m;
    m.box_ = box;
    m.root_grid_ = root_grid;
    std::vector<Cell> cells;
    IVec idx{};
    const std::int64_t s = size_units(0);
    // lexicographic root enumeration; Morton sort below fixes the final order
    int total = 1;
    for (int a = 0; a < dim; ++a) total *= root_grid[a];
    for (int t = 0; t < total; ++t) {
      int rem = t;
      IVec anchor{};
      for (int a = 0; a < dim; ++a) {
        anchor[a] = std::int64_t(rem % root_grid[a]) * s;
        rem /= root_grid[a];
      }
      cells.push_back(Cell{0, anchor});
    }
    m.finalize(std::move(cells));
    return m;
  }

  /// Refine all flagged cells, then keep refining until the 2:1 balance
  /// (including across vertices) holds. Returns the new mesh.
  TreeMesh refined_and_balanced(const RefinementFlags& flags) const {
    HTSIM_REQUIRE(flags.marks.size() == cells_.size(), PreconditionError,
                  "refinement flags do not match mesh leaf count");
    std::map<std::pair<int, IVec>, bool> leaf; // (level, anchor) -> marked
    for (std::size_t i = 0; i < cells_.size(); ++i)
      leaf[{cells_[i].level, cells_[i].anchor}] =
          flags.marks[i] == Mark::refine;

    auto find_containing = [&](const IVec& u, int max_level)
        -> std::optional<std::pair<int, IVec>> {
      for (int l = max_level; l >= 0; --l) {
        const std::int64_t s = size_units(l);
        IVec a;
        for (int d2 = 0; d2 < dim; ++d2) a[d2] = (u[d2] / s) * s;
        if (leaf.count({l, a})) return std::make_pair(l, a);
      }
      return std::nullopt;
    };

    bool changed = true;
    while (changed) {
      changed = false;
      // split every marked leaf
      std::vector<std::pair<int, IVec>> marked;
      for (auto& [key, mark] : leaf)
        if (mark) marked.push_back(key);
      for (auto& [lvl, anchor] : marked) {
        leaf.erase({lvl, anchor});
        const std::int64_t hs = size_units(lvl + 1);
        for (int c = 0; c < (1 << dim); ++c) {
          IVec a = anchor;
          for (int d2 = 0; d2 < dim; ++d2)
            if ((c >> d2) & 1) a[d2] += hs;
          leaf[{lvl + 1, a}] = false;
        }
        changed = true;
      }
      // mark coarse neighbors violating 2:1 across any shared entity
      int max_level = 0;
      for (auto& [key, mark] : leaf) max_level = std::max(max_level, key.first);
      for (auto& [key, mark] : leaf) {
        const auto& [lvl, anchor] = key;
        if (lvl <= 1) continue; // neighbors at level >= 0 are always fine
        const std::int64_t s = size_units(lvl);
        IVec probe;
        const int n_off = ipow(3, dim);
        for (int o = 0; o < n_off; ++o) {
          int rem = o;
          bool self = true, outside = false;
          for (int d2 = 0; d2 < dim; ++d2) {
            int off = rem % 3 - 1;
            rem /= 3;
            if (off != 0) self = false;
            probe[d2] = off < 0   ? anchor[d2] - 1
                        : off > 0 ? anchor[d2] + s
                                  : anchor[d2];
            if (probe[d2] < 0 || probe[d2] >= extent_units(d2)) outside = true;
          }
          if (self || outside) continue;
          auto nb = find_containing(probe, max_level);
          if (nb && nb->first < lvl - 1 && !leaf[*nb]) {
            leaf[*nb] = true;
            changed = true;
          }
        }
      }
    }

    TreeMesh m;
    m.box_ = box_;
    m.root_grid_ = root_grid_;
    std::vector<Cell> cells;
    cells.reserve(leaf.size());
    for (auto& [key, mark] : leaf) cells.push_back(Cell{key.first, key.second});
    m.finalize(std::move(cells));
    return m;
  }

  // --- cell access ---------------------------------------------------------

  int n_cells() const { return int(cells_.size()); }
  const Cell& cell(int i) const { return cells_[i]; }
  const std::vector<Cell>& cells() const { return cells_; }
  const Box<dim>& box() const { return box_; }
  const std::array<int, dim>& root_grid() const { return root_grid_; }
  int max_level() const { return max_level_; }

  std::int64_t extent_units(int axis) const {
    return std::int64_t(root_grid_[axis]) << kMaxLevel;
  }
  double unit_length(int axis) const {
    return (box_.hi[axis] - box_.lo[axis]) / double(extent_units(axis));
  }
  Vec<dim> to_physical(const IVec& u) const {
    Vec<dim> x;
    for (int a = 0; a < dim; ++a) x[a] = box_.lo[a] + double(u[a]) * unit_length(a);
    return x;
  }

  Vec<dim> cell_lo(int i) const { return to_physical(cells_[i].anchor); }
  Vec<dim> cell_size(int i) const {
    Vec<dim> h;
    const std::int64_t s = size_units(cells_[i].level);
    for (int a = 0; a < dim; ++a) h[a] = double(s) * unit_length(a);
    return h;
  }
  Vec<dim> cell_hi(int i) const { return cell_lo(i) + cell_size(i); }
  Vec<dim> cell_center(int i) const { return cell_lo(i) + 0.5 * cell_size(i); }
  double cell_measure(int i) const {
    Vec<dim> h = cell_size(i);
    double m = 1.0;
    for (int a = 0; a < dim; ++a) m *= h[a];
    return m;
  }

  double total_volume() const {
    double v = 0.0;
    for (int i = 0; i < n_cells(); ++i) v += cell_measure(i);
    return v;
  }

  // --- entity access -------------------------------------------------------

  const std::vector<Vertex>& vertices() const { return vertices_; }
  const std::vector<Edge>& edges() const { return edges_; }
  const std::vector<Face>& faces() const { return faces_; }

  const std::array<int, Topo::n_vertices>& cell_vertices(int i) const {
    return cell_vertices_[i];
  }
  const std::array<int, Topo::n_edges>& cell_edges(int i) const {
    return cell_edges_[i];
  }
  const std::array<int, 6>& cell_faces(int i) const
    requires(dim == 3)
  {
    return cell_faces_[i];
  }

  struct HangingEntity {
    bool is_face;          // false: edge, true: face (3D)
    int index;             // into edges() / faces()
    bool owner_is_face;    // owner entity table
    int owner;             // into edges() / faces()
    // Parametric placement inside the owner: for edge-on-edge the sub-interval
    // [t0,t1] of the owner arc; for entities on faces the sub-patch
    // [t0,t1]x[s0,s1] in the owner face's (t1-axis,t2-axis) coordinates.
    std::array<double, 2> range0;
    std::array<double, 2> range1{0.0, 0.0};
  };

  /// Every hanging edge/face with its owner and parametric placement.
  std::vector<HangingEntity> hanging_entities() const {
    std::vector<HangingEntity> out;
    for (int e = 0; e < int(edges_.size()); ++e) {
      const Edge& ed = edges_[e];
      if (ed.hang == HangKind::none) continue;
      HangingEntity h;
      h.is_face = false;
      h.index = e;
      if (ed.hang == HangKind::on_edge) {
        h.owner_is_face = false;
        h.owner = ed.owner;
        double t0 = 0.5 * ed.placement[1];
        h.range0 = {t0, t0 + 0.5};
      } else {
        h.owner_is_face = true;
        h.owner = ed.owner;
        // edge runs along tangent slot placement[0] of the owner face,
        // covering half of it, at the midline of the other tangent axis
        double t0 = 0.5 * ed.placement[1];
        if (ed.placement[0] == 0) {
          h.range0 = {t0, t0 + 0.5};
          h.range1 = {0.5, 0.5};
        } else {
          h.range0 = {0.5, 0.5};
          h.range1 = {t0, t0 + 0.5};
        }
      }
      out.push_back(h);
    }
    if constexpr (dim == 3) {
      for (int f = 0; f < int(faces_.size()); ++f) {
        const Face& fc = faces_[f];
        if (fc.hang == HangKind::none) continue;
        HangingEntity h;
        h.is_face = true;
        h.index = f;
        h.owner_is_face = true;
        h.owner = fc.owner;
        h.range0 = {0.5 * fc.placement[0], 0.5 * fc.placement[0] + 0.5};
        h.range1 = {0.5 * fc.placement[1], 0.5 * fc.placement[1] + 0.5};
        out.push_back(h);
      }
    }
    return out;
  }

  // --- lookup --------------------------------------------------------------

  /// Leaf whose half-open box contains x. Throws PointLookupError outside.
  int locate(const Vec<dim>& x) const {
    IVec u;
    for (int a = 0; a < dim; ++a) {
      double rel = (x[a] - box_.lo[a]) / unit_length(a);
      double tol = 1e-9 * double(extent_units(a));
      HTSIM_REQUIRE(rel >= -tol && rel <= double(extent_units(a)) + tol,
                    PointLookupError, "locate: point outside domain");
      std::int64_t i = std::int64_t(std::floor(rel));
      u[a] = std::clamp<std::int64_t>(i, 0, extent_units(a) - 1);
    }
    for (int l = max_level_; l >= 0; --l) {
      const std::int64_t s = size_units(l);
      IVec anchor;
      for (int a = 0; a < dim; ++a) anchor[a] = (u[a] / s) * s;
      auto it = leaf_index_.find({l, anchor});
      if (it != leaf_index_.end()) return it->second;
    }
    throw PointLookupError("locate: no leaf found (corrupt mesh?)");
  }

  /// All leaves whose closed box contains x (up to 2^dim on interfaces).
  std::vector<int> locate_all(const Vec<dim>& x) const {
    std::vector<int> out;
    for (int c = 0; c < (1 << dim); ++c) {
      Vec<dim> probe = x;
      bool ok = true;
      for (int a = 0; a < dim; ++a) {
        double eps = 0.25 * unit_length(a);
        probe[a] += ((c >> a) & 1) ? eps : -eps;
        if (probe[a] < box_.lo[a] || probe[a] > box_.hi[a]) ok = false;
      }
      if (!ok) continue;
      int leaf = locate(probe);
      Vec<dim> lo = cell_lo(leaf), hi = cell_hi(leaf);
      bool contains = true;
      for (int a = 0; a < dim; ++a) {
        double tol = 1e-9 * (hi[a] - lo[a]);
        if (x[a] < lo[a] - tol || x[a] > hi[a] + tol) contains = false;
      }
      if (contains && std::find(out.begin(), out.end(), leaf) == out.end())
        out.push_back(leaf);
    }
    return out;
  }

  // --- audits ---------------------------------------------------------------

  /// Exhaustive check over all leaf pairs whose closures intersect: returns
  /// the maximum level difference between such neighbors.
  int max_neighbor_level_gap() const {
    int gap = 0;
    for (int i = 0; i < n_cells(); ++i) {
      const std::int64_t si = size_units(cells_[i].level);
      for (int j = i + 1; j < n_cells(); ++j) {
        const std::int64_t sj = size_units(cells_[j].level);
        bool touch = true;
        for (int a = 0; a < dim; ++a) {
          if (cells_[i].anchor[a] + si < cells_[j].anchor[a] ||
              cells_[j].anchor[a] + sj < cells_[i].anchor[a]) {
            touch = false;
            break;
          }
        }
        if (touch)
          gap = std::max(gap, std::abs(cells_[i].level - cells_[j].level));
      }
    }
    return gap;
  }

  bool same_leaves(const TreeMesh& other) const {
    if (n_cells() != other.n_cells()) return false;
    for (int i = 0; i < n_cells(); ++i)
      if (cells_[i].level != other.cells_[i].level ||
          cells_[i].anchor != other.cells_[i].anchor)
        return false;
    return true;
  }

 private:
  static int ipow(int b, int e) {
    int r = 1;
    while (e--) r *= b;
    return r;
  }

  static std::uint64_t morton(const IVec& local) {
    std::uint64_t code = 0;
    for (int b = 0; b < kMaxLevel; ++b)
      for (int a = 0; a < dim; ++a)
        code |= ((std::uint64_t(local[a]) >> b) & 1u) << (b * dim + a);
    return code;
  }

  void finalize(std::vector<Cell>&& cells) {
    cells_ = std::move(cells);
    // per-tree Morton order
    std::sort(cells_.begin(), cells_.end(), [&](const Cell& x, const Cell& y) {
      std::int64_t tx = 0, ty = 0;
      IVec lx, ly;
      for (int a = dim - 1; a >= 0; --a) {
        tx = tx * root_grid_[a] + (x.anchor[a] >> kMaxLevel);
        ty = ty * root_grid_[a] + (y.anchor[a] >> kMaxLevel);
        lx[a] = x.anchor[a] & ((std::int64_t(1) << kMaxLevel) - 1);
        ly[a] = y.anchor[a] & ((std::int64_t(1) << kMaxLevel) - 1);
      }
      if (tx != ty) return tx < ty;
      return morton(lx) < morton(ly);
    });
    max_level_ = 0;
    leaf_index_.clear();
    for (int i = 0; i < n_cells(); ++i) {
      max_level_ = std::max(max_level_, cells_[i].level);
      leaf_index_[{cells_[i].level, cells_[i].anchor}] = i;
    }
    build_entities();
  }

  void build_entities() {
    vertices_.clear();
    edges_.clear();
    faces_.clear();
    cell_vertices_.assign(cells_.size(), {});
    cell_edges_.assign(cells_.size(), {});
    if constexpr (dim == 3) cell_faces_.assign(cells_.size(), {});

    std::map<IVec, int> vmap;
    std::map<std::tuple<int, IVec, std::int64_t>, int> emap;
    std::map<std::tuple<int, IVec, std::int64_t>, int> fmap;

    for (int i = 0; i < n_cells(); ++i) {
      const Cell& K = cells_[i];
      const std::int64_t s = size_units(K.level);
      for (int v = 0; v < Topo::n_vertices; ++v) {
        IVec p = K.anchor;
        auto off = Topo::vertex_offsets(v);
        for (int a = 0; a < dim; ++a) p[a] += off[a] * s;
        auto [it, inserted] = vmap.try_emplace(p, int(vertices_.size()));
        if (inserted) vertices_.push_back(Vertex{p});
        cell_vertices_[i][v] = it->second;
      }
      for (int e = 0; e < Topo::n_edges; ++e) {
        const int axis = Topo::edge_axis(e);
        auto tr = Topo::transverse(axis);
        auto off = Topo::edge_offsets(e);
        IVec p = K.anchor;
        for (int t = 0; t < dim - 1; ++t) p[tr[t]] += off[t] * s;
        auto [it, inserted] =
            emap.try_emplace(std::make_tuple(axis, p, s), int(edges_.size()));
        if (inserted) edges_.push_back(Edge{axis, p, s});
        cell_edges_[i][e] = it->second;
      }
      if constexpr (dim == 3) {
        for (int f = 0; f < 6; ++f) {
          const int axis = Topo::face_axis(f);
          IVec p = K.anchor;
          p[axis] += Topo::face_side(f) * s;
          auto [it, inserted] =
              fmap.try_emplace(std::make_tuple(axis, p, s), int(faces_.size()));
          if (inserted) faces_.push_back(Face{axis, p, s});
          cell_faces_[i][f] = it->second;
        }
      }
    }

    // boundary flags
    auto at_domain_plane = [&](int axis, std::int64_t c) {
      return c == 0 || c == extent_units(axis);
    };
    for (auto& v : vertices_)
      for (int a = 0; a < dim; ++a)
        if (at_domain_plane(a, v.pos[a])) v.boundary = true;
    for (auto& e : edges_) {
      auto tr = Topo::transverse(e.axis);
      for (int t = 0; t < dim - 1; ++t)
        if (at_domain_plane(tr[t], e.pos[tr[t]])) e.boundary = true;
    }
    for (auto& f : faces_)
      if (at_domain_plane(f.axis, f.pos[f.axis])) f.boundary = true;

    // hanging classification by exact containment lookups
    for (auto& e : edges_) {
      const std::int64_t s2 = 2 * e.len;
      IVec pp = e.pos;
      pp[e.axis] = (e.pos[e.axis] / s2) * s2;
      auto pit = emap.find(std::make_tuple(e.axis, pp, s2));
      if (pit != emap.end()) {
        e.hang = HangKind::on_edge;
        e.owner = pit->second;
        e.placement = {0, int((e.pos[e.axis] - pp[e.axis]) / e.len)};
        continue;
      }
      if constexpr (dim == 3) {
        auto tr3 = Topo::transverse(e.axis);
        for (int nslot = 0; nslot < 2 && e.hang == HangKind::none; ++nslot) {
          const int nb = tr3[nslot];        // candidate face normal
          const int c = tr3[1 - nslot];     // in-face transverse axis
          if (e.pos[c] % s2 != e.len) continue; // must sit on the face midline
          IVec fp = e.pos;
          fp[e.axis] = (e.pos[e.axis] / s2) * s2;
          fp[c] = e.pos[c] - e.len;
          auto fit = fmap.find(std::make_tuple(nb, fp, s2));
          if (fit != fmap.end()) {
            e.hang = HangKind::on_face;
            e.owner = fit->second;
            auto ftr = Topo::transverse(nb);
            int slot = (ftr[0] == e.axis) ? 0 : 1;
            e.placement = {slot, int((e.pos[e.axis] - fp[e.axis]) / e.len)};
          }
        }
      }
    }
    if constexpr (dim == 3) {
      for (auto& f : faces_) {
        const std::int64_t s2 = 2 * f.size;
        auto tr = Topo::transverse(f.axis);
        IVec pp = f.pos;
        pp[tr[0]] = (f.pos[tr[0]] / s2) * s2;
        pp[tr[1]] = (f.pos[tr[1]] / s2) * s2;
        auto pit = fmap.find(std::make_tuple(f.axis, pp, s2));
        if (pit != fmap.end()) {
          f.hang = HangKind::on_face;
          f.owner = pit->second;
          f.placement = {int((f.pos[tr[0]] - pp[tr[0]]) / f.size),
                         int((f.pos[tr[1]] - pp[tr[1]]) / f.size)};
        }
      }
    }
    // hanging vertices (used by nodal-gradient audits, not by edge DoFs)
    for (auto& v : vertices_) {
      for (int l = max_level_; l >= 0 && v.hang == HangKind::none; --l) {
        const std::int64_t t = size_units(l); // half-length of candidate owner
        for (int a = 0; a < dim && v.hang == HangKind::none; ++a) {
          if (v.pos[a] % (2 * t) != t) continue;
          IVec p = v.pos;
          p[a] -= t;
          auto it = emap.find(std::make_tuple(a, p, 2 * t));
          if (it != emap.end() && edges_[it->second].hang == HangKind::none) {
            v.hang = HangKind::on_edge;
            v.owner = it->second;
          }
        }
        if constexpr (dim == 3) {
          for (int a = 0; a < 3 && v.hang == HangKind::none; ++a) {
            auto tr = Topo::transverse(a);
            if (v.pos[tr[0]] % (2 * t) != t || v.pos[tr[1]] % (2 * t) != t)
              continue;
            IVec p = v.pos;
            p[tr[0]] -= t;
            p[tr[1]] -= t;
            auto it = fmap.find(std::make_tuple(a, p, 2 * t));
            if (it != fmap.end() && faces_[it->second].hang == HangKind::none) {
              v.hang = HangKind::on_face;
              v.owner = it->second;
            }
          }
        }
      }
    }
  }

  Box<dim> box_{};
  std::array<int, dim> root_grid_{};
  std::vector<Cell> cells_;
  int max_level_ = 0;
  std::map<std::pair<int, IVec>, int> leaf_index_;

  std::vector<Vertex> vertices_;
  std::vector<Edge> edges_;
  std::vector<Face> faces_;
  std::vector<std::array<int, Topo::n_vertices>> cell_vertices_;
  std::vector<std::array<int, Topo::n_edges>> cell_edges_;
  std::vector<std::array<int, 6>> cell_faces_;
};

/// Marks producing, at fixpoint, level `level_inside` on cells overlapping
/// `region` and levels decaying by `decay` per distance band outward, one
/// band per intermediate cell width.
template <int dim>
RefinementFlags geometric_grading_flags(const TreeMesh<dim>& mesh,
                                        const Box<dim>& region,
                                        int level_inside, int decay = 1) {
  HTSIM_REQUIRE(level_inside >= 0, PreconditionError,
                "geometric_grading_flags: level_inside must be >= 0");
  HTSIM_REQUIRE(decay >= 1, PreconditionError,
                "geometric_grading_flags: decay must be >= 1");
  RefinementFlags flags;
  flags.marks.assign(mesh.n_cells(), Mark::keep);
  if (region.empty()) return flags;
  for (int a = 0; a < dim; ++a) {
    HTSIM_REQUIRE(region.hi[a] >= mesh.box().lo[a] &&
                      region.lo[a] <= mesh.box().hi[a],
                  InvalidGeometryError,
                  "geometric_grading_flags: region outside domain");
  }
  // region bounds in index units, rounded outward
  std::array<double, dim> rlo, rhi;
  for (int a = 0; a < dim; ++a) {
    rlo[a] = (region.lo[a] - mesh.box().lo[a]) / mesh.unit_length(a);
    rhi[a] = (region.hi[a] - mesh.box().lo[a]) / mesh.unit_length(a);
  }
  for (int i = 0; i < mesh.n_cells(); ++i) {
    const auto& K = mesh.cell(i);
    const double s = double(TreeMesh<dim>::size_units(K.level));
    double gap = 0.0;
    bool overlap = true;
    for (int a = 0; a < dim; ++a) {
      double clo = double(K.anchor[a]), chi = clo + s;
      double g = std::max(rlo[a] - chi, clo - rhi[a]);
      if (std::min(chi, rhi[a]) - std::max(clo, rlo[a]) <= 1e-12) overlap = false;
      gap = std::max(gap, g);
    }
    int target;
    if (overlap) {
      target = level_inside;
    } else {
      // ring j covers gaps in [B_{j-1}, B_j), one cell width per ring level;
      // half-unit slack absorbs float noise in the region conversion
      target = level_inside;
      double boundary = 0.0;
      while (target > 0) {
        target = std::max(target - decay, 0);
        boundary += double(TreeMesh<dim>::size_units(std::max(target, 0)));
        if (gap < boundary - 0.5) break;
      }
      if (gap >= boundary - 0.5) target = 0;
    }
    if (K.level < target) flags.marks[i] = Mark::refine;
  }
  return flags;
}

/// Applies geometric grading flags until fixpoint (at most level_inside+1
/// rounds) and returns the refined balanced mesh.
template <int dim>
TreeMesh<dim> grade_towards(TreeMesh<dim> mesh, const Box<dim>& region,
                            int level_inside, int decay = 1) {
  for (int round = 0; round <= level_inside + 1; ++round) {
    RefinementFlags flags =
        geometric_grading_flags(mesh, region, level_inside, decay);
    if (!flags.any()) break;
    mesh = mesh.refined_and_balanced(flags);
  }
  return mesh;
}

} // namespace htsim
