#pragma once

#include <array>

#include "htsim/core.hpp"

namespace htsim {

// Canonical local ordering of the sub-entities of a quad/hex reference cell.
// Edges are grouped by axis; within an axis they are ordered lexicographically
// by the offsets of the transverse axes (lower axis varies fastest). Faces are
// ordered (normal axis, side). All modules that touch cell-local entities use
// these tables, so the ordering is fixed in one place.

template <int dim>
struct CellTopology {
  static constexpr int n_vertices = 1 << dim;
  static constexpr int n_edges = dim == 2 ? 4 : 12;
  static constexpr int n_faces = dim == 2 ? 0 : 6;

  // transverse axes of `axis` in increasing order
  static std::array<int, dim - 1> transverse(int axis) {
    if constexpr (dim == 2) {
      return {1 - axis};
    } else {
      return {axis == 0 ? 1 : 0, axis == 2 ? 1 : 2};
    }
  }

  static int edge_axis(int e) { return dim == 2 ? e / 2 : e / 4; }

  // offsets (0/1) of the transverse axes, in transverse() order
  static std::array<int, dim - 1> edge_offsets(int e) {
    if constexpr (dim == 2) {
      return {e % 2};
    } else {
      int r = e % 4;
      return {r % 2, r / 2};
    }
  }

  static int face_axis(int f) { return f / 2; }
  static int face_side(int f) { return f % 2; }

  // vertex offsets, index = ox + 2*oy (+ 4*oz)
  static std::array<int, dim> vertex_offsets(int v) {
    std::array<int, dim> o{};
    for (int a = 0; a < dim; ++a) o[a] = (v >> a) & 1;
    return o;
  }
};

} // namespace htsim
