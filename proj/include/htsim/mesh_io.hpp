#pragma once

#include <fstream>
#include <iomanip>
#include <map>
#include <string>
#include <vector>

#include "htsim/mesh.hpp"

namespace htsim {

/// Plain-text dump: header, vertex coordinate block, cell connectivity block
/// (level + vertex ids). Layout documented in the README.
template <int dim>
void write_mesh_text(const TreeMesh<dim>& mesh, const std::string& path) {
  std::ofstream os(path);
  HTSIM_REQUIRE(os.good(), SolverError, "cannot open " + path);
  os << "htsim-mesh dim " << dim << " cells " << mesh.n_cells() << " vertices "
     << mesh.vertices().size() << "\n";
  os << std::setprecision(17);
  for (const auto& v : mesh.vertices()) {
    Vec<dim> x = mesh.to_physical(v.pos);
    for (int a = 0; a < dim; ++a) os << x[a] << (a + 1 < dim ? ' ' : '\n');
  }
  for (int i = 0; i < mesh.n_cells(); ++i) {
    os << mesh.cell(i).level;
    for (int v = 0; v < CellTopology<dim>::n_vertices; ++v)
      os << ' ' << mesh.cell_vertices(i)[v];
    os << '\n';
  }
}

/// Legacy ASCII VTK unstructured grid (quads / hexahedra) with optional
/// per-cell scalar fields.
template <int dim>
void write_mesh_vtk(const TreeMesh<dim>& mesh, const std::string& path,
                    const std::map<std::string, std::vector<double>>& cell_data = {}) {
  std::ofstream os(path);
  HTSIM_REQUIRE(os.good(), SolverError, "cannot open " + path);
  os << "# vtk DataFile Version 3.0\n";
  os << "htsim mesh\nASCII\nDATASET UNSTRUCTURED_GRID\n";
  os << "POINTS " << mesh.vertices().size() << " double\n";
  os << std::setprecision(12);
  for (const auto& v : mesh.vertices()) {
    Vec<dim> x = mesh.to_physical(v.pos);
    os << x[0] << ' ' << x[1] << ' ' << (dim == 3 ? x[dim - 1] : 0.0) << '\n';
  }
  const int nv = CellTopology<dim>::n_vertices;
  os << "CELLS " << mesh.n_cells() << ' ' << mesh.n_cells() * (nv + 1) << '\n';
  for (int i = 0; i < mesh.n_cells(); ++i) {
    os << nv;
    if constexpr (dim == 2) {
      // VTK_QUAD is counterclockwise
      const auto& cv = mesh.cell_vertices(i);
      os << ' ' << cv[0] << ' ' << cv[1] << ' ' << cv[3] << ' ' << cv[2];
    } else {
      // VTK_HEXAHEDRON: bottom quad ccw, then top quad ccw
      const auto& cv = mesh.cell_vertices(i);
      os << ' ' << cv[0] << ' ' << cv[1] << ' ' << cv[3] << ' ' << cv[2] << ' '
         << cv[4] << ' ' << cv[5] << ' ' << cv[7] << ' ' << cv[6];
    }
    os << '\n';
  }
  os << "CELL_TYPES " << mesh.n_cells() << '\n';
  for (int i = 0; i < mesh.n_cells(); ++i) os << (dim == 2 ? 9 : 12) << '\n';
  if (!cell_data.empty()) {
    os << "CELL_DATA " << mesh.n_cells() << '\n';
    for (const auto& [name, values] : cell_data) {
      os << "SCALARS " << name << " double 1\nLOOKUP_TABLE default\n";
      for (double v : values) os << v << '\n';
    }
  }
}

} // namespace htsim
