#pragma once

#include <json.hpp>
#include <fstream>
#include <string>
#include <vector>

#include "htsim/postproc.hpp"

namespace htsim {

using nlohmann::json;

/// Geometry is configured in millimeters (and converted when the scenario is
/// built); everything else is SI.
struct ProfileSpec {
  std::string name = "profile";
  std::vector<double> from_mm, to_mm;
  int samples = 201;
  std::string at = "final"; // "final" | "plateau_ends" | "times"
  std::vector<double> times_s;
};

struct ScenarioConfig {
  std::string name = "scenario";
  std::string description;
  int dim = 2;

  // geometry (mm)
  std::vector<std::array<double, 2>> domain_mm;
  std::vector<std::array<double, 2>> hts_mm;
  bool snap = false; // accept cell-center snapping of the HTS box

  // mesh
  std::vector<int> root_grid;
  int hts_level = 1;
  int decay = 1;

  int order = 1;

  // materials
  double rho_air = 1.0;
  std::string hts_law = "power"; // "power" | "kim" | "lift_table"
  double E_c = 1e-4, J_c = 1e8, n_exp = 24.0, rho_floor = 1e-16;
  double J_c0 = 0.0, B_0 = 0.0;
  std::vector<std::string> lift_tables;
  int stack_axis = -1;

  // excitation
  std::string excitation = "none"; // "applied_field" | "injected_current"
  double amplitude_T = 0.0, frequency_Hz = 0.0, angle_rad = 0.0;
  std::string field_plane = "xz"; // 3D only; 2D uses the xy plane
  std::vector<double> levels_A;
  double plateau_s = 0.0;
  int section_axis = -1;        // 3D injected current: plane normal
  double section_plane_mm = 0.0;

  // time stepping
  double t_end_s = 0.0, dt_min_s = 0.0, dt_max_s = 0.0, dt_init_s = 0.0;
  double theta = 1.0, kappa = 5.0;

  // newton
  double rtol = 1e-10, atol = 0.0, stagnation_rtol = 0.0;
  int max_iterations = 25, max_backtracks = 10;

  // output
  std::string out_dir = "out";
  bool write_series = true, write_losses = true, write_magnetization = true;
  bool mesh_vtk = false, mesh_text = false, dump_system = false;
  std::vector<double> loss_window_s; // empty: automatic from the excitation
  std::vector<ProfileSpec> profiles;
  int threads = 1;
};

namespace detail {

inline void check_keys(const json& j, const std::string& path,
                       std::initializer_list<const char*> allowed) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* a : allowed)
      if (it.key() == a) {
        ok = true;
        break;
      }
    if (!ok) throw ConfigError(path.empty() ? it.key() : path + "." + it.key(),
                               "unknown key");
  }
}

template <typename T>
T req(const json& j, const std::string& path, const char* key) {
  if (!j.contains(key))
    throw ConfigError(path.empty() ? key : path + "." + key,
                      "missing required key");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(path.empty() ? key : path + "." + key,
                      std::string("bad value: ") + e.what());
  }
}

template <typename T>
T opt(const json& j, const std::string& path, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(path.empty() ? key : path + "." + key,
                      std::string("bad value: ") + e.what());
  }
}

inline std::vector<std::array<double, 2>> box_field(const json& j,
                                                    const std::string& path,
                                                    const char* key, int dim) {
  auto raw = req<std::vector<std::vector<double>>>(j, path, key);
  if (int(raw.size()) != dim)
    throw ConfigError(path + "." + key, "expected one [lo, hi] pair per axis");
  std::vector<std::array<double, 2>> out;
  for (const auto& pair : raw) {
    if (pair.size() != 2)
      throw ConfigError(path + "." + key, "each axis needs [lo, hi]");
    out.push_back({pair[0], pair[1]});
  }
  return out;
}

} // namespace detail

inline ScenarioConfig parse_config_json(const json& root) {
  using namespace detail;
  ScenarioConfig c;
  {
    std::string missing;
    for (const char* key :
         {"dim", "geometry", "mesh", "fe", "materials", "excitation", "time"})
      if (!root.contains(key)) missing += std::string(missing.empty() ? "" : ", ") + key;
    if (!missing.empty())
      throw ConfigError("", "missing required keys: " + missing);
  }
  check_keys(root, "", {"name", "description", "dim", "geometry", "mesh", "fe",
                        "materials", "excitation", "time", "newton", "output"});
  c.name = opt<std::string>(root, "", "name", "scenario");
  c.description = opt<std::string>(root, "", "description", "");
  c.dim = req<int>(root, "", "dim");
  if (c.dim != 2 && c.dim != 3) throw ConfigError("dim", "must be 2 or 3");

  const json& g = root.at("geometry");
  check_keys(g, "geometry", {"domain_mm", "hts_mm", "snap"});
  c.domain_mm = box_field(g, "geometry", "domain_mm", c.dim);
  c.hts_mm = box_field(g, "geometry", "hts_mm", c.dim);
  c.snap = opt<bool>(g, "geometry", "snap", false);
  for (int a = 0; a < c.dim; ++a) {
    if (c.domain_mm[a][1] <= c.domain_mm[a][0])
      throw ConfigError("geometry.domain_mm", "extent must be positive");
    if (c.hts_mm[a][1] <= c.hts_mm[a][0])
      throw ConfigError("geometry.hts_mm", "extent must be positive");
    if (c.hts_mm[a][0] <= c.domain_mm[a][0] ||
        c.hts_mm[a][1] >= c.domain_mm[a][1])
      throw ConfigError("geometry.hts_mm",
                        "HTS box must lie strictly inside the domain");
  }

  const json& m = root.at("mesh");
  check_keys(m, "mesh", {"root_grid", "hts_level", "decay"});
  c.root_grid = req<std::vector<int>>(m, "mesh", "root_grid");
  if (int(c.root_grid.size()) != c.dim)
    throw ConfigError("mesh.root_grid", "one entry per axis");
  for (int v : c.root_grid)
    if (v < 1) throw ConfigError("mesh.root_grid", "entries must be >= 1");
  c.hts_level = req<int>(m, "mesh", "hts_level");
  if (c.hts_level < 0 || c.hts_level > 18)
    throw ConfigError("mesh.hts_level", "must be in 0..18");
  c.decay = opt<int>(m, "mesh", "decay", 1);
  if (c.decay < 1) throw ConfigError("mesh.decay", "must be >= 1");

  const json& fe = root.at("fe");
  check_keys(fe, "fe", {"order"});
  c.order = req<int>(fe, "fe", "order");
  if (c.order < 1 || c.order > 3) throw ConfigError("fe.order", "must be 1..3");

  const json& mat = root.at("materials");
  check_keys(mat, "materials", {"air", "hts"});
  {
    const json& air = mat.contains("air") ? mat.at("air") : json::object();
    check_keys(air, "materials.air", {"rho"});
    c.rho_air = opt<double>(air, "materials.air", "rho", 1.0);
    if (c.rho_air <= 0) throw ConfigError("materials.air.rho", "must be > 0");
    if (!mat.contains("hts"))
      throw ConfigError("materials.hts", "missing required key");
    const json& hts = mat.at("hts");
    check_keys(hts, "materials.hts",
               {"law", "E_c", "J_c", "n", "rho_floor", "J_c0", "B_0",
                "lift_tables", "stack_axis"});
    c.hts_law = opt<std::string>(hts, "materials.hts", "law", "power");
    if (c.hts_law != "power" && c.hts_law != "kim" && c.hts_law != "lift_table")
      throw ConfigError("materials.hts.law",
                        "must be power, kim or lift_table");
    c.E_c = req<double>(hts, "materials.hts", "E_c");
    c.J_c = req<double>(hts, "materials.hts", "J_c");
    c.n_exp = req<double>(hts, "materials.hts", "n");
    c.rho_floor = opt<double>(hts, "materials.hts", "rho_floor", 1e-16);
    if (c.E_c <= 0 || c.J_c <= 0 || c.n_exp < 1 || c.rho_floor < 0)
      throw ConfigError("materials.hts", "parameters out of range");
    if (c.hts_law == "kim") {
      c.J_c0 = opt<double>(hts, "materials.hts", "J_c0", c.J_c);
      c.B_0 = req<double>(hts, "materials.hts", "B_0");
      if (c.J_c0 <= 0 || c.B_0 <= 0)
        throw ConfigError("materials.hts", "Kim parameters must be positive");
    }
    if (c.hts_law == "lift_table") {
      c.J_c0 = opt<double>(hts, "materials.hts", "J_c0", c.J_c);
      c.lift_tables =
          req<std::vector<std::string>>(hts, "materials.hts", "lift_tables");
      if (int(c.lift_tables.size()) != c.dim)
        throw ConfigError("materials.hts.lift_tables",
                          "one table per field component");
    }
    c.stack_axis = opt<int>(hts, "materials.hts", "stack_axis", -1);
    if (c.stack_axis >= 0 && (c.dim != 3 || c.stack_axis > 2))
      throw ConfigError("materials.hts.stack_axis",
                        "requires dim 3 and an axis in 0..2");
  }

  const json& exc = root.at("excitation");
  check_keys(exc, "excitation", {"type", "applied_field", "injected_current"});
  c.excitation = req<std::string>(exc, "excitation", "type");
  if (c.excitation != "applied_field" && c.excitation != "injected_current" &&
      c.excitation != "none")
    throw ConfigError("excitation.type",
                      "must be applied_field, injected_current or none");
  if (exc.contains("applied_field") && exc.contains("injected_current"))
    throw ConfigError("excitation",
                      "applied_field and injected_current are exclusive");
  if (c.excitation == "applied_field") {
    if (!exc.contains("applied_field"))
      throw ConfigError("excitation.applied_field", "missing required key");
    const json& af = exc.at("applied_field");
    check_keys(af, "excitation.applied_field",
               {"amplitude_T", "frequency_Hz", "angle_rad", "plane"});
    c.amplitude_T = req<double>(af, "excitation.applied_field", "amplitude_T");
    c.frequency_Hz =
        req<double>(af, "excitation.applied_field", "frequency_Hz");
    c.angle_rad = opt<double>(af, "excitation.applied_field", "angle_rad", 0.0);
    c.field_plane =
        opt<std::string>(af, "excitation.applied_field", "plane", "xz");
    if (c.frequency_Hz <= 0)
      throw ConfigError("excitation.applied_field.frequency_Hz", "must be > 0");
    if (c.dim == 3 && c.field_plane != "xz" && c.field_plane != "xy")
      throw ConfigError("excitation.applied_field.plane", "must be xz or xy");
  } else if (c.excitation == "injected_current") {
    if (!exc.contains("injected_current"))
      throw ConfigError("excitation.injected_current", "missing required key");
    const json& ic = exc.at("injected_current");
    check_keys(ic, "excitation.injected_current",
               {"levels_A", "plateau_s", "section_axis", "section_plane_mm"});
    c.levels_A =
        req<std::vector<double>>(ic, "excitation.injected_current", "levels_A");
    c.plateau_s = req<double>(ic, "excitation.injected_current", "plateau_s");
    if (c.levels_A.empty())
      throw ConfigError("excitation.injected_current.levels_A", "empty");
    if (c.plateau_s <= 0)
      throw ConfigError("excitation.injected_current.plateau_s", "must be > 0");
    c.section_axis =
        opt<int>(ic, "excitation.injected_current", "section_axis", -1);
    c.section_plane_mm =
        opt<double>(ic, "excitation.injected_current", "section_plane_mm", 0.0);
    if (c.dim == 3 && (c.section_axis < 0 || c.section_axis > 2))
      throw ConfigError("excitation.injected_current.section_axis",
                        "3D current injection needs a face-aligned plane axis");
  }

  const json& tm = root.at("time");
  check_keys(tm, "time",
             {"t_end_s", "dt_min_s", "dt_max_s", "dt_init_s", "theta", "kappa"});
  c.t_end_s = opt<double>(tm, "time", "t_end_s", 0.0);
  c.dt_min_s = req<double>(tm, "time", "dt_min_s");
  c.dt_max_s = req<double>(tm, "time", "dt_max_s");
  c.dt_init_s = opt<double>(tm, "time", "dt_init_s", 0.0);
  c.theta = opt<double>(tm, "time", "theta", 1.0);
  c.kappa = opt<double>(tm, "time", "kappa", 5.0);
  if (c.dt_min_s <= 0 || c.dt_max_s < c.dt_min_s)
    throw ConfigError("time", "need 0 < dt_min_s <= dt_max_s");
  if (c.theta <= 0.0 || c.theta > 1.0)
    throw ConfigError("time.theta", "must be in (0, 1]");
  if (c.kappa <= 0) throw ConfigError("time.kappa", "must be > 0");
  if (c.t_end_s == 0.0 && c.excitation == "injected_current")
    c.t_end_s = c.plateau_s * double(c.levels_A.size());
  if (c.t_end_s <= 0) throw ConfigError("time.t_end_s", "must be > 0");

  if (root.contains("newton")) {
    const json& nw = root.at("newton");
    check_keys(nw, "newton",
               {"rtol", "atol", "max_iterations", "max_backtracks",
                "stagnation_rtol"});
    c.rtol = opt<double>(nw, "newton", "rtol", 1e-10);
    c.atol = opt<double>(nw, "newton", "atol", 0.0);
    c.max_iterations = opt<int>(nw, "newton", "max_iterations", 25);
    c.max_backtracks = opt<int>(nw, "newton", "max_backtracks", 10);
    c.stagnation_rtol = opt<double>(nw, "newton", "stagnation_rtol", 0.0);
    if (c.rtol <= 0 || c.atol < 0 || c.max_iterations < 1 ||
        c.max_backtracks < 1 || c.stagnation_rtol < 0)
      throw ConfigError("newton", "parameters out of range");
  }

  if (root.contains("output")) {
    const json& out = root.at("output");
    check_keys(out, "output",
               {"directory", "series", "losses", "magnetization", "mesh_vtk",
                "mesh_text", "dump_system", "loss_window_s", "profiles",
                "threads"});
    c.out_dir = opt<std::string>(out, "output", "directory", "out");
    c.write_series = opt<bool>(out, "output", "series", true);
    c.write_losses = opt<bool>(out, "output", "losses", true);
    c.write_magnetization = opt<bool>(out, "output", "magnetization", true);
    c.mesh_vtk = opt<bool>(out, "output", "mesh_vtk", false);
    c.mesh_text = opt<bool>(out, "output", "mesh_text", false);
    c.dump_system = opt<bool>(out, "output", "dump_system", false);
    c.loss_window_s =
        opt<std::vector<double>>(out, "output", "loss_window_s", {});
    if (!c.loss_window_s.empty() && c.loss_window_s.size() != 2)
      throw ConfigError("output.loss_window_s", "expected [begin, end]");
    c.threads = opt<int>(out, "output", "threads", 1);
    if (c.threads < 1) throw ConfigError("output.threads", "must be >= 1");
    if (out.contains("profiles")) {
      for (std::size_t i = 0; i < out.at("profiles").size(); ++i) {
        const json& p = out.at("profiles").at(i);
        const std::string path = "output.profiles[" + std::to_string(i) + "]";
        check_keys(p, path, {"name", "from_mm", "to_mm", "samples", "at",
                             "times_s"});
        ProfileSpec ps;
        ps.name = opt<std::string>(p, path, "name",
                                   "profile" + std::to_string(i));
        ps.from_mm = req<std::vector<double>>(p, path, "from_mm");
        ps.to_mm = req<std::vector<double>>(p, path, "to_mm");
        if (int(ps.from_mm.size()) != c.dim || int(ps.to_mm.size()) != c.dim)
          throw ConfigError(path, "endpoint dimension mismatch");
        ps.samples = opt<int>(p, path, "samples", 201);
        if (ps.samples < 2) throw ConfigError(path + ".samples", "must be >= 2");
        ps.at = opt<std::string>(p, path, "at", "final");
        if (ps.at != "final" && ps.at != "plateau_ends" && ps.at != "times")
          throw ConfigError(path + ".at",
                            "must be final, plateau_ends or times");
        ps.times_s = opt<std::vector<double>>(p, path, "times_s", {});
        c.profiles.push_back(std::move(ps));
      }
    }
  }
  return c;
}

/// Parses either a scenario file or a run manifest (identified by its
/// top-level "config" object).
inline ScenarioConfig parse_config(const std::string& path) {
  std::ifstream is(path);
  if (!is.good()) throw ConfigError(path, "cannot open file");
  json root;
  try {
    is >> root;
  } catch (const json::exception& e) {
    throw ConfigError(path, std::string("malformed JSON: ") + e.what());
  }
  if (root.contains("config")) return parse_config_json(root.at("config"));
  return parse_config_json(root);
}

inline json serialize_config(const ScenarioConfig& c) {
  json root;
  root["name"] = c.name;
  if (!c.description.empty()) root["description"] = c.description;
  root["dim"] = c.dim;
  auto boxes = [](const std::vector<std::array<double, 2>>& b) {
    json j = json::array();
    for (const auto& p : b) j.push_back({p[0], p[1]});
    return j;
  };
  root["geometry"] = {{"domain_mm", boxes(c.domain_mm)},
                      {"hts_mm", boxes(c.hts_mm)},
                      {"snap", c.snap}};
  root["mesh"] = {{"root_grid", c.root_grid},
                  {"hts_level", c.hts_level},
                  {"decay", c.decay}};
  root["fe"] = {{"order", c.order}};
  json hts = {{"law", c.hts_law}, {"E_c", c.E_c},      {"J_c", c.J_c},
              {"n", c.n_exp},     {"rho_floor", c.rho_floor}};
  if (c.hts_law == "kim") {
    hts["J_c0"] = c.J_c0;
    hts["B_0"] = c.B_0;
  }
  if (c.hts_law == "lift_table") {
    hts["J_c0"] = c.J_c0;
    hts["lift_tables"] = c.lift_tables;
  }
  if (c.stack_axis >= 0) hts["stack_axis"] = c.stack_axis;
  root["materials"] = {{"air", {{"rho", c.rho_air}}}, {"hts", hts}};
  json exc = {{"type", c.excitation}};
  if (c.excitation == "applied_field")
    exc["applied_field"] = {{"amplitude_T", c.amplitude_T},
                            {"frequency_Hz", c.frequency_Hz},
                            {"angle_rad", c.angle_rad},
                            {"plane", c.field_plane}};
  if (c.excitation == "injected_current") {
    exc["injected_current"] = {{"levels_A", c.levels_A},
                               {"plateau_s", c.plateau_s}};
    if (c.section_axis >= 0) {
      exc["injected_current"]["section_axis"] = c.section_axis;
      exc["injected_current"]["section_plane_mm"] = c.section_plane_mm;
    }
  }
  root["excitation"] = exc;
  root["time"] = {{"t_end_s", c.t_end_s},   {"dt_min_s", c.dt_min_s},
                  {"dt_max_s", c.dt_max_s}, {"dt_init_s", c.dt_init_s},
                  {"theta", c.theta},       {"kappa", c.kappa}};
  root["newton"] = {{"rtol", c.rtol},
                    {"atol", c.atol},
                    {"stagnation_rtol", c.stagnation_rtol},
                    {"max_iterations", c.max_iterations},
                    {"max_backtracks", c.max_backtracks}};
  json prof = json::array();
  for (const auto& p : c.profiles) {
    json jp = {{"name", p.name}, {"from_mm", p.from_mm}, {"to_mm", p.to_mm},
               {"samples", p.samples}, {"at", p.at}};
    if (!p.times_s.empty()) jp["times_s"] = p.times_s;
    prof.push_back(jp);
  }
  root["output"] = {{"directory", c.out_dir},
                    {"series", c.write_series},
                    {"losses", c.write_losses},
                    {"magnetization", c.write_magnetization},
                    {"mesh_vtk", c.mesh_vtk},
                    {"mesh_text", c.mesh_text},
                    {"dump_system", c.dump_system},
                    {"loss_window_s", c.loss_window_s},
                    {"profiles", prof},
                    {"threads", c.threads}};
  return root;
}

// --- scenario construction ---------------------------------------------------

template <int dim>
struct Scenario {
  std::shared_ptr<const TreeMesh<dim>> mesh;
  std::shared_ptr<const EdgeSpace<dim>> space;
  std::shared_ptr<Assembler<dim>> assembler;
  std::vector<int> hts_cells;
  Box<dim> hts_box; // snapped, meters
  double hts_volume = 0.0;
  Vec<dim> hts_center = Vec<dim>::Zero();
  TransientProblem<dim> problem;
  TimeStepper stepper{};
  NewtonConfig newton{};
  MagVec<dim> alpha_dir = MagVec<dim>::Zero();
  std::function<double(double)> h_alpha_applied; // A/m
  double period_s = 0.0;
};

template <int dim>
Scenario<dim> build_scenario(const ScenarioConfig& c) {
  HTSIM_REQUIRE(c.dim == dim, PreconditionError, "dimension mismatch");
  Scenario<dim> s;

  Box<dim> domain, hts;
  std::array<int, dim> grid{};
  for (int a = 0; a < dim; ++a) {
    domain.lo[a] = c.domain_mm[a][0] * 1e-3;
    domain.hi[a] = c.domain_mm[a][1] * 1e-3;
    hts.lo[a] = c.hts_mm[a][0] * 1e-3;
    hts.hi[a] = c.hts_mm[a][1] * 1e-3;
    grid[a] = c.root_grid[std::size_t(a)];
  }
  auto mesh = TreeMesh<dim>::make_uniform(domain, grid);
  mesh = grade_towards(mesh, hts, c.hts_level, c.decay);
  s.mesh = std::make_shared<const TreeMesh<dim>>(std::move(mesh));

  // material tags by cell-center containment
  Box<dim> snapped;
  snapped.lo = Vec<dim>::Constant(1e300);
  snapped.hi = Vec<dim>::Constant(-1e300);
  bool misaligned = false;
  for (int cell = 0; cell < s.mesh->n_cells(); ++cell) {
    Vec<dim> ctr = s.mesh->cell_center(cell);
    bool inside = true;
    for (int a = 0; a < dim; ++a)
      if (ctr[a] <= hts.lo[a] || ctr[a] >= hts.hi[a]) inside = false;
    if (!inside) continue;
    s.hts_cells.push_back(cell);
    Vec<dim> lo = s.mesh->cell_lo(cell), hi = s.mesh->cell_hi(cell);
    for (int a = 0; a < dim; ++a) {
      snapped.lo[a] = std::min(snapped.lo[a], lo[a]);
      snapped.hi[a] = std::max(snapped.hi[a], hi[a]);
      const double tol = 1e-6 * (hi[a] - lo[a]);
      if (lo[a] < hts.lo[a] - tol || hi[a] > hts.hi[a] + tol)
        misaligned = true;
    }
    if (s.mesh->cell(cell).level != c.hts_level) misaligned = true;
  }
  if (s.hts_cells.empty())
    throw ConfigError("geometry.hts_mm",
                      "no cell centers inside the HTS box; refine the mesh");
  double vol = 0.0;
  for (int cell : s.hts_cells) vol += s.mesh->cell_measure(cell);
  if (!c.snap) {
    const double box_vol = hts.measure();
    if (misaligned || std::abs(vol - box_vol) > 1e-6 * box_vol)
      throw ConfigError(
          "geometry.hts_mm",
          "HTS box is not resolvable by whole cells at hts_level " +
              std::to_string(c.hts_level) +
              "; adjust root_grid/hts_level or set geometry.snap");
  }
  s.hts_box = snapped;
  s.hts_volume = vol;
  s.hts_center = 0.5 * (snapped.lo + snapped.hi);

  s.space = std::make_shared<const EdgeSpace<dim>>(s.mesh, c.order);

  SubdomainMaterial<dim> hts_mat;
  hts_mat.is_hts = true;
  hts_mat.rho_air = c.rho_air;
  hts_mat.power = PowerLawModel{c.E_c, c.J_c, c.n_exp, c.rho_floor};
  hts_mat.stack_axis = c.stack_axis;
  if (c.hts_law == "kim") {
    hts_mat.jc_law = JcLaw::kim;
    hts_mat.kim = KimModel{c.J_c0 > 0 ? c.J_c0 : c.J_c, c.B_0};
  } else if (c.hts_law == "lift_table") {
    hts_mat.jc_law = JcLaw::lift_table;
    hts_mat.lift.J_c0 = c.J_c0 > 0 ? c.J_c0 : c.J_c;
    for (const auto& path : c.lift_tables)
      hts_mat.lift.curves.push_back(LiftFactorTable::load_curve(path));
  }
  SubdomainMaterial<dim> air_mat;
  air_mat.rho_air = c.rho_air;

  std::vector<int> tags(s.mesh->n_cells(), 1);
  for (int cell : s.hts_cells) tags[cell] = 0;
  s.assembler = std::make_shared<Assembler<dim>>(
      s.space, std::vector{hts_mat, air_mat}, tags, c.threads);

  s.problem.assembler = s.assembler;
  s.problem.source = nullptr;

  if (c.excitation == "applied_field") {
    Vec<dim> dir = Vec<dim>::Zero();
    if constexpr (dim == 2) {
      dir[0] = std::cos(c.angle_rad);
      dir[1] = std::sin(c.angle_rad);
    } else {
      if (c.field_plane == "xz") {
        dir[0] = std::cos(c.angle_rad);
        dir[2] = std::sin(c.angle_rad);
      } else {
        dir[0] = std::cos(c.angle_rad);
        dir[1] = std::sin(c.angle_rad);
      }
    }
    const double h_amp = c.amplitude_T / kMu0;
    const double omega = 2.0 * M_PI * c.frequency_Hz;
    s.problem.boundary = [dir, h_amp, omega](const Vec<dim>&, double t) {
      return Vec<dim>(dir * (h_amp * std::sin(omega * t)));
    };
    s.alpha_dir = dir;
    s.h_alpha_applied = [h_amp, omega](double t) {
      return h_amp * std::sin(omega * t);
    };
    s.period_s = 1.0 / c.frequency_Hz;
  } else {
    s.problem.boundary = [](const Vec<dim>&, double) {
      return Vec<dim>(Vec<dim>::Zero());
    };
  }

  if (c.excitation == "injected_current") {
    CurrentSection<dim> sec;
    if constexpr (dim == 2) {
      sec.cells = s.hts_cells;
    } else {
      sec.axis = c.section_axis;
      sec.plane = c.section_plane_mm * 1e-3;
      for (int cell : s.hts_cells) {
        const double lo = s.mesh->cell_lo(cell)[sec.axis];
        const double hi = s.mesh->cell_hi(cell)[sec.axis];
        const double tol = 1e-9 * (hi - lo);
        if (std::abs(lo - sec.plane) < tol) sec.cells.push_back(cell);
      }
      if (sec.cells.empty())
        throw ConfigError("excitation.injected_current.section_plane_mm",
                          "no HTS cell faces on the requested plane");
    }
    s.assembler->set_section(sec);
    const auto levels = c.levels_A;
    const double plateau = c.plateau_s;
    s.problem.applied_current = [levels, plateau](double t) {
      // the state at t = k * plateau closes plateau k-1
      int idx = int(std::ceil(t / plateau - 1e-12)) - 1;
      idx = std::clamp(idx, 0, int(levels.size()) - 1);
      return levels[std::size_t(idx)];
    };
    for (std::size_t k = 1; k <= levels.size(); ++k) {
      const double ev = plateau * double(k);
      if (ev < c.t_end_s - 1e-12) s.problem.event_times.push_back(ev);
    }
  }

  s.stepper = TimeStepper{c.dt_min_s, c.dt_max_s, c.dt_init_s,
                          c.kappa,    c.theta,    c.t_end_s};
  s.newton = NewtonConfig{c.rtol,          c.atol, c.max_iterations,
                          c.max_backtracks, 1e-8,   c.stagnation_rtol};
  return s;
}

} // namespace htsim
