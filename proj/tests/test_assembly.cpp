#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Eigenvalues>
#include <Eigen/SparseLU>
#include <random>

#include "htsim/assembly.hpp"

using namespace htsim;

namespace {

template <int dim>
std::shared_ptr<const EdgeSpace<dim>> space_on(
    std::shared_ptr<const TreeMesh<dim>> mesh, int k, bool dirichlet) {
  return std::make_shared<const EdgeSpace<dim>>(std::move(mesh), k, dirichlet);
}

template <int dim>
Assembler<dim> air_assembler(std::shared_ptr<const EdgeSpace<dim>> space,
                             double rho = 1.0) {
  SubdomainMaterial<dim> air;
  air.is_hts = false;
  air.rho_air = rho;
  std::vector<int> tags(space->mesh().n_cells(), 0);
  return Assembler<dim>(space, {air}, tags);
}

template <int dim>
Assembler<dim> hts_assembler(std::shared_ptr<const EdgeSpace<dim>> space,
                             PowerLawModel law) {
  SubdomainMaterial<dim> hts;
  hts.is_hts = true;
  hts.power = law;
  std::vector<int> tags(space->mesh().n_cells(), 0);
  return Assembler<dim>(space, {hts}, tags);
}

} // namespace

TEST_CASE("local mass matrix, unit square, k=1") {
  auto mesh = std::make_shared<const TreeMesh<2>>(
      TreeMesh<2>::make_uniform(Box<2>{{0, 0}, {1, 1}}, {1, 1}));
  auto space = space_on<2>(mesh, 1, false);
  auto asm2 = air_assembler<2>(space);
  Eigen::MatrixXd m = Eigen::MatrixXd(asm2.mass());
  REQUIRE(m.rows() == 4);
  Eigen::MatrixXd expect(4, 4);
  // dof order: x-edges at y=0,1 then y-edges at x=0,1
  expect << 1.0 / 3, 1.0 / 6, 0, 0,
            1.0 / 6, 1.0 / 3, 0, 0,
            0, 0, 1.0 / 3, 1.0 / 6,
            0, 0, 1.0 / 6, 1.0 / 3;
  CHECK((m - expect).cwiseAbs().maxCoeff() < 1e-13);
}

TEST_CASE("mass scaling with cell size") {
  auto unit = std::make_shared<const TreeMesh<2>>(
      TreeMesh<2>::make_uniform(Box<2>{{0, 0}, {1, 1}}, {1, 1}));
  auto big = std::make_shared<const TreeMesh<2>>(
      TreeMesh<2>::make_uniform(Box<2>{{0, 0}, {2, 2}}, {1, 1}));
  Eigen::MatrixXd m1 =
      Eigen::MatrixXd(air_assembler<2>(space_on<2>(unit, 1, false)).mass());
  Eigen::MatrixXd m2 =
      Eigen::MatrixXd(air_assembler<2>(space_on<2>(big, 1, false)).mass());
  CHECK((m2 - 4.0 * m1).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("mass is SPD after elimination") {
  auto m0 = TreeMesh<2>::make_uniform(Box<2>{{0, 0}, {1, 1}}, {4, 4});
  RefinementFlags f;
  f.marks.assign(m0.n_cells(), Mark::keep);
  f.marks[5] = Mark::refine;
  auto mesh =
      std::make_shared<const TreeMesh<2>>(m0.refined_and_balanced(f));
  for (int k : {1, 2}) {
    auto space = space_on<2>(mesh, k, true);
    auto a = air_assembler<2>(space);
    Eigen::MatrixXd m = Eigen::MatrixXd(a.mass());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
    CHECK(es.eigenvalues().minCoeff() > 0.0);
    CHECK((m - m.transpose()).cwiseAbs().maxCoeff() < 1e-14);
  }
}

TEST_CASE("constant-rho stiffness is the rank-one curl pairing, k=1") {
  auto mesh = std::make_shared<const TreeMesh<2>>(
      TreeMesh<2>::make_uniform(Box<2>{{0, 0}, {1, 1}}, {1, 1}));
  auto space = space_on<2>(mesh, 1, false);
  const double rho = 2.5;
  auto a = air_assembler<2>(space, rho);
  Eigen::MatrixXd k =
      Eigen::MatrixXd(a.stiffness(Eigen::VectorXd::Zero(space->n_dofs())));
  Eigen::Vector4d s(1.0, -1.0, -1.0, 1.0); // curls of the four shapes
  Eigen::MatrixXd expect = rho * s * s.transpose();
  CHECK((k - expect).cwiseAbs().maxCoeff() < 1e-13);
}

TEST_CASE("stiffness annihilates curl-free fields") {
  auto mesh = std::make_shared<const TreeMesh<2>>(
      TreeMesh<2>::make_uniform(Box<2>{{0, 0}, {1, 1}}, {3, 3}));
  auto space = space_on<2>(mesh, 2, false);
  auto a = air_assembler<2>(space);
  auto v = space->interpolate([](const Vec<2>&) { return Vec<2>{1.0, 0.0}; });
  Eigen::VectorXd kv = a.stiffness(v) * v;
  CHECK(kv.cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("air assembly is state independent") {
  auto mesh = std::make_shared<const TreeMesh<2>>(
      TreeMesh<2>::make_uniform(Box<2>{{0, 0}, {1, 1}}, {2, 2}));
  auto space = space_on<2>(mesh, 1, false);
  auto a = air_assembler<2>(space, 1e-2);
  Eigen::VectorXd s1 = Eigen::VectorXd::Zero(space->n_dofs());
  Eigen::VectorXd s2 = Eigen::VectorXd::Constant(space->n_dofs(), 3.7);
  Eigen::MatrixXd k1 = Eigen::MatrixXd(a.stiffness(s1));
  Eigen::MatrixXd k2 = Eigen::MatrixXd(a.stiffness(s2));
  CHECK((k1 - k2).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("constraint row") {
  auto mesh = std::make_shared<const TreeMesh<2>>(
      TreeMesh<2>::make_uniform(Box<2>{{0, 0}, {1, 1}}, {4, 4}));
  auto space = space_on<2>(mesh, 1, false);
  auto a = air_assembler<2>(space);
  CurrentSection<2> sec;
  // section = central 2x2 block of cells
  for (int c = 0; c < mesh->n_cells(); ++c) {
    Vec<2> ctr = mesh->cell_center(c);
    if (ctr[0] > 0.25 && ctr[0] < 0.75 && ctr[1] > 0.25 && ctr[1] < 0.75)
      sec.cells.push_back(c);
  }
  REQUIRE(sec.cells.size() == 4);
  a.set_section(sec);

  SUBCASE("curl-free field has zero circulation") {
    auto v = space->interpolate([](const Vec<2>&) { return Vec<2>{0.3, -1.0}; });
    CHECK(std::abs(a.constraint_value(v)) < 1e-13);
  }
  SUBCASE("unit-curl field integrates the section area") {
    auto v = space->interpolate(
        [](const Vec<2>& x) { return Vec<2>{-0.5 * x[1], 0.5 * x[0]}; });
    CHECK(a.constraint_value(v) == doctest::Approx(0.25).epsilon(1e-12));
  }
}

TEST_CASE("3D constraint plane") {
  auto mesh = std::make_shared<const TreeMesh<3>>(
      TreeMesh<3>::make_uniform(Box<3>{{0, 0, 0}, {1, 1, 1}}, {2, 2, 2}));
  auto space = space_on<3>(mesh, 1, false);
  auto a = air_assembler<3>(space);
  CurrentSection<3> sec;
  sec.axis = 2;
  sec.plane = 0.5;
  for (int c = 0; c < mesh->n_cells(); ++c)
    if (mesh->cell_lo(c)[2] == doctest::Approx(0.5)) sec.cells.push_back(c);
  REQUIRE(sec.cells.size() == 4);
  a.set_section(sec);
  auto v = space->interpolate(
      [](const Vec<3>& x) { return Vec<3>{-0.5 * x[1], 0.5 * x[0], 0.0}; });
  CHECK(a.constraint_value(v) == doctest::Approx(1.0).epsilon(1e-12));

  SUBCASE("plane off the faces is rejected") {
    CurrentSection<3> bad;
    bad.axis = 2;
    bad.plane = 0.3;
    bad.cells = {0};
    CHECK_THROWS_AS(a.set_section(bad), PreconditionError);
  }
}

TEST_CASE("residual of the zero state vanishes") {
  auto mesh = std::make_shared<const TreeMesh<2>>(
      TreeMesh<2>::make_uniform(Box<2>{{0, 0}, {1, 1}}, {2, 2}));
  auto space = space_on<2>(mesh, 1, true);
  auto a = hts_assembler<2>(space, {1e-4, 1e8, 24.0, 1e-16});
  Eigen::VectorXd prev = Eigen::VectorXd::Zero(space->n_dofs());
  StepData<2> data;
  data.prev_full = &prev;
  data.dt = 1e-3;
  data.time = 1e-3;
  Eigen::VectorXd r =
      a.residual(Eigen::VectorXd::Zero(a.n_unknowns()),
                 Eigen::VectorXd::Zero(space->n_dirichlet()), data);
  CHECK(r.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("linear air problem: residual vanishes at the direct solution") {
  auto mesh = std::make_shared<const TreeMesh<2>>(
      TreeMesh<2>::make_uniform(Box<2>{{0, 0}, {1, 1}}, {3, 3}));
  auto space = space_on<2>(mesh, 1, true);
  auto a = air_assembler<2>(space, 0.5);
  // boundary datum drives the solve
  Eigen::VectorXd bc = space->interpolate_dirichlet(
      [](const Vec<2>&) { return Vec<2>{0.0, 1.0}; });
  Eigen::VectorXd prev =
      space->materialize(Eigen::VectorXd::Zero(space->n_free()), bc);
  StepData<2> data;
  data.prev_full = &prev;
  data.dt = 1e-2;
  Eigen::VectorXd x0 = Eigen::VectorXd::Zero(a.n_unknowns());
  Eigen::VectorXd r0 = a.residual(x0, bc, data);
  SparseSystem sys = a.jacobian(x0, bc, data);
  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu(sys.matrix);
  REQUIRE(lu.info() == Eigen::Success);
  Eigen::VectorXd x = x0 - lu.solve(r0);
  Eigen::VectorXd r = a.residual(x, bc, data);
  CHECK(r.cwiseAbs().maxCoeff() < 1e-12 * r0.cwiseAbs().maxCoeff());
}

TEST_CASE("theta = 1 reproduces backward Euler term by term") {
  auto mesh = std::make_shared<const TreeMesh<2>>(
      TreeMesh<2>::make_uniform(Box<2>{{0, 0}, {1, 1}}, {2, 2}));
  auto space = space_on<2>(mesh, 1, false); // no dirichlet: free == full
  auto a = hts_assembler<2>(space, {1e-4, 1e8, 6.0, 1e-16});
  std::mt19937 rng(3);
  std::normal_distribution<double> n01;
  Eigen::VectorXd x(space->n_free()), prev_f(space->n_free());
  for (int i = 0; i < x.size(); ++i) {
    x[i] = 1e6 * n01(rng);
    prev_f[i] = 1e6 * n01(rng);
  }
  Eigen::VectorXd none(0);
  Eigen::VectorXd prev = space->materialize(prev_f, none);
  StepData<2> data;
  data.prev_full = &prev;
  data.dt = 2e-4;
  data.theta = 1.0;
  Eigen::VectorXd r = a.residual(x, none, data);
  // manual backward Euler from the standalone blocks
  Eigen::VectorXd full = space->materialize(x, none);
  Eigen::VectorXd manual = (kMu0 / data.dt) * (a.mass() * (x - prev_f)) +
                           a.stiffness(full) * x;
  CHECK((r - manual).cwiseAbs().maxCoeff() <
        1e-12 * manual.cwiseAbs().maxCoeff());
}

TEST_CASE("jacobian: air case is state independent and exact") {
  auto mesh = std::make_shared<const TreeMesh<2>>(
      TreeMesh<2>::make_uniform(Box<2>{{0, 0}, {1, 1}}, {2, 2}));
  auto space = space_on<2>(mesh, 1, true);
  auto a = air_assembler<2>(space, 1e-2);
  Eigen::VectorXd bc = Eigen::VectorXd::Zero(space->n_dirichlet());
  StepData<2> data;
  data.dt = 1e-3;
  Eigen::VectorXd x = Eigen::VectorXd::Random(a.n_unknowns());
  SparseSystem sys = a.jacobian(x, bc, data);
  Eigen::MatrixXd expect =
      (kMu0 / data.dt) * Eigen::MatrixXd(a.mass()) +
      Eigen::MatrixXd(a.stiffness(space->materialize(
          Eigen::VectorXd::Zero(space->n_free()), bc)));
  CHECK((Eigen::MatrixXd(sys.matrix) - expect).cwiseAbs().maxCoeff() <
        1e-12 * expect.cwiseAbs().maxCoeff());
  CHECK(sys.spd);
}

TEST_CASE("jacobian: floor branch has no nonlinear correction") {
  auto mesh = std::make_shared<const TreeMesh<2>>(
      TreeMesh<2>::make_uniform(Box<2>{{0, 0}, {1, 1}}, {2, 2}));
  auto space = space_on<2>(mesh, 1, false);
  auto a = hts_assembler<2>(space, {1e-4, 1e8, 24.0, 1e-16});
  // curl-free state: constant field
  Eigen::VectorXd none(0);
  Eigen::VectorXd v =
      space->interpolate([](const Vec<2>&) { return Vec<2>{2.0, 1.0}; });
  StepData<2> data;
  data.dt = 1e-3;
  SparseSystem sys = a.jacobian(space->restrict_free(v), none, data);
  Eigen::MatrixXd expect = (kMu0 / data.dt) * Eigen::MatrixXd(a.mass()) +
                           1e-16 * Eigen::MatrixXd(air_assembler<2>(space, 1.0)
                                                       .stiffness(v));
  CHECK((Eigen::MatrixXd(sys.matrix) - expect).cwiseAbs().maxCoeff() <
        1e-10 * expect.cwiseAbs().maxCoeff());
}

TEST_CASE("jacobian matches finite differences of the residual") {
  std::mt19937 rng(77);
  std::normal_distribution<double> n01;
  auto m0 = TreeMesh<2>::make_uniform(Box<2>{{0, 0}, {1e-2, 1e-2}}, {2, 2});
  RefinementFlags fl;
  fl.marks.assign(m0.n_cells(), Mark::keep);
  fl.marks[0] = Mark::refine;
  auto mesh = std::make_shared<const TreeMesh<2>>(m0.refined_and_balanced(fl));
  auto space = space_on<2>(mesh, 1, true);

  SubdomainMaterial<2> hts;
  hts.is_hts = true;
  hts.power = {1e-4, 1e8, 24.0, 1e-16};
  SubdomainMaterial<2> air;
  air.rho_air = 1e-2;
  std::vector<int> tags(mesh->n_cells(), 1);
  for (int c = 0; c < mesh->n_cells(); ++c)
    if (mesh->cell_center(c)[0] < 5e-3) tags[c] = 0;
  Assembler<2> a(space, {hts, air}, tags);
  CurrentSection<2> sec;
  for (int c = 0; c < mesh->n_cells(); ++c)
    if (tags[c] == 0) sec.cells.push_back(c);
  a.set_section(sec);

  Eigen::VectorXd bc = Eigen::VectorXd::Zero(space->n_dirichlet());
  // coefficient scale ~ J_c * h so the curl magnitude is near J_c
  const double hscale = 2.5e-3;
  Eigen::VectorXd prev(space->n_dofs());
  StepData<2> data;
  data.prev_full = &prev;
  data.dt = 1e-4;
  data.I_app = 37.0;

  int fails = 0;
  for (int trial = 0; trial < 20; ++trial) {
    Eigen::VectorXd x(a.n_unknowns());
    for (int i = 0; i < x.size(); ++i) x[i] = 1e8 * hscale * n01(rng);
    for (int i = 0; i < prev.size(); ++i) prev[i] = 1e8 * hscale * n01(rng);
    Eigen::VectorXd d(a.n_unknowns());
    for (int i = 0; i < d.size(); ++i) d[i] = n01(rng);
    d *= x.norm() / d.norm();

    SparseSystem sys = a.jacobian(x, bc, data);
    Eigen::VectorXd jd = sys.matrix * d;
    const double eps = 1e-7;
    Eigen::VectorXd rp = a.residual(x + eps * d, bc, data);
    Eigen::VectorXd rm = a.residual(x, bc, data);
    double rel = ((rp - rm) / eps - jd).norm() / jd.norm();
    if (rel > 1e-5) ++fails;
  }
  CHECK(fails == 0);
}

TEST_CASE("saddle system is symmetric") {
  auto mesh = std::make_shared<const TreeMesh<2>>(
      TreeMesh<2>::make_uniform(Box<2>{{0, 0}, {1, 1}}, {3, 3}));
  auto space = space_on<2>(mesh, 1, true);
  auto a = hts_assembler<2>(space, {1e-4, 1e8, 12.0, 1e-16});
  CurrentSection<2> sec;
  for (int c = 0; c < mesh->n_cells(); ++c) sec.cells.push_back(c);
  a.set_section(sec);
  StepData<2> data;
  data.dt = 1e-3;
  data.I_app = 10.0;
  Eigen::VectorXd bc = Eigen::VectorXd::Zero(space->n_dirichlet());
  Eigen::VectorXd x = Eigen::VectorXd::Random(a.n_unknowns()) * 1e6;
  SparseSystem sys = a.jacobian(x, bc, data);
  Eigen::MatrixXd j(sys.matrix);
  CHECK((j - j.transpose()).cwiseAbs().maxCoeff() <
        1e-12 * j.cwiseAbs().maxCoeff());
  CHECK(sys.has_constraint);
}

TEST_CASE("elimination matches the dense constrained oracle") {
  // small hanging mesh, linear air problem with inhomogeneous dirichlet data
  auto m0 = TreeMesh<2>::make_uniform(Box<2>{{0, 0}, {1, 1}}, {2, 1});
  RefinementFlags fl;
  fl.marks = {Mark::refine, Mark::keep};
  auto mesh = std::make_shared<const TreeMesh<2>>(m0.refined_and_balanced(fl));
  auto space = space_on<2>(mesh, 1, true);
  auto a = air_assembler<2>(space, 1.0);
  Eigen::VectorXd bc = space->interpolate_dirichlet(
      [](const Vec<2>& x) { return Vec<2>{x[1], 0.2 + x[0]}; });
  Eigen::VectorXd prev =
      space->materialize(Eigen::VectorXd::Zero(space->n_free()), bc);
  StepData<2> data;
  data.prev_full = &prev;
  data.dt = 1e-2;

  // eliminated solve
  Eigen::VectorXd x0 = Eigen::VectorXd::Zero(a.n_unknowns());
  SparseSystem sys = a.jacobian(x0, bc, data);
  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu(sys.matrix);
  Eigen::VectorXd xe = x0 - lu.solve(a.residual(x0, bc, data));
  Eigen::VectorXd full_elim = space->materialize(xe, bc);

  // dense oracle over ALL dofs with explicit multiplier rows for every
  // hanging and dirichlet constraint
  const int n = space->n_dofs();
  std::vector<std::tuple<int, std::vector<std::pair<int, double>>, double>>
      cons; // dof, masters, inhomogeneity
  for (int g = 0; g < n; ++g) {
    if (space->dof_class(g) == DofClass::dirichlet)
      cons.push_back({g, {}, bc[space->dirichlet_index(g)]});
    else if (space->dof_class(g) == DofClass::hanging)
      cons.push_back({g, space->constraint(g), 0.0});
  }
  const int nc = int(cons.size());
  Eigen::MatrixXd big = Eigen::MatrixXd::Zero(n + nc, n + nc);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n + nc);
  // raw unconstrained operator on all dofs, assembled independently by
  // direct quadrature (every dof treated as independent)
  {
    const auto& el = EdgeElement<2>::get(1);
    const auto& table = BasisTable<2>::get(1, 3);
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(n, n);
    Eigen::MatrixXd k = Eigen::MatrixXd::Zero(n, n);
    for (int c = 0; c < mesh->n_cells(); ++c) {
      const Vec<2> h = mesh->cell_size(c);
      const double jxw_base = h[0] * h[1];
      const auto& gd = space->cell_dofs(c);
      for (std::size_t q = 0; q < table.rule.points.size(); ++q) {
        const double jxw = table.rule.weights[q] * jxw_base;
        for (int i = 0; i < el.n_dofs(); ++i) {
          const double si = h[el.dofs()[i].comp];
          for (int j = 0; j < el.n_dofs(); ++j) {
            const double sj = h[el.dofs()[j].comp];
            double mv = 0.0;
            for (int a = 0; a < 2; ++a)
              mv += (si * table.values[q](i, a) / h[a]) *
                    (sj * table.values[q](j, a) / h[a]);
            double kv = (si * table.curls[q](i, 0) / jxw_base) *
                        (sj * table.curls[q](j, 0) / jxw_base);
            m(gd[i], gd[j]) += jxw * mv;
            k(gd[i], gd[j]) += jxw * kv;
          }
        }
      }
    }
    big.topLeftCorner(n, n) = (kMu0 / data.dt) * m + k;
    rhs.head(n) = (kMu0 / data.dt) * m * prev;
  }
  for (int i = 0; i < nc; ++i) {
    const auto& [g, masters, inhom] = cons[i];
    big(n + i, g) = 1.0;
    big(g, n + i) = 1.0;
    for (const auto& [mg, w] : masters) {
      big(n + i, mg) = -w;
      big(mg, n + i) = -w;
    }
    rhs[n + i] = inhom;
  }
  Eigen::VectorXd sol = big.fullPivLu().solve(rhs);
  double scale = full_elim.cwiseAbs().maxCoeff();
  CHECK((sol.head(n) - full_elim).cwiseAbs().maxCoeff() < 1e-10 * scale);
}

TEST_CASE("matrix market dump") {
  auto mesh = std::make_shared<const TreeMesh<2>>(
      TreeMesh<2>::make_uniform(Box<2>{{0, 0}, {1, 1}}, {2, 2}));
  auto space = space_on<2>(mesh, 1, true);
  auto a = air_assembler<2>(space);
  write_matrix_market(a.mass(), "mass.mtx");
  std::ifstream is("mass.mtx");
  std::string header;
  std::getline(is, header);
  CHECK(header == "%%MatrixMarket matrix coordinate real general");
}
