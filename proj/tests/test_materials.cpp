#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <fstream>
#include <random>

#include "htsim/materials.hpp"

using namespace htsim;

TEST_CASE("power law point values") {
  PowerLawModel m{1e-4, 1e8, 24.0, 1e-16};
  m.validate();
  CHECK(m.resistivity(m.J_c) == doctest::Approx(m.E_c / m.J_c).epsilon(1e-14));
  CHECK(m.resistivity(0.0) == m.rho_floor);
  // benchmark parameters at 1.1 J_c: 1.1^24 ~ 9.850
  CHECK(m.resistivity(1.1 * m.J_c) ==
        doctest::Approx(9.85e-12).epsilon(2e-4));
}

TEST_CASE("tangent kernel") {
  PowerLawModel m{1e-4, 1e8, 24.0, 1e-16};
  SUBCASE("zero curl gives zero tangent") {
    CHECK(m.tangent_kernel(0.0) == 0.0);
  }
  SUBCASE("n = 1 reduces analytically") {
    PowerLawModel lin{1e-4, 1e8, 1.0, 0.0};
    // d rho/ds is the constant E_c/J_c^2, so kernel * s == E_c/J_c^2 and the
    // directional derivative at s = J_c equals E_c/J_c^3 * (curl . curl phi)
    for (double s : {0.5e8, 1e8, 2e8})
      CHECK(lin.tangent_kernel(s) * s ==
            doctest::Approx(lin.E_c / (lin.J_c * lin.J_c)).epsilon(1e-13));
    CHECK(lin.tangent_kernel(lin.J_c) ==
          doctest::Approx(lin.E_c / std::pow(lin.J_c, 3)).epsilon(1e-13));
  }
  SUBCASE("finite-difference oracle") {
    std::mt19937 rng(11);
    std::uniform_real_distribution<double> u(0.3, 2.0);
    int bad = 0;
    for (int t = 0; t < 1000; ++t) {
      Eigen::Vector3d curl = Eigen::Vector3d::Zero();
      for (int a = 0; a < 3; ++a) curl[a] = u(rng) * 1e8 * (rng() % 2 ? 1 : -1);
      Eigen::Vector3d dir;
      for (int a = 0; a < 3; ++a) dir[a] = u(rng) * (rng() % 2 ? 1 : -1);
      dir *= 1e8 / dir.norm();
      const double s = curl.norm();
      const double eps = 1e-6 * s / dir.norm();
      const double rp = m.resistivity((curl + eps * dir).norm());
      const double rm = m.resistivity((curl - eps * dir).norm());
      const double fd = (rp - rm) / (2 * eps);
      const double an = m.tangent_kernel(s) * curl.dot(dir);
      if (std::abs(fd - an) > 1e-5 * std::max(std::abs(an), 1e-30)) ++bad;
    }
    CHECK(bad == 0);
  }
}

TEST_CASE("monotonicity and Bean limit trend") {
  PowerLawModel m{1e-4, 1e8, 24.0, 1e-16};
  double prev = 0.0;
  for (double f = 0.2; f < 3.0; f += 0.1) {
    double r = m.resistivity(f * m.J_c);
    CHECK(r >= prev);
    prev = r;
  }
  // below J_c the resistivity collapses to the floor as n grows; above it
  // blows up
  double lo_prev = 1e99, hi_prev = 0.0;
  for (double n : {10.0, 50.0, 200.0}) {
    PowerLawModel mn{1e-4, 1e8, n, 1e-16};
    double lo = mn.resistivity(0.8 * mn.J_c);
    double hi = mn.resistivity(1.2 * mn.J_c);
    CHECK(lo <= lo_prev);
    CHECK(hi >= hi_prev);
    lo_prev = lo;
    hi_prev = hi;
  }
  CHECK(PowerLawModel{1e-4, 1e8, 200.0, 1e-16}.resistivity(0.8e8) ==
        doctest::Approx(1e-16));
}

TEST_CASE("Kim model") {
  KimModel kim{3.38e8, 0.05};
  kim.validate();
  CHECK(kim.jc(0.0) == doctest::Approx(kim.J_c0));
  CHECK(kim.jc(kim.B_0) == doctest::Approx(0.5 * kim.J_c0));
  // monotone decreasing
  double prev = kim.jc(0.0);
  for (double b = 0.01; b < 1.0; b += 0.01) {
    CHECK(kim.jc(b) < prev);
    prev = kim.jc(b);
  }
}

TEST_CASE("lift factor table") {
  LiftFactorTable t;
  t.J_c0 = 2e8;
  t.curves.resize(2);
  t.curves[0].b = {0.0, 0.1};
  t.curves[0].lf = {0.6, 0.6};
  t.curves[1].b = {0.0, 0.1};
  t.curves[1].lf = {0.8, 0.8};
  t.validate();
  // |(0.6, 0.8)| = 1
  CHECK(t.jc<2>(Vec<2>{0.05, 0.02}) == doctest::Approx(t.J_c0).epsilon(1e-13));
  // clamped extrapolation
  LiftFactorTable::Curve c;
  c.b = {0.0, 1.0};
  c.lf = {1.0, 0.5};
  CHECK(c.eval(-1.0) == doctest::Approx(1.0));
  CHECK(c.eval(2.0) == doctest::Approx(0.5));
  CHECK(c.eval(0.5) == doctest::Approx(0.75));

  SUBCASE("file ingestion") {
    {
      std::ofstream os("lift_test.csv");
      os << "# B lift\n0.0 1.0\n0.2 0.8\n0.5 0.55\n";
    }
    auto cc = LiftFactorTable::load_curve("lift_test.csv");
    REQUIRE(cc.b.size() == 3);
    CHECK(cc.eval(0.1) == doctest::Approx(0.9));
  }
}

TEST_CASE("subdomain materials") {
  SUBCASE("air is state independent") {
    SubdomainMaterial<2> air;
    air.is_hts = false;
    air.rho_air = 1e-2;
    auto r1 = air.evaluate(Curl<2>{1e9}, Vec<2>{0.3, 0.1});
    auto r2 = air.evaluate(Curl<2>{0.0}, Vec<2>{0.0, 0.0});
    CHECK(r1.rho_diag[0] == r2.rho_diag[0]);
    CHECK(r1.kernel == 0.0);
  }
  SUBCASE("stack override pins one axis") {
    SubdomainMaterial<3> stack;
    stack.is_hts = true;
    stack.rho_air = 1e-2;
    stack.power = {1e-4, 1e8, 24.0, 1e-16};
    stack.stack_axis = 2;
    stack.validate();
    Curl<3> curl{0.9e8, 0.2e8, 5e8};
    auto r = stack.evaluate(curl, Vec<3>::Zero());
    CHECK(r.rho_diag[2] == stack.rho_air);
    CHECK(r.rho_diag[0] == r.rho_diag[1]);
    // power law sees only the in-plane part
    const double s = std::hypot(0.9e8, 0.2e8);
    CHECK(r.rho_diag[0] ==
          doctest::Approx(stack.power.resistivity(s)).epsilon(1e-13));
    CHECK(r.projected_curl[2] == 0.0);
  }
  SUBCASE("Kim-composed power law uses the frozen field") {
    SubdomainMaterial<2> hts;
    hts.is_hts = true;
    hts.power = {1e-4, 3.38e8, 32.0, 1e-16};
    hts.jc_law = JcLaw::kim;
    hts.kim = {3.38e8, 0.05};
    hts.validate();
    Vec<2> b{0.05, 0.0};
    double jc = hts.jc_effective(b);
    CHECK(jc == doctest::Approx(0.5 * 3.38e8));
    auto r = hts.evaluate(Curl<2>{jc}, b);
    CHECK(r.rho_diag[0] ==
          doctest::Approx(hts.power.E_c / jc).epsilon(1e-12));
  }
  SUBCASE("dissipation density") {
    SubdomainMaterial<2> air;
    air.rho_air = 2.0;
    CHECK(air.dissipation(Curl<2>{3.0}, Vec<2>::Zero()) ==
          doctest::Approx(18.0));
  }
}
