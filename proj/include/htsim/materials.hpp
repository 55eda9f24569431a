#pragma once

#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "htsim/core.hpp"

namespace htsim {

/// E-J power law: rho(s) = (E_c/J_c) (s/J_c)^n with s = |curl H|, floored at
/// rho_floor so the zero-current state keeps a nonsingular stiffness block.
struct PowerLawModel {
  double E_c;   // V/m
  double J_c;   // A/m^2
  double n;     // exponent
  double rho_floor = 1e-16; // Ohm m

  void validate() const {
    HTSIM_REQUIRE(E_c > 0 && J_c > 0, PreconditionError,
                  "power law: E_c and J_c must be positive");
    HTSIM_REQUIRE(n >= 1.0, PreconditionError, "power law: n must be >= 1");
    HTSIM_REQUIRE(rho_floor >= 0.0, PreconditionError,
                  "power law: rho_floor must be >= 0");
  }

  double resistivity(double s, double jc) const {
    if (s <= 0.0) return rho_floor;
    const double val = (E_c / jc) * std::pow(s / jc, n);
    return std::max(val, rho_floor);
  }
  double resistivity(double s) const { return resistivity(s, J_c); }

  /// Tangent kernel c(s) with d rho/d H_j = c * (curl H . curl phi_j); zero on
  /// the floor branch, consistent with the flooring above.
  double tangent_kernel(double s, double jc) const {
    if (s <= 0.0) return 0.0;
    const double val = (E_c / jc) * std::pow(s / jc, n);
    if (val <= rho_floor) return 0.0;
    return (E_c / jc) * n * std::pow(s / jc, n - 2.0) / (jc * jc);
  }
  double tangent_kernel(double s) const { return tangent_kernel(s, J_c); }
};

/// Kim field dependence: J_c(B) = J_c0 B_0 / (B_0 + mu0 |H|). The effective
/// J_c is frozen at the linearization point's field, so the Newton tangent
/// treats it as constant.
struct KimModel {
  double J_c0; // A/m^2
  double B_0;  // T

  void validate() const {
    HTSIM_REQUIRE(J_c0 > 0 && B_0 > 0, PreconditionError,
                  "Kim model: J_c0 and B_0 must be positive");
  }
  double jc(double b_norm) const { return J_c0 * B_0 / (B_0 + b_norm); }
};

/// Tabulated lift factor LF_i(|B_i|) per field component; J_c = J_c0 |LF|.
/// Outside the table the end values are held (clamped extrapolation).
struct LiftFactorTable {
  struct Curve {
    std::vector<double> b;  // T, strictly increasing
    std::vector<double> lf; // > 0

    double eval(double x) const {
      if (b.empty()) return 1.0;
      if (x <= b.front()) return lf.front();
      if (x >= b.back()) return lf.back();
      auto it = std::upper_bound(b.begin(), b.end(), x);
      std::size_t i = std::size_t(it - b.begin());
      double t = (x - b[i - 1]) / (b[i] - b[i - 1]);
      return lf[i - 1] + t * (lf[i] - lf[i - 1]);
    }
  };

  double J_c0 = 0.0;
  std::vector<Curve> curves; // one per field component

  void validate() const {
    HTSIM_REQUIRE(J_c0 > 0, PreconditionError, "lift table: J_c0 must be > 0");
    for (const auto& c : curves) {
      HTSIM_REQUIRE(!c.b.empty() && c.b.size() == c.lf.size(),
                    PreconditionError, "lift table: malformed curve");
      for (std::size_t i = 0; i + 1 < c.b.size(); ++i)
        HTSIM_REQUIRE(c.b[i + 1] > c.b[i], PreconditionError,
                      "lift table: abscissae must be strictly increasing");
      for (double v : c.lf)
        HTSIM_REQUIRE(v > 0, PreconditionError, "lift table: LF must be > 0");
    }
  }

  template <int dim>
  double jc(const Vec<dim>& b_field) const {
    double norm2 = 0.0;
    for (int a = 0; a < dim && a < int(curves.size()); ++a) {
      double v = curves[a].eval(std::abs(b_field[a]));
      norm2 += v * v;
    }
    return J_c0 * std::sqrt(norm2);
  }

  /// Two-column delimited text (B_i, LF_i); '#' comments allowed.
  static Curve load_curve(const std::string& path) {
    std::ifstream is(path);
    HTSIM_REQUIRE(is.good(), PreconditionError,
                  "lift table: cannot open " + path);
    Curve c;
    std::string line;
    while (std::getline(is, line)) {
      auto hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      std::istringstream ls(line);
      double b = 0.0, lf = 0.0;
      if (ls >> b >> lf) {
        c.b.push_back(b);
        c.lf.push_back(lf);
      }
    }
    HTSIM_REQUIRE(!c.b.empty(), PreconditionError,
                  "lift table: no samples in " + path);
    return c;
  }
};

enum class JcLaw : std::uint8_t { fixed = 0, kim = 1, lift_table = 2 };

/// Pointwise resistivity sample handed to assembly and post-processing:
/// diagonal entries over curl components plus the symmetric tangent kernel
/// restricted to the power-law components.
template <int dim>
struct ResistivitySample {
  Curl<dim> rho_diag;
  double kernel = 0.0;              // tangent kernel of the power-law part
  Curl<dim> projected_curl =        // curl restricted to power-law components
      Curl<dim>::Zero();
};

/// Resistivity law of one subdomain. Air is a constant; the superconductor is
/// the power law with an optionally field-dependent J_c and an optional
/// anisotropic stack override that pins one curl component to the air value.
template <int dim>
struct SubdomainMaterial {
  bool is_hts = false;
  double rho_air = 1.0; // Ohm m; also the stack-axis value
  PowerLawModel power{1e-4, 1e8, 24.0};
  JcLaw jc_law = JcLaw::fixed;
  KimModel kim{1e8, 0.1};
  LiftFactorTable lift;
  int stack_axis = -1; // 3D only: curl component forced to rho_air

  void validate() const {
    HTSIM_REQUIRE(rho_air > 0, PreconditionError, "rho_air must be positive");
    if (!is_hts) return;
    power.validate();
    if (jc_law == JcLaw::kim) kim.validate();
    if (jc_law == JcLaw::lift_table) lift.validate();
    if (stack_axis >= 0)
      HTSIM_REQUIRE(dim == 3 && stack_axis < 3, PreconditionError,
                    "stack axis override requires a 3D curl component");
  }

  double jc_effective(const Vec<dim>& b_field) const {
    switch (jc_law) {
      case JcLaw::kim: return kim.jc(b_field.norm());
      case JcLaw::lift_table: return lift.template jc<dim>(b_field);
      default: return power.J_c;
    }
  }

  /// Resistivity and tangent at one quadrature point. `curl` is the curl of
  /// the linearization-point field, `b_field` its mu0-scaled value (used only
  /// by the field-dependent J_c laws).
  ResistivitySample<dim> evaluate(const Curl<dim>& curl,
                                  const Vec<dim>& b_field) const {
    ResistivitySample<dim> out;
    if (!is_hts) {
      out.rho_diag.setConstant(rho_air);
      return out;
    }
    const double jc = jc_effective(b_field);
    Curl<dim> proj = curl;
    if constexpr (dim == 3) {
      if (stack_axis >= 0) proj[stack_axis] = 0.0;
    }
    const double s = proj.norm();
    const double rho = power.resistivity(s, jc);
    out.rho_diag.setConstant(rho);
    if constexpr (dim == 3) {
      if (stack_axis >= 0) out.rho_diag[stack_axis] = rho_air;
    }
    out.kernel = power.tangent_kernel(s, jc);
    out.projected_curl = proj;
    return out;
  }

  /// Instantaneous dissipation density J . E = sum_a rho_a J_a^2.
  double dissipation(const Curl<dim>& curl, const Vec<dim>& b_field) const {
    ResistivitySample<dim> r = evaluate(curl, b_field);
    double p = 0.0;
    for (int a = 0; a < curl.size(); ++a)
      p += r.rho_diag[a] * curl[a] * curl[a];
    return p;
  }
};

} // namespace htsim
