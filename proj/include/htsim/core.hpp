#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace htsim {

inline constexpr double kMu0 = 4.0e-7 * 3.14159265358979323846; // H/m

template <int dim>
using Vec = Eigen::Matrix<double, dim, 1>;

/// Curl of a vector field: scalar in 2D, vector in 3D.
template <int dim>
using Curl = Eigen::Matrix<double, dim == 2 ? 1 : 3, 1>;

// Error types used at module boundaries. Messages carry enough context to
// act on without a debugger.
struct InvalidGeometryError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct PreconditionError : std::logic_error {
  using std::logic_error::logic_error;
};

struct PointLookupError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ConfigError : std::runtime_error {
  ConfigError(const std::string& key_path, const std::string& what)
      : std::runtime_error("config error at '" + key_path + "': " + what),
        key_path(key_path) {}
  std::string key_path;
};

struct SolverError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

#define HTSIM_REQUIRE(cond, exc_type, msg) \
  do {                                     \
    if (!(cond)) throw exc_type(msg);      \
  } while (0)

} // namespace htsim
