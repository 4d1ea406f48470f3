#pragma once

// Gridded physical fields of the convection-diffusion operator: velocity,
// diffusivity (with its divergence) and decay, plus the tanh-bounded locally
// weighted mixture used to parameterize the velocity.

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include "advecta/errors.hpp"
#include "advecta/spectral_grid.hpp"

namespace advecta {

/// Per-kernel regressors b_j(s): (1) or (1, s1, s2).
enum class RegressionBasis { constant, affine };

/// Gaussian bumps pi_j(s) = exp(-|s - c_j|^2 / (2 w^2)) carrying local
/// regressions b_j(s)^T gamma_j.
struct KernelMixture {
  std::vector<std::array<double, 2>> centers;
  double bandwidth = 0.0;  // <= 0 selects half the minimum inter-center distance
  RegressionBasis basis = RegressionBasis::affine;

  int kernels() const { return static_cast<int>(centers.size()); }
  int basis_size() const { return basis == RegressionBasis::affine ? 3 : 1; }
  int parameter_count() const { return kernels() * basis_size(); }

  double effective_bandwidth() const {
    if (bandwidth > 0.0) return bandwidth;
    double dmin = std::numeric_limits<double>::infinity();
    for (std::size_t a = 0; a < centers.size(); ++a) {
      for (std::size_t b = a + 1; b < centers.size(); ++b) {
        dmin = std::min(dmin, std::hypot(centers[a][0] - centers[b][0],
                                         centers[a][1] - centers[b][1]));
      }
    }
    return std::isfinite(dmin) && dmin > 0.0 ? 0.5 * dmin : 0.25;
  }

  /// sum_j pi_j(s) b_j(s)^T gamma_j
  double evaluate(const std::vector<double>& gamma, double s1, double s2) const {
    const double w = effective_bandwidth();
    const int p = basis_size();
    double acc = 0.0;
    for (int j = 0; j < kernels(); ++j) {
      const double d1 = s1 - centers[j][0];
      const double d2 = s2 - centers[j][1];
      const double pi_j = std::exp(-(d1 * d1 + d2 * d2) / (2.0 * w * w));
      double reg = gamma[j * p];
      if (p == 3) reg += gamma[j * p + 1] * s1 + gamma[j * p + 2] * s2;
      acc += pi_j * reg;
    }
    return acc;
  }

  void validate(const std::vector<double>& gamma, const char* what) const {
    if (static_cast<int>(gamma.size()) != parameter_count()) {
      throw ConfigError(std::string(what) + " has " + std::to_string(gamma.size()) +
                        " coefficients, expected " + std::to_string(parameter_count()) +
                        " (kernels x basis size)");
    }
  }
};

struct VelocityFieldModel {
  KernelMixture mixture;
  std::vector<double> gamma_x;  // along s1
  std::vector<double> gamma_y;  // along s2
  double v_max = 1.0;
};

/// Velocity at every grid point, in domain lengths per unit time.
struct VelocityField {
  GridSpec grid;
  std::vector<double> v1;
  std::vector<double> v2;
};

inline VelocityField zero_velocity(GridSpec grid) {
  const auto n = static_cast<std::size_t>(grid.size());
  return {grid, std::vector<double>(n, 0.0), std::vector<double>(n, 0.0)};
}

inline VelocityField constant_velocity(GridSpec grid, double v1, double v2) {
  const auto n = static_cast<std::size_t>(grid.size());
  return {grid, std::vector<double>(n, v1), std::vector<double>(n, v2)};
}

/// v(s) = v_max * tanh(sum_j pi_j(s) b_j(s)^T gamma_j), componentwise.
inline VelocityField eval_velocity(const VelocityFieldModel& model, GridSpec grid) {
  grid.validate();
  model.mixture.validate(model.gamma_x, "gamma_x");
  model.mixture.validate(model.gamma_y, "gamma_y");
  if (!(model.v_max > 0.0)) throw ConfigError("v_max must be positive");
  VelocityField out = zero_velocity(grid);
  for (int i = 0; i < grid.n1; ++i) {
    for (int j = 0; j < grid.n2; ++j) {
      const auto p = static_cast<std::size_t>(i * grid.n2 + j);
      out.v1[p] = model.v_max * std::tanh(model.mixture.evaluate(model.gamma_x, grid.s1(i), grid.s2(j)));
      out.v2[p] = model.v_max * std::tanh(model.mixture.evaluate(model.gamma_y, grid.s1(i), grid.s2(j)));
    }
  }
  return out;
}

struct DecayModel {
  enum class Mode { constant, mixture };
  Mode mode = Mode::constant;
  double value = 0.0;
  KernelMixture mixture;
  std::vector<double> gamma;
};

/// Decay per grid point. The mixture mode has no tanh bound.
inline std::vector<double> eval_decay(const DecayModel& model, GridSpec grid) {
  grid.validate();
  std::vector<double> out(static_cast<std::size_t>(grid.size()), model.value);
  if (model.mode == DecayModel::Mode::constant) return out;
  model.mixture.validate(model.gamma, "decay gamma");
  for (int i = 0; i < grid.n1; ++i) {
    for (int j = 0; j < grid.n2; ++j) {
      out[static_cast<std::size_t>(i * grid.n2 + j)] =
          model.mixture.evaluate(model.gamma, grid.s1(i), grid.s2(j));
    }
  }
  return out;
}

enum class DerivativeScheme { central, spectral };

namespace detail {

// d f / d s_axis on the periodic unit square.
inline std::vector<double> partial(const std::vector<double>& f, GridSpec grid, int axis,
                                   DerivativeScheme scheme) {
  const int n1 = grid.n1;
  const int n2 = grid.n2;
  std::vector<double> out(f.size(), 0.0);
  if (scheme == DerivativeScheme::central) {
    const double inv = axis == 0 ? 0.5 * n1 : 0.5 * n2;
    for (int i = 0; i < n1; ++i) {
      for (int j = 0; j < n2; ++j) {
        double fp, fm;
        if (axis == 0) {
          fp = f[static_cast<std::size_t>(((i + 1) % n1) * n2 + j)];
          fm = f[static_cast<std::size_t>(((i - 1 + n1) % n1) * n2 + j)];
        } else {
          fp = f[static_cast<std::size_t>(i * n2 + (j + 1) % n2)];
          fm = f[static_cast<std::size_t>(i * n2 + (j - 1 + n2) % n2)];
        }
        out[static_cast<std::size_t>(i * n2 + j)] = (fp - fm) * inv;
      }
    }
    return out;
  }
  auto spec = dft2(RealGridField(grid, f));
  for (int a = 0; a < n1; ++a) {
    for (int b = 0; b < n2; ++b) {
      const int k = axis == 0 ? principal(a, n1) : principal(b, n2);
      const int half = axis == 0 ? n1 / 2 : n2 / 2;
      // The Nyquist mode has no well-defined derivative of a real field.
      const double mult = (k == half) ? 0.0 : 2.0 * std::numbers::pi * k;
      spec.at(a, b) *= cdouble(0.0, mult);
    }
  }
  return idft2(spec, grid).values;
}

}  // namespace detail

/// Per-point diffusivity tensor (symmetric 2x2) and its divergence
/// (div D)_j = sum_i d D_ij / d s_i.
struct DiffusivityField {
  GridSpec grid;
  std::vector<double> d11, d12, d22;
  std::vector<double> div1, div2;
};

inline void check_psd(double a11, double a12, double a22) {
  const double tol = 1e-12 * std::max({1.0, std::abs(a11), std::abs(a22)});
  if (!(a11 >= -tol && a22 >= -tol && a11 * a22 - a12 * a12 >= -tol)) {
    throw ConfigError("diffusivity matrix is not symmetric positive semidefinite");
  }
}

inline DiffusivityField constant_diffusivity(const Eigen::Matrix2d& d, GridSpec grid) {
  grid.validate();
  if (std::abs(d(0, 1) - d(1, 0)) > 1e-12 * std::max(1.0, d.cwiseAbs().maxCoeff())) {
    throw ConfigError("diffusivity matrix is not symmetric");
  }
  check_psd(d(0, 0), d(0, 1), d(1, 1));
  const auto n = static_cast<std::size_t>(grid.size());
  return {grid,
          std::vector<double>(n, d(0, 0)),
          std::vector<double>(n, d(0, 1)),
          std::vector<double>(n, d(1, 1)),
          std::vector<double>(n, 0.0),
          std::vector<double>(n, 0.0)};
}

inline DiffusivityField constant_diffusivity(double d, GridSpec grid) {
  return constant_diffusivity(Eigen::Matrix2d::Identity() * d, grid);
}

/// Divergence of a gridded diffusivity tensor with periodic wraparound.
/// The central scheme is second order; the spectral scheme is exact for
/// band-limited tensors.
inline std::array<std::vector<double>, 2> numeric_divergence(
    const DiffusivityField& d, DerivativeScheme scheme = DerivativeScheme::central) {
  const auto& g = d.grid;
  auto d1_11 = detail::partial(d.d11, g, 0, scheme);
  auto d2_12 = detail::partial(d.d12, g, 1, scheme);
  auto d1_12 = detail::partial(d.d12, g, 0, scheme);
  auto d2_22 = detail::partial(d.d22, g, 1, scheme);
  std::array<std::vector<double>, 2> out{std::vector<double>(d1_11.size()),
                                         std::vector<double>(d1_11.size())};
  for (std::size_t p = 0; p < d1_11.size(); ++p) {
    out[0][p] = d1_11[p] + d2_12[p];
    out[1][p] = d1_12[p] + d2_22[p];
  }
  return out;
}

/// Gridded tensor with its divergence filled in.
inline DiffusivityField gridded_diffusivity(GridSpec grid, std::vector<double> d11,
                                            std::vector<double> d12, std::vector<double> d22,
                                            DerivativeScheme scheme = DerivativeScheme::central) {
  grid.validate();
  const auto n = static_cast<std::size_t>(grid.size());
  if (d11.size() != n || d12.size() != n || d22.size() != n) {
    throw ConfigError("diffusivity components do not match the grid");
  }
  for (std::size_t p = 0; p < n; ++p) check_psd(d11[p], d12[p], d22[p]);
  DiffusivityField out{grid, std::move(d11), std::move(d12), std::move(d22), {}, {}};
  auto div = numeric_divergence(out, scheme);
  out.div1 = std::move(div[0]);
  out.div2 = std::move(div[1]);
  return out;
}

inline std::vector<double> velocity_divergence(const VelocityField& v,
                                               DerivativeScheme scheme = DerivativeScheme::spectral) {
  auto a = detail::partial(v.v1, v.grid, 0, scheme);
  auto b = detail::partial(v.v2, v.grid, 1, scheme);
  for (std::size_t p = 0; p < a.size(); ++p) a[p] += b[p];
  return a;
}

/// Scalar vorticity d v2/d s1 - d v1/d s2.
inline std::vector<double> velocity_curl(const VelocityField& v,
                                         DerivativeScheme scheme = DerivativeScheme::central) {
  auto a = detail::partial(v.v2, v.grid, 0, scheme);
  auto b = detail::partial(v.v1, v.grid, 1, scheme);
  for (std::size_t p = 0; p < a.size(); ++p) a[p] -= b[p];
  return a;
}

/// Everything the generator assembly needs, sampled on one grid.
struct PhysicalFieldSet {
  GridSpec grid;
  VelocityField velocity;
  DiffusivityField diffusivity;
  std::vector<double> decay;

  void validate() const {
    grid.validate();
    const auto n = static_cast<std::size_t>(grid.size());
    auto check = [&](const std::vector<double>& f, const char* name) {
      if (f.size() != n) throw ConfigError(std::string(name) + " does not match the grid");
      for (double x : f) {
        if (!std::isfinite(x)) throw NumericError(std::string(name) + " has non-finite entries");
      }
    };
    check(velocity.v1, "velocity v1");
    check(velocity.v2, "velocity v2");
    check(diffusivity.d11, "diffusivity d11");
    check(diffusivity.d12, "diffusivity d12");
    check(diffusivity.d22, "diffusivity d22");
    check(diffusivity.div1, "diffusivity divergence");
    check(diffusivity.div2, "diffusivity divergence");
    check(decay, "decay");
    for (std::size_t p = 0; p < n; ++p) {
      check_psd(diffusivity.d11[p], diffusivity.d12[p], diffusivity.d22[p]);
    }
  }

  /// FNV-1a over all sampled values; identifies the inputs of an assembly.
  std::uint64_t fingerprint() const {
    std::uint64_t h = 1469598103934665603ULL;
    auto mix = [&](const std::vector<double>& f) {
      for (double x : f) {
        unsigned char bytes[sizeof(double)];
        std::memcpy(bytes, &x, sizeof(double));
        for (unsigned char c : bytes) {
          h ^= c;
          h *= 1099511628211ULL;
        }
      }
    };
    mix(velocity.v1);
    mix(velocity.v2);
    mix(diffusivity.d11);
    mix(diffusivity.d12);
    mix(diffusivity.d22);
    mix(diffusivity.div1);
    mix(diffusivity.div2);
    mix(decay);
    return h;
  }
};

inline PhysicalFieldSet make_field_set(VelocityField velocity, DiffusivityField diffusivity,
                                       std::vector<double> decay) {
  PhysicalFieldSet f{velocity.grid, std::move(velocity), std::move(diffusivity), std::move(decay)};
  f.validate();
  return f;
}

/// Constant velocity, isotropic diffusivity and decay: the decoupled case.
inline PhysicalFieldSet constant_fields(GridSpec grid, double v1, double v2, double d, double zeta) {
  return make_field_set(constant_velocity(grid, v1, v2), constant_diffusivity(d, grid),
                        std::vector<double>(static_cast<std::size_t>(grid.size()), zeta));
}

}  // namespace advecta
