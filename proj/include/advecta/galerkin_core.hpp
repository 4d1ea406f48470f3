#pragma once

// Galerkin projection of the convection-diffusion-decay operator onto the real
// Fourier basis, and the linear-Gaussian quantities derived from it: the
// transition exp(G dt), the integrated process-noise covariance, lagged
// coefficient covariances and the equivalent redistribution-kernel step.
//
// With L f = -v . grad f + div(D grad f) - zeta f, and u = v - div D,
//   L cos(2 pi k.s) = c_k cos + e_k sin,   L sin(2 pi k.s) = c_k sin - e_k cos,
// where c_k = -k~' D k~ - zeta and e_k = u . k~ with k~ = 2 pi k. Projecting
// onto basis function b with mesh-sum quadrature gives
//   G(b, a) = w_a / (w_b C_b) * (1/N) sum_s phi_b(s) (L phi_a)(s),
// which is the real-valued generator of the coefficient ODE.

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

#include <array>
#include <cmath>
#include <cstdint>
#include <memory>
#include <numbers>
#include <vector>

#include "advecta/errors.hpp"
#include "advecta/physical_fields.hpp"
#include "advecta/spectral_grid.hpp"

namespace advecta {

struct TransitionGenerator {
  std::shared_ptr<const WavenumberSets> sets;
  Eigen::MatrixXd g;
  std::uint64_t assembled_from = 0;

  int dimension() const { return static_cast<int>(g.rows()); }
};

/// Diagonal spectral densities: h for the driving noise, h0 for the initial
/// coefficients. One entry per packed coefficient.
struct NoiseSpec {
  Eigen::VectorXd h;
  Eigen::VectorXd h0;

  void validate(int k) const {
    if (h.size() != k || h0.size() != k) {
      throw ConfigError("noise spectral densities must have one entry per coefficient");
    }
    if ((h.array() < 0.0).any() || (h0.array() < 0.0).any() || !h.allFinite() || !h0.allFinite()) {
      throw ConfigError("noise spectral densities must be finite and non-negative");
    }
  }
};

/// h(k) = a * (1 + |2 pi k|^2)^(-b) for every packed coefficient; b = 0 gives
/// a flat density.
inline Eigen::VectorXd power_law_density(const WavenumberSets& sets, double a, double b) {
  const auto layout = basis_layout(sets);
  Eigen::VectorXd h(sets.dimension());
  const double two_pi = 2.0 * std::numbers::pi;
  for (int i = 0; i < sets.dimension(); ++i) {
    const double k1 = two_pi * layout[i].k.k1;
    const double k2 = two_pi * layout[i].k.k2;
    h[i] = a * std::pow(1.0 + k1 * k1 + k2 * k2, -b);
  }
  return h;
}

/// Indices into the array returned by psi_integrals.
enum Psi : int {
  kPsi1 = 0, kPsi2, kPsi3, kPsi4, kPsi5, kPsi6, kPsi7, kPsi8, kPsi9, kPsi10, kPsi11, kPsi12
};

/// The twelve projection integrals for source mode k and target mode kp,
/// evaluated as mesh sums. Groups of four follow the (target, source) kinds
/// (R,R), (R,I), (I,R), (I,I); 1-4 carry convection, 5-8 diffusion, 9-12 decay.
inline std::array<double, 12> psi_integrals(Wavenumber k, Wavenumber kp,
                                            const PhysicalFieldSet& fields) {
  const auto& g = fields.grid;
  const double two_pi = 2.0 * std::numbers::pi;
  const double kt1 = two_pi * k.k1;
  const double kt2 = two_pi * k.k2;
  std::array<double, 12> psi{};
  for (int i = 0; i < g.n1; ++i) {
    for (int j = 0; j < g.n2; ++j) {
      const auto p = static_cast<std::size_t>(i * g.n2 + j);
      const double s1 = g.s1(i);
      const double s2 = g.s2(j);
      const double fr = evaluate_basis(k, s1, s2, BasisKind::real);
      const double fi = evaluate_basis(k, s1, s2, BasisKind::imag);
      const double fr_p = evaluate_basis(kp, s1, s2, BasisKind::real);
      const double fi_p = evaluate_basis(kp, s1, s2, BasisKind::imag);
      const double vk = fields.velocity.v1[p] * kt1 + fields.velocity.v2[p] * kt2;
      const double kdk = kt1 * kt1 * fields.diffusivity.d11[p] +
                         2.0 * kt1 * kt2 * fields.diffusivity.d12[p] +
                         kt2 * kt2 * fields.diffusivity.d22[p];
      const double divk = fields.diffusivity.div1[p] * kt1 + fields.diffusivity.div2[p] * kt2;
      const double zeta = fields.decay[p];
      psi[kPsi1] += vk * fi * fr_p;
      psi[kPsi2] -= vk * fr * fr_p;
      psi[kPsi3] += vk * fi * fi_p;
      psi[kPsi4] -= vk * fr * fi_p;
      psi[kPsi5] += (-kdk * fr - divk * fi) * fr_p;
      psi[kPsi6] += (-kdk * fi + divk * fr) * fr_p;
      psi[kPsi7] += (-kdk * fr - divk * fi) * fi_p;
      psi[kPsi8] += (-kdk * fi + divk * fr) * fi_p;
      psi[kPsi9] -= zeta * fr * fr_p;
      psi[kPsi10] -= zeta * fi * fr_p;
      psi[kPsi11] -= zeta * fr * fi_p;
      psi[kPsi12] -= zeta * fi * fi_p;
    }
  }
  const double inv_n = 1.0 / g.size();
  for (double& x : psi) x *= inv_n;
  return psi;
}

/// Mesh-sum norm C_k of a basis function.
inline double basis_norm(Wavenumber k, GridSpec grid, BasisKind kind) {
  double acc = 0.0;
  for (int i = 0; i < grid.n1; ++i) {
    for (int j = 0; j < grid.n2; ++j) {
      const double f = evaluate_basis(k, grid.s1(i), grid.s2(j), kind);
      acc += f * f;
    }
  }
  return acc / grid.size();
}

namespace detail {

inline void check_grid(const PhysicalFieldSet& fields, const WavenumberSets& sets) {
  fields.validate();
  if (!same_shape(fields.grid, sets.grid)) {
    throw ConfigError("physical fields and wavenumber sets live on different grids");
  }
}

}  // namespace detail

/// Generator assembled one projection integral at a time (O(K^2 N)). Kept as
/// the reference route for the transform-based assembly.
inline TransitionGenerator assemble_G_quadrature(const PhysicalFieldSet& fields,
                                                 std::shared_ptr<const WavenumberSets> sets) {
  detail::check_grid(fields, *sets);
  const auto layout = basis_layout(*sets);
  const int dim = sets->dimension();
  Eigen::MatrixXd g = Eigen::MatrixXd::Zero(dim, dim);

  struct Mode {
    Wavenumber k;
    int r_index;
    int i_index;  // -1 for self-conjugate modes
    double weight;
  };
  std::vector<Mode> modes;
  for (int r = 0; r < sets->n_self(); ++r) {
    modes.push_back({sets->self_conjugate[r], sets->self_index(r), -1, 1.0});
  }
  for (int q = 0; q < sets->n_paired(); ++q) {
    modes.push_back({sets->paired[q], sets->real_index(q), sets->imag_index(q), 2.0});
  }

  const auto n_modes = static_cast<int>(modes.size());
#pragma omp parallel for schedule(dynamic)
  for (int t = 0; t < n_modes; ++t) {
    const Mode& target = modes[t];
    const double c_r = basis_norm(target.k, fields.grid, BasisKind::real);
    const double c_i = target.i_index >= 0 ? basis_norm(target.k, fields.grid, BasisKind::imag) : 0.0;
    for (const Mode& source : modes) {
      const auto psi = psi_integrals(source.k, target.k, fields);
      const double sr = source.weight / (target.weight * c_r);
      g(target.r_index, source.r_index) = sr * (psi[kPsi1] + psi[kPsi5] + psi[kPsi9]);
      if (source.i_index >= 0) {
        g(target.r_index, source.i_index) = sr * (psi[kPsi2] + psi[kPsi6] + psi[kPsi10]);
      }
      if (target.i_index >= 0) {
        const double si = source.weight / (target.weight * c_i);
        g(target.i_index, source.r_index) = si * (psi[kPsi3] + psi[kPsi7] + psi[kPsi11]);
        if (source.i_index >= 0) {
          g(target.i_index, source.i_index) = si * (psi[kPsi4] + psi[kPsi8] + psi[kPsi12]);
        }
      }
    }
  }
  return {std::move(sets), std::move(g), fields.fingerprint()};
}

/// Transform-based assembly: every projection integral is a product of two
/// basis functions against a field, which product-to-sum identities reduce to
/// that field's DFT at k - k' and k + k'. Six DFTs replace K^2 quadratures.
inline TransitionGenerator assemble_G(const PhysicalFieldSet& fields,
                                      std::shared_ptr<const WavenumberSets> sets) {
  detail::check_grid(fields, *sets);
  const auto& grid = fields.grid;
  const auto n = static_cast<std::size_t>(grid.size());

  std::vector<double> u1(n), u2(n);
  for (std::size_t p = 0; p < n; ++p) {
    u1[p] = fields.velocity.v1[p] - fields.diffusivity.div1[p];
    u2[p] = fields.velocity.v2[p] - fields.diffusivity.div2[p];
  }
  enum { kD11, kD12, kD22, kZeta, kU1, kU2, kFieldCount };
  const std::array<ComplexSpectrum, kFieldCount> hat = {
      dft2(RealGridField(grid, fields.diffusivity.d11)),
      dft2(RealGridField(grid, fields.diffusivity.d12)),
      dft2(RealGridField(grid, fields.diffusivity.d22)),
      dft2(RealGridField(grid, fields.decay)),
      dft2(RealGridField(grid, u1)),
      dft2(RealGridField(grid, u2))};

  const auto layout = basis_layout(*sets);
  const int dim = sets->dimension();
  Eigen::MatrixXd g(dim, dim);
  const double two_pi = 2.0 * std::numbers::pi;

#pragma omp parallel for schedule(static)
  for (int b = 0; b < dim; ++b) {
    const auto& target = layout[b];
    const int q1 = target.k.k1;
    const int q2 = target.k.k2;
    for (int a = 0; a < dim; ++a) {
      const auto& source = layout[a];
      const int k1 = source.k.k1;
      const int k2 = source.k.k2;
      const double kt1 = two_pi * k1;
      const double kt2 = two_pi * k2;
      // Coefficients of c_k and e_k on the component fields.
      const double w11 = -kt1 * kt1, w12 = -2.0 * kt1 * kt2, w22 = -kt2 * kt2;
      auto c_hat = [&](int m1, int m2) {
        return w11 * hat[kD11].at(m1, m2) + w12 * hat[kD12].at(m1, m2) +
               w22 * hat[kD22].at(m1, m2) - hat[kZeta].at(m1, m2);
      };
      auto e_hat = [&](int m1, int m2) {
        return kt1 * hat[kU1].at(m1, m2) + kt2 * hat[kU2].at(m1, m2);
      };
      const cdouble c_minus = c_hat(k1 - q1, k2 - q2);
      const cdouble c_plus = c_hat(k1 + q1, k2 + q2);
      const cdouble e_minus = e_hat(k1 - q1, k2 - q2);
      const cdouble e_plus = e_hat(k1 + q1, k2 + q2);
      // Mesh means of g cos(2 pi m.s) and g sin(2 pi m.s).
      const double cc_m = c_minus.real(), cc_p = c_plus.real();
      const double sc_m = -c_minus.imag(), sc_p = -c_plus.imag();
      const double ce_m = e_minus.real(), ce_p = e_plus.real();
      const double se_m = -e_minus.imag(), se_p = -e_plus.imag();

      double integral;
      if (source.kind == BasisKind::real) {
        integral = target.kind == BasisKind::real
                       ? 0.5 * (cc_m + cc_p) + 0.5 * (se_p + se_m)
                       : 0.5 * (sc_p - sc_m) + 0.5 * (ce_m - ce_p);
      } else {
        integral = target.kind == BasisKind::real
                       ? 0.5 * (sc_p + sc_m) - 0.5 * (ce_m + ce_p)
                       : 0.5 * (cc_m - cc_p) - 0.5 * (se_p - se_m);
      }
      // w_b C_b = 1 for every basis function on the mesh.
      g(b, a) = source.weight * integral;
    }
  }
  return {std::move(sets), std::move(g), fields.fingerprint()};
}

/// exp(G dt) by scaling and squaring with a degree-13 Pade approximant.
inline Eigen::MatrixXd matrix_exponential(const Eigen::MatrixXd& g, double dt) {
  if (!(dt >= 0.0)) throw ConfigError("time step must be non-negative");
  if (!g.allFinite()) throw NumericError("generator has non-finite entries");
  if (dt == 0.0) return Eigen::MatrixXd::Identity(g.rows(), g.cols());
  Eigen::MatrixXd scaled = g * dt;
  Eigen::MatrixXd e = scaled.exp();
  if (!e.allFinite()) throw NumericError("matrix exponential overflowed");
  return e;
}

inline Eigen::MatrixXd matrix_exponential(const TransitionGenerator& gen, double dt) {
  return matrix_exponential(gen.g, dt);
}

/// Integral_0^dt exp(G u) diag(h) exp(G' u) du.
///
/// The block exponential exp([[-G, H], [0, G']] delta) yields the integral over
/// a short step delta with |G| delta <= 1/2; doubling
///   Q(2 delta) = Q(delta) + exp(G delta) Q(delta) exp(G delta)'
/// reaches dt without exponentiating large arguments.
inline Eigen::MatrixXd process_noise_cov(const Eigen::MatrixXd& g, const Eigen::VectorXd& h,
                                         double dt) {
  const auto k = g.rows();
  if (h.size() != k) throw ConfigError("noise density length does not match generator");
  if (!(dt >= 0.0)) throw ConfigError("time step must be non-negative");
  if ((h.array() < 0.0).any()) throw ConfigError("noise density must be non-negative");
  if (!g.allFinite()) throw NumericError("generator has non-finite entries");
  if (dt == 0.0) return Eigen::MatrixXd::Zero(k, k);

  const double norm = g.cwiseAbs().colwise().sum().maxCoeff();
  int doublings = 0;
  double delta = dt;
  while (norm * delta > 0.5) {
    delta *= 0.5;
    ++doublings;
  }
  Eigen::MatrixXd block = Eigen::MatrixXd::Zero(2 * k, 2 * k);
  block.topLeftCorner(k, k) = -g * delta;
  block.topRightCorner(k, k) = (h * delta).asDiagonal();
  block.bottomRightCorner(k, k) = g.transpose() * delta;
  const Eigen::MatrixXd f = block.exp();
  Eigen::MatrixXd step = f.bottomRightCorner(k, k).transpose();
  Eigen::MatrixXd q = step * f.topRightCorner(k, k);
  for (int i = 0; i < doublings; ++i) {
    q += step * q * step.transpose();
    step = step * step;
  }
  q = 0.5 * (q + q.transpose()).eval();
  if (!q.allFinite()) throw NumericError("process noise covariance is not finite");
  return q;
}

/// cov(alpha(t + dt), alpha(t)) for alpha(0) ~ N(0, diag h0) driven by noise
/// of density diag h.
inline Eigen::MatrixXd alpha_cov(const Eigen::MatrixXd& g, const NoiseSpec& noise, double t,
                                 double dt) {
  if (!(t >= 0.0) || !(dt >= 0.0)) throw ConfigError("times must be non-negative");
  noise.validate(static_cast<int>(g.rows()));
  const Eigen::MatrixXd et = matrix_exponential(g, t);
  Eigen::MatrixXd marginal = et * noise.h0.asDiagonal() * et.transpose();
  marginal += process_noise_cov(g, noise.h, t);
  return matrix_exponential(g, dt) * marginal;
}

/// Discretized redistribution kernel of one transition step:
///   xi(t + dt, s) = 1/N sum_x omega_s(x) xi(t, x).
struct IdeKernel {
  GridSpec grid;
  double delta_t = 0.0;
  Eigen::MatrixXd weights;  // rows: target point s, columns: source point x

  RealGridField apply(const RealGridField& field) const {
    if (!same_shape(field.grid, grid)) throw ValidationError("field grid does not match kernel");
    Eigen::Map<const Eigen::VectorXd> x(field.values.data(), grid.size());
    Eigen::VectorXd y = weights * x / static_cast<double>(grid.size());
    return RealGridField(field.grid, std::vector<double>(y.data(), y.data() + y.size()));
  }
};

/// omega_s(x) = sum_{a,b} w_b phi_b(s) [exp(G dt)]_{b,a} phi_a(x).
inline IdeKernel build_ide_kernel(const TransitionGenerator& gen, double dt) {
  const auto& sets = *gen.sets;
  const Eigen::MatrixXd synth = synthesis_matrix(sets);
  const auto layout = basis_layout(sets);
  Eigen::VectorXd inv_w(sets.dimension());
  for (int a = 0; a < sets.dimension(); ++a) inv_w[a] = 1.0 / layout[a].weight;
  const Eigen::MatrixXd analysis = synth * inv_w.asDiagonal();
  return {sets.grid, dt, synth * matrix_exponential(gen, dt) * analysis.transpose()};
}

inline RealGridField ide_step(const RealGridField& field, const TransitionGenerator& gen, double dt) {
  return build_ide_kernel(gen, dt).apply(field);
}

/// (a_R)^2 + (a_I)^2 per mode: self-conjugate modes first, then paired modes.
inline Eigen::VectorXd mode_energy(const SpectralCoeffVector& vec) {
  const auto& sets = *vec.sets;
  Eigen::VectorXd e(sets.n_self() + sets.n_paired());
  for (int r = 0; r < sets.n_self(); ++r) {
    const double a = vec.coeffs[sets.self_index(r)];
    e[r] = a * a;
  }
  for (int q = 0; q < sets.n_paired(); ++q) {
    const double ar = vec.coeffs[sets.real_index(q)];
    const double ai = vec.coeffs[sets.imag_index(q)];
    e[sets.n_self() + q] = ar * ar + ai * ai;
  }
  return e;
}

inline double total_energy(const SpectralCoeffVector& vec) { return mode_energy(vec).sum(); }

}  // namespace advecta
