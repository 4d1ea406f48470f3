#pragma once

// Real-valued 2D Fourier analysis on regular periodic grids: forward and
// inverse DFT, the wavenumber sets that resolve conjugate symmetry, packing of
// complex spectra into real coefficient vectors, and low-pass filtering.
//
// Conventions
//   * Grid points are s = (n1/N1, n2/N2) on the unit square; s1 runs along the
//     first (row) index, s2 along the second.
//   * X(k) = 1/(N1 N2) sum_n x(n) exp(-i 2 pi (k1 n1/N1 + k2 n2/N2)); the
//     inverse carries no factor.
//   * X(k) = a_R(k) - i a_I(k), so a packed vector stores Re X and -Im X.
//   * Paired modes enter a reconstruction with weight 2, self-conjugate modes
//     with weight 1.

#include <Eigen/Dense>
#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <iterator>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "advecta/errors.hpp"

namespace advecta {

using cdouble = std::complex<double>;

struct GridSpec {
  int n1 = 0;
  int n2 = 0;
  // Physical length of one cell along each axis. Zero means the unit domain
  // (spacing 1/n). Metadata only: all numerics run on the unit square.
  double spacing1 = 0.0;
  double spacing2 = 0.0;

  int size() const { return n1 * n2; }
  double cell1() const { return spacing1 > 0.0 ? spacing1 : 1.0 / n1; }
  double cell2() const { return spacing2 > 0.0 ? spacing2 : 1.0 / n2; }
  double length1() const { return cell1() * n1; }
  double length2() const { return cell2() * n2; }

  void validate() const {
    if (n1 < 2 || n2 < 2 || n1 % 2 != 0 || n2 % 2 != 0) {
      throw ConfigError("grid dimensions must be even and >= 2, got " +
                        std::to_string(n1) + "x" + std::to_string(n2));
    }
    if (!(spacing1 >= 0.0) || !(spacing2 >= 0.0)) {
      throw ConfigError("grid spacing must be non-negative");
    }
  }

  /// Unit-square coordinates of grid point (i, j).
  double s1(int i) const { return static_cast<double>(i) / n1; }
  double s2(int j) const { return static_cast<double>(j) / n2; }
};

inline bool same_shape(const GridSpec& a, const GridSpec& b) {
  return a.n1 == b.n1 && a.n2 == b.n2;
}

/// One frame of a scalar field, row-major (index i*n2 + j).
struct RealGridField {
  GridSpec grid;
  std::vector<double> values;

  RealGridField() = default;
  explicit RealGridField(GridSpec g, double fill = 0.0)
      : grid(g), values(static_cast<std::size_t>(g.size()), fill) {}
  RealGridField(GridSpec g, std::vector<double> v) : grid(g), values(std::move(v)) {
    if (static_cast<int>(values.size()) != grid.size()) {
      throw ConfigError("field has " + std::to_string(values.size()) +
                        " values for a " + std::to_string(grid.n1) + "x" +
                        std::to_string(grid.n2) + " grid");
    }
  }

  double& operator()(int i, int j) { return values[static_cast<std::size_t>(i * grid.n2 + j)]; }
  double operator()(int i, int j) const {
    return values[static_cast<std::size_t>(i * grid.n2 + j)];
  }

  bool all_finite() const {
    return std::all_of(values.begin(), values.end(), [](double x) { return std::isfinite(x); });
  }
};

struct Wavenumber {
  int k1 = 0;
  int k2 = 0;
  auto operator<=>(const Wavenumber&) const = default;
};

/// Map an integer wavenumber onto the principal range (-n/2, n/2].
inline int principal(int k, int n) {
  int r = ((k % n) + n) % n;
  return r > n / 2 ? r - n : r;
}

/// Complex DFT coefficients over the principal wavenumber range, stored in the
/// usual FFT layout (non-negative indices first).
class ComplexSpectrum {
 public:
  ComplexSpectrum() = default;
  ComplexSpectrum(int n1, int n2)
      : n1_(n1), n2_(n2), data_(static_cast<std::size_t>(n1) * static_cast<std::size_t>(n2)) {}

  int n1() const { return n1_; }
  int n2() const { return n2_; }

  cdouble& at(int k1, int k2) { return data_[offset(k1, k2)]; }
  cdouble at(int k1, int k2) const { return data_[offset(k1, k2)]; }

  std::span<cdouble> data() { return data_; }
  std::span<const cdouble> data() const { return data_; }

  /// Largest |X(k) - conj X(-k)| over the table.
  double symmetry_residual() const {
    double worst = 0.0;
    for (int a = 0; a < n1_; ++a) {
      for (int b = 0; b < n2_; ++b) {
        worst = std::max(worst, std::abs(at(a, b) - std::conj(at(-a, -b))));
      }
    }
    return worst;
  }

  double max_abs() const {
    double m = 0.0;
    for (const auto& c : data_) m = std::max(m, std::abs(c));
    return m;
  }

 private:
  std::size_t offset(int k1, int k2) const {
    const int a = ((k1 % n1_) + n1_) % n1_;
    const int b = ((k2 % n2_) + n2_) % n2_;
    return static_cast<std::size_t>(a) * static_cast<std::size_t>(n2_) + static_cast<std::size_t>(b);
  }

  int n1_ = 0;
  int n2_ = 0;
  std::vector<cdouble> data_;
};

namespace detail {

struct FftwDeleter {
  void operator()(fftw_complex* p) const { fftw_free(p); }
};
using FftwBuffer = std::unique_ptr<fftw_complex[], FftwDeleter>;

inline FftwBuffer fftw_buffer(std::size_t n) { return FftwBuffer(fftw_alloc_complex(n)); }

// FFTW's planner is not re-entrant; execution of a finished plan on fresh
// (equally aligned) arrays is.
inline fftw_plan cached_plan(int n1, int n2, int sign) {
  static std::mutex mutex;
  static std::map<std::tuple<int, int, int>, fftw_plan> plans;
  std::lock_guard lock(mutex);
  auto key = std::make_tuple(n1, n2, sign);
  if (auto it = plans.find(key); it != plans.end()) return it->second;
  const auto n = static_cast<std::size_t>(n1) * static_cast<std::size_t>(n2);
  auto in = fftw_buffer(n);
  auto out = fftw_buffer(n);
  fftw_plan p = fftw_plan_dft_2d(n1, n2, in.get(), out.get(), sign, FFTW_ESTIMATE);
  plans.emplace(key, p);
  return p;
}

inline void execute(int n1, int n2, int sign, std::span<const cdouble> in, std::span<cdouble> out) {
  const auto n = in.size();
  auto a = fftw_buffer(n);
  auto b = fftw_buffer(n);
  std::copy(in.begin(), in.end(), reinterpret_cast<cdouble*>(a.get()));
  fftw_execute_dft(cached_plan(n1, n2, sign), a.get(), b.get());
  const auto* res = reinterpret_cast<const cdouble*>(b.get());
  std::copy(res, res + n, out.begin());
}

}  // namespace detail

/// Forward 2D DFT with the 1/(N1 N2) factor on the forward transform.
inline ComplexSpectrum dft2(const RealGridField& field) {
  field.grid.validate();
  if (static_cast<int>(field.values.size()) != field.grid.size()) {
    throw ConfigError("field size does not match its grid");
  }
  const int n1 = field.grid.n1;
  const int n2 = field.grid.n2;
  std::vector<cdouble> in(field.values.begin(), field.values.end());
  ComplexSpectrum out(n1, n2);
  detail::execute(n1, n2, FFTW_FORWARD, in, out.data());
  const double scale = 1.0 / field.grid.size();
  for (auto& c : out.data()) c *= scale;
  return out;
}

inline constexpr double kSymmetryTolerance = 1e-9;

/// Inverse 2D DFT of a conjugate-symmetric table; rejects spectra that do not
/// come from a real field.
inline RealGridField idft2(const ComplexSpectrum& spectrum, GridSpec grid) {
  grid.validate();
  if (spectrum.n1() != grid.n1 || spectrum.n2() != grid.n2) {
    throw ConfigError("spectrum shape does not match grid");
  }
  const double tol = kSymmetryTolerance * std::max(1.0, spectrum.max_abs());
  if (const double r = spectrum.symmetry_residual(); r > tol) {
    throw InvalidSpectrumError("spectrum violates conjugate symmetry (residual " +
                               std::to_string(r) + ")");
  }
  std::vector<cdouble> out(static_cast<std::size_t>(grid.size()));
  detail::execute(grid.n1, grid.n2, FFTW_BACKWARD, spectrum.data(), out);
  RealGridField field(grid);
  for (std::size_t i = 0; i < out.size(); ++i) field.values[i] = out[i].real();
  return field;
}

inline RealGridField idft2(const ComplexSpectrum& spectrum) {
  return idft2(spectrum, GridSpec{spectrum.n1(), spectrum.n2()});
}

/// Full representation keeps the Nyquist lines (dimension N1 N2); reduced drops
/// them (dimension N1 N2 - N1 - N2 + 1).
enum class Representation { full, reduced };

inline int form_code(Representation r) { return r == Representation::full ? 16 : 18; }

inline Representation representation_from_code(int code) {
  if (code == 16) return Representation::full;
  if (code == 18) return Representation::reduced;
  throw ConfigError("unknown representation form " + std::to_string(code) + " (expected 16 or 18)");
}

enum class BasisKind { real, imag };

struct WavenumberSets {
  GridSpec grid;
  Representation form = Representation::reduced;
  int band1 = 0;  // largest retained |k1|
  int band2 = 0;  // largest retained |k2|

  // Complete sets for the grid, independent of truncation.
  std::vector<Wavenumber> omega1;  // self-conjugate modes
  std::vector<Wavenumber> omega2;  // one representative per conjugate pair
  std::vector<Wavenumber> omega3;  // as omega2, Nyquist lines removed

  // Modes active in the packed vector for the chosen form and band.
  std::vector<Wavenumber> self_conjugate;
  std::vector<Wavenumber> paired;

  int dimension() const {
    return static_cast<int>(self_conjugate.size() + 2 * paired.size());
  }
  int n_self() const { return static_cast<int>(self_conjugate.size()); }
  int n_paired() const { return static_cast<int>(paired.size()); }

  /// Packed index of a_R for a self-conjugate mode r.
  int self_index(int r) const { return r; }
  /// Packed indices of a_R and a_I for paired mode q.
  int real_index(int q) const { return n_self() + q; }
  int imag_index(int q) const { return n_self() + n_paired() + q; }

  struct Slot {
    int index = -1;  // -1: not represented
    int sign = 0;    // 0 self-conjugate, +1 representative, -1 its conjugate
  };

  /// Position of principal wavenumber k in the packed vector.
  Slot slot(int k1, int k2) const {
    const int a = ((k1 % grid.n1) + grid.n1) % grid.n1;
    const int b = ((k2 % grid.n2) + grid.n2) % grid.n2;
    return slots_[static_cast<std::size_t>(a * grid.n2 + b)];
  }

  void index_slots() {
    slots_.assign(static_cast<std::size_t>(grid.size()), Slot{});
    auto put = [&](int k1, int k2, Slot s) {
      const int a = ((k1 % grid.n1) + grid.n1) % grid.n1;
      const int b = ((k2 % grid.n2) + grid.n2) % grid.n2;
      slots_[static_cast<std::size_t>(a * grid.n2 + b)] = s;
    };
    for (int r = 0; r < n_self(); ++r) put(self_conjugate[r].k1, self_conjugate[r].k2, {r, 0});
    for (int q = 0; q < n_paired(); ++q) {
      put(paired[q].k1, paired[q].k2, {q, +1});
      put(-paired[q].k1, -paired[q].k2, {q, -1});
    }
  }

 private:
  std::vector<Slot> slots_;
};

namespace detail {

inline bool within_band(const Wavenumber& k, int b1, int b2) {
  return std::abs(k.k1) <= b1 && std::abs(k.k2) <= b2;
}

}  // namespace detail

/// Build the wavenumber sets for a grid. For each conjugate pair {k, -k} the
/// representative has k1 > 0, or k2 > 0 when both members share k1 (the k1 = 0
/// and k1 = N1/2 rows). All lists are sorted lexicographically by (k1, k2).
inline WavenumberSets build_wavenumber_sets(GridSpec grid, Representation form) {
  grid.validate();
  WavenumberSets sets;
  sets.grid = grid;
  sets.form = form;
  sets.band1 = grid.n1 / 2;
  sets.band2 = grid.n2 / 2;
  const int h1 = grid.n1 / 2;
  const int h2 = grid.n2 / 2;
  for (int k1 = -h1 + 1; k1 <= h1; ++k1) {
    for (int k2 = -h2 + 1; k2 <= h2; ++k2) {
      const Wavenumber k{k1, k2};
      const Wavenumber c{principal(-k1, grid.n1), principal(-k2, grid.n2)};
      if (c == k) {
        sets.omega1.push_back(k);
        continue;
      }
      const bool representative = (c.k1 == k.k1) ? k.k2 > 0 : k.k1 > 0;
      if (!representative) continue;
      sets.omega2.push_back(k);
      if (k1 != h1 && k2 != h2) sets.omega3.push_back(k);
    }
  }
  std::sort(sets.omega1.begin(), sets.omega1.end());
  std::sort(sets.omega2.begin(), sets.omega2.end());
  std::sort(sets.omega3.begin(), sets.omega3.end());
  if (form == Representation::full) {
    sets.self_conjugate = sets.omega1;
    sets.paired = sets.omega2;
  } else {
    sets.self_conjugate = {Wavenumber{0, 0}};
    sets.paired = sets.omega3;
    sets.band1 = h1 - 1;
    sets.band2 = h2 - 1;
  }
  sets.index_slots();
  return sets;
}

/// Restrict the active modes to |k1| <= band1 and |k2| <= band2.
inline WavenumberSets truncate_sets(const WavenumberSets& sets, int band1, int band2) {
  if (band1 < 0 || band2 < 0) throw ConfigError("truncation band must be non-negative");
  WavenumberSets out = sets;
  out.band1 = std::min(sets.band1, band1);
  out.band2 = std::min(sets.band2, band2);
  auto keep = [&](const std::vector<Wavenumber>& in) {
    std::vector<Wavenumber> r;
    std::copy_if(in.begin(), in.end(), std::back_inserter(r),
                 [&](const Wavenumber& k) { return detail::within_band(k, out.band1, out.band2); });
    return r;
  };
  out.self_conjugate = keep(sets.self_conjugate);
  out.paired = keep(sets.paired);
  out.index_slots();
  return out;
}

/// Largest lattice wavenumber k with 2 pi k <= cutoff (radians per unit distance).
inline int lattice_band(double cutoff) {
  if (!(cutoff >= 0.0)) throw ConfigError("low-pass cutoff must be non-negative");
  if (std::isinf(cutoff)) return std::numeric_limits<int>::max() / 4;
  return static_cast<int>(std::floor(cutoff / (2.0 * std::numbers::pi) + 1e-12));
}

/// Real coefficient vector: a_R over self-conjugate modes, a_R over paired
/// modes, a_I over paired modes, each block in lexicographic order.
struct SpectralCoeffVector {
  std::shared_ptr<const WavenumberSets> sets;
  Eigen::VectorXd coeffs;

  SpectralCoeffVector() = default;
  explicit SpectralCoeffVector(std::shared_ptr<const WavenumberSets> s)
      : sets(std::move(s)), coeffs(Eigen::VectorXd::Zero(sets->dimension())) {}
  SpectralCoeffVector(std::shared_ptr<const WavenumberSets> s, Eigen::VectorXd c)
      : sets(std::move(s)), coeffs(std::move(c)) {
    if (coeffs.size() != sets->dimension()) {
      throw ConfigError("coefficient vector length " + std::to_string(coeffs.size()) +
                        " does not match dimension " + std::to_string(sets->dimension()));
    }
  }
};

inline SpectralCoeffVector pack(const ComplexSpectrum& spectrum,
                                std::shared_ptr<const WavenumberSets> sets) {
  const auto& g = sets->grid;
  if (spectrum.n1() != g.n1 || spectrum.n2() != g.n2) {
    throw ConfigError("spectrum shape does not match wavenumber sets");
  }
  const double tol = kSymmetryTolerance * std::max(1.0, spectrum.max_abs());
  if (const double r = spectrum.symmetry_residual(); r > tol) {
    throw InvalidSpectrumError("cannot pack a non-symmetric spectrum (residual " +
                               std::to_string(r) + ")");
  }
  SpectralCoeffVector out(sets);
  for (int r = 0; r < sets->n_self(); ++r) {
    const auto& k = sets->self_conjugate[r];
    out.coeffs[sets->self_index(r)] = spectrum.at(k.k1, k.k2).real();
  }
  for (int q = 0; q < sets->n_paired(); ++q) {
    const auto& k = sets->paired[q];
    const cdouble x = spectrum.at(k.k1, k.k2);
    out.coeffs[sets->real_index(q)] = x.real();
    out.coeffs[sets->imag_index(q)] = -x.imag();
  }
  return out;
}

/// Full conjugate-symmetric table; imaginary parts of self-conjugate modes are
/// zero and inactive modes are zero.
inline ComplexSpectrum unpack(const SpectralCoeffVector& vec) {
  const auto& sets = *vec.sets;
  ComplexSpectrum out(sets.grid.n1, sets.grid.n2);
  for (int r = 0; r < sets.n_self(); ++r) {
    const auto& k = sets.self_conjugate[r];
    out.at(k.k1, k.k2) = cdouble(vec.coeffs[sets.self_index(r)], 0.0);
  }
  for (int q = 0; q < sets.n_paired(); ++q) {
    const auto& k = sets.paired[q];
    const cdouble x(vec.coeffs[sets.real_index(q)], -vec.coeffs[sets.imag_index(q)]);
    out.at(k.k1, k.k2) = x;
    out.at(-k.k1, -k.k2) = std::conj(x);
  }
  return out;
}

/// cos(2 pi (s1 k1 + s2 k2)) for the real kind, sin(...) for the imaginary kind.
inline double evaluate_basis(Wavenumber k, double s1, double s2, BasisKind kind) {
  const double arg = 2.0 * std::numbers::pi * (s1 * k.k1 + s2 * k.k2);
  return kind == BasisKind::real ? std::cos(arg) : std::sin(arg);
}

/// Packed basis function: mode, kind, and its reconstruction weight.
struct BasisFunction {
  Wavenumber k;
  BasisKind kind = BasisKind::real;
  double weight = 1.0;
};

inline std::vector<BasisFunction> basis_layout(const WavenumberSets& sets) {
  std::vector<BasisFunction> out(static_cast<std::size_t>(sets.dimension()));
  for (int r = 0; r < sets.n_self(); ++r) {
    out[sets.self_index(r)] = {sets.self_conjugate[r], BasisKind::real, 1.0};
  }
  for (int q = 0; q < sets.n_paired(); ++q) {
    out[sets.real_index(q)] = {sets.paired[q], BasisKind::real, 2.0};
    out[sets.imag_index(q)] = {sets.paired[q], BasisKind::imag, 2.0};
  }
  return out;
}

/// N x K matrix whose column a holds weight_a * phi_a at every grid point, so
/// that field values = synthesis * coeffs.
inline Eigen::MatrixXd synthesis_matrix(const WavenumberSets& sets) {
  const auto layout = basis_layout(sets);
  const auto& g = sets.grid;
  Eigen::MatrixXd phi(g.size(), sets.dimension());
  for (int a = 0; a < sets.dimension(); ++a) {
    const auto& b = layout[a];
    for (int i = 0; i < g.n1; ++i) {
      for (int j = 0; j < g.n2; ++j) {
        phi(i * g.n2 + j, a) = b.weight * evaluate_basis(b.k, g.s1(i), g.s2(j), b.kind);
      }
    }
  }
  return phi;
}

inline SpectralCoeffVector analyze(const RealGridField& field,
                                   std::shared_ptr<const WavenumberSets> sets) {
  if (!same_shape(field.grid, sets->grid)) {
    throw ValidationError("field grid does not match wavenumber sets");
  }
  return pack(dft2(field), std::move(sets));
}

inline RealGridField reconstruct(const SpectralCoeffVector& vec) {
  return idft2(unpack(vec), vec.sets->grid);
}

inline bool passes_lowpass(Wavenumber k, double cutoff) {
  const double two_pi = 2.0 * std::numbers::pi;
  return two_pi * std::abs(k.k1) <= cutoff && two_pi * std::abs(k.k2) <= cutoff;
}

/// Zero every coefficient whose |2 pi k1| or |2 pi k2| exceeds the cutoff.
inline SpectralCoeffVector lowpass(const SpectralCoeffVector& vec, double cutoff) {
  if (!(cutoff >= 0.0)) throw ConfigError("low-pass cutoff must be non-negative");
  SpectralCoeffVector out = vec;
  const auto& sets = *vec.sets;
  for (int r = 0; r < sets.n_self(); ++r) {
    if (!passes_lowpass(sets.self_conjugate[r], cutoff)) out.coeffs[sets.self_index(r)] = 0.0;
  }
  for (int q = 0; q < sets.n_paired(); ++q) {
    if (!passes_lowpass(sets.paired[q], cutoff)) {
      out.coeffs[sets.real_index(q)] = 0.0;
      out.coeffs[sets.imag_index(q)] = 0.0;
    }
  }
  return out;
}

inline RealGridField lowpass(const RealGridField& field, double cutoff) {
  if (!(cutoff >= 0.0)) throw ConfigError("low-pass cutoff must be non-negative");
  auto spectrum = dft2(field);
  const int n1 = field.grid.n1;
  const int n2 = field.grid.n2;
  for (int a = 0; a < n1; ++a) {
    for (int b = 0; b < n2; ++b) {
      const Wavenumber k{principal(a, n1), principal(b, n2)};
      // The Nyquist entry stands for both +N/2 and -N/2, so its magnitude
      // decides regardless of sign.
      if (!passes_lowpass(k, cutoff)) spectrum.at(a, b) = 0.0;
    }
  }
  return idft2(spectrum, field.grid);
}

}  // namespace advecta
