#pragma once

// Synthetic trajectories from the exact discrete-time spectral recursion
//   alpha(t + dt) = exp(G dt) alpha(t) + dt beta(t) + q,  q ~ N(0, Q_dt),
// with optional AR(1) or fixed source-sink beta and observation noise.

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <memory>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "advecta/dstm_filter.hpp"
#include "advecta/errors.hpp"
#include "advecta/galerkin_core.hpp"
#include "advecta/physical_fields.hpp"
#include "advecta/spectral_grid.hpp"

namespace advecta {

struct SourceSink {
  enum class Mode { none, fixed, ar1 };
  Mode mode = Mode::none;
  std::optional<RealGridField> field;  // fixed mode: Q(s) applied every step
  double rho = 0.0;                    // ar1 mode
  double tau_beta = 0.0;
};

struct ObservationNoise {
  enum class Mode { spectral, pixel };
  Mode mode = Mode::spectral;
  double sd = 0.0;  // per packed coefficient (spectral) or per pixel
};

struct SimConfig {
  GridSpec grid;
  int t_steps = 10;
  double delta_t = 1.0;
  PhysicalFieldSet fields;
  std::shared_ptr<const WavenumberSets> sets;  // reduced form of `grid` when null
  NoiseSpec noise;
  SourceSink source_sink;
  ObservationNoise observation;
  std::optional<RealGridField> init;  // otherwise alpha(0) ~ N(0, diag h0)
  std::uint64_t seed = 0;
};

/// Matrix square root via symmetric eigendecomposition; eigenvalues down to
/// -1e-10 * trace are clipped to zero, anything more negative is an error.
inline Eigen::MatrixXd covariance_root(const Eigen::MatrixXd& cov) {
  const Eigen::MatrixXd sym = 0.5 * (cov + cov.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym);
  if (es.info() != Eigen::Success) throw NumericError("eigendecomposition of covariance failed");
  const double floor = -1e-10 * std::max(sym.trace(), 0.0);
  Eigen::VectorXd lam = es.eigenvalues();
  if (lam.size() > 0 && lam.minCoeff() < floor) {
    throw NumericError("covariance has a negative eigenvalue " + std::to_string(lam.minCoeff()));
  }
  lam = lam.cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * lam.asDiagonal();
}

/// Independent stream for replicate `path` of a run seeded with `seed`.
inline std::mt19937_64 path_rng(std::uint64_t seed, std::uint64_t path) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(path), static_cast<std::uint32_t>(path >> 32)};
  return std::mt19937_64(seq);
}

inline Eigen::VectorXd standard_normal(int n, std::mt19937_64& rng) {
  std::normal_distribution<double> nd;
  Eigen::VectorXd z(n);
  for (int i = 0; i < n; ++i) z[i] = nd(rng);
  return z;
}

/// Quantities shared by every replicate of one configuration.
struct SimulationPlan {
  SimConfig config;
  std::shared_ptr<const WavenumberSets> sets;
  TransitionGenerator generator;
  Eigen::MatrixXd transition;
  Eigen::MatrixXd noise_root;
  Eigen::VectorXd fixed_beta;  // empty unless the source-sink mode is fixed
};

inline SimulationPlan plan_simulation(SimConfig config) {
  config.grid.validate();
  if (config.t_steps < 0) throw ConfigError("t_steps must be non-negative");
  if (!(config.delta_t > 0.0)) throw ConfigError("delta_t must be positive");
  if (!same_shape(config.fields.grid, config.grid)) throw ConfigError("physical fields do not match the grid");
  SimulationPlan plan;
  plan.sets = config.sets ? config.sets
                          : std::make_shared<const WavenumberSets>(
                                build_wavenumber_sets(config.grid, Representation::reduced));
  config.noise.validate(plan.sets->dimension());
  if (config.observation.sd < 0.0) throw ConfigError("observation noise must be non-negative");
  const auto& ss = config.source_sink;
  if (ss.mode == SourceSink::Mode::ar1 && (!(std::abs(ss.rho) <= 1.0) || !(ss.tau_beta >= 0.0))) {
    throw ConfigError("AR(1) source-sink needs |rho| <= 1 and tau_beta >= 0");
  }
  plan.generator = assemble_G(config.fields, plan.sets);
  plan.transition = matrix_exponential(plan.generator, config.delta_t);
  plan.noise_root = covariance_root(process_noise_cov(plan.generator.g, config.noise.h, config.delta_t));
  if (ss.mode == SourceSink::Mode::fixed) {
    if (!ss.field) throw ConfigError("fixed source-sink mode needs a field");
    plan.fixed_beta = analyze(*ss.field, plan.sets).coeffs;
  }
  plan.config = std::move(config);
  return plan;
}

struct SimulationResult {
  ObservationSequence observations;
  std::vector<Eigen::VectorXd> alpha;  // true coefficients, t = 0..T
  std::vector<Eigen::VectorXd> beta;
};

inline SimulationResult simulate_path(const SimulationPlan& plan, std::uint64_t path) {
  const auto& cfg = plan.config;
  const int k = plan.sets->dimension();
  auto rng = path_rng(cfg.seed, path);

  Eigen::VectorXd alpha = cfg.init ? analyze(*cfg.init, plan.sets).coeffs
                                   : Eigen::VectorXd(cfg.noise.h0.cwiseSqrt().cwiseProduct(standard_normal(k, rng)));
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(k);
  switch (cfg.source_sink.mode) {
    case SourceSink::Mode::fixed:
      beta = plan.fixed_beta;
      break;
    case SourceSink::Mode::ar1:
      beta = cfg.source_sink.tau_beta * standard_normal(k, rng);
      break;
    case SourceSink::Mode::none:
      break;
  }

  SimulationResult res;
  std::vector<RealGridField> frames;
  std::vector<double> times;
  const Eigen::MatrixXd phi = cfg.observation.mode == ObservationNoise::Mode::pixel
                                  ? synthesis_matrix(*plan.sets)
                                  : Eigen::MatrixXd();
  for (int t = 0; t <= cfg.t_steps; ++t) {
    if (t > 0) {
      Eigen::VectorXd next = plan.transition * alpha;
      next += cfg.delta_t * beta;
      next += plan.noise_root * standard_normal(k, rng);
      alpha = std::move(next);
      if (cfg.source_sink.mode == SourceSink::Mode::ar1) {
        beta = cfg.source_sink.rho * beta + cfg.source_sink.tau_beta * standard_normal(k, rng);
      }
    }
    res.alpha.push_back(alpha);
    res.beta.push_back(beta);
    RealGridField frame(cfg.grid);
    if (cfg.observation.mode == ObservationNoise::Mode::spectral) {
      Eigen::VectorXd y = alpha;
      if (cfg.observation.sd > 0.0) y += cfg.observation.sd * standard_normal(k, rng);
      frame = reconstruct(SpectralCoeffVector(plan.sets, y));
    } else {
      const Eigen::VectorXd x = phi * alpha;
      frame.values.assign(x.data(), x.data() + x.size());
      if (cfg.observation.sd > 0.0) {
        const Eigen::VectorXd e = standard_normal(cfg.grid.size(), rng);
        for (int p = 0; p < cfg.grid.size(); ++p) frame.values[static_cast<std::size_t>(p)] += cfg.observation.sd * e[p];
      }
    }
    frame.grid = cfg.grid;
    frames.push_back(std::move(frame));
    times.push_back(t * cfg.delta_t);
  }
  res.observations = make_observations(std::move(frames), std::move(times), plan.sets);
  return res;
}

inline SimulationResult simulate(const SimConfig& config) {
  return simulate_path(plan_simulation(config), 0);
}

/// Independent replicates; path i always uses stream (seed, i).
inline std::vector<SimulationResult> simulate_replicates(const SimulationPlan& plan, int n) {
  std::vector<SimulationResult> out(static_cast<std::size_t>(n));
#pragma omp parallel for schedule(dynamic)
  for (int i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] = simulate_path(plan, static_cast<std::uint64_t>(i));
  return out;
}

/// Coefficient paths of the homogeneous recursion alpha <- E alpha + q, with
/// alpha(0) ~ N(0, diag h0). Returns paths[p][t] for t = 0..steps.
inline std::vector<std::vector<Eigen::VectorXd>> sample_alpha_paths(const Eigen::MatrixXd& g, const NoiseSpec& noise,
                                                                    double dt, int steps, int n_paths,
                                                                    std::uint64_t seed) {
  const int k = static_cast<int>(g.rows());
  noise.validate(k);
  const Eigen::MatrixXd e = matrix_exponential(g, dt);
  const Eigen::MatrixXd root = covariance_root(process_noise_cov(g, noise.h, dt));
  const Eigen::VectorXd sd0 = noise.h0.cwiseSqrt();
  std::vector<std::vector<Eigen::VectorXd>> paths(static_cast<std::size_t>(n_paths));
#pragma omp parallel for schedule(static)
  for (int p = 0; p < n_paths; ++p) {
    auto rng = path_rng(seed, static_cast<std::uint64_t>(p));
    auto& path = paths[static_cast<std::size_t>(p)];
    path.reserve(static_cast<std::size_t>(steps + 1));
    path.push_back(sd0.cwiseProduct(standard_normal(k, rng)));
    for (int t = 0; t < steps; ++t) path.push_back(e * path.back() + root * standard_normal(k, rng));
  }
  return paths;
}

struct EmpiricalCovariance {
  Eigen::MatrixXd cov;
  Eigen::MatrixXd standard_error;
  int n = 0;
};

/// Unbiased sample cross-covariance cov(x, y) over paths, with the standard
/// error of each entry estimated from the spread of centered products.
inline EmpiricalCovariance empirical_covariance(const std::vector<Eigen::VectorXd>& x,
                                                const std::vector<Eigen::VectorXd>& y) {
  const auto n = static_cast<int>(x.size());
  if (n < 2) throw ValidationError("empirical covariance needs at least 2 paths");
  if (y.size() != x.size()) throw ValidationError("paired samples differ in count");
  const auto kx = x.front().size();
  const auto ky = y.front().size();
  Eigen::MatrixXd xs(n, kx), ys(n, ky);
  for (int i = 0; i < n; ++i) {
    xs.row(i) = x[static_cast<std::size_t>(i)].transpose();
    ys.row(i) = y[static_cast<std::size_t>(i)].transpose();
  }
  xs.rowwise() -= xs.colwise().mean();
  ys.rowwise() -= ys.colwise().mean();
  EmpiricalCovariance out;
  out.n = n;
  out.cov = xs.transpose() * ys / static_cast<double>(n - 1);
  const Eigen::MatrixXd sq = xs.cwiseAbs2().transpose() * ys.cwiseAbs2() / static_cast<double>(n - 1);
  out.standard_error = ((sq - out.cov.cwiseAbs2()).cwiseMax(0.0) / static_cast<double>(n)).cwiseSqrt();
  return out;
}

/// Lagged covariance cov(alpha(t + lag), alpha(t)) from sampled paths.
inline EmpiricalCovariance empirical_covariance(const std::vector<std::vector<Eigen::VectorXd>>& paths, int t,
                                                int lag) {
  std::vector<Eigen::VectorXd> a, b;
  for (const auto& p : paths) {
    if (t < 0 || t + lag >= static_cast<int>(p.size())) throw ValidationError("path too short for requested lag");
    a.push_back(p[static_cast<std::size_t>(t + lag)]);
    b.push_back(p[static_cast<std::size_t>(t)]);
  }
  return empirical_covariance(a, b);
}

/// Forward Euler on d alpha/dt = G alpha + beta with `substeps` steps per dt.
/// A cross-check for the exponential transition, not a production path.
inline Eigen::VectorXd euler_propagate(const Eigen::MatrixXd& g, Eigen::VectorXd alpha, const Eigen::VectorXd& beta,
                                       double dt, int substeps) {
  if (substeps < 1) throw ConfigError("substeps must be positive");
  const double h = dt / substeps;
  for (int i = 0; i < substeps; ++i) alpha += h * (g * alpha + beta);
  return alpha;
}

/// Euler-Maruyama counterpart of one noisy transition.
inline Eigen::VectorXd euler_maruyama_step(const Eigen::MatrixXd& g, Eigen::VectorXd alpha,
                                           const Eigen::VectorXd& h, double dt, int substeps,
                                           std::mt19937_64& rng) {
  if (substeps < 1) throw ConfigError("substeps must be positive");
  const double step = dt / substeps;
  const Eigen::VectorXd scale = (h * step).cwiseSqrt();
  for (int i = 0; i < substeps; ++i) {
    alpha += step * (g * alpha);
    alpha += scale.cwiseProduct(standard_normal(static_cast<int>(alpha.size()), rng));
  }
  return alpha;
}

struct VortexOptions {
  std::array<double, 2> center{0.75, 0.3};
  double width = 0.12;
  double v_max = 0.19;
  std::array<double, 2> drift{0.04, 0.03};
  double rotation = 1.0;  // +1 counter-clockwise, -1 clockwise
};

/// Streamfunction psi = Gaussian bump (periodic minimum-image distance),
/// low-passed to the reduced band; v = (d psi/d s2, -d psi/d s1) + drift,
/// scaled so max |v| = v_max.
inline VelocityField make_vortex_velocity(GridSpec grid, const VortexOptions& opt = {}) {
  grid.validate();
  if (!(opt.width > 0.0) || !(opt.v_max > 0.0)) throw ConfigError("vortex width and v_max must be positive");
  RealGridField psi(grid);
  auto wrap = [](double d) { return d - std::round(d); };
  for (int i = 0; i < grid.n1; ++i) {
    for (int j = 0; j < grid.n2; ++j) {
      const double d1 = wrap(grid.s1(i) - opt.center[0]);
      const double d2 = wrap(grid.s2(j) - opt.center[1]);
      psi(i, j) = opt.rotation * std::exp(-(d1 * d1 + d2 * d2) / (2.0 * opt.width * opt.width));
    }
  }
  const int band = std::min(grid.n1, grid.n2) / 2 - 1;
  psi = lowpass(psi, 2.0 * std::numbers::pi * band);
  auto v1 = detail::partial(psi.values, grid, 1, DerivativeScheme::spectral);
  auto v2 = detail::partial(psi.values, grid, 0, DerivativeScheme::spectral);
  for (double& x : v2) x = -x;

  // Largest c with max |c v_rot + drift| <= v_max.
  const double drift_speed = std::hypot(opt.drift[0], opt.drift[1]);
  if (drift_speed >= opt.v_max) throw ConfigError("vortex drift exceeds v_max");
  double lo = 0.0, hi = 1.0;
  auto max_speed = [&](double c) {
    double m = 0.0;
    for (std::size_t p = 0; p < v1.size(); ++p) {
      m = std::max(m, std::hypot(c * v1[p] + opt.drift[0], c * v2[p] + opt.drift[1]));
    }
    return m;
  };
  while (max_speed(hi) < opt.v_max) hi *= 2.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    (max_speed(mid) <= opt.v_max ? lo : hi) = mid;
  }
  VelocityField out{grid, std::move(v1), std::move(v2)};
  for (std::size_t p = 0; p < out.v1.size(); ++p) {
    out.v1[p] = lo * out.v1[p] + opt.drift[0];
    out.v2[p] = lo * out.v2[p] + opt.drift[1];
  }
  return out;
}

/// Smooth non-negative bump used as the benchmark source-sink field.
inline RealGridField gaussian_bump(GridSpec grid, std::array<double, 2> center, double width, double amplitude) {
  RealGridField f(grid);
  auto wrap = [](double d) { return d - std::round(d); };
  for (int i = 0; i < grid.n1; ++i) {
    for (int j = 0; j < grid.n2; ++j) {
      const double d1 = wrap(grid.s1(i) - center[0]);
      const double d2 = wrap(grid.s2(j) - center[1]);
      f(i, j) = amplitude * std::exp(-(d1 * d1 + d2 * d2) / (2.0 * width * width));
    }
  }
  const int band = std::min(grid.n1, grid.n2) / 2 - 1;
  return lowpass(f, 2.0 * std::numbers::pi * band);
}

}  // namespace advecta
