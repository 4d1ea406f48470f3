// Acceptance gate: one PASS/FAIL line per criterion, nonzero exit on any
// failure. Pass criterion numbers as arguments to run a subset.

#include <advecta/advecta.hpp>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <functional>
#include <numbers>
#include <random>
#include <set>
#include <sstream>
#include <string>

#include "oracles.hpp"

using namespace advecta;

namespace {

const fs::path kConfigDir = ADVECTA_CONFIG_DIR;

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  int id;
  std::string title;
  double time_limit;  // seconds
  std::function<Outcome()> run;
};

std::string num(double x, int prec = 3) {
  std::ostringstream os;
  os.precision(prec);
  os << x;
  return os.str();
}

std::shared_ptr<const WavenumberSets> sets_for(int n, Representation r = Representation::reduced) {
  return std::make_shared<const WavenumberSets>(build_wavenumber_sets(GridSpec{n, n}, r));
}

double wavenumber_sq(Wavenumber k) {
  const double a = 2 * std::numbers::pi * k.k1, b = 2 * std::numbers::pi * k.k2;
  return a * a + b * b;
}

// ---- 1 ----

Outcome dimension_identities() {
  const auto full = build_wavenumber_sets({80, 80}, Representation::full);
  const auto red = build_wavenumber_sets({80, 80}, Representation::reduced);
  return {full.dimension() == 6400 && red.dimension() == 6241,
          "full " + std::to_string(full.dimension()) + ", reduced " + std::to_string(red.dimension())};
}

// ---- 2 ----

Outcome dft_round_trip() {
  double worst_rt = 0.0, worst_sym = 0.0, worst_packed = 0.0;
  for (int n : {20, 80}) {
    const GridSpec g{n, n};
    const RealGridField f(g, oracle::random_field(n, n, 1000 + n));
    const auto x = dft2(f);
    const auto back = idft2(x, g);
    for (std::size_t p = 0; p < f.values.size(); ++p) {
      worst_rt = std::max(worst_rt, std::abs(back.values[p] - f.values[p]));
    }
    // Real input: X(-k) = conj X(k).
    for (int a = 0; a < n; ++a) {
      for (int b = 0; b < n; ++b) {
        worst_sym = std::max(worst_sym, std::abs(x.at(a, b) - std::conj(x.at((n - a) % n, (n - b) % n))));
      }
    }
    const auto sets = sets_for(n, Representation::full);
    const auto packed = reconstruct(pack(x, sets));
    for (std::size_t p = 0; p < f.values.size(); ++p) {
      worst_packed = std::max(worst_packed, std::abs(packed.values[p] - f.values[p]));
    }
  }
  return {worst_rt < 1e-10 && worst_packed < 1e-10 && worst_sym < 1e-12,
          "round trip " + num(worst_rt) + ", packed round trip " + num(worst_packed) + ", symmetry " +
              num(worst_sym)};
}

// ---- 3 ----

Outcome constant_coefficient_generator() {
  const GridSpec g{8, 8};
  const auto sets = sets_for(8);
  const double v1 = 0.1, v2 = -0.05, d = 0.01, zeta = 0.9;
  const auto gen = assemble_G(constant_fields(g, v1, v2, d, zeta), sets);
  const int k = sets->dimension();
  std::vector<int> block_of(static_cast<std::size_t>(k), -1);
  for (int r = 0; r < sets->n_self(); ++r) block_of[static_cast<std::size_t>(sets->self_index(r))] = -2 - r;
  for (int q = 0; q < sets->n_paired(); ++q) {
    block_of[static_cast<std::size_t>(sets->real_index(q))] = q;
    block_of[static_cast<std::size_t>(sets->imag_index(q))] = q;
  }
  double off = 0.0;
  for (int a = 0; a < k; ++a) {
    for (int b = 0; b < k; ++b) {
      if (block_of[static_cast<std::size_t>(a)] != block_of[static_cast<std::size_t>(b)]) {
        off = std::max(off, std::abs(gen.g(a, b)));
      }
    }
  }
  double rel = 0.0;
  for (int q = 0; q < sets->n_paired(); ++q) {
    const auto kk = sets->paired[static_cast<std::size_t>(q)];
    const double diag = -d * wavenumber_sq(kk) - zeta;
    const double vk = 2 * std::numbers::pi * (v1 * kk.k1 + v2 * kk.k2);
    Eigen::Matrix2d expect;
    expect << diag, -vk, vk, diag;
    const int r = sets->real_index(q), i = sets->imag_index(q);
    Eigen::Matrix2d got;
    got << gen.g(r, r), gen.g(r, i), gen.g(i, r), gen.g(i, i);
    rel = std::max(rel, (got - expect).cwiseAbs().maxCoeff() / expect.cwiseAbs().maxCoeff());
  }
  for (int r = 0; r < sets->n_self(); ++r) {
    const auto kk = sets->self_conjugate[static_cast<std::size_t>(r)];
    const double expect = -d * wavenumber_sq(kk) - zeta;
    const int a = sets->self_index(r);
    rel = std::max(rel, std::abs(gen.g(a, a) - expect) / std::abs(expect));
  }
  return {off < 1e-10 && rel < 1e-8, "max off-block " + num(off) + ", max block relative error " + num(rel)};
}

// ---- 4 ----

Outcome energy_transfer() {
  const int n = 20, steps = 100;
  const GridSpec g{n, n};
  const auto sets = sets_for(n);
  std::mt19937_64 rng(4);
  std::normal_distribution<double> nd;
  Eigen::VectorXd a0(sets->dimension());
  for (auto& x : a0) x = nd(rng);

  // Constant velocity: every mode keeps its energy.
  const auto e_const = matrix_exponential(assemble_G(constant_fields(g, 0.1, -0.05, 0.0, 0.0), sets), 1.0);
  SpectralCoeffVector v(sets, a0);
  const auto start = mode_energy(v);
  for (int t = 0; t < steps; ++t) v.coeffs = e_const * v.coeffs;
  const auto end = mode_energy(v);
  double mode_drift = 0.0;
  for (int m = 0; m < start.size(); ++m) mode_drift = std::max(mode_drift, std::abs(end[m] / start[m] - 1.0));

  // Vortex, one step from a large-scale state: total energy stays put while
  // energy moves between modes. Mesh-sum quadrature aliases triads that
  // involve the highest modes, so a state with energy at every scale drifts;
  // that figure is reported but not gated.
  const auto vortex = make_field_set(make_vortex_velocity(g), constant_diffusivity(0.0, g),
                                     std::vector<double>(static_cast<std::size_t>(g.size()), 0.0));
  const auto e_vortex = matrix_exponential(assemble_G(vortex, sets), 1.0);
  double step_drift = 0.0, transfer = 0.0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    SpectralCoeffVector w = analyze(RealGridField(g, oracle::band_limited_field(n, n, 1, 40 + seed)), sets);
    const auto w0 = mode_energy(w);
    const double before = total_energy(w);
    w.coeffs = e_vortex * w.coeffs;
    step_drift = std::max(step_drift, std::abs(total_energy(w) / before - 1.0));
    const auto now = mode_energy(w);
    for (int m = 0; m < now.size(); ++m) {
      if (w0[m] > 1e-12 * before) transfer = std::max(transfer, std::abs(now[m] / w0[m] - 1.0));
    }
  }
  SpectralCoeffVector white(sets, a0);
  const double white_before = total_energy(white);
  white.coeffs = e_vortex * white.coeffs;
  const double white_drift = std::abs(total_energy(white) / white_before - 1.0);
  return {mode_drift < 1e-8 && step_drift < 1e-6 && transfer > 1e-3,
          "constant-v mode drift over 100 steps " + num(mode_drift) + ", vortex total drift per step " +
              num(step_drift) + ", largest mode change " + num(transfer) + " (all-scale state drift " +
              num(white_drift) + ")"};
}

// ---- 5 ----

Outcome process_noise_closed_form() {
  const GridSpec g{8, 8};
  const auto sets = sets_for(8);
  const auto layout = basis_layout(*sets);
  const Eigen::VectorXd h = power_law_density(*sets, 0.05, 0.5);
  double worst = 0.0, small_limit = 0.0, large_limit = 0.0;
  for (double d : {0.0, 0.001, 0.01}) {
    for (double zeta : {0.0, 0.3, 0.9}) {
      const auto gen = assemble_G(constant_fields(g, 0.1, -0.05, d, zeta), sets);
      for (double dt : {1e-6, 1e-3, 0.1, 1.0, 10.0, 1e3}) {
        const auto q = process_noise_cov(gen.g, h, dt);
        for (int a = 0; a < sets->dimension(); ++a) {
          const double r = 2 * d * wavenumber_sq(layout[static_cast<std::size_t>(a)].k) + 2 * zeta;
          const double expect = r > 0.0 ? -h[a] * std::expm1(-r * dt) / r : h[a] * dt;
          worst = std::max(worst, std::abs(q(a, a) - expect) / expect);
          if (dt == 1e-6) small_limit = std::max(small_limit, std::abs(q(a, a) / (h[a] * dt) - 1.0));
          if (dt == 1e3 && r * dt > 50.0) large_limit = std::max(large_limit, std::abs(q(a, a) * r / h[a] - 1.0));
        }
      }
    }
  }
  return {worst < 1e-8 && small_limit < 1e-4 && large_limit < 1e-8,
          "max relative error " + num(worst) + ", small-step limit " + num(small_limit) + ", large-step limit " +
              num(large_limit)};
}

// ---- 6 ----

Outcome alpha_cov_monte_carlo() {
  const auto sets = sets_for(4);
  const int k = sets->dimension();
  std::mt19937_64 rng(6);
  std::normal_distribution<double> nd;
  std::uniform_real_distribution<double> ud(0.05, 0.5);
  Eigen::MatrixXd g(k, k);
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < k; ++j) g(i, j) = 0.3 * nd(rng);
  const double shift = Eigen::EigenSolver<Eigen::MatrixXd>(g).eigenvalues().real().maxCoeff();
  g -= (shift + 0.3) * Eigen::MatrixXd::Identity(k, k);
  NoiseSpec noise{Eigen::VectorXd(k), Eigen::VectorXd(k)};
  for (int i = 0; i < k; ++i) {
    noise.h[i] = ud(rng);
    noise.h0[i] = 2.0 * ud(rng);
  }
  const Eigen::MatrixXd expect = alpha_cov(g, noise, 5.0, 1.0);

  // Euler-Maruyama paths on a fine step; alpha(0) ~ N(0, diag h0).
  const int paths = 10000, sub = 400;
  const double step = 1.0 / sub;
  const Eigen::MatrixXd m = Eigen::MatrixXd::Identity(k, k) + step * g;
  const Eigen::VectorXd scale = (noise.h * step).cwiseSqrt();
  Eigen::MatrixXd at5(paths, k), at6(paths, k);
  std::mt19937_64 prng(66);
  Eigen::VectorXd z(k);
  for (int p = 0; p < paths; ++p) {
    Eigen::VectorXd a(k);
    for (int i = 0; i < k; ++i) a[i] = std::sqrt(noise.h0[i]) * nd(prng);
    for (int t = 0; t < 6; ++t) {
      for (int s = 0; s < sub; ++s) {
        for (int i = 0; i < k; ++i) z[i] = nd(prng);
        a = m * a + scale.cwiseProduct(z);
      }
      if (t == 4) at5.row(p) = a.transpose();
    }
    at6.row(p) = a.transpose();
  }
  at5.rowwise() -= at5.colwise().mean();
  at6.rowwise() -= at6.colwise().mean();
  const Eigen::MatrixXd cov = at6.transpose() * at5 / (paths - 1.0);
  const Eigen::MatrixXd sq = at6.cwiseAbs2().transpose() * at5.cwiseAbs2() / (paths - 1.0);
  const Eigen::MatrixXd se = ((sq - cov.cwiseAbs2()).cwiseMax(0.0) / paths).cwiseSqrt();
  int inside = 0;
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < k; ++j) inside += std::abs(cov(i, j) - expect(i, j)) <= 3.0 * se(i, j);
  const double frac = static_cast<double>(inside) / (k * k);
  return {frac >= 0.95, std::to_string(inside) + "/" + std::to_string(k * k) + " entries within 3 SE"};
}

// ---- 7 ----

Outcome ide_equivalence() {
  const int n = 12;
  const GridSpec g{n, n};
  const auto sets = sets_for(n);
  const double dt = 1.0;
  const double v1 = 0.12, v2 = -0.04, d = 0.003, zeta = 0.2;
  const auto constant = assemble_G(constant_fields(g, v1, v2, d, zeta), sets);
  const auto vortex = assemble_G(make_field_set(make_vortex_velocity(g), constant_diffusivity(d, g),
                                                std::vector<double>(static_cast<std::size_t>(g.size()), zeta)),
                                 sets);

  // exp(g_k dt) per complex mode for the direct convolution.
  auto kappa = [&](double r1, double r2) {
    std::complex<double> acc = 0.0;
    for (int a = -n / 2 + 1; a < n / 2; ++a) {
      for (int b = -n / 2 + 1; b < n / 2; ++b) {
        const std::complex<double> gk(-d * wavenumber_sq({a, b}) - zeta,
                                      -2 * std::numbers::pi * (v1 * a + v2 * b));
        acc += std::exp(gk * dt) * std::polar(1.0, 2 * std::numbers::pi * (a * r1 + b * r2));
      }
    }
    return acc.real();
  };
  std::vector<double> kernel(static_cast<std::size_t>(n * n));
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) kernel[static_cast<std::size_t>(i * n + j)] = kappa(g.s1(i), g.s2(j));

  double spectral = 0.0, conv = 0.0;
  for (const auto* gen : {&constant, &vortex}) {
    const Eigen::MatrixXd e = matrix_exponential(*gen, dt);
    for (int rep = 0; rep < 10; ++rep) {
      const RealGridField xi(g, oracle::band_limited_field(n, n, n / 2 - 1, 700 + rep));
      const auto out = ide_step(xi, *gen, dt);
      const auto packed = pack(dft2(xi), sets);
      const auto ref = idft2(unpack(SpectralCoeffVector(sets, e * packed.coeffs)), g);
      for (std::size_t p = 0; p < out.values.size(); ++p) {
        spectral = std::max(spectral, std::abs(out.values[p] - ref.values[p]));
      }
      if (gen != &constant) continue;
      for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
          double acc = 0.0;
          for (int x = 0; x < n; ++x)
            for (int y = 0; y < n; ++y)
              acc += kernel[static_cast<std::size_t>(((i - x + n) % n) * n + (j - y + n) % n)] * xi(x, y);
          conv = std::max(conv, std::abs(out(i, j) - acc / g.size()));
        }
      }
    }
  }
  return {spectral < 1e-10 && conv < 1e-8,
          "max |IDE - spectral| " + num(spectral) + ", max |IDE - convolution| " + num(conv)};
}

// ---- 8 ----

Outcome kalman_correctness() {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> nd;
  auto spd = [&](int n) {
    Eigen::MatrixXd a(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) a(i, j) = nd(rng);
    return Eigen::MatrixXd(a * a.transpose() / n + 0.1 * Eigen::MatrixXd::Identity(n, n));
  };
  auto model = [&](double tau_obs) {
    Eigen::MatrixXd e(2, 2);
    e << 0.8 + 0.1 * nd(rng), 0.2 * nd(rng), 0.2 * nd(rng), 0.7 + 0.1 * nd(rng);
    Eigen::VectorXd h(2), h0(2);
    h << 0.3, 0.2;
    h0 << 1.0, 1.5;
    return dstm_model_from_blocks(e, spd(2), {h, h0}, {1.0, 0.6, 0.4, tau_obs});
  };
  Eigen::MatrixXd f = Eigen::MatrixXd::Zero(2, 4);
  f(0, 0) = f(1, 1) = 1.0;
  double oracle_err = 0.0;
  for (int rep = 0; rep < 50; ++rep) {
    const double tau = 0.05 + std::abs(nd(rng));
    const auto m = model(tau);
    KalmanBelief b{Eigen::VectorXd(4), spd(4)};
    for (auto& x : b.mean) x = nd(rng);
    const Eigen::Vector2d y(nd(rng), nd(rng));
    const auto u = update(b, y, m);
    const auto ref = oracle::generic_kalman_update(b.mean, b.cov, f, tau * tau * Eigen::MatrixXd::Identity(2, 2), y);
    oracle_err = std::max({oracle_err, (u.mean - ref.mean).cwiseAbs().maxCoeff(),
                           (u.cov - ref.cov).cwiseAbs().maxCoeff()});
  }
  const auto m0 = model(0.0);
  KalmanBelief b0{Eigen::Vector4d(0.3, -0.2, 0.5, 0.1), spd(4)};
  const Eigen::Vector2d y0(0.7, -1.1);
  const double exact = (update(b0, y0, m0).mean.head(2) - y0).cwiseAbs().maxCoeff();

  const auto m = model(0.05);
  KalmanBelief b{Eigen::VectorXd::Zero(4), spd(4)};
  double min_eig = std::numeric_limits<double>::infinity();
  for (int t = 0; t < 200; ++t) {
    b = update(predict(b, m), Eigen::Vector2d(nd(rng), nd(rng)), m);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(b.cov);
    min_eig = std::min(min_eig, es.eigenvalues().minCoeff() / b.cov.trace());
  }
  return {oracle_err < 1e-12 && exact < 1e-12 && min_eig >= -1e-12,
          "oracle error " + num(oracle_err) + ", zero-noise residual " + num(exact) +
              ", min relative eigenvalue over 200 cycles " + num(min_eig)};
}

// ---- shared benchmark plumbing for 9-11 ----

// Replicate r of a benchmark: its own seed and its own random initial field,
// on a simulation plan shared across replicates.
ObservationSequence replicate(SimulationPlan& plan, const RunConfig& base, int r) {
  auto c = base;
  c.seed = base.seed + static_cast<std::uint64_t>(r);
  plan.config.seed = c.seed;
  plan.config.init = config_initial(c);
  return simulate_path(plan, 0).observations;
}

// 20x20, t = 0..10, the benchmark noise levels, and a known mixture flow so
// that scaling its coefficients is meaningful.
const char* kMixtureBenchmark = R"(grid: {n1: 20, n2: 20}
time: {steps: 10, delta_t: 1.0}
fields:
  velocity:
    kind: mixture
    centers: [[0.225, 0.225], [0.725, 0.725], [0.225, 0.725], [0.725, 0.225]]
    basis: affine
    v_max: 0.19
    gamma_x: [0.8, 0.0, 0.0, -0.6, 0.0, 0.0, 0.4, 0.0, 0.0, 0.2, 0.0, 1.5]
    gamma_y: [0.3, 0.0, 0.0, 0.5, 0.0, 0.0, -0.7, 0.0, 0.0, 0.1, -1.5, 0.0]
  diffusivity: {value: 1.0, units: pixel}
  decay: {value: 0.9}
noise: {a: 0.05, b: 0.0, h0_a: 0.05}
source_sink: {mode: ar1, rho: 0.8, tau_beta: 0.2}
observation: {sd: 0.05, kind: spectral}
initial:
  random: {count: 8, amplitude: 50.0, width: [0.06, 0.12]}
seed: 900
)";

// ---- 9 ----

Outcome likelihood_discrimination() {
  const auto base = parse_config(kMixtureBenchmark, "mixture benchmark");
  auto plan = plan_simulation(simulation_config(base));
  const auto sets = config_sets(base);
  auto cg = base;
  for (auto& x : cg.velocity.gamma_x) x *= 1.5;
  for (auto& x : cg.velocity.gamma_y) x *= 1.5;
  auto cr = base;
  cr.rho = base.rho - 0.3;
  const auto truth_model = config_model(base, sets);
  const auto gamma_model = config_model(cg, sets);
  const auto rho_model = config_model(cr, sets);

  const int reps = 20;
  int gamma_wins = 0, rho_wins = 0;
  double min_gamma_gap = std::numeric_limits<double>::infinity(), min_rho_gap = min_gamma_gap;
  for (int r = 0; r < reps; ++r) {
    const auto obs = replicate(plan, base, r);
    const double truth = log_likelihood(obs, truth_model);
    const double lg = log_likelihood(obs, gamma_model), lr = log_likelihood(obs, rho_model);
    gamma_wins += truth > lg;
    rho_wins += truth > lr;
    min_gamma_gap = std::min(min_gamma_gap, truth - lg);
    min_rho_gap = std::min(min_rho_gap, truth - lr);
  }
  return {gamma_wins >= 18 && rho_wins >= 18,
          "truth beats gamma*1.5 in " + std::to_string(gamma_wins) + "/20 (min gap " + num(min_gamma_gap) +
              "), rho-0.3 in " + std::to_string(rho_wins) + "/20 (min gap " + num(min_rho_gap) + ")"};
}

// ---- 10 ----

Outcome vortex_recovery() {
  const auto c = load_config((kConfigDir / "vortex20.cfg").string());
  const auto sim = simulate(simulation_config(c));
  const auto prob = estimation_problem(c, sim.observations);
  const auto res = fit(prob);
  const auto fitted = eval_velocity(velocity_model(prob.spec, res.estimate), c.grid);
  const auto truth = config_velocity(c);
  double vmax = 0.0;
  for (std::size_t p = 0; p < truth.v1.size(); ++p) vmax = std::max(vmax, std::hypot(truth.v1[p], truth.v2[p]));
  std::vector<double> cosines;
  for (std::size_t p = 0; p < truth.v1.size(); ++p) {
    const double st = std::hypot(truth.v1[p], truth.v2[p]);
    if (st <= 0.25 * vmax) continue;
    const double sf = std::hypot(fitted.v1[p], fitted.v2[p]);
    cosines.push_back(sf > 0.0 ? (truth.v1[p] * fitted.v1[p] + truth.v2[p] * fitted.v2[p]) / (st * sf) : 0.0);
  }
  std::sort(cosines.begin(), cosines.end());
  const auto m = cosines.size();
  const double median = m % 2 ? cosines[m / 2] : 0.5 * (cosines[m / 2 - 1] + cosines[m / 2]);
  const auto curl = velocity_curl(fitted);
  const auto at = static_cast<int>(std::max_element(curl.begin(), curl.end()) - curl.begin());
  const double s1 = c.grid.s1(at / c.grid.n2), s2 = c.grid.s2(at % c.grid.n2);
  const bool southeast = s1 > 0.5 && s2 < 0.5;
  return {median > 0.8 && southeast,
          "median cosine " + num(median) + " over " + std::to_string(m) + " points, curl maximum at (" + num(s1, 2) +
              ", " + num(s2, 2) + "), step-1 log-likelihood " + num(res.step1.log_likelihood, 5) + ", final " +
              num(res.log_likelihood, 5)};
}

// ---- 11 ----

// Slow decay and weak diffusion, so forecast errors keep accumulating at
// every scale over six steps instead of saturating after one.
const char* kNowcastBenchmark = R"(grid: {n1: 20, n2: 20}
time: {steps: 16, delta_t: 1.0}
fields:
  velocity: {kind: vortex, center: [0.75, 0.3], width: 0.12, v_max: 0.19, drift: [0.04, 0.03]}
  diffusivity: {value: 0.01, units: pixel}
  decay: {value: 0.02}
noise: {a: 0.05, b: 0.0, h0_a: 0.05}
source_sink: {mode: ar1, rho: 0.9, tau_beta: 0.02}
observation: {sd: 0.05, kind: spectral}
initial:
  random: {count: 8, amplitude: 50.0, width: [0.06, 0.12]}
seed: 1100
)";

Outcome nowcast_degradation() {
  const auto base = parse_config(kNowcastBenchmark, "nowcast benchmark");
  const int reps = 20, horizon = 6, fit_frames = 11;
  std::vector<double> mse(static_cast<std::size_t>(horizon), 0.0);
  const auto sets = config_sets(base);
  const auto model = config_model(base, sets);
  auto plan = plan_simulation(simulation_config(base));
  for (int r = 0; r < reps; ++r) {
    const auto all = replicate(plan, base, r);
    std::vector<RealGridField> frames(all.frames.begin(), all.frames.begin() + fit_frames);
    std::vector<double> times(all.times.begin(), all.times.begin() + fit_frames);
    const auto obs = make_observations(std::move(frames), std::move(times), sets);
    const auto fc = nowcast(filter_sequence(obs, model).final_belief, model, horizon);
    for (int h = 0; h < horizon; ++h) {
      const auto& truth = all.frames[static_cast<std::size_t>(fit_frames + h)];
      const auto& pred = fc[static_cast<std::size_t>(h)].mean;
      double acc = 0.0;
      for (std::size_t p = 0; p < truth.values.size(); ++p) {
        const double e = truth.values[p] - pred.values[p];
        acc += e * e;
      }
      mse[static_cast<std::size_t>(h)] += acc / static_cast<double>(truth.values.size()) / reps;
    }
  }
  bool monotone = true;
  std::string detail = "mean MSE by horizon:";
  for (int h = 0; h < horizon; ++h) {
    detail += " " + num(mse[static_cast<std::size_t>(h)], 4);
    if (h > 0 && mse[static_cast<std::size_t>(h)] < mse[static_cast<std::size_t>(h - 1)]) monotone = false;
  }
  return {monotone, detail};
}

// ---- 12 ----

Outcome fast_assembly() {
  auto varying = [](int n, std::uint64_t seed) {
    const GridSpec g{n, n};
    VelocityField v{g, oracle::band_limited_field(n, n, 2, seed, 0.05),
                    oracle::band_limited_field(n, n, 2, seed + 1, 0.05)};
    auto d = gridded_diffusivity(g, oracle::band_limited_field(n, n, 1, seed + 2, 0.001, 0.02),
                                 oracle::band_limited_field(n, n, 1, seed + 3, 0.0005, 0.0),
                                 oracle::band_limited_field(n, n, 1, seed + 4, 0.001, 0.02),
                                 DerivativeScheme::spectral);
    return make_field_set(v, d, oracle::band_limited_field(n, n, 1, seed + 5, 0.1, 0.9));
  };
  const auto f16 = varying(16, 12);
  const auto s16 = sets_for(16);
  const double diff = (assemble_G(f16, s16).g - assemble_G_quadrature(f16, s16).g).cwiseAbs().maxCoeff();

  const auto f32 = varying(32, 32);
  const auto s32 = sets_for(32);
  using clock = std::chrono::steady_clock;
  auto t0 = clock::now();
  const auto fast = assemble_G(f32, s32);
  const double t_fast = std::chrono::duration<double>(clock::now() - t0).count();
  t0 = clock::now();
  const auto slow = assemble_G_quadrature(f32, s32);
  const double t_slow = std::chrono::duration<double>(clock::now() - t0).count();
  const double diff32 = (fast.g - slow.g).cwiseAbs().maxCoeff();
  const double speedup = t_slow / t_fast;
  return {diff < 1e-8 && diff32 < 1e-8 && speedup >= 10.0,
          "16x16 max difference " + num(diff) + ", 32x32: fast " + num(t_fast) + " s, quadrature " + num(t_slow) +
              " s, speedup " + num(speedup) + "x"};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> all = {
      {1, "wavenumber set dimensions on 80x80", 1.0, dimension_identities},
      {2, "DFT round trip and conjugate symmetry", 1.0, dft_round_trip},
      {3, "constant-coefficient generator is block diagonal", 5.0, constant_coefficient_generator},
      {4, "mode energy conservation and transfer", 10.0, energy_transfer},
      {5, "process noise covariance closed form", 1.0, process_noise_closed_form},
      {6, "coefficient covariance against Monte Carlo", 120.0, alpha_cov_monte_carlo},
      {7, "IDE step equals spectral step", 30.0, ide_equivalence},
      {8, "Kalman update correctness", 10.0, kalman_correctness},
      {9, "likelihood discriminates perturbed parameters", 300.0, likelihood_discrimination},
      {10, "vortex velocity recovery", 900.0, vortex_recovery},
      {11, "nowcast error grows with horizon", 300.0, nowcast_degradation},
      {12, "fast generator assembly against quadrature", 120.0, fast_assembly},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));
  set_threads(resolve_threads(0));

  int failures = 0;
  for (const auto& c : all) {
    if (!selected.empty() && !selected.count(c.id)) continue;
    Outcome o;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_time = secs < c.time_limit;
    const bool pass = o.pass && in_time;
    failures += !pass;
    std::printf("[%s] criterion %d: %s: %s; %.2f s (limit %.0f s)%s\n", pass ? "PASS" : "FAIL", c.id, c.title.c_str(),
                o.detail.c_str(), secs, c.time_limit, in_time ? "" : ", over time limit");
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
