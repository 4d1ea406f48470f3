#pragma once

// Spectral-domain Kalman filter for the augmented state theta = (alpha, beta):
//   alpha(t + dt) = exp(G dt) alpha(t) + dt beta(t) + w_alpha,  w_alpha ~ N(0, Q_dt)
//   beta(t + dt)  = rho beta(t) + w_beta,                      w_beta  ~ N(0, tau_beta^2 I)
//   y(t)          = alpha(t) + v,                              v       ~ N(0, tau_obs^2 I)
// where y is the packed spectrum of an observed frame. The 2K x 2K matrices
// are never formed inside the recursions; predict works on the 2x2 block
// structure directly.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <memory>
#include <numbers>
#include <string>
#include <vector>

#include "advecta/errors.hpp"
#include "advecta/galerkin_core.hpp"
#include "advecta/spectral_grid.hpp"

namespace advecta {

struct DstmParams {
  double delta_t = 1.0;
  double rho = 0.0;
  double tau_beta = 0.0;
  double tau_obs = 0.0;  // standard deviation of each spectral observation error

  void validate() const {
    if (!(delta_t > 0.0) || !std::isfinite(delta_t)) throw ConfigError("delta_t must be positive");
    if (!(std::abs(rho) <= 1.0)) throw ConfigError("rho must lie in [-1, 1]");
    if (!(tau_beta >= 0.0) || !std::isfinite(tau_beta)) throw ConfigError("tau_beta must be non-negative");
    if (!(tau_obs >= 0.0) || !std::isfinite(tau_obs)) throw ConfigError("tau_obs must be non-negative");
  }
};

struct DstmModel {
  std::shared_ptr<const WavenumberSets> sets;  // null for models built from raw blocks
  DstmParams params;
  NoiseSpec noise;
  Eigen::MatrixXd transition;   // exp(G dt)
  Eigen::MatrixXd process_cov;  // integrated noise of the alpha block
  std::uint64_t generator_fingerprint = 0;

  int dimension() const { return static_cast<int>(transition.rows()); }
  int state_dimension() const { return 2 * dimension(); }

  /// [[exp(G dt), dt I], [0, rho I]]
  Eigen::MatrixXd g_tilde() const {
    const int k = dimension();
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(2 * k, 2 * k);
    m.topLeftCorner(k, k) = transition;
    m.topRightCorner(k, k).diagonal().setConstant(params.delta_t);
    m.bottomRightCorner(k, k).diagonal().setConstant(params.rho);
    return m;
  }

  /// blockdiag(Q_dt, tau_beta^2 I)
  Eigen::MatrixXd sigma_w() const {
    const int k = dimension();
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(2 * k, 2 * k);
    m.topLeftCorner(k, k) = process_cov;
    m.bottomRightCorner(k, k).diagonal().setConstant(params.tau_beta * params.tau_beta);
    return m;
  }
};

inline DstmModel dstm_model_from_blocks(Eigen::MatrixXd transition, Eigen::MatrixXd process_cov,
                                        NoiseSpec noise, DstmParams params) {
  params.validate();
  const auto k = transition.rows();
  if (transition.cols() != k || process_cov.rows() != k || process_cov.cols() != k) {
    throw ConfigError("transition and process covariance blocks must be square and equal in size");
  }
  noise.validate(static_cast<int>(k));
  if (!transition.allFinite() || !process_cov.allFinite()) {
    throw NumericError("model blocks have non-finite entries");
  }
  DstmModel m;
  m.params = params;
  m.noise = std::move(noise);
  m.transition = std::move(transition);
  m.process_cov = std::move(process_cov);
  return m;
}

inline DstmModel build_dstm_model(const TransitionGenerator& gen, NoiseSpec noise, DstmParams params) {
  params.validate();
  noise.validate(gen.dimension());
  Eigen::MatrixXd transition = matrix_exponential(gen, params.delta_t);
  Eigen::MatrixXd process_cov = process_noise_cov(gen.g, noise.h, params.delta_t);
  auto m = dstm_model_from_blocks(std::move(transition), std::move(process_cov), std::move(noise), params);
  m.sets = gen.sets;
  m.generator_fingerprint = gen.assembled_from;
  return m;
}

struct KalmanBelief {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;

  int state_dimension() const { return static_cast<int>(mean.size()); }
};

/// Frames at uniformly spaced times plus their packed spectra.
struct ObservationSequence {
  GridSpec grid;
  std::vector<double> times;
  std::vector<RealGridField> frames;
  std::shared_ptr<const WavenumberSets> sets;
  std::vector<Eigen::VectorXd> spectral;

  int size() const { return static_cast<int>(frames.size()); }
  double spacing() const { return times.size() > 1 ? times[1] - times[0] : 0.0; }
};

inline constexpr double kTimeSpacingTolerance = 1e-9;

inline ObservationSequence make_observations(std::vector<RealGridField> frames, std::vector<double> times,
                                             std::shared_ptr<const WavenumberSets> sets) {
  if (frames.empty()) throw ValidationError("observation sequence is empty");
  if (frames.size() != times.size()) throw ValidationError("one time stamp per frame is required");
  ObservationSequence obs;
  obs.grid = frames.front().grid;
  for (std::size_t t = 0; t < frames.size(); ++t) {
    if (!same_shape(frames[t].grid, obs.grid)) {
      throw ValidationError("frame " + std::to_string(t) + " has a different grid");
    }
    if (!frames[t].all_finite()) throw ValidationError("frame " + std::to_string(t) + " has non-finite values");
  }
  if (!same_shape(sets->grid, obs.grid)) throw ValidationError("frames do not match the model grid");
  if (times.size() > 1) {
    const double dt = times[1] - times[0];
    if (!(dt > 0.0)) throw ValidationError("frame times must increase");
    for (std::size_t t = 2; t < times.size(); ++t) {
      if (std::abs((times[t] - times[t - 1]) - dt) > kTimeSpacingTolerance * std::max(1.0, std::abs(dt))) {
        throw ValidationError("frame times are not uniformly spaced (gap before frame " +
                              std::to_string(t) + ")");
      }
    }
  }
  obs.times = std::move(times);
  obs.frames = std::move(frames);
  obs.sets = std::move(sets);
  obs.spectral.reserve(obs.frames.size());
  for (const auto& f : obs.frames) obs.spectral.push_back(analyze(f, obs.sets).coeffs);
  return obs;
}

/// The same frames packed against a different wavenumber set.
inline ObservationSequence repack(const ObservationSequence& obs, std::shared_ptr<const WavenumberSets> sets) {
  return make_observations(obs.frames, obs.times, std::move(sets));
}

/// m <- G~ m, Q <- G~ Q G~' + Sigma_W, evaluated blockwise.
inline KalmanBelief predict(const KalmanBelief& belief, const DstmModel& model) {
  const int k = model.dimension();
  if (belief.state_dimension() != 2 * k) throw ConfigError("belief does not match model dimension");
  const double dt = model.params.delta_t;
  const double rho = model.params.rho;
  const auto& e = model.transition;

  const auto ma = belief.mean.head(k);
  const auto mb = belief.mean.tail(k);
  const auto qaa = belief.cov.topLeftCorner(k, k);
  const auto qab = belief.cov.topRightCorner(k, k);
  const auto qba = belief.cov.bottomLeftCorner(k, k);
  const auto qbb = belief.cov.bottomRightCorner(k, k);

  KalmanBelief out;
  out.mean.resize(2 * k);
  out.mean.head(k).noalias() = e * ma;
  out.mean.head(k) += dt * mb;
  out.mean.tail(k) = rho * mb;

  // Rows of G~ Q for the alpha block: [E Qaa + dt Qba, E Qab + dt Qbb].
  Eigen::MatrixXd top_left = e * qaa;
  top_left += dt * qba;
  Eigen::MatrixXd top_right = e * qab;
  top_right += dt * qbb;

  out.cov.resize(2 * k, 2 * k);
  auto paa = out.cov.topLeftCorner(k, k);
  paa.noalias() = top_left * e.transpose();
  paa += dt * top_right;
  paa += model.process_cov;
  out.cov.topRightCorner(k, k) = rho * top_right;
  out.cov.bottomRightCorner(k, k) = (rho * rho) * qbb;
  out.cov.bottomRightCorner(k, k).diagonal().array() += model.params.tau_beta * model.params.tau_beta;

  // Re-enforce symmetry.
  paa = 0.5 * (paa + paa.transpose()).eval();
  auto pbb = out.cov.bottomRightCorner(k, k);
  pbb = 0.5 * (pbb + pbb.transpose()).eval();
  out.cov.bottomLeftCorner(k, k) = out.cov.topRightCorner(k, k).transpose();

  if (!out.mean.allFinite() || !out.cov.allFinite()) throw NumericError("prediction produced non-finite values");
  return out;
}

/// Innovation statistics of one update.
struct Innovation {
  Eigen::VectorXd residual;      // y - m_alpha
  Eigen::VectorXd standardized;  // L^{-1} residual with S = L L'
  double log_det = 0.0;          // log |S|
  double log_density = 0.0;      // log N(y; m_alpha, S)
};

struct UpdateResult {
  KalmanBelief belief;
  Innovation innovation;
};

/// Kalman update with observation map (I_K, 0) and noise tau_obs^2 I, using
/// the Joseph form for the covariance.
inline UpdateResult update_with_innovation(const KalmanBelief& belief, const Eigen::VectorXd& y,
                                           const DstmModel& model) {
  const int k = model.dimension();
  const int n = 2 * k;
  if (belief.state_dimension() != n) throw ConfigError("belief does not match model dimension");
  if (y.size() != k) {
    throw ValidationError("observation has " + std::to_string(y.size()) + " coefficients, expected " +
                          std::to_string(k));
  }
  const double r = model.params.tau_obs * model.params.tau_obs;

  Eigen::MatrixXd s = belief.cov.topLeftCorner(k, k);
  s.diagonal().array() += r;
  Eigen::LLT<Eigen::MatrixXd> llt(s);
  if (llt.info() != Eigen::Success) {
    throw SolverError("innovation covariance is not positive definite (tau_obs = " +
                      std::to_string(model.params.tau_obs) + ", min diagonal = " +
                      std::to_string(s.diagonal().minCoeff()) + ")");
  }

  UpdateResult out;
  auto& inn = out.innovation;
  inn.residual = y - belief.mean.head(k);
  inn.standardized = llt.matrixL().solve(inn.residual);
  inn.log_det = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
  inn.log_density = -0.5 * (k * std::log(2.0 * std::numbers::pi) + inn.log_det + inn.standardized.squaredNorm());

  // gain' = S^{-1} Q[0:K, :]   (K x 2K)
  const Eigen::MatrixXd gain_t = llt.solve(belief.cov.topRows(k));
  out.belief.mean = belief.mean + gain_t.transpose() * inn.residual;

  // (I - gain F) Q (I - gain F)' + r gain gain'
  Eigen::MatrixXd p = belief.cov;
  p.noalias() -= gain_t.transpose() * belief.cov.topRows(k);
  Eigen::MatrixXd joseph = p;
  joseph.noalias() -= p.leftCols(k) * gain_t;
  if (r > 0.0) joseph.noalias() += r * (gain_t.transpose() * gain_t);
  out.belief.cov = 0.5 * (joseph + joseph.transpose());

  if (!out.belief.mean.allFinite() || !out.belief.cov.allFinite()) {
    throw NumericError("update produced non-finite values");
  }
  return out;
}

inline KalmanBelief update(const KalmanBelief& belief, const Eigen::VectorXd& y, const DstmModel& model) {
  return update_with_innovation(belief, y, model).belief;
}

/// m0 = (y0, 0), Q0 = blockdiag(H0, tau_beta^2 I).
inline KalmanBelief default_init(const Eigen::VectorXd& first_observation, const DstmModel& model) {
  const int k = model.dimension();
  if (first_observation.size() != k) throw ValidationError("initial observation does not match model");
  KalmanBelief b;
  b.mean = Eigen::VectorXd::Zero(2 * k);
  b.mean.head(k) = first_observation;
  b.cov = Eigen::MatrixXd::Zero(2 * k, 2 * k);
  b.cov.topLeftCorner(k, k).diagonal() = model.noise.h0;
  b.cov.bottomRightCorner(k, k).diagonal().setConstant(model.params.tau_beta * model.params.tau_beta);
  return b;
}

struct FilterOptions {
  int first = 0;             // index of the first frame to assimilate
  bool keep_beliefs = true;  // false keeps only the final belief
};

struct FilterResult {
  std::vector<KalmanBelief> predicted;
  std::vector<KalmanBelief> filtered;
  std::vector<Innovation> innovations;
  KalmanBelief final_belief;
  double log_likelihood = 0.0;
};

inline void check_spacing(const ObservationSequence& obs, const DstmModel& model) {
  if (obs.size() > 1 &&
      std::abs(obs.spacing() - model.params.delta_t) > kTimeSpacingTolerance * std::max(1.0, model.params.delta_t)) {
    throw ValidationError("frame spacing " + std::to_string(obs.spacing()) + " does not match model delta_t " +
                          std::to_string(model.params.delta_t));
  }
}

/// Alternating predict/update over frames first..T-1, starting from a belief
/// about the state one step before frame `first`.
inline FilterResult filter_sequence(const ObservationSequence& obs, const DstmModel& model,
                                    const KalmanBelief& init, FilterOptions opt = {}) {
  check_spacing(obs, model);
  if (opt.first < 0 || opt.first >= obs.size()) throw ValidationError("no frames to filter");
  FilterResult res;
  KalmanBelief b = init;
  for (int t = opt.first; t < obs.size(); ++t) {
    KalmanBelief pred = predict(b, model);
    auto up = update_with_innovation(pred, obs.spectral[t], model);
    res.log_likelihood += up.innovation.log_density;
    if (opt.keep_beliefs) {
      res.predicted.push_back(std::move(pred));
      res.filtered.push_back(up.belief);
    }
    res.innovations.push_back(std::move(up.innovation));
    b = std::move(up.belief);
  }
  res.final_belief = std::move(b);
  if (!std::isfinite(res.log_likelihood)) throw NumericError("log-likelihood is not finite");
  return res;
}

/// Sum of one-step-ahead predictive log-densities.
inline double log_likelihood(const ObservationSequence& obs, const DstmModel& model, const KalmanBelief& init,
                             int first = 0) {
  return filter_sequence(obs, model, init, {first, false}).log_likelihood;
}

/// Likelihood of frames 1..T given the default initialization from frame 0.
inline double log_likelihood(const ObservationSequence& obs, const DstmModel& model) {
  if (obs.size() < 2) throw ValidationError("at least two frames are needed");
  return log_likelihood(obs, model, default_init(obs.spectral.front(), model), 1);
}

inline FilterResult filter_sequence(const ObservationSequence& obs, const DstmModel& model) {
  if (obs.size() < 2) throw ValidationError("at least two frames are needed");
  return filter_sequence(obs, model, default_init(obs.spectral.front(), model), {1, true});
}

struct NowcastFrame {
  RealGridField mean;
  RealGridField variance;
};

/// Per-pixel variance diag(Phi P Phi') of a field with coefficient covariance P.
inline RealGridField pixel_variance(const Eigen::MatrixXd& synthesis, const Eigen::MatrixXd& cov, GridSpec grid) {
  const Eigen::MatrixXd sp = synthesis * cov;
  const Eigen::VectorXd v = sp.cwiseProduct(synthesis).rowwise().sum();
  RealGridField out(grid);
  for (int p = 0; p < grid.size(); ++p) out.values[static_cast<std::size_t>(p)] = std::max(0.0, v[p]);
  return out;
}

inline void require_sets(const DstmModel& model) {
  if (!model.sets) throw ConfigError("model has no wavenumber sets attached");
}

/// Iterated predictions for 1..horizon steps ahead.
inline std::vector<NowcastFrame> nowcast(const KalmanBelief& belief, const DstmModel& model, int horizon) {
  if (horizon < 1) throw ValidationError("nowcast horizon must be at least 1 step");
  require_sets(model);
  const int k = model.dimension();
  const Eigen::MatrixXd phi = synthesis_matrix(*model.sets);
  std::vector<NowcastFrame> out;
  KalmanBelief b = belief;
  for (int h = 0; h < horizon; ++h) {
    b = predict(b, model);
    out.push_back({reconstruct(SpectralCoeffVector(model.sets, b.mean.head(k))),
                   pixel_variance(phi, b.cov.topLeftCorner(k, k), model.sets->grid)});
  }
  return out;
}

/// Q(s) = f(s)' beta reconstructed from the source-sink block.
inline RealGridField source_sink_map(const KalmanBelief& belief, const DstmModel& model) {
  require_sets(model);
  const int k = model.dimension();
  if (belief.state_dimension() != 2 * k) throw ConfigError("belief does not match model dimension");
  return reconstruct(SpectralCoeffVector(model.sets, belief.mean.tail(k)));
}

/// Sample variance of all standardized innovation components; near 1 when
/// the model matches the data.
inline double innovation_calibration(const std::vector<Innovation>& innovations) {
  double sum = 0.0, sq = 0.0;
  std::size_t n = 0;
  for (const auto& inn : innovations) {
    sum += inn.standardized.sum();
    sq += inn.standardized.squaredNorm();
    n += static_cast<std::size_t>(inn.standardized.size());
  }
  if (n < 2) throw ValidationError("not enough innovations for a calibration estimate");
  const double mean = sum / static_cast<double>(n);
  return (sq - static_cast<double>(n) * mean * mean) / static_cast<double>(n - 1);
}

}  // namespace advecta
