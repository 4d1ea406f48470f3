#pragma once

// Maximum-likelihood estimation of the physical and noise parameters.
//
// Step 1 fits the velocity mixture and decay on data restricted to a low-pass
// band (a truncated wavenumber set), holding the noise parameters at their
// starting values. Step 2 fixes the physical fields and fits the source-sink
// and noise parameters on the full representation, then runs the filter.

#include <gsl/gsl_errno.h>
#include <gsl/gsl_multimin.h>
#include <gsl/gsl_vector.h>

#include <Eigen/Dense>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "advecta/dstm_filter.hpp"
#include "advecta/errors.hpp"
#include "advecta/galerkin_core.hpp"
#include "advecta/physical_fields.hpp"
#include "advecta/spectral_grid.hpp"

namespace advecta {

/// Structure of the model that is not estimated.
struct ModelSpec {
  GridSpec grid;
  double delta_t = 1.0;
  KernelMixture velocity_mixture;
  double v_max = 0.19;
  DecayModel::Mode decay_mode = DecayModel::Mode::constant;
  KernelMixture decay_mixture;
  Eigen::Matrix2d diffusivity = Eigen::Matrix2d::Zero();
  // Initial-coefficient density h0(k) = a0 (1 + |2 pi k|^2)^(-b0).
  double h0_a = 0.05;
  double h0_b = 0.0;
  enum class NoiseForm { power_law, per_band };
  NoiseForm noise_form = NoiseForm::power_law;
};

struct Parameters {
  std::vector<double> gamma_x;
  std::vector<double> gamma_y;
  double decay = 0.0;               // constant decay
  std::vector<double> decay_gamma;  // mixture decay
  double diffusivity_scale = 1.0;   // multiplies ModelSpec::diffusivity
  double rho = 0.0;
  double tau_beta = 0.0;
  double tau_obs = 0.1;
  double noise_a = 0.05;
  double noise_b = 0.0;
  std::vector<double> band_density;  // per-band noise, index max(|k1|, |k2|)
};

inline VelocityFieldModel velocity_model(const ModelSpec& spec, const Parameters& p) {
  return {spec.velocity_mixture, p.gamma_x, p.gamma_y, spec.v_max};
}

inline PhysicalFieldSet build_fields(const ModelSpec& spec, const Parameters& p) {
  DecayModel decay;
  decay.mode = spec.decay_mode;
  decay.value = p.decay;
  decay.mixture = spec.decay_mixture;
  decay.gamma = p.decay_gamma;
  if (!(p.diffusivity_scale >= 0.0)) throw ConfigError("diffusivity scale must be non-negative");
  return make_field_set(eval_velocity(velocity_model(spec, p), spec.grid),
                        constant_diffusivity(Eigen::Matrix2d(spec.diffusivity * p.diffusivity_scale), spec.grid),
                        eval_decay(decay, spec.grid));
}

inline int band_of(Wavenumber k) { return std::max(std::abs(k.k1), std::abs(k.k2)); }

inline NoiseSpec build_noise(const ModelSpec& spec, const Parameters& p, const WavenumberSets& sets) {
  NoiseSpec n;
  n.h0 = power_law_density(sets, spec.h0_a, spec.h0_b);
  if (spec.noise_form == ModelSpec::NoiseForm::power_law) {
    if (!(p.noise_a >= 0.0)) throw ConfigError("noise amplitude must be non-negative");
    n.h = power_law_density(sets, p.noise_a, p.noise_b);
  } else {
    const auto layout = basis_layout(sets);
    n.h.resize(sets.dimension());
    for (int i = 0; i < sets.dimension(); ++i) {
      const int b = band_of(layout[i].k);
      if (b >= static_cast<int>(p.band_density.size())) {
        throw ConfigError("per-band noise needs a density for band " + std::to_string(b));
      }
      n.h[i] = p.band_density[static_cast<std::size_t>(b)];
    }
  }
  return n;
}

inline DstmParams dstm_params(const ModelSpec& spec, const Parameters& p) {
  return {spec.delta_t, p.rho, p.tau_beta, p.tau_obs};
}

inline DstmModel build_model(const ModelSpec& spec, const Parameters& p, std::shared_ptr<const WavenumberSets> sets) {
  const auto gen = assemble_G(build_fields(spec, p), std::move(sets));
  return build_dstm_model(gen, build_noise(spec, p, *gen.sets), dstm_params(spec, p));
}

enum class ParamGroup { velocity, decay, diffusivity, rho, tau_beta, noise, noise_amplitude, tau_obs };

inline const char* group_name(ParamGroup g) {
  switch (g) {
    case ParamGroup::velocity: return "velocity";
    case ParamGroup::decay: return "decay";
    case ParamGroup::diffusivity: return "diffusivity";
    case ParamGroup::rho: return "rho";
    case ParamGroup::tau_beta: return "tau_beta";
    case ParamGroup::noise: return "noise";
    case ParamGroup::noise_amplitude: return "noise_amplitude";
    case ParamGroup::tau_obs: return "tau_obs";
  }
  return "?";
}

/// Maps a subset of parameter groups to an unconstrained vector:
/// rho = tanh(u), positive scales = exp(u), everything else as is.
struct ParameterTransform {
  std::vector<ParamGroup> groups;
  ModelSpec::NoiseForm noise_form = ModelSpec::NoiseForm::power_law;
  DecayModel::Mode decay_mode = DecayModel::Mode::constant;

  std::vector<double> to_unconstrained(const Parameters& p) const {
    std::vector<double> u;
    for (auto g : groups) {
      switch (g) {
        case ParamGroup::velocity:
          u.insert(u.end(), p.gamma_x.begin(), p.gamma_x.end());
          u.insert(u.end(), p.gamma_y.begin(), p.gamma_y.end());
          break;
        case ParamGroup::decay:
          if (decay_mode == DecayModel::Mode::constant) u.push_back(p.decay);
          else u.insert(u.end(), p.decay_gamma.begin(), p.decay_gamma.end());
          break;
        case ParamGroup::diffusivity: u.push_back(safe_log(p.diffusivity_scale)); break;
        case ParamGroup::rho: u.push_back(std::atanh(std::clamp(p.rho, -1.0 + 1e-12, 1.0 - 1e-12))); break;
        case ParamGroup::tau_beta: u.push_back(safe_log(p.tau_beta)); break;
        case ParamGroup::noise:
          if (noise_form == ModelSpec::NoiseForm::power_law) {
            u.push_back(safe_log(p.noise_a));
            u.push_back(p.noise_b);
          } else {
            for (double d : p.band_density) u.push_back(safe_log(d));
          }
          break;
        case ParamGroup::noise_amplitude: u.push_back(safe_log(p.noise_a)); break;
        case ParamGroup::tau_obs: u.push_back(safe_log(p.tau_obs)); break;
      }
    }
    return u;
  }

  Parameters from_unconstrained(const std::vector<double>& u, Parameters p) const {
    std::size_t i = 0;
    auto take = [&](std::vector<double>& dst) {
      for (double& x : dst) x = u.at(i++);
    };
    for (auto g : groups) {
      switch (g) {
        case ParamGroup::velocity:
          take(p.gamma_x);
          take(p.gamma_y);
          break;
        case ParamGroup::decay:
          if (decay_mode == DecayModel::Mode::constant) p.decay = u.at(i++);
          else take(p.decay_gamma);
          break;
        case ParamGroup::diffusivity: p.diffusivity_scale = std::exp(u.at(i++)); break;
        case ParamGroup::rho: p.rho = std::tanh(u.at(i++)); break;
        case ParamGroup::tau_beta: p.tau_beta = std::exp(u.at(i++)); break;
        case ParamGroup::noise:
          if (noise_form == ModelSpec::NoiseForm::power_law) {
            p.noise_a = std::exp(u.at(i++));
            p.noise_b = u.at(i++);
          } else {
            for (double& d : p.band_density) d = std::exp(u.at(i++));
          }
          break;
        case ParamGroup::noise_amplitude: p.noise_a = std::exp(u.at(i++)); break;
        case ParamGroup::tau_obs: p.tau_obs = std::exp(u.at(i++)); break;
      }
    }
    return p;
  }

  static double safe_log(double x) { return std::log(std::max(x, 1e-300)); }
};

struct OptimizerSettings {
  int max_iterations = 500;  // per restart
  int restarts = 3;
  double rel_tolerance = 1e-6;
  double initial_step = 0.5;  // simplex edge in unconstrained units
};

struct OptimizationResult {
  std::vector<double> x;
  double value = 0.0;          // maximized objective
  double initial_value = 0.0;
  int evaluations = 0;
  int iterations = 0;
  bool converged = false;
  std::vector<double> trace;  // best value after each iteration
};

namespace detail {

struct GslObjective {
  const std::function<double(const std::vector<double>&)>* f;
  double penalty;
  int evaluations = 0;
};

inline double gsl_negated(const gsl_vector* v, void* params) {
  auto* obj = static_cast<GslObjective*>(params);
  std::vector<double> x(v->size);
  for (std::size_t i = 0; i < v->size; ++i) x[i] = gsl_vector_get(v, i);
  ++obj->evaluations;
  double val;
  try {
    val = (*obj->f)(x);
  } catch (const Error&) {
    val = std::numeric_limits<double>::quiet_NaN();
  }
  // Points where the model breaks down are treated as very poor rather than
  // aborting the search.
  return std::isfinite(val) ? -val : obj->penalty;
}

}  // namespace detail

/// Maximize f with the Nelder-Mead simplex (GSL nmsimplex2), restarting from
/// the best point with a fresh simplex.
inline OptimizationResult maximize(const std::function<double(const std::vector<double>&)>& f,
                                   std::vector<double> x0, const OptimizerSettings& opt) {
  OptimizationResult res;
  res.initial_value = f(x0);
  if (!std::isfinite(res.initial_value)) throw NumericError("objective is not finite at the starting point");
  res.x = x0;
  res.value = res.initial_value;
  const std::size_t n = x0.size();
  if (n == 0) {
    res.converged = true;
    return res;
  }
  detail::GslObjective obj{&f, std::abs(res.initial_value) * 10.0 + 1e10};
  gsl_multimin_function fn{&detail::gsl_negated, n, &obj};
  gsl_vector* x = gsl_vector_alloc(n);
  gsl_vector* step = gsl_vector_alloc(n);
  gsl_multimin_fminimizer* s = gsl_multimin_fminimizer_alloc(gsl_multimin_fminimizer_nmsimplex2, n);
  gsl_vector_set_all(step, opt.initial_step);

  res.converged = false;
  for (int r = 0; r < std::max(1, opt.restarts); ++r) {
    for (std::size_t i = 0; i < n; ++i) gsl_vector_set(x, i, res.x[i]);
    gsl_multimin_fminimizer_set(s, &fn, x, step);
    const double start = res.value;
    double window_best = -s->fval;
    int since = 0;
    bool stalled = false;
    for (int it = 0; it < opt.max_iterations; ++it) {
      if (gsl_multimin_fminimizer_iterate(s) != GSL_SUCCESS) break;
      ++res.iterations;
      const double cur = -s->fval;
      res.trace.push_back(std::max(cur, res.value));
      // Converged when the best value has improved by less than the relative
      // tolerance over a window of 10n iterations. Shorter windows stop early
      // in high dimension, where many steps only move the worst vertex.
      if (++since >= std::max(20, static_cast<int>(10 * n))) {
        if (cur - window_best <= opt.rel_tolerance * std::max(1.0, std::abs(window_best))) {
          stalled = true;
          break;
        }
        window_best = cur;
        since = 0;
      }
    }
    const double found = -s->fval;
    if (found > res.value) {
      res.value = found;
      for (std::size_t i = 0; i < n; ++i) res.x[i] = gsl_vector_get(s->x, i);
    }
    // A restart that cannot improve on its own starting point ends the search.
    if (stalled && found - start <= opt.rel_tolerance * std::max(1.0, std::abs(start))) {
      res.converged = true;
      break;
    }
    res.converged = stalled;
  }
  res.evaluations = obj.evaluations + 1;
  gsl_multimin_fminimizer_free(s);
  gsl_vector_free(step);
  gsl_vector_free(x);
  return res;
}

struct FreeGroups {
  bool velocity = true;
  bool decay = true;
  bool diffusivity = false;
  bool rho = true;
  bool tau_beta = true;
  bool noise = true;
  bool tau_obs = true;
};

struct EstimationProblem {
  ObservationSequence data;  // packed on the full model representation
  ModelSpec spec;
  Parameters init;
  FreeGroups free;
  double lowpass_cutoff_step1 = 2.0 * std::numbers::pi * 4.0;
  // Nuisance groups fitted alongside the physical parameters in step 1. With
  // the noise level pinned, the decay absorbs any misfit in variance.
  bool step1_noise_amplitude = true;
  bool step1_tau_beta = false;
  OptimizerSettings step1;
  OptimizerSettings step2;
  bool run_step1 = true;
  bool run_step2 = true;
};

struct StageReport {
  std::string name;
  Parameters estimate;
  double initial_log_likelihood = 0.0;
  double log_likelihood = 0.0;
  int evaluations = 0;
  int iterations = 0;
  bool converged = true;
  double seconds = 0.0;
  std::vector<double> trace;
};

struct FitResult {
  Parameters estimate;
  DstmModel model;
  FilterResult filter;
  StageReport step1;
  StageReport step2;
  double log_likelihood = 0.0;
  bool warning = false;  // an optimizer stage hit its iteration limit
};

/// Log-likelihood of the data packed on `sets` under the given parameters.
inline double evaluate_log_likelihood(const ObservationSequence& data, const ModelSpec& spec, const Parameters& p) {
  return log_likelihood(data, build_model(spec, p, data.sets));
}

namespace detail {

inline std::string describe(const Parameters& p) {
  std::ostringstream os;
  os.precision(6);
  os << "rho=" << p.rho << " tau_beta=" << p.tau_beta << " tau_obs=" << p.tau_obs << " noise_a=" << p.noise_a
     << " noise_b=" << p.noise_b << " decay=" << p.decay << " diffusivity_scale=" << p.diffusivity_scale;
  os << " gamma_x=[";
  for (double g : p.gamma_x) os << g << ' ';
  os << "] gamma_y=[";
  for (double g : p.gamma_y) os << g << ' ';
  os << ']';
  return os.str();
}

inline StageReport run_stage(const std::string& name, const std::vector<ParamGroup>& groups, const ModelSpec& spec,
                             const Parameters& start,
                             const OptimizerSettings& opt,
                             const std::function<double(const Parameters&)>& objective) {
  const auto t0 = std::chrono::steady_clock::now();
  ParameterTransform tr{groups, spec.noise_form, spec.decay_mode};
  std::function<double(const std::vector<double>&)> f = [&](const std::vector<double>& u) {
    return objective(tr.from_unconstrained(u, start));
  };
  StageReport rep;
  rep.name = name;
  OptimizationResult r;
  try {
    r = maximize(f, tr.to_unconstrained(start), opt);
  } catch (const NumericError& e) {
    throw NumericError(name + ": " + e.what() + " at " + describe(start));
  }
  rep.estimate = tr.from_unconstrained(r.x, start);
  rep.initial_log_likelihood = r.initial_value;
  rep.log_likelihood = r.value;
  rep.evaluations = r.evaluations;
  rep.iterations = r.iterations;
  rep.converged = r.converged;
  rep.trace = std::move(r.trace);
  rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (!std::isfinite(objective(rep.estimate))) {
    throw NumericError(name + ": log-likelihood is not finite at the estimate " + describe(rep.estimate));
  }
  return rep;
}

}  // namespace detail

inline void validate_problem(const EstimationProblem& prob) {
  if (prob.data.size() < 3) throw ValidationError("estimation needs at least 3 frames");
  if (!prob.data.sets) throw ConfigError("observations have no wavenumber sets");
  if (!same_shape(prob.data.grid, prob.spec.grid)) throw ValidationError("data grid does not match the model grid");
  const double dt = prob.spec.delta_t;
  if (std::abs(prob.data.spacing() - dt) > kTimeSpacingTolerance * std::max(1.0, dt)) {
    throw ValidationError("frame spacing " + std::to_string(prob.data.spacing()) + " does not match delta_t " +
                          std::to_string(dt));
  }
  prob.spec.velocity_mixture.validate(prob.init.gamma_x, "gamma_x");
  prob.spec.velocity_mixture.validate(prob.init.gamma_y, "gamma_y");
}

inline FitResult fit(const EstimationProblem& prob) {
  validate_problem(prob);
  FitResult out;
  Parameters current = prob.init;

  if (prob.run_step1) {
    std::vector<ParamGroup> g1;
    if (prob.free.velocity) g1.push_back(ParamGroup::velocity);
    if (prob.free.decay) g1.push_back(ParamGroup::decay);
    if (prob.free.diffusivity) g1.push_back(ParamGroup::diffusivity);
    if (prob.step1_noise_amplitude && prob.spec.noise_form == ModelSpec::NoiseForm::power_law) {
      g1.push_back(ParamGroup::noise_amplitude);
    }
    if (prob.step1_tau_beta) g1.push_back(ParamGroup::tau_beta);
    const int band = lattice_band(prob.lowpass_cutoff_step1);
    const auto low = std::make_shared<const WavenumberSets>(truncate_sets(*prob.data.sets, band, band));
    const auto low_data = repack(prob.data, low);
    out.step1 = detail::run_stage("step1", g1, prob.spec, current, prob.step1,
                                  [&](const Parameters& p) { return evaluate_log_likelihood(low_data, prob.spec, p); });
    current = out.step1.estimate;
  }

  if (prob.run_step2) {
    std::vector<ParamGroup> g2;
    if (prob.free.rho) g2.push_back(ParamGroup::rho);
    if (prob.free.tau_beta) g2.push_back(ParamGroup::tau_beta);
    if (prob.free.noise) g2.push_back(ParamGroup::noise);
    if (prob.free.tau_obs) g2.push_back(ParamGroup::tau_obs);
    // The physical fields are fixed in this stage, so exp(G dt) is computed once.
    const auto gen = assemble_G(build_fields(prob.spec, current), prob.data.sets);
    const Eigen::MatrixXd transition = matrix_exponential(gen, prob.spec.delta_t);
    auto objective = [&](const Parameters& p) {
      NoiseSpec noise = build_noise(prob.spec, p, *prob.data.sets);
      Eigen::MatrixXd q = process_noise_cov(gen.g, noise.h, prob.spec.delta_t);
      auto model = dstm_model_from_blocks(transition, std::move(q), std::move(noise), dstm_params(prob.spec, p));
      model.sets = prob.data.sets;
      return log_likelihood(prob.data, model);
    };
    out.step2 = detail::run_stage("step2", g2, prob.spec, current, prob.step2, objective);
    current = out.step2.estimate;
  }

  out.estimate = current;
  out.model = build_model(prob.spec, current, prob.data.sets);
  out.filter = filter_sequence(prob.data, out.model);
  out.log_likelihood = out.filter.log_likelihood;
  out.warning = (prob.run_step1 && !out.step1.converged) || (prob.run_step2 && !out.step2.converged);
  return out;
}

/// All free groups optimized together on the full representation. Only
/// practical on small grids; used to check the two-step decomposition.
inline FitResult fit_joint(const EstimationProblem& prob) {
  validate_problem(prob);
  std::vector<ParamGroup> groups;
  if (prob.free.velocity) groups.push_back(ParamGroup::velocity);
  if (prob.free.decay) groups.push_back(ParamGroup::decay);
  if (prob.free.diffusivity) groups.push_back(ParamGroup::diffusivity);
  if (prob.free.rho) groups.push_back(ParamGroup::rho);
  if (prob.free.tau_beta) groups.push_back(ParamGroup::tau_beta);
  if (prob.free.noise) groups.push_back(ParamGroup::noise);
  if (prob.free.tau_obs) groups.push_back(ParamGroup::tau_obs);
  FitResult out;
  out.step2 = detail::run_stage("joint", groups, prob.spec, prob.init, prob.step2,
                                [&](const Parameters& p) { return evaluate_log_likelihood(prob.data, prob.spec, p); });
  out.estimate = out.step2.estimate;
  out.model = build_model(prob.spec, out.estimate, prob.data.sets);
  out.filter = filter_sequence(prob.data, out.model);
  out.log_likelihood = out.filter.log_likelihood;
  out.warning = !out.step2.converged;
  return out;
}

/// Scalar handle on one parameter group for profiling.
enum class ProfileTarget { rho, tau_beta, tau_obs, noise_a, noise_b, decay, diffusivity_scale, velocity_scale };

inline Parameters with_value(Parameters p, ProfileTarget t, double v) {
  switch (t) {
    case ProfileTarget::rho: p.rho = v; break;
    case ProfileTarget::tau_beta: p.tau_beta = v; break;
    case ProfileTarget::tau_obs: p.tau_obs = v; break;
    case ProfileTarget::noise_a: p.noise_a = v; break;
    case ProfileTarget::noise_b: p.noise_b = v; break;
    case ProfileTarget::decay: p.decay = v; break;
    case ProfileTarget::diffusivity_scale: p.diffusivity_scale = v; break;
    case ProfileTarget::velocity_scale:
      for (double& g : p.gamma_x) g *= v;
      for (double& g : p.gamma_y) g *= v;
      break;
  }
  return p;
}

/// Log-likelihood on the full representation at each value of one target,
/// all other parameters held at `problem.init`.
inline std::vector<double> profile_likelihood(const EstimationProblem& prob, ProfileTarget target,
                                              const std::vector<double>& values) {
  validate_problem(prob);
  std::vector<double> out(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    out[i] = evaluate_log_likelihood(prob.data, prob.spec, with_value(prob.init, target, values[i]));
  }
  return out;
}

}  // namespace advecta
