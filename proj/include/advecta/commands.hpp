#pragma once

// Command drivers behind the advecta executable. Each reads a run config,
// writes its outputs atomically and finishes with manifest.yaml.

#include <yaml-cpp/yaml.h>

#include <chrono>
#include <optional>
#include <string>
#include <vector>

#include "advecta/config.hpp"
#include "advecta/dstm_filter.hpp"
#include "advecta/errors.hpp"
#include "advecta/estimator.hpp"
#include "advecta/io.hpp"
#include "advecta/parallel.hpp"
#include "advecta/simulator.hpp"

namespace advecta {

struct CommandOptions {
  std::string config_path;
  std::string data_path;
  std::string out_dir;  // empty: the config's `out`
  std::optional<int> steps;
  std::optional<std::uint64_t> seed;
  int threads = 0;
  std::string palette = "gray";
  int subsample = 4;
};

enum ExitCode : int { kExitOk = 0, kExitFailure = 1, kExitConfig = 2, kExitValidation = 3, kExitNumeric = 4 };

namespace cmd_detail {

struct Context {
  RunConfig config;
  fs::path out;
  Manifest manifest;
};

inline Context open(const std::string& command, const CommandOptions& opt, bool need_config = true) {
  Context ctx;
  if (need_config || !opt.config_path.empty()) {
    if (opt.config_path.empty()) throw ConfigError(command + " needs --config");
    ctx.config = load_config(opt.config_path);
    if (opt.seed) ctx.config.seed = *opt.seed;
    ctx.manifest.config_path = opt.config_path;
    ctx.manifest.config_sha256 = sha256_hex(ctx.config.text);
  }
  const int n = resolve_threads(opt.threads > 0 ? opt.threads : ctx.config.threads);
  set_threads(n);
  ctx.out = opt.out_dir.empty() ? fs::path(ctx.config.out) : fs::path(opt.out_dir);
  fs::create_directories(ctx.out);
  ctx.manifest.command = command;
  ctx.manifest.seed = ctx.config.seed;
  ctx.manifest.threads = n;
  return ctx;
}

inline void close(Context& ctx) { atomic_write(ctx.out / "manifest.yaml", ctx.manifest.render()); }

inline ObservationSequence load_data(const Context& ctx, const CommandOptions& opt,
                                     std::shared_ptr<const WavenumberSets> sets) {
  if (opt.data_path.empty()) throw ConfigError("this command needs --data");
  auto frames = read_frames(opt.data_path);
  for (std::size_t t = 0; t < frames.size(); ++t) {
    if (!same_shape(frames[t].field.grid, ctx.config.grid)) {
      throw ValidationError("frame " + std::to_string(t) + " is " + std::to_string(frames[t].field.grid.n1) + "x" +
                            std::to_string(frames[t].field.grid.n2) + " but the config grid is " +
                            std::to_string(ctx.config.grid.n1) + "x" + std::to_string(ctx.config.grid.n2));
    }
  }
  auto obs = observations_from_frames(std::move(frames), std::move(sets));
  if (obs.size() > 1 && std::abs(obs.spacing() - ctx.config.delta_t) >
                            kTimeSpacingTolerance * std::max(1.0, ctx.config.delta_t)) {
    throw ValidationError("frame spacing " + fmt(obs.spacing()) + " does not match time.delta_t " +
                          fmt(ctx.config.delta_t));
  }
  return obs;
}

inline YAML::Node seq(const std::vector<double>& v) {
  YAML::Node n(YAML::NodeType::Sequence);
  for (double x : v) n.push_back(x);
  n.SetStyle(YAML::EmitterStyle::Flow);
  return n;
}

inline YAML::Node params_node(const Parameters& p, const ModelSpec& spec) {
  YAML::Node n;
  n["gamma_x"] = seq(p.gamma_x);
  n["gamma_y"] = seq(p.gamma_y);
  if (spec.decay_mode == DecayModel::Mode::constant) n["decay"] = p.decay;
  else n["decay_gamma"] = seq(p.decay_gamma);
  n["diffusivity_scale"] = p.diffusivity_scale;
  n["rho"] = p.rho;
  n["tau_beta"] = p.tau_beta;
  n["tau_obs"] = p.tau_obs;
  if (spec.noise_form == ModelSpec::NoiseForm::power_law) {
    n["noise_a"] = p.noise_a;
    n["noise_b"] = p.noise_b;
  } else {
    n["band_density"] = seq(p.band_density);
  }
  return n;
}

inline YAML::Node stage_node(const StageReport& s) {
  YAML::Node n;
  n["initial_log_likelihood"] = s.initial_log_likelihood;
  n["log_likelihood"] = s.log_likelihood;
  n["evaluations"] = s.evaluations;
  n["iterations"] = s.iterations;
  n["converged"] = s.converged;
  n["seconds"] = s.seconds;
  n["trace"] = seq(s.trace);
  return n;
}

/// The input config with the fitted values written in, usable by filter and
/// nowcast as is.
inline std::string fitted_config(const RunConfig& c, const ModelSpec& spec, const Parameters& p) {
  YAML::Node root = YAML::Load(c.text);
  YAML::Node vel;
  vel["kind"] = "mixture";
  YAML::Node centers(YAML::NodeType::Sequence);
  for (const auto& ctr : spec.velocity_mixture.centers) centers.push_back(seq({ctr[0], ctr[1]}));
  vel["centers"] = centers;
  vel["bandwidth"] = spec.velocity_mixture.effective_bandwidth();
  vel["basis"] = spec.velocity_mixture.basis == RegressionBasis::affine ? "affine" : "constant";
  vel["v_max"] = spec.v_max;
  vel["gamma_x"] = seq(p.gamma_x);
  vel["gamma_y"] = seq(p.gamma_y);
  root["fields"]["velocity"] = vel;
  YAML::Node diff;
  const Eigen::Matrix2d d = spec.diffusivity * p.diffusivity_scale;
  YAML::Node m(YAML::NodeType::Sequence);
  m.push_back(seq({d(0, 0), d(0, 1)}));
  m.push_back(seq({d(1, 0), d(1, 1)}));
  diff["matrix"] = m;
  diff["units"] = "domain";
  root["fields"]["diffusivity"] = diff;
  if (spec.decay_mode == DecayModel::Mode::constant) {
    YAML::Node dec;
    dec["value"] = p.decay;
    root["fields"]["decay"] = dec;
  } else {
    root["fields"]["decay"]["gamma"] = seq(p.decay_gamma);
  }
  YAML::Node noise = root["noise"] ? root["noise"] : YAML::Node(YAML::NodeType::Map);
  noise.remove("band_density");
  if (spec.noise_form == ModelSpec::NoiseForm::power_law) {
    noise["a"] = p.noise_a;
    noise["b"] = p.noise_b;
  } else {
    noise["band_density"] = seq(p.band_density);
  }
  noise["h0_a"] = spec.h0_a;
  noise["h0_b"] = spec.h0_b;
  root["noise"] = noise;
  YAML::Node model;
  model["rho"] = p.rho;
  model["tau_beta"] = p.tau_beta;
  model["tau_obs"] = p.tau_obs;
  root["model"] = model;
  YAML::Emitter e;
  e.SetDoublePrecision(17);
  e << root;
  return std::string(e.c_str()) + "\n";
}

inline double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

}  // namespace cmd_detail

/// Frames frame_0000.txt ... plus truth_fields.txt (v1, v2, d11, d12, d22,
/// decay, source) and truth_alpha.txt (one SPEC block per time).
inline int cmd_simulate(const CommandOptions& opt) {
  auto ctx = cmd_detail::open("simulate", opt);
  auto sim = simulation_config(ctx.config);
  if (opt.steps) {
    if (*opt.steps < 0) throw ValidationError("--steps must be non-negative");
    sim.t_steps = *opt.steps;
  }
  const auto res = simulate(sim);
  const auto& obs = res.observations;
  for (int t = 0; t < obs.size(); ++t) {
    emit(ctx.manifest, frame_path(ctx.out, "frame", t), format_frame(obs.times[static_cast<std::size_t>(t)],
                                                                     obs.frames[static_cast<std::size_t>(t)]));
  }
  const auto& f = sim.fields;
  std::string truth = format_named_field("v1", f.grid, f.velocity.v1) +
                      format_named_field("v2", f.grid, f.velocity.v2) +
                      format_named_field("d11", f.grid, f.diffusivity.d11) +
                      format_named_field("d12", f.grid, f.diffusivity.d12) +
                      format_named_field("d22", f.grid, f.diffusivity.d22) +
                      format_named_field("decay", f.grid, f.decay);
  if (sim.source_sink.field) truth += format_named_field("source", f.grid, sim.source_sink.field->values);
  emit(ctx.manifest, ctx.out / "truth_fields.txt", truth);
  std::string alpha;
  for (std::size_t t = 0; t < res.alpha.size(); ++t) {
    alpha += format_spectrum(obs.times[t], SpectralCoeffVector(obs.sets, res.alpha[t]));
  }
  emit(ctx.manifest, ctx.out / "truth_alpha.txt", alpha);
  ctx.manifest.extra["frames"] = obs.size();
  ctx.manifest.extra["grid"] = cmd_detail::seq({double(ctx.config.grid.n1), double(ctx.config.grid.n2)});
  cmd_detail::close(ctx);
  return kExitOk;
}

/// fit_report.yaml, fitted.yaml (a config with the estimates filled in) and
/// fitted_velocity.txt.
inline int cmd_fit(const CommandOptions& opt) {
  auto ctx = cmd_detail::open("fit", opt);
  const auto t0 = std::chrono::steady_clock::now();
  auto prob = estimation_problem(ctx.config, cmd_detail::load_data(ctx, opt, config_sets(ctx.config)));
  const auto res = fit(prob);
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  YAML::Node report;
  report["estimates"] = cmd_detail::params_node(res.estimate, prob.spec);
  report["initial"] = cmd_detail::params_node(prob.init, prob.spec);
  YAML::Node tr;
  tr["rho"] = "tanh";
  tr["tau_beta"] = "log";
  tr["tau_obs"] = "log";
  tr["noise_a"] = "log";
  tr["band_density"] = "log";
  tr["diffusivity_scale"] = "log";
  tr["gamma"] = "identity";
  tr["decay"] = "identity";
  report["transforms"] = tr;
  if (prob.run_step1) report["step1"] = cmd_detail::stage_node(res.step1);
  if (prob.run_step2) report["step2"] = cmd_detail::stage_node(res.step2);
  report["step1_cutoff_radians"] = prob.lowpass_cutoff_step1;
  report["step1_band"] = lattice_band(prob.lowpass_cutoff_step1);
  report["log_likelihood"] = res.log_likelihood;
  report["innovation_calibration"] = innovation_calibration(res.filter.innovations);
  report["warning"] = res.warning;
  report["wall_clock_seconds"] = seconds;
  report["config"] = ctx.config.text;
  YAML::Emitter e;
  e.SetDoublePrecision(17);
  e << report;
  emit(ctx.manifest, ctx.out / "fit_report.yaml", std::string(e.c_str()) + "\n");
  emit(ctx.manifest, ctx.out / "fitted.yaml", cmd_detail::fitted_config(ctx.config, prob.spec, res.estimate));
  const auto v = eval_velocity(velocity_model(prob.spec, res.estimate), ctx.config.grid);
  emit(ctx.manifest, ctx.out / "fitted_velocity.txt",
       format_named_field("v1", v.grid, v.v1) + format_named_field("v2", v.grid, v.v2));
  ctx.manifest.extra["log_likelihood"] = res.log_likelihood;
  ctx.manifest.extra["warning"] = res.warning;
  cmd_detail::close(ctx);
  return kExitOk;
}

struct FilterRun {
  ObservationSequence data;
  DstmModel model;
  FilterResult result;
};

inline FilterRun run_filter(const cmd_detail::Context& ctx, const CommandOptions& opt) {
  FilterRun r;
  const auto sets = config_sets(ctx.config);
  r.data = cmd_detail::load_data(ctx, opt, sets);
  r.model = config_model(ctx.config, sets);
  r.result = filter_sequence(r.data, r.model);
  return r;
}

/// filter.txt (state means), filtered_XXXX.txt frames, source_sink.txt and
/// filter_report.yaml with the innovation calibration.
inline int cmd_filter(const CommandOptions& opt) {
  auto ctx = cmd_detail::open("filter", opt);
  const auto run = run_filter(ctx, opt);
  const int k = run.model.dimension();
  std::string steps;
  std::vector<double> per_step_ll;
  for (std::size_t s = 0; s < run.result.filtered.size(); ++s) {
    const double t = run.data.times[s + 1];
    const auto& b = run.result.filtered[s];
    steps += format_filter_step(t, b, false);
    per_step_ll.push_back(run.result.innovations[s].log_density);
    emit(ctx.manifest, frame_path(ctx.out, "filtered", static_cast<int>(s + 1)),
         format_frame(t, reconstruct(SpectralCoeffVector(run.model.sets, b.mean.head(k)))));
  }
  emit(ctx.manifest, ctx.out / "filter.txt", steps);
  const auto q = source_sink_map(run.result.final_belief, run.model);
  emit(ctx.manifest, ctx.out / "source_sink.txt", format_named_field("source", q.grid, q.values));

  const double cal = innovation_calibration(run.result.innovations);
  YAML::Node report;
  report["log_likelihood"] = run.result.log_likelihood;
  report["step_log_density"] = cmd_detail::seq(per_step_ll);
  report["innovation_calibration"] = cal;
  report["calibrated"] = cal >= 0.8 && cal <= 1.2;
  YAML::Emitter e;
  e.SetDoublePrecision(17);
  e << report;
  emit(ctx.manifest, ctx.out / "filter_report.yaml", std::string(e.c_str()) + "\n");
  ctx.manifest.extra["innovation_calibration"] = cal;
  cmd_detail::close(ctx);
  return kExitOk;
}

/// nowcast_mean_XXXX.txt and nowcast_var_XXXX.txt for h = 1..steps.
inline int cmd_nowcast(const CommandOptions& opt) {
  if (!opt.steps) throw ValidationError("nowcast needs --steps h");
  if (*opt.steps < 1) throw ValidationError("nowcast horizon must be at least 1 step, got " + std::to_string(*opt.steps));
  auto ctx = cmd_detail::open("nowcast", opt);
  const auto run = run_filter(ctx, opt);
  const auto frames = nowcast(run.result.final_belief, run.model, *opt.steps);
  const double t_last = run.data.times.back();
  for (std::size_t h = 0; h < frames.size(); ++h) {
    const double t = t_last + static_cast<double>(h + 1) * ctx.config.delta_t;
    emit(ctx.manifest, frame_path(ctx.out, "nowcast_mean", static_cast<int>(h + 1)), format_frame(t, frames[h].mean));
    emit(ctx.manifest, frame_path(ctx.out, "nowcast_var", static_cast<int>(h + 1)),
         format_frame(t, frames[h].variance));
  }
  ctx.manifest.extra["horizon"] = *opt.steps;
  cmd_detail::close(ctx);
  return kExitOk;
}

/// One PGM per frame (plot_XXXX.pgm); with a config, velocity.svg shows the
/// configured velocity at every `subsample`-th grid point.
inline int cmd_plot(const CommandOptions& opt) {
  if (opt.palette != "gray" && opt.palette != "gray-shared") {
    throw ConfigError("palette must be gray or gray-shared");
  }
  auto ctx = cmd_detail::open("plot", opt, false);
  if (opt.data_path.empty()) throw ConfigError("plot needs --data");
  const auto frames = read_frames(opt.data_path);
  std::optional<Normalization> shared;
  if (opt.palette == "gray-shared") {
    Normalization n{std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
    for (const auto& f : frames) {
      for (double x : f.field.values) {
        n.min = std::min(n.min, x);
        n.max = std::max(n.max, x);
      }
    }
    shared = n;
  }
  YAML::Node norm(YAML::NodeType::Sequence);
  for (std::size_t t = 0; t < frames.size(); ++t) {
    const auto [img, n] = to_gray(frames[t].field, shared);
    char name[32];
    std::snprintf(name, sizeof name, "plot_%04zu.pgm", t);
    emit(ctx.manifest, ctx.out / name, encode_pgm(img));
    YAML::Node rec;
    rec["file"] = name;
    rec["time"] = frames[t].time;
    rec["min"] = n.min;
    rec["max"] = n.max;
    norm.push_back(rec);
  }
  ctx.manifest.extra["normalization"] = norm;
  if (!opt.config_path.empty()) {
    emit(ctx.manifest, ctx.out / "velocity.svg", quiver_svg(config_velocity(ctx.config), opt.subsample));
  }
  cmd_detail::close(ctx);
  return kExitOk;
}

/// Map an error to its exit code.
inline int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e)) return kExitConfig;
  if (dynamic_cast<const ValidationError*>(&e) || dynamic_cast<const InvalidSpectrumError*>(&e)) {
    return kExitValidation;
  }
  if (dynamic_cast<const NumericError*>(&e)) return kExitNumeric;
  if (dynamic_cast<const YAML::Exception*>(&e)) return kExitConfig;
  if (dynamic_cast<const fs::filesystem_error*>(&e)) return kExitConfig;
  return kExitFailure;
}

}  // namespace advecta
