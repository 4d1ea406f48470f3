#pragma once

// Run configuration: a YAML document with one section per concern. Every
// error names the offending field and the line it came from.

#include <yaml-cpp/yaml.h>

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "advecta/errors.hpp"
#include "advecta/estimator.hpp"
#include "advecta/physical_fields.hpp"
#include "advecta/simulator.hpp"
#include "advecta/spectral_grid.hpp"

namespace advecta {

struct Bump {
  std::array<double, 2> center{0.5, 0.5};
  double width = 0.1;
  double amplitude = 1.0;
};

struct VelocityConfig {
  enum class Kind { zero, constant, vortex, mixture };
  Kind kind = Kind::zero;
  std::array<double, 2> value{0.0, 0.0};
  VortexOptions vortex;
  KernelMixture mixture;
  std::vector<double> gamma_x, gamma_y;
  double v_max = 0.19;
};

struct InitialConfig {
  std::vector<Bump> bumps;
  // Random bumps drawn from a stream keyed on the run seed.
  int random_count = 0;
  double random_amplitude = 1.0;
  std::array<double, 2> random_width{0.06, 0.12};
};

struct EstimationConfig {
  KernelMixture kernels;
  double v_max = 0.19;
  double lowpass_cutoff = 2.0 * std::numbers::pi * 4.0;  // radians per unit distance
  Parameters init;
  FreeGroups free;
  OptimizerSettings step1;
  OptimizerSettings step2;
  bool step1_noise_amplitude = true;
  bool step1_tau_beta = false;
  bool run_step2 = true;
  ModelSpec::NoiseForm noise_form = ModelSpec::NoiseForm::power_law;
};

struct RunConfig {
  GridSpec grid;
  int steps = 10;
  double delta_t = 1.0;
  Representation representation = Representation::reduced;
  VelocityConfig velocity;
  Eigen::Matrix2d diffusivity = Eigen::Matrix2d::Zero();  // domain units
  DecayModel decay;
  double noise_a = 0.05, noise_b = 0.0;
  double h0_a = 0.05, h0_b = 0.0;
  std::vector<double> noise_bands;  // per-band densities; overrides a and b
  SourceSink::Mode source_mode = SourceSink::Mode::none;
  std::vector<Bump> source_bumps;
  double source_rho = 1.0, source_tau_beta = 0.0;
  ObservationNoise observation;
  InitialConfig initial;
  // Filter model; defaults follow the source-sink and observation sections.
  double rho = 1.0, tau_beta = 0.0, tau_obs = 0.0;
  EstimationConfig estimation;
  std::uint64_t seed = 0;
  std::string out = "out";
  int threads = 0;
  std::string text;    // the document as read
  std::string origin;  // file name for messages
};

namespace config_detail {

inline std::string where(const YAML::Node& n, const std::string& path) {
  const auto m = n.Mark();
  if (m.line >= 0) return "line " + std::to_string(m.line + 1) + ": field '" + path + "'";
  return "field '" + path + "'";
}

template <class T>
T as(const YAML::Node& n, const std::string& path) {
  try {
    return n.as<T>();
  } catch (const YAML::Exception&) {
    throw ConfigError(where(n, path) + ": cannot read value '" + (n.IsScalar() ? n.Scalar() : "<structure>") + "'");
  }
}

template <class T>
T required(const YAML::Node& parent, const std::string& key, const std::string& path) {
  const auto n = parent[key];
  if (!n) throw ConfigError(where(parent, path) + ": missing required field '" + path + "." + key + "'");
  return as<T>(n, path + "." + key);
}

template <class T>
T optional(const YAML::Node& parent, const std::string& key, const std::string& path, T fallback) {
  const auto n = parent[key];
  return n ? as<T>(n, path + "." + key) : fallback;
}

inline std::array<double, 2> pair(const YAML::Node& n, const std::string& path) {
  const auto v = as<std::vector<double>>(n, path);
  if (v.size() != 2) throw ConfigError(where(n, path) + ": expected two numbers");
  return {v[0], v[1]};
}

inline void check_keys(const YAML::Node& n, const std::string& path, std::initializer_list<const char*> allowed) {
  if (!n.IsMap()) throw ConfigError(where(n, path) + ": expected a mapping");
  for (const auto& kv : n) {
    const auto key = kv.first.as<std::string>();
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    if (!ok) throw ConfigError(where(kv.first, path + "." + key) + ": unknown field");
  }
}

inline std::vector<Bump> bumps(const YAML::Node& n, const std::string& path) {
  std::vector<Bump> out;
  if (!n) return out;
  if (!n.IsSequence()) throw ConfigError(where(n, path) + ": expected a list of bumps");
  for (std::size_t i = 0; i < n.size(); ++i) {
    const auto p = path + "[" + std::to_string(i) + "]";
    check_keys(n[i], p, {"center", "width", "amplitude"});
    Bump b;
    b.center = pair(n[i]["center"], p + ".center");
    b.width = required<double>(n[i], "width", p);
    b.amplitude = required<double>(n[i], "amplitude", p);
    if (!(b.width > 0.0)) throw ConfigError(where(n[i], p) + ": width must be positive");
    out.push_back(b);
  }
  return out;
}

inline KernelMixture mixture(const YAML::Node& n, const std::string& path) {
  KernelMixture m;
  const auto c = n["centers"];
  if (!c) throw ConfigError(where(n, path) + ": missing required field '" + path + ".centers'");
  for (std::size_t i = 0; i < c.size(); ++i) m.centers.push_back(pair(c[i], path + ".centers"));
  m.bandwidth = optional<double>(n, "bandwidth", path, 0.0);
  const auto basis = optional<std::string>(n, "basis", path, "affine");
  if (basis == "affine") m.basis = RegressionBasis::affine;
  else if (basis == "constant") m.basis = RegressionBasis::constant;
  else throw ConfigError(where(n["basis"], path + ".basis") + ": expected affine or constant");
  return m;
}

/// Length scale of a unit name: domain lengths per unit.
inline double unit_length(const std::string& units, const GridSpec& g, const YAML::Node& n, const std::string& path) {
  if (units == "domain") return 1.0;
  if (units == "pixel") {
    if (g.n1 != g.n2) throw ConfigError(where(n, path) + ": pixel units need a square grid");
    return 1.0 / g.n1;
  }
  throw ConfigError(where(n, path) + ": units must be domain or pixel");
}

}  // namespace config_detail

inline RunConfig parse_config(const std::string& text, const std::string& origin = "<config>") {
  using namespace config_detail;
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::ParserException& e) {
    throw ConfigError(origin + ": line " + std::to_string(e.mark.line + 1) + ": " + e.msg);
  }
  if (!root || !root.IsMap()) throw ConfigError(origin + ": expected a mapping at the top level");
  check_keys(root, "", {"grid", "time", "representation", "fields", "noise", "source_sink", "observation",
                        "initial", "model", "estimation", "seed", "out", "threads"});
  RunConfig c;
  c.text = text;
  c.origin = origin;

  const auto grid = root["grid"];
  if (!grid) throw ConfigError(origin + ": missing required field 'grid'");
  check_keys(grid, "grid", {"n1", "n2"});
  c.grid.n1 = required<int>(grid, "n1", "grid");
  c.grid.n2 = required<int>(grid, "n2", "grid");
  if (c.grid.n1 < 2 || c.grid.n2 < 2) throw ConfigError(where(grid, "grid") + ": n1 and n2 must be at least 2");

  if (const auto t = root["time"]) {
    check_keys(t, "time", {"steps", "delta_t"});
    c.steps = optional<int>(t, "steps", "time", c.steps);
    c.delta_t = optional<double>(t, "delta_t", "time", c.delta_t);
    if (c.steps < 0) throw ConfigError(where(t, "time.steps") + ": must be non-negative");
    if (!(c.delta_t > 0.0)) throw ConfigError(where(t, "time.delta_t") + ": must be positive");
  }
  if (const auto r = root["representation"]) {
    const auto s = as<std::string>(r, "representation");
    if (s == "reduced") c.representation = Representation::reduced;
    else if (s == "full") c.representation = Representation::full;
    else throw ConfigError(where(r, "representation") + ": expected reduced or full");
  }

  const auto fields = root["fields"];
  if (!fields) throw ConfigError(origin + ": missing required field 'fields'");
  check_keys(fields, "fields", {"velocity", "diffusivity", "decay"});
  const auto vel = fields["velocity"];
  if (!vel) throw ConfigError(where(fields, "fields") + ": missing required field 'fields.velocity'");
  {
    const auto kind = required<std::string>(vel, "kind", "fields.velocity");
    auto& v = c.velocity;
    const double len = unit_length(optional<std::string>(vel, "units", "fields.velocity", "domain"), c.grid, vel,
                                   "fields.velocity.units");
    if (kind == "zero") {
      check_keys(vel, "fields.velocity", {"kind", "units"});
      v.kind = VelocityConfig::Kind::zero;
    } else if (kind == "constant") {
      check_keys(vel, "fields.velocity", {"kind", "units", "value"});
      v.kind = VelocityConfig::Kind::constant;
      v.value = pair(vel["value"], "fields.velocity.value");
      v.value = {v.value[0] * len, v.value[1] * len};
    } else if (kind == "vortex") {
      check_keys(vel, "fields.velocity", {"kind", "units", "center", "width", "v_max", "drift", "rotation"});
      v.kind = VelocityConfig::Kind::vortex;
      if (vel["center"]) v.vortex.center = pair(vel["center"], "fields.velocity.center");
      v.vortex.width = optional<double>(vel, "width", "fields.velocity", v.vortex.width);
      v.vortex.v_max = optional<double>(vel, "v_max", "fields.velocity", v.vortex.v_max) * len;
      if (vel["drift"]) {
        const auto d = pair(vel["drift"], "fields.velocity.drift");
        v.vortex.drift = {d[0] * len, d[1] * len};
      }
      v.vortex.rotation = optional<double>(vel, "rotation", "fields.velocity", v.vortex.rotation);
    } else if (kind == "mixture") {
      check_keys(vel, "fields.velocity",
                 {"kind", "units", "centers", "bandwidth", "basis", "v_max", "gamma_x", "gamma_y"});
      v.kind = VelocityConfig::Kind::mixture;
      v.mixture = mixture(vel, "fields.velocity");
      v.v_max = required<double>(vel, "v_max", "fields.velocity") * len;
      v.gamma_x = required<std::vector<double>>(vel, "gamma_x", "fields.velocity");
      v.gamma_y = required<std::vector<double>>(vel, "gamma_y", "fields.velocity");
      v.mixture.validate(v.gamma_x, "fields.velocity.gamma_x");
      v.mixture.validate(v.gamma_y, "fields.velocity.gamma_y");
    } else {
      throw ConfigError(where(vel["kind"], "fields.velocity.kind") + ": expected zero, constant, vortex or mixture");
    }
  }
  if (const auto d = fields["diffusivity"]) {
    check_keys(d, "fields.diffusivity", {"value", "matrix", "units"});
    const double len = unit_length(optional<std::string>(d, "units", "fields.diffusivity", "domain"), c.grid, d,
                                   "fields.diffusivity.units");
    if (d["matrix"]) {
      const auto m = as<std::vector<std::vector<double>>>(d["matrix"], "fields.diffusivity.matrix");
      if (m.size() != 2 || m[0].size() != 2 || m[1].size() != 2) {
        throw ConfigError(where(d["matrix"], "fields.diffusivity.matrix") + ": expected a 2x2 matrix");
      }
      c.diffusivity << m[0][0], m[0][1], m[1][0], m[1][1];
    } else {
      c.diffusivity = required<double>(d, "value", "fields.diffusivity") * Eigen::Matrix2d::Identity();
    }
    c.diffusivity *= len * len;
    try {
      check_psd(c.diffusivity(0, 0), 0.5 * (c.diffusivity(0, 1) + c.diffusivity(1, 0)), c.diffusivity(1, 1));
    } catch (const Error& e) {
      throw ConfigError(where(d, "fields.diffusivity") + ": " + e.what());
    }
  }
  if (const auto d = fields["decay"]) {
    check_keys(d, "fields.decay", {"value", "centers", "bandwidth", "basis", "gamma"});
    if (d["centers"]) {
      c.decay.mode = DecayModel::Mode::mixture;
      c.decay.mixture = mixture(d, "fields.decay");
      c.decay.gamma = required<std::vector<double>>(d, "gamma", "fields.decay");
      c.decay.mixture.validate(c.decay.gamma, "fields.decay.gamma");
    } else {
      c.decay.value = required<double>(d, "value", "fields.decay");
    }
  }

  if (const auto n = root["noise"]) {
    check_keys(n, "noise", {"a", "b", "h0_a", "h0_b", "band_density"});
    c.noise_bands = optional<std::vector<double>>(n, "band_density", "noise", {});
    c.noise_a = c.noise_bands.empty() ? required<double>(n, "a", "noise") : optional<double>(n, "a", "noise", 0.0);
    c.noise_b = optional<double>(n, "b", "noise", 0.0);
    c.h0_a = optional<double>(n, "h0_a", "noise", c.noise_a);
    c.h0_b = optional<double>(n, "h0_b", "noise", c.noise_b);
    if (!(c.noise_a >= 0.0) || !(c.h0_a >= 0.0)) throw ConfigError(where(n, "noise") + ": amplitudes must be >= 0");
  }

  if (const auto s = root["source_sink"]) {
    check_keys(s, "source_sink", {"mode", "bumps", "rho", "tau_beta"});
    const auto mode = required<std::string>(s, "mode", "source_sink");
    if (mode == "none") c.source_mode = SourceSink::Mode::none;
    else if (mode == "fixed") c.source_mode = SourceSink::Mode::fixed;
    else if (mode == "ar1") c.source_mode = SourceSink::Mode::ar1;
    else throw ConfigError(where(s["mode"], "source_sink.mode") + ": expected none, fixed or ar1");
    c.source_bumps = bumps(s["bumps"], "source_sink.bumps");
    c.source_rho = optional<double>(s, "rho", "source_sink", c.source_rho);
    c.source_tau_beta = optional<double>(s, "tau_beta", "source_sink", c.source_tau_beta);
    if (c.source_mode == SourceSink::Mode::fixed && c.source_bumps.empty()) {
      throw ConfigError(where(s, "source_sink") + ": fixed mode needs 'source_sink.bumps'");
    }
  }

  if (const auto o = root["observation"]) {
    check_keys(o, "observation", {"sd", "kind"});
    c.observation.sd = required<double>(o, "sd", "observation");
    const auto kind = optional<std::string>(o, "kind", "observation", "spectral");
    if (kind == "spectral") c.observation.mode = ObservationNoise::Mode::spectral;
    else if (kind == "pixel") c.observation.mode = ObservationNoise::Mode::pixel;
    else throw ConfigError(where(o["kind"], "observation.kind") + ": expected spectral or pixel");
    if (!(c.observation.sd >= 0.0)) throw ConfigError(where(o, "observation.sd") + ": must be non-negative");
  }

  if (const auto i = root["initial"]) {
    check_keys(i, "initial", {"bumps", "random"});
    c.initial.bumps = bumps(i["bumps"], "initial.bumps");
    if (const auto r = i["random"]) {
      check_keys(r, "initial.random", {"count", "amplitude", "width"});
      c.initial.random_count = required<int>(r, "count", "initial.random");
      c.initial.random_amplitude = optional<double>(r, "amplitude", "initial.random", 1.0);
      if (r["width"]) c.initial.random_width = pair(r["width"], "initial.random.width");
    }
  }

  // Model parameters for filtering default to the generating process.
  c.rho = c.source_mode == SourceSink::Mode::ar1 ? c.source_rho : 1.0;
  c.tau_beta = c.source_mode == SourceSink::Mode::ar1 ? c.source_tau_beta : 0.0;
  c.tau_obs = c.observation.sd;
  if (const auto m = root["model"]) {
    check_keys(m, "model", {"rho", "tau_beta", "tau_obs"});
    c.rho = optional<double>(m, "rho", "model", c.rho);
    c.tau_beta = optional<double>(m, "tau_beta", "model", c.tau_beta);
    c.tau_obs = optional<double>(m, "tau_obs", "model", c.tau_obs);
  }

  auto& e = c.estimation;
  e.init.rho = c.rho;
  e.init.tau_beta = c.tau_beta;
  e.init.tau_obs = c.tau_obs;
  e.init.noise_a = c.noise_a;
  e.init.noise_b = c.noise_b;
  e.init.decay = c.decay.value;
  e.init.decay_gamma = c.decay.gamma;
  if (const auto s = root["estimation"]) {
    check_keys(s, "estimation", {"kernels", "v_max", "lowpass_cutoff", "init", "free", "step1", "step2",
                                 "step1_nuisance", "noise_form"});
    if (s["kernels"]) {
      check_keys(s["kernels"], "estimation.kernels", {"centers", "bandwidth", "basis"});
      e.kernels = mixture(s["kernels"], "estimation.kernels");
    }
    e.v_max = optional<double>(s, "v_max", "estimation", e.v_max);
    e.lowpass_cutoff = optional<double>(s, "lowpass_cutoff", "estimation", e.lowpass_cutoff);
    if (const auto i = s["init"]) {
      check_keys(i, "estimation.init",
                 {"gamma_x", "gamma_y", "decay", "rho", "tau_beta", "tau_obs", "noise_a", "noise_b", "band_density",
                  "diffusivity_scale"});
      e.init.gamma_x = optional<std::vector<double>>(i, "gamma_x", "estimation.init", {});
      e.init.gamma_y = optional<std::vector<double>>(i, "gamma_y", "estimation.init", {});
      e.init.decay = optional<double>(i, "decay", "estimation.init", e.init.decay);
      e.init.rho = optional<double>(i, "rho", "estimation.init", e.init.rho);
      e.init.tau_beta = optional<double>(i, "tau_beta", "estimation.init", e.init.tau_beta);
      e.init.tau_obs = optional<double>(i, "tau_obs", "estimation.init", e.init.tau_obs);
      e.init.noise_a = optional<double>(i, "noise_a", "estimation.init", e.init.noise_a);
      e.init.noise_b = optional<double>(i, "noise_b", "estimation.init", e.init.noise_b);
      e.init.band_density = optional<std::vector<double>>(i, "band_density", "estimation.init", {});
      e.init.diffusivity_scale = optional<double>(i, "diffusivity_scale", "estimation.init", 1.0);
    }
    if (const auto f = s["free"]) {
      check_keys(f, "estimation.free", {"velocity", "decay", "diffusivity", "rho", "tau_beta", "noise", "tau_obs"});
      e.free.velocity = optional<bool>(f, "velocity", "estimation.free", e.free.velocity);
      e.free.decay = optional<bool>(f, "decay", "estimation.free", e.free.decay);
      e.free.diffusivity = optional<bool>(f, "diffusivity", "estimation.free", e.free.diffusivity);
      e.free.rho = optional<bool>(f, "rho", "estimation.free", e.free.rho);
      e.free.tau_beta = optional<bool>(f, "tau_beta", "estimation.free", e.free.tau_beta);
      e.free.noise = optional<bool>(f, "noise", "estimation.free", e.free.noise);
      e.free.tau_obs = optional<bool>(f, "tau_obs", "estimation.free", e.free.tau_obs);
    }
    auto optimizer = [&](const char* key, OptimizerSettings& o) {
      const auto n = s[key];
      if (!n) return;
      const std::string p = std::string("estimation.") + key;
      check_keys(n, p, {"max_iterations", "restarts", "rel_tolerance", "initial_step", "enabled"});
      o.max_iterations = optional<int>(n, "max_iterations", p, o.max_iterations);
      o.restarts = optional<int>(n, "restarts", p, o.restarts);
      o.rel_tolerance = optional<double>(n, "rel_tolerance", p, o.rel_tolerance);
      o.initial_step = optional<double>(n, "initial_step", p, o.initial_step);
      if (std::string(key) == "step2") e.run_step2 = optional<bool>(n, "enabled", p, true);
    };
    optimizer("step1", e.step1);
    optimizer("step2", e.step2);
    if (const auto n = s["step1_nuisance"]) {
      check_keys(n, "estimation.step1_nuisance", {"noise_amplitude", "tau_beta"});
      e.step1_noise_amplitude = optional<bool>(n, "noise_amplitude", "estimation.step1_nuisance", true);
      e.step1_tau_beta = optional<bool>(n, "tau_beta", "estimation.step1_nuisance", false);
    }
    const auto form = optional<std::string>(s, "noise_form", "estimation", "power_law");
    if (form == "power_law") e.noise_form = ModelSpec::NoiseForm::power_law;
    else if (form == "per_band") e.noise_form = ModelSpec::NoiseForm::per_band;
    else throw ConfigError(where(s["noise_form"], "estimation.noise_form") + ": expected power_law or per_band");
  }
  if (e.kernels.centers.empty()) {
    e.kernels.centers = {{0.225, 0.225}, {0.725, 0.725}, {0.225, 0.725}, {0.725, 0.225}};
  }
  if (e.init.gamma_x.empty()) e.init.gamma_x.assign(static_cast<std::size_t>(e.kernels.parameter_count()), 0.0);
  if (e.init.gamma_y.empty()) e.init.gamma_y.assign(static_cast<std::size_t>(e.kernels.parameter_count()), 0.0);
  e.kernels.validate(e.init.gamma_x, "estimation.init.gamma_x");
  e.kernels.validate(e.init.gamma_y, "estimation.init.gamma_y");
  if (e.noise_form == ModelSpec::NoiseForm::per_band && e.init.band_density.empty()) {
    if (!c.noise_bands.empty()) {
      e.init.band_density = c.noise_bands;
    } else {
      const int bands = std::max(c.grid.n1, c.grid.n2) / 2 + 1;
      e.init.band_density.assign(static_cast<std::size_t>(bands), c.noise_a);
    }
  }

  if (const auto s = root["seed"]) c.seed = as<std::uint64_t>(s, "seed");
  if (const auto o = root["out"]) c.out = as<std::string>(o, "out");
  if (const auto t = root["threads"]) c.threads = as<int>(t, "threads");
  return c;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config file " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path);
}

inline std::shared_ptr<const WavenumberSets> config_sets(const RunConfig& c) {
  return std::make_shared<const WavenumberSets>(build_wavenumber_sets(c.grid, c.representation));
}

inline RealGridField sum_of_bumps(GridSpec grid, const std::vector<Bump>& bs) {
  RealGridField f(grid);
  for (const auto& b : bs) {
    const auto g = gaussian_bump(grid, b.center, b.width, b.amplitude);
    for (std::size_t p = 0; p < f.values.size(); ++p) f.values[p] += g.values[p];
  }
  return f;
}

inline VelocityField config_velocity(const RunConfig& c) {
  const auto& v = c.velocity;
  switch (v.kind) {
    case VelocityConfig::Kind::zero: return zero_velocity(c.grid);
    case VelocityConfig::Kind::constant: return constant_velocity(c.grid, v.value[0], v.value[1]);
    case VelocityConfig::Kind::vortex: return make_vortex_velocity(c.grid, v.vortex);
    case VelocityConfig::Kind::mixture: return eval_velocity({v.mixture, v.gamma_x, v.gamma_y, v.v_max}, c.grid);
  }
  return zero_velocity(c.grid);
}

inline PhysicalFieldSet config_fields(const RunConfig& c) {
  return make_field_set(config_velocity(c), constant_diffusivity(c.diffusivity, c.grid), eval_decay(c.decay, c.grid));
}

inline NoiseSpec config_noise(const RunConfig& c, const WavenumberSets& sets) {
  NoiseSpec n{power_law_density(sets, c.noise_a, c.noise_b), power_law_density(sets, c.h0_a, c.h0_b)};
  if (!c.noise_bands.empty()) {
    const auto layout = basis_layout(sets);
    for (int i = 0; i < sets.dimension(); ++i) {
      const auto b = static_cast<std::size_t>(band_of(layout[i].k));
      if (b >= c.noise_bands.size()) throw ConfigError("noise.band_density has no entry for band " + std::to_string(b));
      n.h[i] = c.noise_bands[b];
    }
  }
  return n;
}

/// The initial field, or nothing when alpha(0) is drawn from N(0, H0).
inline std::optional<RealGridField> config_initial(const RunConfig& c) {
  if (c.initial.bumps.empty() && c.initial.random_count == 0) return std::nullopt;
  auto bs = c.initial.bumps;
  // Path index 2^63 keeps this stream apart from the simulation paths.
  auto rng = path_rng(c.seed, std::uint64_t{1} << 63);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < c.initial.random_count; ++i) {
    Bump b;
    b.center = {u(rng), u(rng)};
    b.width = c.initial.random_width[0] + (c.initial.random_width[1] - c.initial.random_width[0]) * u(rng);
    b.amplitude = c.initial.random_amplitude * (0.5 + u(rng));
    bs.push_back(b);
  }
  return sum_of_bumps(c.grid, bs);
}

inline SimConfig simulation_config(const RunConfig& c) {
  SimConfig s;
  s.grid = c.grid;
  s.t_steps = c.steps;
  s.delta_t = c.delta_t;
  s.fields = config_fields(c);
  s.sets = config_sets(c);
  s.noise = config_noise(c, *s.sets);
  s.source_sink.mode = c.source_mode;
  if (!c.source_bumps.empty()) s.source_sink.field = sum_of_bumps(c.grid, c.source_bumps);
  s.source_sink.rho = c.source_rho;
  s.source_sink.tau_beta = c.source_tau_beta;
  s.observation = c.observation;
  s.init = config_initial(c);
  s.seed = c.seed;
  return s;
}

/// Filter model with the configured fields and parameters.
inline DstmModel config_model(const RunConfig& c, std::shared_ptr<const WavenumberSets> sets) {
  const auto gen = assemble_G(config_fields(c), std::move(sets));
  return build_dstm_model(gen, config_noise(c, *gen.sets), {c.delta_t, c.rho, c.tau_beta, c.tau_obs});
}

inline ModelSpec estimation_spec(const RunConfig& c) {
  ModelSpec s;
  s.grid = c.grid;
  s.delta_t = c.delta_t;
  s.velocity_mixture = c.estimation.kernels;
  s.v_max = c.estimation.v_max;
  s.decay_mode = c.decay.mode;
  s.decay_mixture = c.decay.mixture;
  s.diffusivity = c.diffusivity;
  s.h0_a = c.h0_a;
  s.h0_b = c.h0_b;
  s.noise_form = c.estimation.noise_form;
  return s;
}

inline EstimationProblem estimation_problem(const RunConfig& c, ObservationSequence data) {
  EstimationProblem p;
  p.data = std::move(data);
  p.spec = estimation_spec(c);
  p.init = c.estimation.init;
  p.free = c.estimation.free;
  p.lowpass_cutoff_step1 = c.estimation.lowpass_cutoff;
  p.step1 = c.estimation.step1;
  p.step2 = c.estimation.step2;
  p.step1_noise_amplitude = c.estimation.step1_noise_amplitude;
  p.step1_tau_beta = c.estimation.step1_tau_beta;
  p.run_step2 = c.estimation.run_step2;
  return p;
}

}  // namespace advecta
