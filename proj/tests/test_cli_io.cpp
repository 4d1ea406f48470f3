#include <gtest/gtest.h>

#include <advecta/commands.hpp>

#include <random>

namespace advecta {
namespace {

const fs::path kConfigDir = ADVECTA_CONFIG_DIR;

class TempDir {
 public:
  TempDir() {
    static int counter = 0;
    path_ = fs::temp_directory_path() /
            ("advecta_cli_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& s) const { return path_ / s; }

 private:
  fs::path path_;
};

/// Run a command the way the executable does, mapping errors to exit codes.
template <class F>
int run(F command, const CommandOptions& opt, std::string* message = nullptr) {
  try {
    return command(opt);
  } catch (const std::exception& e) {
    if (message) *message = e.what();
    return exit_code_for(e);
  }
}

const char* kSmallConfig = R"(grid: {n1: 8, n2: 8}
time: {steps: 6, delta_t: 1.0}
fields:
  velocity: {kind: constant, value: [0.05, -0.02]}
  diffusivity: {value: 0.001}
  decay: {value: 0.1}
noise: {a: 0.01, b: 0.0}
source_sink: {mode: none}
observation: {sd: 0.05}
initial:
  random: {count: 3, amplitude: 5.0, width: [0.1, 0.2]}
seed: 7
)";

std::map<std::string, std::string> directory_contents(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::directory_iterator(dir)) out[e.path().filename().string()] = read_file(e.path());
  return out;
}

int count_lines(const std::string& svg) {
  int n = 0;
  for (auto p = svg.find("<line"); p != std::string::npos; p = svg.find("<line", p + 1)) ++n;
  return n;
}

RealGridField random_field(GridSpec g, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n;
  RealGridField f(g);
  for (auto& x : f.values) x = n(rng) * 1e3;
  return f;
}

// ---- configuration ----

TEST(Config, BundledVortexConfigParses) {
  const auto c = load_config((kConfigDir / "vortex20.cfg").string());
  EXPECT_EQ(c.grid.n1, 20);
  EXPECT_EQ(c.grid.n2, 20);
  EXPECT_EQ(c.steps, 10);
  EXPECT_EQ(c.velocity.kind, VelocityConfig::Kind::vortex);
}

TEST(Config, MissingRequiredFieldIsNamed) {
  std::string text = kSmallConfig;
  text.replace(text.find("observation: {sd: 0.05}"), 23, "observation: {kind: pixel}");
  try {
    parse_config(text, "small.cfg");
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("observation.sd"), std::string::npos) << msg;
    EXPECT_NE(msg.find("line 9"), std::string::npos) << msg;
  }
}

TEST(Config, UnknownFieldIsRejectedWithLine) {
  std::string text = kSmallConfig;
  text.replace(text.find("decay: {value: 0.1}"), 19, "decay: {value: 0.1, speed: 2}");
  try {
    parse_config(text, "small.cfg");
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("speed"), std::string::npos) << msg;
    EXPECT_NE(msg.find("line 6"), std::string::npos) << msg;
  }
}

TEST(Config, BadValueTypeIsReported) {
  std::string text = kSmallConfig;
  text.replace(text.find("seed: 7"), 7, "seed: seven");
  EXPECT_THROW(parse_config(text, "small.cfg"), ConfigError);
}

TEST(Config, MissingGridFailsWithConfigExitCode) {
  TempDir dir;
  std::string text = kSmallConfig;
  text.erase(0, text.find('\n') + 1);
  atomic_write(dir / "bad.cfg", text);
  CommandOptions opt;
  opt.config_path = (dir / "bad.cfg").string();
  opt.out_dir = (dir / "out").string();
  std::string msg;
  EXPECT_EQ(run(cmd_simulate, opt, &msg), kExitConfig);
  EXPECT_NE(msg.find("grid"), std::string::npos) << msg;
}

// ---- text formats ----

TEST(Formats, FrameRoundTripIsExact) {
  const auto f = random_field({5, 7}, 1);
  const auto text = format_frame(2.5, f) + format_frame(3.5, f);
  const auto back = parse_frames(text, "mem");
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].time, 2.5);
  EXPECT_EQ(back[1].time, 3.5);
  EXPECT_EQ(back[1].field.grid.n1, 5);
  EXPECT_EQ(back[1].field.grid.n2, 7);
  EXPECT_EQ(back[0].field.values, f.values);
}

TEST(Formats, FrameParserReportsLineOfBadRow) {
  std::string text = format_frame(0.0, random_field({3, 3}, 2));
  // Drop one value from the second grid row (line 4).
  auto line_start = 0u;
  for (int i = 0; i < 3; ++i) line_start = static_cast<unsigned>(text.find('\n', line_start) + 1);
  const auto space = text.find(' ', line_start);
  text.erase(line_start, space - line_start + 1);
  try {
    parse_frames(text, "frames.txt");
    FAIL() << "expected ValidationError";
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("frames.txt: line 4"), std::string::npos) << e.what();
  }
}

TEST(Formats, FrameParserRejectsTrailingGarbage) {
  const std::string text = format_frame(0.0, random_field({2, 2}, 3)) + "junk 1 2\n";
  try {
    parse_frames(text, "frames.txt");
    FAIL() << "expected ValidationError";
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("line 6"), std::string::npos) << e.what();
  }
  EXPECT_THROW(parse_frames("FRAME 0\nGRID 1 1\n1.0x\nEND\n", "m"), ValidationError);
  EXPECT_THROW(parse_frames("", "m"), ValidationError);
}

TEST(Formats, SpectrumRoundTrip) {
  const auto sets = std::make_shared<const WavenumberSets>(build_wavenumber_sets({6, 6}, Representation::reduced));
  const auto f = random_field({6, 6}, 4);
  const auto v = pack(dft2(f), sets);
  double t = 0.0;
  const auto back = parse_spectrum(format_spectrum(1.25, v), "spec", sets, &t);
  EXPECT_EQ(t, 1.25);
  EXPECT_EQ((back.coeffs - v.coeffs).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_THROW(parse_spectrum(format_spectrum(0.0, v) + "x\n", "spec", sets), ValidationError);
  const auto other = std::make_shared<const WavenumberSets>(build_wavenumber_sets({6, 6}, Representation::full));
  EXPECT_THROW(parse_spectrum(format_spectrum(0.0, v), "spec", other), ValidationError);
}

TEST(Formats, MatrixRoundTripAndErrors) {
  Eigen::MatrixXd m = Eigen::MatrixXd::Random(4, 3) * 1e-7;
  m(0, 0) = 1.0 / 3.0;
  EXPECT_EQ(parse_matrix(format_matrix(m), "g"), m);
  EXPECT_THROW(parse_matrix(format_matrix(m) + "1\n", "g"), ValidationError);
  EXPECT_THROW(parse_matrix("GMAT 2 2\n1 2\n3\nEND\n", "g"), ValidationError);
  try {
    parse_matrix("GMAT 1 2\n1 2\nEND\nextra\n", "g.txt");
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("line 4"), std::string::npos) << e.what();
  }
}

TEST(Formats, FilterOutputRoundTrip) {
  KalmanBelief b;
  b.mean = Eigen::VectorXd::Random(4);
  const Eigen::MatrixXd a = Eigen::MatrixXd::Random(4, 4);
  b.cov = a * a.transpose();
  const auto text = format_filter_step(0.0, b, true) + format_filter_step(1.0, b, false);
  const auto steps = parse_filter_output(text, "f");
  ASSERT_EQ(steps.size(), 2u);
  EXPECT_EQ(steps[0].mean, b.mean);
  EXPECT_EQ(steps[0].cov, b.cov);
  EXPECT_EQ(steps[1].cov.size(), 0);
  EXPECT_THROW(parse_filter_output(text + "STEP\n", "f"), ValidationError);
}

// ---- images ----

TEST(Plot, MinMaxMappingOfKnownField) {
  RealGridField f({2, 2});
  f.values = {0.0, 1.0, 1.0, 0.0};
  const auto [img, n] = to_gray(f);
  EXPECT_EQ(img.pixels, (std::vector<unsigned char>{0, 255, 255, 0}));
  EXPECT_EQ(n.min, 0.0);
  EXPECT_EQ(n.max, 1.0);
}

TEST(Plot, ConstantFieldIsUniformGray) {
  RealGridField f({3, 4});
  std::fill(f.values.begin(), f.values.end(), 7.5);
  const auto img = to_gray(f).first;
  ASSERT_EQ(img.pixels.size(), 12u);
  for (auto p : img.pixels) EXPECT_EQ(p, img.pixels[0]);
  EXPECT_GT(img.pixels[0], 0);
  EXPECT_LT(img.pixels[0], 255);
}

TEST(Plot, PgmRoundTripsQuantizedValues) {
  const auto img = to_gray(random_field({9, 5}, 5)).first;
  const auto back = decode_pgm(encode_pgm(img), "p");
  EXPECT_EQ(back.width, 5);
  EXPECT_EQ(back.height, 9);
  EXPECT_EQ(back.pixels, img.pixels);
  EXPECT_THROW(decode_pgm(encode_pgm(img) + "x", "p"), ValidationError);
  EXPECT_THROW(decode_pgm("P2\n1 1\n255\n0", "p"), ValidationError);
}

TEST(Plot, QuiverSegmentCount) {
  const auto c = load_config((kConfigDir / "vortex20.cfg").string());
  const auto v = config_velocity(c);
  for (int sub : {1, 4, 5}) {
    EXPECT_EQ(count_lines(quiver_svg(v, sub)), 400 / sub);
  }
}

TEST(Plot, EmptyFrameListIsAnError) {
  TempDir dir;
  fs::create_directories(dir / "empty");
  CommandOptions opt;
  opt.data_path = (dir / "empty").string();
  opt.out_dir = (dir / "plot").string();
  EXPECT_EQ(run(cmd_plot, opt), kExitValidation);
}

// ---- commands ----

TEST(Commands, SimulateVortexWritesElevenFramesAndManifest) {
  TempDir dir;
  CommandOptions opt;
  opt.config_path = (kConfigDir / "vortex20.cfg").string();
  opt.out_dir = (dir / "sim").string();
  ASSERT_EQ(run(cmd_simulate, opt), kExitOk);
  const auto frames = read_frames(dir / "sim");
  ASSERT_EQ(frames.size(), 11u);
  for (std::size_t t = 0; t < frames.size(); ++t) {
    EXPECT_EQ(frames[t].time, static_cast<double>(t));
    EXPECT_EQ(frames[t].field.grid.n1, 20);
    EXPECT_EQ(frames[t].field.grid.n2, 20);
  }
  const auto manifest = YAML::Load(read_file(dir / "sim" / "manifest.yaml"));
  EXPECT_EQ(manifest["config_sha256"].as<std::string>(), sha256_hex(read_file(kConfigDir / "vortex20.cfg")));
  EXPECT_EQ(manifest["outputs"].size(), 13u);
  const auto first = manifest["outputs"][0];
  EXPECT_EQ(first["sha256"].as<std::string>(),
            sha256_hex(read_file(dir / "sim" / first["path"].as<std::string>())));
}

TEST(Commands, SimulateIsDeterministic) {
  TempDir dir;
  std::string zero_noise = kSmallConfig;
  zero_noise.replace(zero_noise.find("a: 0.01"), 7, "a: 0.0");
  zero_noise.replace(zero_noise.find("sd: 0.05"), 8, "sd: 0.0");
  atomic_write(dir / "zero.cfg", zero_noise);
  atomic_write(dir / "small.cfg", kSmallConfig);
  for (const char* cfg : {"zero.cfg", "small.cfg"}) {
    CommandOptions opt;
    opt.config_path = (dir / cfg).string();
    opt.out_dir = (dir / "a").string();
    ASSERT_EQ(run(cmd_simulate, opt), kExitOk);
    opt.out_dir = (dir / "b").string();
    ASSERT_EQ(run(cmd_simulate, opt), kExitOk);
    EXPECT_EQ(directory_contents(dir / "a"), directory_contents(dir / "b")) << cfg;
    opt.seed = 8;
    opt.out_dir = (dir / "c").string();
    ASSERT_EQ(run(cmd_simulate, opt), kExitOk);
    if (std::string(cfg) == "small.cfg") {
      EXPECT_NE(read_file(dir / "a" / "frame_0003.txt"), read_file(dir / "c" / "frame_0003.txt"));
    }
    fs::remove_all(dir / "a");
    fs::remove_all(dir / "b");
    fs::remove_all(dir / "c");
  }
}

class VortexData : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new TempDir();
    CommandOptions opt;
    opt.config_path = config();
    opt.out_dir = (*dir_ / "sim").string();
    ASSERT_EQ(run(cmd_simulate, opt), kExitOk);
  }
  static void TearDownTestSuite() {
    delete dir_;
    dir_ = nullptr;
  }
  static std::string config() { return (kConfigDir / "vortex20.cfg").string(); }
  static std::string data() { return (*dir_ / "sim").string(); }
  static fs::path out(const std::string& name) { return *dir_ / name; }

  static TempDir* dir_;
};
TempDir* VortexData::dir_ = nullptr;

TEST_F(VortexData, FilterWithTrueParametersIsCalibrated) {
  CommandOptions opt;
  opt.config_path = config();
  opt.data_path = data();
  opt.out_dir = out("filter").string();
  ASSERT_EQ(run(cmd_filter, opt), kExitOk);
  const auto report = YAML::Load(read_file(out("filter") / "filter_report.yaml"));
  const double cal = report["innovation_calibration"].as<double>();
  EXPECT_GE(cal, 0.8);
  EXPECT_LE(cal, 1.2);
  const auto steps = parse_filter_output(read_file(out("filter") / "filter.txt"), "filter.txt");
  // Frame 0 conditions the initial state; frames 1..10 are filtered.
  ASSERT_EQ(steps.size(), 10u);
  EXPECT_EQ(steps.front().time, 1.0);
  EXPECT_EQ(read_frames(out("filter"), "filtered").size(), 10u);
}

TEST_F(VortexData, NowcastWritesMeanAndVarianceFrames) {
  CommandOptions opt;
  opt.config_path = config();
  opt.data_path = data();
  opt.out_dir = out("nowcast").string();
  opt.steps = 5;
  ASSERT_EQ(run(cmd_nowcast, opt), kExitOk);
  const auto mean = read_frames(out("nowcast"), "nowcast_mean");
  const auto var = read_frames(out("nowcast"), "nowcast_var");
  ASSERT_EQ(mean.size(), 5u);
  ASSERT_EQ(var.size(), 5u);
  EXPECT_EQ(mean.front().time, 11.0);
  EXPECT_EQ(mean.back().time, 15.0);
  for (const auto& f : var) {
    for (double x : f.field.values) EXPECT_GT(x, 0.0);
  }
}

TEST_F(VortexData, NowcastZeroStepsIsValidationError) {
  CommandOptions opt;
  opt.config_path = config();
  opt.data_path = data();
  opt.out_dir = out("nowcast0").string();
  opt.steps = 0;
  EXPECT_EQ(run(cmd_nowcast, opt), kExitValidation);
}

TEST_F(VortexData, PlotWritesOnePgmPerFrameAndQuiver) {
  CommandOptions opt;
  opt.config_path = config();
  opt.data_path = data();
  opt.out_dir = out("plot").string();
  ASSERT_EQ(run(cmd_plot, opt), kExitOk);
  const auto frames = read_frames(data());
  const auto manifest = YAML::Load(read_file(out("plot") / "manifest.yaml"));
  const auto norm = manifest["details"]["normalization"];
  ASSERT_EQ(norm.size(), 11u);
  for (std::size_t t = 0; t < frames.size(); ++t) {
    const auto name = norm[t]["file"].as<std::string>();
    const auto img = decode_pgm(read_file(out("plot") / name), name);
    const auto expected = to_gray(frames[t].field).first;
    EXPECT_EQ(img.pixels, expected.pixels);
    const auto [lo, hi] = std::minmax_element(frames[t].field.values.begin(), frames[t].field.values.end());
    EXPECT_EQ(norm[t]["min"].as<double>(), *lo);
    EXPECT_EQ(norm[t]["max"].as<double>(), *hi);
  }
  const auto svg = read_file(out("plot") / "velocity.svg");
  EXPECT_EQ(count_lines(svg), 100);
}

TEST_F(VortexData, GridMismatchIsValidationError) {
  TempDir dir;
  std::string text = read_file(config());
  text.replace(text.find("{n1: 20, n2: 20}"), 16, "{n1: 16, n2: 16}");
  atomic_write(dir / "g16.cfg", text);
  CommandOptions opt;
  opt.config_path = (dir / "g16.cfg").string();
  opt.data_path = data();
  opt.out_dir = (dir / "out").string();
  std::string msg;
  EXPECT_EQ(run(cmd_filter, opt, &msg), kExitValidation);
  EXPECT_NE(msg.find("16x16"), std::string::npos) << msg;
}

TEST_F(VortexData, NonUniformSpacingIsValidationError) {
  TempDir dir;
  auto frames = read_frames(data());
  frames[4].time = 4.5;
  std::string text;
  for (const auto& f : frames) text += format_frame(f.time, f.field);
  atomic_write(dir / "frames.txt", text);
  CommandOptions opt;
  opt.config_path = config();
  opt.data_path = (dir / "frames.txt").string();
  opt.out_dir = (dir / "out").string();
  EXPECT_EQ(run(cmd_filter, opt), kExitValidation);
}

TEST_F(VortexData, SpacingMustMatchConfig) {
  TempDir dir;
  auto frames = read_frames(data());
  std::string text;
  for (const auto& f : frames) text += format_frame(2.0 * f.time, f.field);
  atomic_write(dir / "frames.txt", text);
  CommandOptions opt;
  opt.config_path = config();
  opt.data_path = (dir / "frames.txt").string();
  opt.out_dir = (dir / "out").string();
  EXPECT_EQ(run(cmd_filter, opt), kExitValidation);
}

}  // namespace
}  // namespace advecta
