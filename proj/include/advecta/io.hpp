#pragma once

// Text file formats, images and run manifests.
//
// Frame:   FRAME <t> / GRID <n1> <n2> / n1 rows of n2 values / END
// Spectrum: SPEC <t> / DIM <K> / K lines "<k1> <k2> <R|I> <value>" / END
// Matrix:  GMAT <rows> <cols> / rows of values / END
// Filter:  STEP <t> / MEAN <n> / one line of n values / [COV <n> / lower
//          triangle, row i holding i + 1 values] / END
// Lines may carry '#' comments. Parsers reject anything else, naming the line.

#include <openssl/evp.h>
#include <yaml-cpp/yaml.h>

#include <Eigen/Dense>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <utility>
#include <vector>

#include "advecta/dstm_filter.hpp"
#include "advecta/errors.hpp"
#include "advecta/physical_fields.hpp"
#include "advecta/spectral_grid.hpp"

namespace advecta {

namespace fs = std::filesystem;

/// I/O failures are reported as configuration errors (bad paths, unreadable
/// files) or validation errors (malformed content).
inline std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Write to a temporary sibling, then rename over the target.
inline void atomic_write(const fs::path& path, std::string_view content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ConfigError("cannot write " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out.flush()) throw ConfigError("write failed for " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw ConfigError("cannot move " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

inline std::string sha256_hex(std::string_view data) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1) {
    throw Error("SHA-256 digest failed");
  }
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[md[i] >> 4]);
    out.push_back(hex[md[i] & 15]);
  }
  return out;
}

/// Shortest text that reads back to the same double.
inline std::string fmt(double x) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, r.ptr);
}

namespace io_detail {

/// Line-oriented tokenizer over a text document.
class LineReader {
 public:
  LineReader(std::string text, std::string origin) : text_(std::move(text)), origin_(std::move(origin)) {}

  /// Next line with content, split on whitespace; false at end of input.
  bool next(std::vector<std::string_view>& tokens) {
    while (pos_ < text_.size()) {
      const auto end = std::min(text_.find('\n', pos_), text_.size());
      std::string_view line(text_.data() + pos_, end - pos_);
      pos_ = end + 1;
      ++line_;
      if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
      tokens.clear();
      std::size_t i = 0;
      while (i < line.size()) {
        while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
        const auto start = i;
        while (i < line.size() && !std::isspace(static_cast<unsigned char>(line[i]))) ++i;
        if (i > start) tokens.push_back(line.substr(start, i - start));
      }
      if (!tokens.empty()) return true;
    }
    return false;
  }

  std::vector<std::string_view> expect_line(const char* what) {
    std::vector<std::string_view> t;
    if (!next(t)) fail(std::string("unexpected end of input, expected ") + what);
    return t;
  }

  [[noreturn]] void fail(const std::string& msg) const {
    throw ValidationError(origin_ + ": line " + std::to_string(line_) + ": " + msg);
  }

  double number(std::string_view tok) const {
    double v = 0.0;
    const auto* first = tok.data();
    const auto* last = tok.data() + tok.size();
    if (!tok.empty() && *first == '+') ++first;
    const auto r = std::from_chars(first, last, v);
    if (r.ec != std::errc() || r.ptr != last) fail("not a number: '" + std::string(tok) + "'");
    return v;
  }

  long integer(std::string_view tok) const {
    long v = 0;
    const auto r = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (r.ec != std::errc() || r.ptr != tok.data() + tok.size()) fail("not an integer: '" + std::string(tok) + "'");
    return v;
  }

  /// Header line "<KEY> args..." with exactly `nargs` arguments.
  std::vector<std::string_view> header(const std::vector<std::string_view>& t, const char* key, std::size_t nargs) const {
    if (t.empty() || t[0] != key) fail(std::string("expected ") + key);
    if (t.size() != nargs + 1) {
      fail(std::string(key) + " takes " + std::to_string(nargs) + " argument(s), found " + std::to_string(t.size() - 1));
    }
    return {t.begin() + 1, t.end()};
  }

  void expect_end() {
    const auto t = expect_line("END");
    if (t.size() != 1 || t[0] != "END") fail("expected END, found '" + std::string(t[0]) + "'");
  }

  std::vector<double> row(std::size_t count, const char* what) {
    const auto t = expect_line(what);
    if (t.size() != count) {
      fail(std::string(what) + " has " + std::to_string(t.size()) + " values, expected " + std::to_string(count));
    }
    std::vector<double> v(count);
    for (std::size_t i = 0; i < count; ++i) v[i] = number(t[i]);
    return v;
  }

 private:
  std::string text_;
  std::string origin_;
  std::size_t pos_ = 0;
  int line_ = 0;
};

inline void append_grid(std::string& out, const GridSpec& g, const std::vector<double>& values) {
  out += "GRID " + std::to_string(g.n1) + " " + std::to_string(g.n2) + "\n";
  for (int i = 0; i < g.n1; ++i) {
    for (int j = 0; j < g.n2; ++j) {
      if (j) out += ' ';
      out += fmt(values[static_cast<std::size_t>(i * g.n2 + j)]);
    }
    out += '\n';
  }
}

inline RealGridField read_grid(LineReader& r) {
  const auto a = r.header(r.expect_line("GRID"), "GRID", 2);
  const long n1 = r.integer(a[0]), n2 = r.integer(a[1]);
  if (n1 < 1 || n2 < 1 || n1 > 65536 || n2 > 65536) r.fail("grid size out of range");
  GridSpec g{static_cast<int>(n1), static_cast<int>(n2)};
  RealGridField f(g);
  for (int i = 0; i < g.n1; ++i) {
    const auto row = r.row(static_cast<std::size_t>(n2), "grid row");
    std::copy(row.begin(), row.end(), f.values.begin() + static_cast<std::ptrdiff_t>(i) * n2);
  }
  return f;
}

}  // namespace io_detail

struct TimedFrame {
  double time = 0.0;
  RealGridField field;
};

inline std::string format_frame(double t, const RealGridField& f) {
  std::string out = "FRAME " + fmt(t) + "\n";
  io_detail::append_grid(out, f.grid, f.values);
  out += "END\n";
  return out;
}

/// All frames in a document (one or more FRAME blocks).
inline std::vector<TimedFrame> parse_frames(const std::string& text, const std::string& origin) {
  io_detail::LineReader r(text, origin);
  std::vector<TimedFrame> out;
  std::vector<std::string_view> t;
  while (r.next(t)) {
    const auto a = r.header(t, "FRAME", 1);
    TimedFrame f;
    f.time = r.number(a[0]);
    f.field = io_detail::read_grid(r);
    r.expect_end();
    out.push_back(std::move(f));
  }
  if (out.empty()) throw ValidationError(origin + ": no frames");
  return out;
}

inline fs::path frame_path(const fs::path& dir, const std::string& stem, int index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "_%04d.txt", index);
  return dir / (stem + buf);
}

/// Frames from one file, or from every *.txt file in a directory whose name
/// starts with `stem`, in name order.
inline std::vector<TimedFrame> read_frames(const fs::path& path, const std::string& stem = "frame") {
  if (!fs::exists(path)) throw ConfigError("data path does not exist: " + path.string());
  if (!fs::is_directory(path)) return parse_frames(read_file(path), path.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(path)) {
    const auto name = e.path().filename().string();
    if (e.is_regular_file() && name.rfind(stem + "_", 0) == 0 && e.path().extension() == ".txt") {
      files.push_back(e.path());
    }
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw ValidationError("no " + stem + "_*.txt files in " + path.string());
  std::vector<TimedFrame> out;
  for (const auto& f : files) {
    for (auto& fr : parse_frames(read_file(f), f.string())) out.push_back(std::move(fr));
  }
  return out;
}

inline ObservationSequence observations_from_frames(std::vector<TimedFrame> frames,
                                                    std::shared_ptr<const WavenumberSets> sets) {
  std::vector<RealGridField> fields;
  std::vector<double> times;
  for (auto& f : frames) {
    times.push_back(f.time);
    fields.push_back(std::move(f.field));
  }
  return make_observations(std::move(fields), std::move(times), std::move(sets));
}

inline std::string format_spectrum(double t, const SpectralCoeffVector& v) {
  const auto layout = basis_layout(*v.sets);
  std::string out = "SPEC " + fmt(t) + "\nDIM " + std::to_string(layout.size()) + "\n";
  for (std::size_t i = 0; i < layout.size(); ++i) {
    const char kind = layout[i].kind == BasisKind::real ? 'R' : 'I';
    out += std::to_string(layout[i].k.k1) + " " + std::to_string(layout[i].k.k2) + " " + kind + " " +
           fmt(v.coeffs[static_cast<Eigen::Index>(i)]) + "\n";
  }
  out += "END\n";
  return out;
}

/// Coefficients of one SPEC block, checked against the layout of `sets`.
inline SpectralCoeffVector parse_spectrum(const std::string& text, const std::string& origin,
                                          std::shared_ptr<const WavenumberSets> sets, double* time = nullptr) {
  io_detail::LineReader r(text, origin);
  const auto a = r.header(r.expect_line("SPEC"), "SPEC", 1);
  if (time) *time = r.number(a[0]);
  const auto d = r.header(r.expect_line("DIM"), "DIM", 1);
  const auto layout = basis_layout(*sets);
  if (r.integer(d[0]) != static_cast<long>(layout.size())) r.fail("dimension does not match the wavenumber set");
  Eigen::VectorXd c(static_cast<Eigen::Index>(layout.size()));
  for (std::size_t i = 0; i < layout.size(); ++i) {
    const auto t = r.expect_line("coefficient");
    if (t.size() != 4) r.fail("coefficient lines hold k1 k2 kind value");
    const char kind = layout[i].kind == BasisKind::real ? 'R' : 'I';
    if (r.integer(t[0]) != layout[i].k.k1 || r.integer(t[1]) != layout[i].k.k2 || t[2].size() != 1 || t[2][0] != kind) {
      r.fail("coefficient order does not match the wavenumber set");
    }
    c[static_cast<Eigen::Index>(i)] = r.number(t[3]);
  }
  r.expect_end();
  std::vector<std::string_view> rest;
  if (r.next(rest)) r.fail("trailing content after END");
  return SpectralCoeffVector(std::move(sets), std::move(c));
}

inline std::string format_matrix(const Eigen::MatrixXd& m, const char* tag = "GMAT") {
  std::string out = std::string(tag) + " " + std::to_string(m.rows()) + " " + std::to_string(m.cols()) + "\n";
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (j) out += ' ';
      out += fmt(m(i, j));
    }
    out += '\n';
  }
  out += "END\n";
  return out;
}

inline Eigen::MatrixXd parse_matrix(const std::string& text, const std::string& origin, const char* tag = "GMAT") {
  io_detail::LineReader r(text, origin);
  const auto a = r.header(r.expect_line(tag), tag, 2);
  const long rows = r.integer(a[0]), cols = r.integer(a[1]);
  if (rows < 0 || cols < 0) r.fail("negative matrix size");
  Eigen::MatrixXd m(rows, cols);
  for (long i = 0; i < rows; ++i) {
    const auto row = r.row(static_cast<std::size_t>(cols), "matrix row");
    for (long j = 0; j < cols; ++j) m(i, j) = row[static_cast<std::size_t>(j)];
  }
  r.expect_end();
  std::vector<std::string_view> rest;
  if (r.next(rest)) r.fail("trailing content after END");
  return m;
}

struct FilterStep {
  double time = 0.0;
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;  // empty when not written
};

inline std::string format_filter_step(double t, const KalmanBelief& b, bool with_cov) {
  const auto n = b.mean.size();
  std::string out = "STEP " + fmt(t) + "\nMEAN " + std::to_string(n) + "\n";
  for (Eigen::Index i = 0; i < n; ++i) {
    if (i) out += ' ';
    out += fmt(b.mean[i]);
  }
  out += '\n';
  if (with_cov) {
    out += "COV " + std::to_string(n) + "\n";
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j <= i; ++j) {
        if (j) out += ' ';
        out += fmt(b.cov(i, j));
      }
      out += '\n';
    }
  }
  out += "END\n";
  return out;
}

inline std::vector<FilterStep> parse_filter_output(const std::string& text, const std::string& origin) {
  io_detail::LineReader r(text, origin);
  std::vector<FilterStep> out;
  std::vector<std::string_view> t;
  while (r.next(t)) {
    FilterStep s;
    s.time = r.number(r.header(t, "STEP", 1)[0]);
    const long n = r.integer(r.header(r.expect_line("MEAN"), "MEAN", 1)[0]);
    if (n < 0) r.fail("negative dimension");
    const auto m = r.row(static_cast<std::size_t>(n), "mean");
    s.mean = Eigen::Map<const Eigen::VectorXd>(m.data(), n);
    auto next = r.expect_line("COV or END");
    if (next[0] == "COV") {
      if (r.integer(r.header(next, "COV", 1)[0]) != n) r.fail("covariance size does not match the mean");
      s.cov.resize(n, n);
      for (long i = 0; i < n; ++i) {
        const auto row = r.row(static_cast<std::size_t>(i + 1), "covariance row");
        for (long j = 0; j <= i; ++j) s.cov(i, j) = s.cov(j, i) = row[static_cast<std::size_t>(j)];
      }
      r.expect_end();
    } else if (next.size() != 1 || next[0] != "END") {
      r.fail("expected COV or END");
    }
    out.push_back(std::move(s));
  }
  return out;
}

/// Named gridded fields in one document: FIELD <name> / GRID ... / END.
inline std::string format_named_field(const std::string& name, const GridSpec& g, const std::vector<double>& v) {
  std::string out = "FIELD " + name + "\n";
  io_detail::append_grid(out, g, v);
  out += "END\n";
  return out;
}

inline std::vector<std::pair<std::string, RealGridField>> parse_named_fields(const std::string& text,
                                                                             const std::string& origin) {
  io_detail::LineReader r(text, origin);
  std::vector<std::pair<std::string, RealGridField>> out;
  std::vector<std::string_view> t;
  while (r.next(t)) {
    const auto a = r.header(t, "FIELD", 1);
    auto f = io_detail::read_grid(r);
    r.expect_end();
    out.emplace_back(std::string(a[0]), std::move(f));
  }
  return out;
}

// ---- images ----

struct PgmImage {
  int width = 0;
  int height = 0;
  std::vector<unsigned char> pixels;  // row-major, top row first
};

struct Normalization {
  double min = 0.0;
  double max = 0.0;
};

/// Linear min-max map to 0..255; row i of the field is image row i. A
/// constant field maps to mid-gray.
inline std::pair<PgmImage, Normalization> to_gray(const RealGridField& f, std::optional<Normalization> range = {}) {
  if (f.values.empty()) throw ValidationError("cannot render an empty field");
  Normalization n;
  if (range) {
    n = *range;
  } else {
    const auto [lo, hi] = std::minmax_element(f.values.begin(), f.values.end());
    n = {*lo, *hi};
  }
  if (!std::isfinite(n.min) || !std::isfinite(n.max)) throw NumericError("field has non-finite values");
  PgmImage img{f.grid.n2, f.grid.n1, std::vector<unsigned char>(f.values.size())};
  const double span = n.max - n.min;
  for (std::size_t p = 0; p < f.values.size(); ++p) {
    double q = span > 0.0 ? (f.values[p] - n.min) / span : 0.5;
    q = std::clamp(q, 0.0, 1.0);
    img.pixels[p] = static_cast<unsigned char>(std::lround(q * 255.0));
  }
  return {std::move(img), n};
}

inline std::string encode_pgm(const PgmImage& img) {
  std::string out = "P5\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
  out.append(reinterpret_cast<const char*>(img.pixels.data()), img.pixels.size());
  return out;
}

inline PgmImage decode_pgm(const std::string& data, const std::string& origin) {
  std::size_t pos = 0;
  auto token = [&]() {
    for (;;) {
      while (pos < data.size() && std::isspace(static_cast<unsigned char>(data[pos]))) ++pos;
      if (pos < data.size() && data[pos] == '#') {
        while (pos < data.size() && data[pos] != '\n') ++pos;
        continue;
      }
      break;
    }
    const auto start = pos;
    while (pos < data.size() && !std::isspace(static_cast<unsigned char>(data[pos]))) ++pos;
    return data.substr(start, pos - start);
  };
  if (token() != "P5") throw ValidationError(origin + ": not a binary PGM");
  PgmImage img;
  try {
    img.width = std::stoi(token());
    img.height = std::stoi(token());
    if (std::stoi(token()) != 255) throw ValidationError(origin + ": only maxval 255 is supported");
  } catch (const std::logic_error&) {
    throw ValidationError(origin + ": malformed PGM header");
  }
  ++pos;  // single whitespace before the raster
  const auto n = static_cast<std::size_t>(img.width) * static_cast<std::size_t>(img.height);
  if (img.width <= 0 || img.height <= 0 || data.size() - std::min(pos, data.size()) != n) {
    throw ValidationError(origin + ": raster size does not match the header");
  }
  img.pixels.assign(data.begin() + static_cast<std::ptrdiff_t>(pos), data.end());
  return img;
}

/// Arrows at every `subsample`-th grid point in row-major order, drawn over
/// a square canvas with x along s1 and y along s2 pointing up.
inline std::string quiver_svg(const VelocityField& v, int subsample, double size = 400.0) {
  if (subsample < 1) throw ConfigError("subsample must be at least 1");
  const auto& g = v.grid;
  double vmax = 0.0;
  for (std::size_t p = 0; p < v.v1.size(); ++p) vmax = std::max(vmax, std::hypot(v.v1[p], v.v2[p]));
  const double scale = vmax > 0.0 ? 0.8 * size / std::max(g.n1, g.n2) / vmax : 0.0;
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << size << "\" height=\"" << size << "\" viewBox=\"0 0 "
     << size << ' ' << size << "\">\n";
  os << "<g stroke=\"black\" stroke-width=\"1\">\n";
  for (int p = 0; p < g.size(); p += subsample) {
    const int i = p / g.n2, j = p % g.n2;
    const double x = g.s1(i) * size, y = size - g.s2(j) * size;
    const auto q = static_cast<std::size_t>(p);
    os << "<line x1=\"" << x << "\" y1=\"" << y << "\" x2=\"" << x + scale * v.v1[q] << "\" y2=\""
       << y - scale * v.v2[q] << "\"/>\n";
  }
  os << "</g>\n</svg>\n";
  return os.str();
}

// ---- manifest ----

struct OutputRecord {
  std::string path;
  std::string sha256;
};

/// Records what a command read and wrote. Written last, so its presence
/// marks a completed run.
struct Manifest {
  std::string command;
  std::string config_path;
  std::string config_sha256;
  std::uint64_t seed = 0;
  int threads = 1;
  std::vector<OutputRecord> outputs;
  YAML::Node extra = YAML::Node(YAML::NodeType::Map);

  void add(const fs::path& path, std::string_view content) {
    outputs.push_back({path.filename().string(), sha256_hex(content)});
  }

  std::string render() const {
    YAML::Emitter e;
    e << YAML::BeginMap;
    e << YAML::Key << "command" << YAML::Value << command;
    e << YAML::Key << "config" << YAML::Value << config_path;
    e << YAML::Key << "config_sha256" << YAML::Value << config_sha256;
    e << YAML::Key << "seed" << YAML::Value << seed;
    e << YAML::Key << "threads" << YAML::Value << threads;
    e << YAML::Key << "outputs" << YAML::Value << YAML::BeginSeq;
    for (const auto& o : outputs) {
      e << YAML::Flow << YAML::BeginMap << YAML::Key << "path" << YAML::Value << o.path << YAML::Key << "sha256"
        << YAML::Value << o.sha256 << YAML::EndMap;
    }
    e << YAML::EndSeq;
    if (extra.size() > 0) e << YAML::Key << "details" << YAML::Value << extra;
    e << YAML::EndMap;
    return std::string(e.c_str()) + "\n";
  }
};

/// Write a file atomically and record it in the manifest.
inline void emit(Manifest& m, const fs::path& path, const std::string& content) {
  atomic_write(path, content);
  m.add(path, content);
}

}  // namespace advecta
