#include "topointerp/io.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

#include "topointerp/error.hpp"

namespace topointerp {

namespace {

constexpr char kSeriesMagic[4] = {'T', 'S', 'F', '1'};
constexpr char kCheckpointMagic[4] = {'T', 'T', 'M', '1'};
constexpr const char* kDiagramHeader = "type,birth,death,birth_vertex,death_vertex";

void put_bytes(std::ostream& out, const void* data, std::size_t n) {
  out.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
}

template <class U>
void put_le(std::ostream& out, U value) {
  unsigned char b[sizeof(U)];
  for (std::size_t i = 0; i < sizeof(U); ++i) b[i] = static_cast<unsigned char>(value >> (8 * i));
  put_bytes(out, b, sizeof(U));
}

void put_f32(std::ostream& out, double v) {
  put_le(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
}

void get_bytes(std::istream& in, void* data, std::size_t n) {
  in.read(static_cast<char*>(data), static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(in.gcount()) != n) {
    throw Error(ErrorCode::TruncatedFile, "unexpected end of file");
  }
}

template <class U>
U get_le(std::istream& in) {
  unsigned char b[sizeof(U)];
  get_bytes(in, b, sizeof(U));
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(static_cast<U>(b[i]) << (8 * i));
  return v;
}

double get_f32(std::istream& in) {
  return static_cast<double>(std::bit_cast<float>(get_le<std::uint32_t>(in)));
}

// Same three letters with another trailing digit means a different format
// revision; anything else is not ours.
void check_magic(std::istream& in, const char (&magic)[4]) {
  char got[4];
  get_bytes(in, got, 4);
  if (std::memcmp(got, magic, 4) == 0) return;
  if (std::memcmp(got, magic, 3) == 0 && got[3] >= '0' && got[3] <= '9') {
    throw Error(ErrorCode::VersionMismatch,
                std::string("unsupported format revision ") + std::string(got, 4));
  }
  throw Error(ErrorCode::BadMagic, "not a " + std::string(magic, 4) + " file");
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoFailure, "cannot open " + path.string() + " for writing");
  return out;
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot open " + path.string());
  return in;
}

void finish(std::ostream& out, const std::filesystem::path& path) {
  out.flush();
  if (!out) throw Error(ErrorCode::IoFailure, "write failed for " + path.string());
}

}  // namespace

std::size_t series_header_bytes(std::size_t count) {
  return 4 + 1 + 3 * 4 + 4 + 4 + (count + 7) / 8;
}

void write_series(std::ostream& out, const ScalarFieldSeries& series) {
  series.shape.validate();
  const std::size_t n = series.count();
  if (series.keyframes.size() != n) {
    throw Error(ErrorCode::InvalidArgument, "keyframe flags do not match the series length");
  }
  put_bytes(out, kSeriesMagic, 4);
  put_le(out, static_cast<std::uint8_t>(series.shape.dims));
  for (int a = 0; a < 3; ++a) put_le(out, static_cast<std::uint32_t>(series.shape.extents[a]));
  put_le(out, static_cast<std::uint32_t>(n));
  std::vector<std::uint8_t> bitmap((n + 7) / 8, 0);
  for (std::size_t k = 0; k < n; ++k) {
    if (series.keyframes[k]) bitmap[k / 8] |= static_cast<std::uint8_t>(1u << (k % 8));
  }
  put_le(out, static_cast<std::uint32_t>(bitmap.size()));
  put_bytes(out, bitmap.data(), bitmap.size());
  const auto nv = static_cast<std::size_t>(series.shape.vertex_count());
  for (std::size_t k = 0; k < n; ++k) {
    const auto& f = series.fields[k];
    if (f.empty()) {
      for (std::size_t j = 0; j < nv; ++j) put_f32(out, std::numeric_limits<double>::quiet_NaN());
      continue;
    }
    if (f.size() != nv) throw Error(ErrorCode::ShapeMismatch, "field size differs from the series grid");
    for (double v : f.values) put_f32(out, v);
  }
}

ScalarFieldSeries read_series(std::istream& in) {
  check_magic(in, kSeriesMagic);
  GridShape shape;
  shape.dims = get_le<std::uint8_t>(in);
  for (int a = 0; a < 3; ++a) shape.extents[a] = static_cast<int>(get_le<std::uint32_t>(in));
  try {
    shape.validate();
  } catch (const Error& e) {
    throw Error(ErrorCode::BadMagic, std::string("corrupt header: ") + e.what());
  }
  const std::size_t n = get_le<std::uint32_t>(in);
  const std::size_t bitmap_len = get_le<std::uint32_t>(in);
  if (bitmap_len != (n + 7) / 8) throw Error(ErrorCode::BadMagic, "keyframe bitmap length mismatch");
  std::vector<std::uint8_t> bitmap(bitmap_len);
  get_bytes(in, bitmap.data(), bitmap_len);
  ScalarFieldSeries series(shape, n);
  for (std::size_t k = 0; k < n; ++k) series.keyframes[k] = (bitmap[k / 8] >> (k % 8)) & 1u;
  const auto nv = static_cast<std::size_t>(shape.vertex_count());
  std::vector<double> block(nv);
  for (std::size_t k = 0; k < n; ++k) {
    bool all_nan = true;
    for (auto& v : block) {
      v = get_f32(in);
      all_nan = all_nan && std::isnan(v);
    }
    if (!all_nan) series.fields[k] = ScalarField(shape, block);
  }
  return series;
}

void write_series(const std::filesystem::path& path, const ScalarFieldSeries& series) {
  auto out = open_out(path);
  write_series(out, series);
  finish(out, path);
}

ScalarFieldSeries read_series(const std::filesystem::path& path) {
  auto in = open_in(path);
  return read_series(in);
}

namespace {

std::string format_real(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> parts;
  std::string cur;
  std::istringstream ss(line);
  while (std::getline(ss, cur, ',')) parts.push_back(cur);
  if (!line.empty() && line.back() == ',') parts.emplace_back();
  return parts;
}

double parse_real(const std::string& s, std::size_t line) {
  double v = 0.0;
  const auto* end = s.data() + s.size();
  const auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc{} || ptr != end) {
    throw Error(ErrorCode::InvalidArgument,
                "bad number '" + s + "' on diagram line " + std::to_string(line));
  }
  return v;
}

VertexId parse_vertex(const std::string& s, std::size_t line) {
  if (s.empty()) return kNoVertex;
  VertexId v = 0;
  const auto* end = s.data() + s.size();
  const auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc{} || ptr != end || v < -1) {
    throw Error(ErrorCode::InvalidArgument,
                "bad vertex '" + s + "' on diagram line " + std::to_string(line));
  }
  return v;
}

}  // namespace

void write_diagram_csv(std::ostream& out, const PersistenceDiagram& diagram) {
  out << kDiagramHeader << '\n';
  for (const auto& p : diagram.pairs) {
    out << to_string(p.kind) << ',' << format_real(p.birth) << ','
        << (p.infinite() ? std::string("inf") : format_real(p.death)) << ',' << p.birth_vertex
        << ',' << (p.infinite() ? kNoVertex : p.death_vertex) << '\n';
  }
}

PersistenceDiagram read_diagram_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::TruncatedFile, "empty diagram file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kDiagramHeader) throw Error(ErrorCode::BadMagic, "unexpected diagram header '" + line + "'");
  PersistenceDiagram d;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto f = split_csv(line);
    if (f.size() != 5) {
      throw Error(ErrorCode::TruncatedFile, "diagram line " + std::to_string(lineno) + " needs 5 fields");
    }
    PersistencePair p;
    const auto kind = parse_pair_type(f[0]);
    if (!kind) throw Error(ErrorCode::InvalidArgument, "unknown pair type '" + f[0] + "'");
    p.kind = *kind;
    p.birth = parse_real(f[1], lineno);
    p.death = f[2] == "inf" ? kInfinity : parse_real(f[2], lineno);
    p.birth_vertex = parse_vertex(f[3], lineno);
    p.death_vertex = parse_vertex(f[4], lineno);
    if (is_infinite(p.kind) != (f[2] == "inf")) {
      throw Error(ErrorCode::InconsistentDiagram,
                  "pair type and death disagree on diagram line " + std::to_string(lineno));
    }
    d.pairs.push_back(p);
  }
  return d;
}

void write_diagram_csv(const std::filesystem::path& path, const PersistenceDiagram& diagram) {
  auto out = open_out(path);
  write_diagram_csv(out, diagram);
  finish(out, path);
}

PersistenceDiagram read_diagram_csv(const std::filesystem::path& path) {
  auto in = open_in(path);
  return read_diagram_csv(in);
}

std::string diagram_file_name(std::size_t timestep) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "dg_%05zu.csv", timestep);
  return buf;
}

void write_diagram_dir(const std::filesystem::path& dir, const std::vector<PersistenceDiagram>& diagrams) {
  std::filesystem::create_directories(dir);
  for (std::size_t k = 0; k < diagrams.size(); ++k) {
    write_diagram_csv(dir / diagram_file_name(k), diagrams[k]);
  }
}

std::vector<PersistenceDiagram> read_diagram_dir(const std::filesystem::path& dir) {
  std::vector<PersistenceDiagram> out;
  for (std::size_t k = 0;; ++k) {
    const auto path = dir / diagram_file_name(k);
    if (!std::filesystem::exists(path)) break;
    out.push_back(read_diagram_csv(path));
  }
  if (out.empty()) throw Error(ErrorCode::IoFailure, "no diagram files in " + dir.string());
  return out;
}

void write_checkpoint(std::ostream& out, const Checkpoint& checkpoint) {
  put_bytes(out, kCheckpointMagic, 4);
  put_le(out, static_cast<std::uint32_t>(checkpoint.config_text.size()));
  put_bytes(out, checkpoint.config_text.data(), checkpoint.config_text.size());
  put_le(out, static_cast<std::uint32_t>(checkpoint.params.arrays.size()));
  for (const auto& a : checkpoint.params.arrays) {
    if (a.name.size() > 0xffff || a.shape.size() > 0xff) {
      throw Error(ErrorCode::InvalidArgument, "parameter name or rank too large");
    }
    put_le(out, static_cast<std::uint16_t>(a.name.size()));
    put_bytes(out, a.name.data(), a.name.size());
    put_le(out, static_cast<std::uint8_t>(a.shape.size()));
    std::size_t expect = 1;
    for (int d : a.shape) {
      put_le(out, static_cast<std::uint32_t>(d));
      expect *= static_cast<std::size_t>(d);
    }
    if (expect != a.data.size()) throw Error(ErrorCode::ShapeMismatch, "array " + a.name + " size/shape mismatch");
    put_le(out, static_cast<std::uint8_t>(a.frozen ? 1 : 0));
    for (double v : a.data) put_f32(out, v);
  }
}

Checkpoint read_checkpoint(std::istream& in) {
  check_magic(in, kCheckpointMagic);
  Checkpoint c;
  c.config_text.resize(get_le<std::uint32_t>(in));
  get_bytes(in, c.config_text.data(), c.config_text.size());
  const std::size_t count = get_le<std::uint32_t>(in);
  c.params.arrays.resize(count);
  for (auto& a : c.params.arrays) {
    a.name.resize(get_le<std::uint16_t>(in));
    get_bytes(in, a.name.data(), a.name.size());
    a.shape.resize(get_le<std::uint8_t>(in));
    std::size_t n = 1;
    for (auto& d : a.shape) {
      d = static_cast<int>(get_le<std::uint32_t>(in));
      n *= static_cast<std::size_t>(d);
    }
    const auto flag = get_le<std::uint8_t>(in);
    if (flag > 1) throw Error(ErrorCode::BadCheckpoint, "bad frozen flag on " + a.name);
    a.frozen = flag == 1;
    a.data.resize(n);
    for (auto& v : a.data) v = get_f32(in);
  }
  return c;
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
  auto out = open_out(path);
  write_checkpoint(out, checkpoint);
  finish(out, path);
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  auto in = open_in(path);
  return read_checkpoint(in);
}

std::vector<std::uint8_t> image_pixels(const ScalarField& field, int slice_axis, int slice_index,
                                       int* width, int* height) {
  const auto& s = field.shape;
  int ax_u = 0;
  int ax_v = 1;
  if (s.dims == 3) {
    if (slice_axis < 0 || slice_axis > 2) throw Error(ErrorCode::BadSlice, "3D export needs a slice axis 0..2");
    if (slice_index < 0 || slice_index >= s.extents[slice_axis]) {
      throw Error(ErrorCode::BadSlice, "slice index out of range");
    }
    ax_u = slice_axis == 0 ? 1 : 0;
    ax_v = slice_axis == 2 ? 1 : 2;
  } else if (slice_axis >= 0 && (slice_axis != 2 || slice_index != 0)) {
    throw Error(ErrorCode::BadSlice, "2D fields take no slice");
  }
  const int w = s.extents[ax_u];
  const int h = s.extents[ax_v];
  std::vector<std::uint8_t> px(static_cast<std::size_t>(w) * h);
  std::array<int, 3> c{0, 0, 0};
  if (s.dims == 3) c[slice_axis] = slice_index;
  for (int v = 0; v < h; ++v) {
    for (int u = 0; u < w; ++u) {
      c[ax_u] = u;
      c[ax_v] = v;
      const double x = std::clamp(field[s.index(c[0], c[1], c[2])], 0.0, 1.0);
      px[static_cast<std::size_t>(v) * w + u] = static_cast<std::uint8_t>(std::lround(255.0 * x));
    }
  }
  if (width != nullptr) *width = w;
  if (height != nullptr) *height = h;
  return px;
}

void export_image(const ScalarField& field, const std::filesystem::path& path, int slice_axis,
                  int slice_index) {
  int w = 0;
  int h = 0;
  const auto px = image_pixels(field, slice_axis, slice_index, &w, &h);
  auto out = open_out(path);
  out << "P5\n" << w << ' ' << h << "\n255\n";
  put_bytes(out, px.data(), px.size());
  finish(out, path);
}

}  // namespace topointerp
