#include "krlx/io.hpp"

#include <array>
#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>

namespace krlx {

namespace {

static_assert(std::endian::native == std::endian::little, "field IO assumes a little-endian host");

constexpr char kMagic[4] = {'K', 'R', 'L', 'X'};

struct Header {
  PhaseGrid grid;
  std::uint32_t ncomp = 0;
  bool spatial = false;
};

template <class T>
void put(std::ofstream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::ifstream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw std::runtime_error("field file truncated");
  return v;
}

// Component count 0 marks a phase-space field; k >= 1 a spatial field with k components.
void write_header(std::ofstream& out, const PhaseGrid& g, std::uint32_t ncomp) {
  out.write(kMagic, 4);
  put<std::uint32_t>(out, kFieldFormatVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(g.d));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(g.nx));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(g.nv));
  put<double>(out, g.Lx);
  put<double>(out, g.Lv);
  put<std::uint32_t>(out, ncomp);
}

Header read_header(std::ifstream& in) {
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0) throw std::runtime_error("not a KRLX field file");
  auto version = get<std::uint32_t>(in);
  if (version != kFieldFormatVersion) throw std::runtime_error("unsupported KRLX field version");
  Header h;
  int d = static_cast<int>(get<std::uint32_t>(in));
  int nx = static_cast<int>(get<std::uint32_t>(in));
  int nv = static_cast<int>(get<std::uint32_t>(in));
  double Lx = get<double>(in);
  double Lv = get<double>(in);
  h.grid = PhaseGrid(d, nx, nv, Lx, Lv);
  h.ncomp = get<std::uint32_t>(in);
  h.spatial = h.ncomp > 0;
  return h;
}

void write_values(std::ofstream& out, const Vec& v) {
  out.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
}

Vec read_values(std::ifstream& in, Index n) {
  Vec v(n);
  in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(double)));
  if (!in) throw std::runtime_error("field file truncated");
  return v;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  return out;
}

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  return in;
}

}  // namespace

void write_field(const std::string& path, const DistributionField& f) {
  auto out = open_out(path);
  write_header(out, f.grid, 0);
  write_values(out, f.values);
}

void write_field(const std::string& path, const SpatialField& f) {
  auto out = open_out(path);
  write_header(out, f.grid, static_cast<std::uint32_t>(f.ncomp()));
  for (const auto& c : f.comp) write_values(out, c);
}

DistributionField read_distribution(const std::string& path) {
  auto in = open_in(path);
  Header h = read_header(in);
  if (h.spatial) throw std::runtime_error(path + " holds a spatial field");
  return DistributionField(h.grid, read_values(in, h.grid.size()));
}

SpatialField read_spatial(const std::string& path) {
  auto in = open_in(path);
  Header h = read_header(in);
  if (!h.spatial) throw std::runtime_error(path + " holds a phase-space field");
  SpatialField f(h.grid, static_cast<int>(h.ncomp));
  for (auto& c : f.comp) c = read_values(in, h.grid.nxd());
  return f;
}

std::string fmt(double x) {
  std::array<char, 64> buf;
  auto res = std::to_chars(buf.data(), buf.data() + buf.size(), x);
  return std::string(buf.data(), res.ptr);
}

CsvWriter::CsvWriter(const std::string& path, const Provenance& prov, const std::vector<std::string>& columns)
    : path_(path), ncols_(columns.size()) {
  for (const auto& [k, v] : prov) buffer_ += "# " + k + " = " + v + "\n";
  for (std::size_t i = 0; i < columns.size(); ++i) buffer_ += (i ? "," : "") + columns[i];
  buffer_ += "\n";
}

void CsvWriter::row(const std::vector<double>& values) {
  std::vector<std::string> cells;
  for (double v : values) cells.push_back(fmt(v));
  row_text(cells);
}

void CsvWriter::row_text(const std::vector<std::string>& cells) {
  if (cells.size() != ncols_) throw ShapeError("CsvWriter: row width does not match header");
  for (std::size_t i = 0; i < cells.size(); ++i) buffer_ += (i ? "," : "") + cells[i];
  buffer_ += "\n";
}

void CsvWriter::close() {
  std::ofstream out(path_);
  if (!out) throw std::runtime_error("cannot open " + path_ + " for writing");
  out << buffer_;
}

void write_slice_csv(const std::string& path, const DistributionField& f, const Provenance& prov) {
  const PhaseGrid& g = f.grid;
  CsvWriter csv(path, prov, {"x1", "v1", "f"});
  // (x_1, v_1) plane through the central cells of the remaining axes.
  Index xoff = 0, voff = 0;
  for (int k = 1; k < g.d; ++k) {
    xoff += (g.nx / 2) * g.xstride(k);
    voff += (g.nv / 2) * g.vstride(k);
  }
  for (int i = 0; i < g.nx; ++i)
    for (int j = 0; j < g.nv; ++j)
      csv.row({g.x(i), g.v(j), f(xoff + i * g.xstride(0), voff + j * g.vstride(0))});
  csv.close();
}

}  // namespace krlx
