#pragma once

#include "krlx/grid.hpp"

#include <map>
#include <ostream>
#include <string>
#include <vector>

namespace krlx {

inline constexpr std::uint32_t kFieldFormatVersion = 1;

/// Binary field file: "KRLX", u32 version, u32 d, u32 nx, u32 nv, f64 Lx, f64 Lv,
/// u32 component count, then row-major f64 values (little-endian throughout).
void write_field(const std::string& path, const DistributionField& f);
void write_field(const std::string& path, const SpatialField& f);
DistributionField read_distribution(const std::string& path);
SpatialField read_spatial(const std::string& path);

/// Ordered key/value provenance block written as "# key = value" lines.
using Provenance = std::vector<std::pair<std::string, std::string>>;

class CsvWriter {
 public:
  CsvWriter(const std::string& path, const Provenance& prov, const std::vector<std::string>& columns);
  void row(const std::vector<double>& values);
  void row_text(const std::vector<std::string>& cells);
  void close();

 private:
  std::string path_;
  std::string buffer_;
  std::size_t ncols_;
};

/// Shortest round-trip decimal form; deterministic across runs.
std::string fmt(double x);

/// CSV of a 1D slice or 2D slice of a field (x-major rows).
void write_slice_csv(const std::string& path, const DistributionField& f, const Provenance& prov);

}  // namespace krlx
