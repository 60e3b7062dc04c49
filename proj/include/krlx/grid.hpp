#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace krlx {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using Index = Eigen::Index;

/// Array shapes or grids of two operands disagree.
struct ShapeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Input outside the mathematical domain of an operation.
struct DomainError : std::domain_error {
  using std::domain_error::domain_error;
};

/// Iterative method did not reach its tolerance.
struct ConvergenceError : std::runtime_error {
  std::vector<double> history;
  ConvergenceError(const std::string& what, std::vector<double> h)
      : std::runtime_error(what), history(std::move(h)) {}
};

/// Requested computation is not offered at this problem size.
struct CapabilityError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Tensor phase grid on [-Lx,Lx]^d x [-Lv,Lv]^d with cell-centred nodes.
/// Flattened storage is row-major over (x_1..x_d, v_1..v_d), v fastest.
struct PhaseGrid {
  int d = 1;
  int nx = 8, nv = 8;
  double Lx = 8.0, Lv = 8.0;

  PhaseGrid() = default;
  PhaseGrid(int d_, int nx_, int nv_, double Lx_, double Lv_);

  double hx() const { return 2.0 * Lx / nx; }
  double hv() const { return 2.0 * Lv / nv; }
  double x(int i) const { return -Lx + (i + 0.5) * hx(); }
  double v(int j) const { return -Lv + (j + 0.5) * hv(); }

  Index nxd() const;  // spatial cells
  Index nvd() const;  // velocity cells
  Index size() const { return nxd() * nvd(); }

  double cellx() const;  // hx^d
  double cellv() const;  // hv^d
  double cell() const { return cellx() * cellv(); }

  /// Row-major dims of the phase array, 2d entries.
  std::vector<Index> dims() const;
  /// Stride of spatial axis k inside the spatial block, and of velocity axis k inside a velocity block.
  Index xstride(int k) const;
  Index vstride(int k) const;

  /// Multi-index helpers for the spatial and velocity blocks.
  void xindex(Index flat, int* out) const;
  void vindex(Index flat, int* out) const;

  void validate() const;
  bool operator==(const PhaseGrid& o) const;
  bool operator!=(const PhaseGrid& o) const { return !(*this == o); }
  std::string describe() const;
};

void require_same_grid(const PhaseGrid& a, const PhaseGrid& b, const char* where);

/// Scalar (one component) or d-vector (d components) field on the spatial grid.
struct SpatialField {
  PhaseGrid grid;
  std::vector<Vec> comp;

  SpatialField() = default;
  SpatialField(const PhaseGrid& g, int ncomp);
  int ncomp() const { return static_cast<int>(comp.size()); }
  const Vec& values() const { return comp.at(0); }
  Vec& values() { return comp.at(0); }
  /// Max over cells of the Euclidean norm across components.
  double sup_norm() const;
};

/// Phase-space density sampled at cell centres.
struct DistributionField {
  PhaseGrid grid;
  Vec values;

  DistributionField() = default;
  explicit DistributionField(const PhaseGrid& g) : grid(g), values(Vec::Zero(g.size())) {}
  DistributionField(const PhaseGrid& g, Vec vals);

  double mass() const { return values.sum() * grid.cell(); }
  double& operator()(Index ix, Index iv) { return values[ix * grid.nvd() + iv]; }
  double operator()(Index ix, Index iv) const { return values[ix * grid.nvd() + iv]; }
};

/// Applies the matrix A along one axis of a row-major tensor stored in data:
/// out[o, i, r] = sum_j A(i, j) data[o, j, r] with n = A.cols() and inner = r-extent.
void apply_along(Vec& data, Index outer, Index n, Index inner, const Mat& A);
/// Axis form using row-major dims.
void apply_along_axis(Vec& data, const std::vector<Index>& dims, int axis, const Mat& A);

/// Velocity-uniform extension of a spatial function: f(x,v) = s(x).
Vec spread_x(const PhaseGrid& g, const Vec& s);
/// Space-uniform extension of a velocity function.
Vec spread_v(const PhaseGrid& g, const Vec& w);

/// Tensor product g(x)h(v) of per-axis profiles (size nx for every x-axis, nv for every v-axis).
Vec product_profile(const PhaseGrid& g, const std::vector<Vec>& xprof, const std::vector<Vec>& vprof);

}  // namespace krlx
