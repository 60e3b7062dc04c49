#include "krlx/grid.hpp"

#include <cmath>
#include <sstream>

namespace krlx {

namespace {
Index ipow(Index b, int e) {
  Index r = 1;
  for (int i = 0; i < e; ++i) r *= b;
  return r;
}
}  // namespace

PhaseGrid::PhaseGrid(int d_, int nx_, int nv_, double Lx_, double Lv_)
    : d(d_), nx(nx_), nv(nv_), Lx(Lx_), Lv(Lv_) {
  validate();
}

Index PhaseGrid::nxd() const { return ipow(nx, d); }
Index PhaseGrid::nvd() const { return ipow(nv, d); }
double PhaseGrid::cellx() const { return std::pow(hx(), d); }
double PhaseGrid::cellv() const { return std::pow(hv(), d); }

std::vector<Index> PhaseGrid::dims() const {
  std::vector<Index> out;
  for (int k = 0; k < d; ++k) out.push_back(nx);
  for (int k = 0; k < d; ++k) out.push_back(nv);
  return out;
}

Index PhaseGrid::xstride(int k) const { return ipow(nx, d - 1 - k); }
Index PhaseGrid::vstride(int k) const { return ipow(nv, d - 1 - k); }

void PhaseGrid::xindex(Index flat, int* out) const {
  for (int k = d - 1; k >= 0; --k) {
    out[k] = static_cast<int>(flat % nx);
    flat /= nx;
  }
}

void PhaseGrid::vindex(Index flat, int* out) const {
  for (int k = d - 1; k >= 0; --k) {
    out[k] = static_cast<int>(flat % nv);
    flat /= nv;
  }
}

void PhaseGrid::validate() const {
  if (d < 1 || d > 3) throw DomainError("grid: d must be 1, 2 or 3");
  if (nx < 8 || nv < 8) throw DomainError("grid: nx and nv must be at least 8");
  if (!(Lx > 0) || !(Lv > 0) || !std::isfinite(Lx) || !std::isfinite(Lv))
    throw DomainError("grid: box half-widths must be positive and finite");
}

bool PhaseGrid::operator==(const PhaseGrid& o) const {
  return d == o.d && nx == o.nx && nv == o.nv && Lx == o.Lx && Lv == o.Lv;
}

std::string PhaseGrid::describe() const {
  std::ostringstream s;
  s << "d=" << d << " nx=" << nx << " nv=" << nv << " Lx=" << Lx << " Lv=" << Lv;
  return s.str();
}

void require_same_grid(const PhaseGrid& a, const PhaseGrid& b, const char* where) {
  if (a != b)
    throw ShapeError(std::string(where) + ": grid mismatch (" + a.describe() + " vs " + b.describe() + ")");
}

SpatialField::SpatialField(const PhaseGrid& g, int ncomp) : grid(g) {
  for (int c = 0; c < ncomp; ++c) comp.push_back(Vec::Zero(g.nxd()));
}

double SpatialField::sup_norm() const {
  if (comp.empty()) return 0.0;
  Vec sq = Vec::Zero(comp[0].size());
  for (const auto& c : comp) sq.array() += c.array().square();
  return std::sqrt(sq.maxCoeff());
}

DistributionField::DistributionField(const PhaseGrid& g, Vec vals) : grid(g), values(std::move(vals)) {
  if (values.size() != g.size()) throw ShapeError("DistributionField: value count does not match grid");
}

void apply_along(Vec& data, Index outer, Index n, Index inner, const Mat& A) {
  if (A.cols() != n || A.rows() != n) throw ShapeError("apply_along: matrix size mismatch");
  Mat tmp(inner, n);
  for (Index o = 0; o < outer; ++o) {
    Eigen::Map<Mat> X(data.data() + o * n * inner, inner, n);
    tmp.noalias() = X * A.transpose();
    X = tmp;
  }
}

void apply_along_axis(Vec& data, const std::vector<Index>& dims, int axis, const Mat& A) {
  Index outer = 1, inner = 1;
  for (int k = 0; k < axis; ++k) outer *= dims[k];
  for (std::size_t k = axis + 1; k < dims.size(); ++k) inner *= dims[k];
  apply_along(data, outer, dims[axis], inner, A);
}

Vec spread_x(const PhaseGrid& g, const Vec& s) {
  const Index nvd = g.nvd();
  Vec out(g.size());
  for (Index i = 0; i < g.nxd(); ++i) out.segment(i * nvd, nvd).setConstant(s[i]);
  return out;
}

Vec spread_v(const PhaseGrid& g, const Vec& w) {
  const Index nvd = g.nvd();
  Vec out(g.size());
  for (Index i = 0; i < g.nxd(); ++i) out.segment(i * nvd, nvd) = w;
  return out;
}

Vec product_profile(const PhaseGrid& g, const std::vector<Vec>& xprof, const std::vector<Vec>& vprof) {
  Vec sx = Vec::Ones(g.nxd()), sv = Vec::Ones(g.nvd());
  std::vector<int> idx(g.d);
  for (Index i = 0; i < g.nxd(); ++i) {
    g.xindex(i, idx.data());
    for (int k = 0; k < g.d; ++k) sx[i] *= xprof[k][idx[k]];
  }
  for (Index j = 0; j < g.nvd(); ++j) {
    g.vindex(j, idx.data());
    for (int k = 0; k < g.d; ++k) sv[j] *= vprof[k][idx[k]];
  }
  Vec out(g.size());
  for (Index i = 0; i < g.nxd(); ++i) out.segment(i * g.nvd(), g.nvd()) = sx[i] * sv;
  return out;
}

}  // namespace krlx
