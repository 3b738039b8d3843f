#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "invberge/parallel.hpp"

namespace invberge {

/// One uniformly spaced axis of a compact box; grid point k sits at lo + k*step().
struct Axis {
  double lo = 0.0;
  double hi = 1.0;
  std::int64_t n = 2;

  double step() const { return (hi - lo) / static_cast<double>(n - 1); }
  double coord(std::int64_t k) const { return lo + static_cast<double>(k) * step(); }
  bool operator==(const Axis&) const = default;
};

inline void validate_axis(const Axis& a, const std::string& where) {
  if (!(a.lo < a.hi))
    throw std::invalid_argument(where + ": axis requires lo < hi, got [" +
                                std::to_string(a.lo) + ", " + std::to_string(a.hi) + "]");
  if (a.n < 2)
    throw std::invalid_argument(where + ": axis requires at least 2 grid points, got " +
                                std::to_string(a.n));
  if (!std::isfinite(a.lo) || !std::isfinite(a.hi))
    throw std::invalid_argument(where + ": axis bounds must be finite");
}

/// Product of axes with row-major indexing (axis 0 slowest, last axis fastest).
class ProductGrid {
 public:
  ProductGrid() = default;

  explicit ProductGrid(std::vector<Axis> axes) : axes_(std::move(axes)) {
    if (axes_.empty()) throw std::invalid_argument("ProductGrid: zero axes");
    std::int64_t total = 1;
    for (std::size_t k = 0; k < axes_.size(); ++k) {
      validate_axis(axes_[k], "ProductGrid axis " + std::to_string(k));
      if (total > (std::int64_t{1} << 42) / axes_[k].n)
        throw std::invalid_argument("ProductGrid: grid too large");
      total *= axes_[k].n;
    }
    size_ = total;
    strides_.assign(axes_.size(), 1);
    for (std::size_t k = axes_.size(); k-- > 1;)
      strides_[k - 1] = strides_[k] * axes_[k].n;
  }

  std::int64_t dim() const { return static_cast<std::int64_t>(axes_.size()); }
  std::int64_t size() const { return size_; }
  bool empty() const { return axes_.empty(); }
  const std::vector<Axis>& axes() const { return axes_; }
  const Axis& axis(std::int64_t k) const { return axes_[static_cast<std::size_t>(k)]; }
  std::int64_t stride(std::int64_t k) const { return strides_[static_cast<std::size_t>(k)]; }

  std::int64_t linear_index(std::span<const std::int64_t> multi) const {
    std::int64_t lin = 0;
    for (std::int64_t k = 0; k < dim(); ++k) {
      const std::int64_t i = multi[static_cast<std::size_t>(k)];
      if (i < 0 || i >= axes_[static_cast<std::size_t>(k)].n)
        throw std::out_of_range("linear_index: index out of range on axis " + std::to_string(k));
      lin += i * strides_[static_cast<std::size_t>(k)];
    }
    return lin;
  }

  void multi_index(std::int64_t lin, std::span<std::int64_t> out) const {
    for (std::int64_t k = 0; k < dim(); ++k) {
      out[static_cast<std::size_t>(k)] = lin / strides_[static_cast<std::size_t>(k)];
      lin %= strides_[static_cast<std::size_t>(k)];
    }
  }

  std::vector<std::int64_t> multi_index(std::int64_t lin) const {
    std::vector<std::int64_t> m(static_cast<std::size_t>(dim()));
    multi_index(lin, m);
    return m;
  }

  void point(std::int64_t lin, std::span<double> out) const {
    for (std::int64_t k = 0; k < dim(); ++k) {
      const auto& a = axes_[static_cast<std::size_t>(k)];
      out[static_cast<std::size_t>(k)] = a.coord(lin / strides_[static_cast<std::size_t>(k)]);
      lin %= strides_[static_cast<std::size_t>(k)];
    }
  }

  std::vector<double> point(std::int64_t lin) const {
    std::vector<double> p(static_cast<std::size_t>(dim()));
    point(lin, p);
    return p;
  }

  bool operator==(const ProductGrid& o) const { return axes_ == o.axes_; }

  /// All axes share the same bitwise step; enables the exact integer metric kernels.
  bool uniform_step() const {
    const double h = axes_.front().step();
    for (const auto& a : axes_)
      if (a.step() != h) return false;
    return true;
  }

  double min_step() const {
    double h = axes_.front().step();
    for (const auto& a : axes_) h = std::min(h, a.step());
    return h;
  }

  std::string describe_point(std::int64_t lin) const {
    const auto m = multi_index(lin);
    std::ostringstream os;
    os << "index (";
    for (std::size_t k = 0; k < m.size(); ++k) os << (k ? "," : "") << m[k];
    os << ") = (";
    const auto p = point(lin);
    for (std::size_t k = 0; k < p.size(); ++k) os << (k ? "," : "") << p[k];
    os << ")";
    return os.str();
  }

 private:
  std::vector<Axis> axes_;
  std::vector<std::int64_t> strides_;
  std::int64_t size_ = 0;
};

[[nodiscard]] inline ProductGrid build_grid(const std::vector<std::tuple<double, double, std::int64_t>>& axes) {
  std::vector<Axis> as;
  as.reserve(axes.size());
  for (const auto& [lo, hi, n] : axes) as.push_back(Axis{lo, hi, n});
  return ProductGrid(std::move(as));
}

[[nodiscard]] inline ProductGrid product(const ProductGrid& a, const ProductGrid& b) {
  std::vector<Axis> axes = a.axes();
  axes.insert(axes.end(), b.axes().begin(), b.axes().end());
  return ProductGrid(std::move(axes));
}

/// Real values on a product grid. Not extended: every value finite.
/// Extended: -inf allowed (indicator-style payoffs), +inf and NaN never.
struct ScalarField {
  ProductGrid grid;
  std::vector<double> values;
  bool extended = false;
};

inline ScalarField make_field(ProductGrid grid, double fill = 0.0, bool extended = false) {
  ScalarField f{std::move(grid), {}, extended};
  f.values.assign(static_cast<std::size_t>(f.grid.size()), fill);
  return f;
}

inline void validate_field(const ScalarField& f, const std::string& where) {
  if (f.values.size() != static_cast<std::size_t>(f.grid.size()))
    throw std::invalid_argument(where + ": value count does not match grid");
  for (double v : f.values) {
    if (std::isnan(v)) throw std::invalid_argument(where + ": NaN value in field");
    if (v == std::numeric_limits<double>::infinity())
      throw std::invalid_argument(where + ": +inf value in field");
    if (!f.extended && v == -std::numeric_limits<double>::infinity())
      throw std::invalid_argument(where + ": -inf value in non-extended field");
  }
}

/// Boolean indicator of a subset of the grid.
struct CellMask {
  ProductGrid grid;
  std::vector<std::uint8_t> bits;

  bool test(std::int64_t lin) const { return bits[static_cast<std::size_t>(lin)] != 0; }
  std::int64_t count() const {
    std::int64_t c = 0;
    for (auto b : bits) c += b != 0;
    return c;
  }
  bool any() const {
    for (auto b : bits)
      if (b) return true;
    return false;
  }
};

inline CellMask make_mask(ProductGrid grid, bool fill = false) {
  CellMask m{std::move(grid), {}};
  m.bits.assign(static_cast<std::size_t>(m.grid.size()), fill ? 1 : 0);
  return m;
}

inline bool mask_equal(const CellMask& a, const CellMask& b) {
  return a.grid == b.grid && a.bits == b.bits;
}

inline bool mask_subset(const CellMask& a, const CellMask& b) {
  if (!(a.grid == b.grid)) throw std::invalid_argument("mask_subset: grid mismatch");
  for (std::size_t i = 0; i < a.bits.size(); ++i)
    if (a.bits[i] && !b.bits[i]) return false;
  return true;
}

inline CellMask mask_and(const CellMask& a, const CellMask& b) {
  if (!(a.grid == b.grid)) throw std::invalid_argument("mask_and: grid mismatch");
  CellMask r = a;
  for (std::size_t i = 0; i < r.bits.size(); ++i) r.bits[i] = a.bits[i] && b.bits[i];
  return r;
}

inline CellMask mask_minus(const CellMask& a, const CellMask& b) {
  if (!(a.grid == b.grid)) throw std::invalid_argument("mask_minus: grid mismatch");
  CellMask r = a;
  for (std::size_t i = 0; i < r.bits.size(); ++i) r.bits[i] = a.bits[i] && !b.bits[i];
  return r;
}

/// Pointwise min(value, 1).
[[nodiscard]] inline ScalarField clamp_unit(ScalarField field) {
  validate_field(field, "clamp_unit");
  for (double& v : field.values) v = std::min(v, 1.0);
  return field;
}

/// Pointwise sum of w_k * f_k in the given order. All fields must share one grid.
[[nodiscard]] inline ScalarField weighted_sum(std::span<const ScalarField> fields,
                                              std::span<const double> weights) {
  if (fields.empty()) throw std::invalid_argument("weighted_sum: no fields");
  if (fields.size() != weights.size())
    throw std::invalid_argument("weighted_sum: field/weight count mismatch");
  for (const auto& f : fields)
    if (!(f.grid == fields.front().grid))
      throw std::invalid_argument("weighted_sum: grid mismatch");
  ScalarField out = make_field(fields.front().grid);
  for (std::size_t i = 0; i < out.values.size(); ++i) {
    double s = 0.0;
    for (std::size_t k = 0; k < fields.size(); ++k) s += weights[k] * fields[k].values[i];
    out.values[i] = s;
  }
  return out;
}

namespace detail {

// Decomposition of a grid around a contiguous axis block [begin, begin+len):
// linear = (hi * block_count + block) * lo_count + lo, with hi running over the
// axes before the block and lo over the axes after it.
struct BlockShape {
  std::int64_t hi_count = 1;
  std::int64_t block_count = 1;
  std::int64_t lo_count = 1;

  std::int64_t full(std::int64_t hi, std::int64_t block, std::int64_t lo) const {
    return (hi * block_count + block) * lo_count + lo;
  }
  std::int64_t rest(std::int64_t hi, std::int64_t lo) const { return hi * lo_count + lo; }
  std::int64_t rest_count() const { return hi_count * lo_count; }
  void split(std::int64_t lin, std::int64_t& hi, std::int64_t& block, std::int64_t& lo) const {
    lo = lin % lo_count;
    lin /= lo_count;
    block = lin % block_count;
    hi = lin / block_count;
  }
};

inline BlockShape block_shape(const ProductGrid& g, std::int64_t begin, std::int64_t len) {
  if (begin < 0 || len < 1 || begin + len > g.dim())
    throw std::out_of_range("block_shape: bad axis block");
  BlockShape s;
  for (std::int64_t k = 0; k < begin; ++k) s.hi_count *= g.axis(k).n;
  for (std::int64_t k = begin; k < begin + len; ++k) s.block_count *= g.axis(k).n;
  for (std::int64_t k = begin + len; k < g.dim(); ++k) s.lo_count *= g.axis(k).n;
  return s;
}

}  // namespace detail

[[nodiscard]] inline ProductGrid block_grid(const ProductGrid& g, std::int64_t begin, std::int64_t len) {
  if (begin < 0 || len < 1 || begin + len > g.dim())
    throw std::out_of_range("block_grid: bad axis block");
  std::vector<Axis> axes(g.axes().begin() + begin, g.axes().begin() + begin + len);
  return ProductGrid(std::move(axes));
}

[[nodiscard]] inline ProductGrid rest_grid(const ProductGrid& g, std::int64_t begin, std::int64_t len) {
  if (g.dim() == len) throw std::invalid_argument("rest_grid: block covers all axes");
  std::vector<Axis> axes;
  for (std::int64_t k = 0; k < g.dim(); ++k)
    if (k < begin || k >= begin + len) axes.push_back(g.axis(k));
  return ProductGrid(std::move(axes));
}

/// Restriction of a field to {block varies, remaining axes fixed at rest_multi}.
/// rest_multi indexes the remaining axes in their original order.
[[nodiscard]] inline ScalarField slice_block(const ScalarField& f, std::int64_t begin,
                                             std::int64_t len,
                                             std::span<const std::int64_t> rest_multi) {
  const auto shape = detail::block_shape(f.grid, begin, len);
  const ProductGrid sub = block_grid(f.grid, begin, len);
  if (rest_multi.size() != static_cast<std::size_t>(f.grid.dim() - len))
    throw std::invalid_argument("slice_block: wrong rest index arity");
  const ProductGrid rg = (f.grid.dim() == len) ? ProductGrid() : rest_grid(f.grid, begin, len);
  const std::int64_t rest_lin = rg.empty() ? 0 : rg.linear_index(rest_multi);
  const std::int64_t hi = rest_lin / shape.lo_count;
  const std::int64_t lo = rest_lin % shape.lo_count;
  ScalarField out = make_field(sub, 0.0, f.extended);
  for (std::int64_t b = 0; b < shape.block_count; ++b)
    out.values[static_cast<std::size_t>(b)] =
        f.values[static_cast<std::size_t>(shape.full(hi, b, lo))];
  return out;
}

[[nodiscard]] inline CellMask slice_block(const CellMask& m, std::int64_t begin, std::int64_t len,
                                          std::span<const std::int64_t> rest_multi) {
  const auto shape = detail::block_shape(m.grid, begin, len);
  const ProductGrid sub = block_grid(m.grid, begin, len);
  if (rest_multi.size() != static_cast<std::size_t>(m.grid.dim() - len))
    throw std::invalid_argument("slice_block: wrong rest index arity");
  const ProductGrid rg = (m.grid.dim() == len) ? ProductGrid() : rest_grid(m.grid, begin, len);
  const std::int64_t rest_lin = rg.empty() ? 0 : rg.linear_index(rest_multi);
  const std::int64_t hi = rest_lin / shape.lo_count;
  const std::int64_t lo = rest_lin % shape.lo_count;
  CellMask out = make_mask(sub);
  for (std::int64_t b = 0; b < shape.block_count; ++b)
    out.bits[static_cast<std::size_t>(b)] = m.bits[static_cast<std::size_t>(shape.full(hi, b, lo))];
  return out;
}

namespace detail {

// perm maps destination axis position -> source axis position.
template <typename T>
std::vector<T> permute_values(const ProductGrid& src, const ProductGrid& dst,
                              std::span<const std::int64_t> perm, const std::vector<T>& in) {
  std::vector<T> out(in.size());
  const std::int64_t d = src.dim();
  std::vector<std::int64_t> src_stride_for_dst(static_cast<std::size_t>(d));
  for (std::int64_t j = 0; j < d; ++j)
    src_stride_for_dst[static_cast<std::size_t>(j)] = src.stride(perm[static_cast<std::size_t>(j)]);
  std::vector<std::int64_t> dmulti(static_cast<std::size_t>(d), 0);
  std::int64_t src_lin = 0;
  for (std::int64_t dst_lin = 0; dst_lin < dst.size(); ++dst_lin) {
    out[static_cast<std::size_t>(dst_lin)] = in[static_cast<std::size_t>(src_lin)];
    // odometer increment on destination multi-index, keeping src_lin in step
    for (std::int64_t j = d; j-- > 0;) {
      auto& c = dmulti[static_cast<std::size_t>(j)];
      src_lin += src_stride_for_dst[static_cast<std::size_t>(j)];
      if (++c < dst.axis(j).n) break;
      src_lin -= c * src_stride_for_dst[static_cast<std::size_t>(j)];
      c = 0;
    }
  }
  return out;
}

inline ProductGrid permuted_grid(const ProductGrid& src, std::span<const std::int64_t> perm) {
  if (perm.size() != static_cast<std::size_t>(src.dim()))
    throw std::invalid_argument("permute_axes: wrong permutation arity");
  std::vector<Axis> axes;
  std::vector<bool> seen(perm.size(), false);
  for (auto p : perm) {
    if (p < 0 || p >= src.dim() || seen[static_cast<std::size_t>(p)])
      throw std::invalid_argument("permute_axes: not a permutation");
    seen[static_cast<std::size_t>(p)] = true;
    axes.push_back(src.axis(p));
  }
  return ProductGrid(std::move(axes));
}

}  // namespace detail

/// Reindex a mask so that destination axis j is source axis perm[j].
[[nodiscard]] inline CellMask permute_axes(const CellMask& m, std::span<const std::int64_t> perm) {
  CellMask out;
  out.grid = detail::permuted_grid(m.grid, perm);
  out.bits = detail::permute_values(m.grid, out.grid, perm, m.bits);
  return out;
}

[[nodiscard]] inline ScalarField permute_axes(const ScalarField& f, std::span<const std::int64_t> perm) {
  ScalarField out;
  out.grid = detail::permuted_grid(f.grid, perm);
  out.extended = f.extended;
  out.values = detail::permute_values(f.grid, out.grid, perm, f.values);
  return out;
}

}  // namespace invberge
