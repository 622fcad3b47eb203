#pragma once

#include "geosep/types.hpp"

#include <cstdint>
#include <vector>

namespace geosep::geometry {

/// Regular lattice with nodes at lo[a] + i * step(a), i in [0, count[a]).
/// Flat node index is row-major with the last axis fastest.
struct GridSpec {
    std::vector<double> lo, hi;
    std::vector<int> count;

    int ndim() const { return static_cast<int>(count.size()); }
    std::size_t node_count() const;
    double step(int axis) const { return (hi[axis] - lo[axis]) / (count[axis] - 1); }
    std::size_t stride(int axis) const;
    std::vector<int> multi_index(std::size_t flat) const;
    std::size_t flat_index(const std::vector<int>& idx) const;
    Vec position(std::size_t flat) const;
    /// Node whose cell contains x, or -1 when x is more than half a cell
    /// outside the lattice.
    std::int64_t nearest_node(const Eigen::Ref<const Vec>& x) const;
    void validate() const;

    /// Bounds from per-axis sample quantiles of all points in the series.
    static GridSpec from_quantiles(const Series& series, const std::vector<int>& count, double q_lo = 0.005,
                                   double q_hi = 0.995);
    static GridSpec uniform(int ndim, double lo, double hi, int count);

    bool operator==(const GridSpec&) const = default;
};

/// A fixed number of components per node plus a validity flag.
struct TensorField {
    GridSpec grid;
    int components = 0;
    std::vector<double> data;
    std::vector<std::uint8_t> valid;

    TensorField() = default;
    TensorField(GridSpec g, int comps);

    double* at(std::size_t node) { return data.data() + node * components; }
    const double* at(std::size_t node) const { return data.data() + node * components; }
    bool is_valid(std::size_t node) const { return valid[node] != 0; }
    std::size_t valid_count() const;

    /// Derivative along `axis` at `node`: central where both neighbours are
    /// valid, otherwise a one-sided stencil. Returns false if neither side is.
    bool derivative(std::size_t node, int axis, double* out) const;

    /// Multilinear interpolation; false unless every corner of the enclosing
    /// cell is valid.
    bool interpolate(const Eigen::Ref<const Vec>& x, double* out) const;
};

}  // namespace geosep::geometry
