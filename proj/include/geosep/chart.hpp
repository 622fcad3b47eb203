#pragma once

#include "geosep/kdtree.hpp"
#include "geosep/metric.hpp"
#include "geosep/projectors.hpp"
#include "geosep/transport.hpp"

#include <memory>
#include <optional>
#include <vector>

namespace geosep::separation {

/// Small vectors at the base point, grouped by subspace. Column i of
/// `vectors` is the i-th transfer vector; blocks lists the group sizes.
struct SeedFrame {
    Vec base;
    Mat vectors;
    std::vector<int> blocks;
    std::vector<int> columns;  // dy column each vector was taken from
};

/// Projects each column of dy onto every projector's range, picks per block
/// the rank-many columns that keep the largest share of their g-length,
/// Gram-Schmidt orthonormalises them under g and scales the vector taken from
/// column i to g-length lengths[i]. Throws ProjectionError if a block cannot be spanned.
SeedFrame build_seed_frame(const std::vector<Projector>& projectors, const Mat& g, const Mat& dy, const Vec& lengths);

/// Lattice of geodesic coordinates. Node multi-index i_k runs over
/// [-extent[k], extent[k]] and has s_k = i_k * s_unit[k].
class GeodesicChart {
public:
    std::vector<int> extents;
    std::vector<double> s_unit;
    Vec base;
    std::vector<int> blocks;
    std::vector<int> columns;  // seed column behind each s axis (may be empty)
    PointMatrix positions;  // node x~ positions, row per node
    PointMatrix frames;     // transported frame per node, column-major n*n
    std::vector<std::uint8_t> valid;

    int dim() const { return static_cast<int>(extents.size()); }
    std::size_t node_count() const { return valid.size(); }
    int side(int axis) const { return 2 * extents[axis] + 1; }
    std::size_t stride(int axis) const;
    std::vector<int> lattice_index(std::size_t node) const;  // offsets in [-e, e]
    std::size_t node_of(const std::vector<int>& lattice) const;
    Vec s_of(std::size_t node) const;
    std::size_t valid_count() const;
    /// The lattice as a grid over s (not validated; extents may be 0).
    geometry::GridSpec grid() const;

    /// Multilinear interpolation of node positions at s; nullopt unless the
    /// enclosing cell is fully covered.
    std::optional<Vec> position_at(const Vec& s) const;
    /// Inverse map x~ -> s by nearest node and Newton iteration on the
    /// multilinear lattice interpolant.
    std::optional<Vec> inverse(const Vec& x) const;

    void build_index();

private:
    std::optional<Vec> solve_in_cell(const Vec& x, Vec s) const;
    std::shared_ptr<const KdTree> index_;
    std::vector<int> index_nodes_;
};

/// Nested geodesic sweep: along vector 0 from the base, then from every node
/// along (transported) vector 1, and so on. Nodes beyond the connection's
/// domain are left invalid.
GeodesicChart build_chart(const geometry::ConnectionFn& conn, const SeedFrame& frame, const std::vector<int>& extents,
                          const std::vector<double>& s_unit);

struct ChartMetric {
    geometry::TensorField metric;           // covariant metric in s per node
    std::vector<std::uint8_t> one_sided;    // Jacobian used a one-sided stencil
};

/// g^(s) = J^T g J with J = dx~/ds from differences on the lattice.
ChartMetric metric_in_chart(const GeodesicChart& chart, const geometry::MetricField& metric);

/// Maps every point through the chart inverse. Points outside the chart end
/// their segment; fragments shorter than two points are dropped.
Series series_in_chart(const GeodesicChart& chart, const Series& series, std::size_t* dropped = nullptr);

}  // namespace geosep::separation
