#pragma once

#include "geosep/grid.hpp"
#include "geosep/types.hpp"

#include <cstdint>
#include <functional>
#include <vector>

namespace geosep::geometry {

/// Running first and second moments of the velocities seen in one cell.
struct CellAccumulator {
    std::uint64_t count = 0;
    Vec sum;    // empty until the first sample
    Mat outer;

    void add(const Eigen::Ref<const Vec>& v);
    void merge(const CellAccumulator& other);
    /// Mean-subtracted covariance with the n - 1 normalisation.
    Mat covariance() const;
};

CellAccumulator merge_accumulators(const CellAccumulator& a, const CellAccumulator& b);

/// Per-node accumulators over a whole grid.
struct GridAccumulator {
    GridSpec grid;
    std::vector<CellAccumulator> cells;

    explicit GridAccumulator(GridSpec g) : grid(std::move(g)), cells(grid.node_count()) {}
    /// Adds the finite-difference velocities of one segment, binned at the
    /// midpoint of each consecutive pair. Returns the number binned.
    std::size_t add_segment(const Segment& seg);
    void merge(const GridAccumulator& other);
};

struct MetricOptions {
    int min_count = 20;
    /// Gaussian smoothing width of g_kl in cells; 0 disables smoothing.
    double smoothing_sigma = 1.0;
    /// 0 = kernel average, 1 or 2 = local polynomial fit of that degree.
    int smoothing_order = 0;
    /// Weight each node by its sample count while smoothing.
    bool count_weighted = false;
    /// Segments per accumulation chunk. Fixes the reduction order.
    std::size_t chunk_segments = 4096;
};

/// Contravariant metric (velocity covariance) and its inverse on a grid.
struct MetricField {
    TensorField upper;  // g^{kl}
    TensorField lower;  // g_{kl}
    std::vector<std::uint64_t> count;

    const GridSpec& grid() const { return upper.grid; }
    int dim() const { return upper.grid.ndim(); }
    Eigen::Map<const Mat> contravariant(std::size_t node) const { return {upper.at(node), dim(), dim()}; }
    Eigen::Map<const Mat> covariant(std::size_t node) const { return {lower.at(node), dim(), dim()}; }
    bool is_valid(std::size_t node) const { return upper.is_valid(node); }
    /// Interpolated covariant metric; false outside the valid region.
    bool covariant_at(const Eigen::Ref<const Vec>& x, Mat& g) const;
};

GridAccumulator accumulate(const Series& series, const GridSpec& grid, std::size_t chunk_segments = 4096);

/// Finalises accumulated moments into a metric field (no smoothing).
MetricField metric_from_accumulator(const GridAccumulator& acc, int min_count);

/// Mask-normalised separable Gaussian smoothing of g_kl over valid nodes,
/// followed by re-inversion to obtain g^kl.
void smooth_metric(MetricField& field, double sigma_cells);

/// Gaussian-weighted local polynomial regression of g_kl (degree 1 or 2)
/// over valid nodes within 3 sigma. Lower degrees are used where the
/// neighbourhood cannot support the fit.
void smooth_metric_local(MetricField& field, double sigma_cells, int degree, bool count_weighted);

MetricField estimate_metric(const Series& series, const GridSpec& grid, const MetricOptions& opt = {});

/// Samples an analytic covariant metric at every node.
MetricField sample_metric(const GridSpec& grid, const std::function<Mat(const Vec&)>& lower);

}  // namespace geosep::geometry
