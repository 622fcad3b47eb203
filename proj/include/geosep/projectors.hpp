#pragma once

#include "geosep/curvature.hpp"
#include "geosep/transport.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace geosep::separation {

enum class Status { Separable, NotSeparable, FlatExceptional, Undetermined };

std::string to_string(Status s);
Status status_from_string(const std::string& s);

/// A g-self-adjoint idempotent A^k_l at a base point. `flat` marks a group of
/// directions on which the commutation constraints leave a rotation free.
struct Projector {
    Mat matrix;
    int rank = 0;
    Vec base;
    bool flat = false;
};

struct SolverOptions {
    /// Singular values below tol * sigma_max span the solution space.
    double tol = 1e-6;
    /// Smallest accepted ratio between the first excluded and the last
    /// included singular value; below it the split is ambiguous.
    double min_gap_ratio = 3.0;
    /// Dimensionless curvature |R| * L^2 (L the g-length of the grid
    /// diagonal) below which the region is treated as flat.
    double flat_threshold = 1e-6;
    /// Noise level of curvature_scale (e.g. from a split-half estimate);
    /// 0 when unknown. The region is also flat when the curvature is below
    /// flat_snr times this noise.
    double curvature_noise = 0.0;
    double flat_snr = 3.0;
    /// Eigenvalue gaps above this fraction of the spread separate clusters.
    double cluster_gap = 0.05;
    /// Relative coupling |P_a N P_b| above which clusters a, b are merged.
    double coupling_tol = 0.1;
    /// Curvature at x0 is the mean of the tensors at valid nodes within this
    /// many cells, each parallel transported to x0 along the straight
    /// segment. 0 uses the interpolated tensor alone.
    double average_radius = 0.0;
    int probe_points = 0;
    /// Probes are drawn from nodes within this many cells of the base point.
    int probe_radius = 2;
    int trials = 8;
    std::uint64_t seed = 1;
};

struct SolveResult {
    Status status = Status::Undetermined;
    std::vector<Projector> projectors;  // ordered by rank, largest first
    int nullity = 0;
    Vec singular_values;  // ascending, of the normalised stacked system
    double gap_ratio = 0.0;
    double curvature_scale = 0.0;  // |R| * L^2 at the base point
    double curvature_norm = 0.0;   // max Frobenius norm of the base slices
    double curvature_noise = 0.0;
    double idempotency_residual = 0.0;
    double commutation_residual = 0.0;  // against the base-point slices
    int probes_used = 0;
    int averaged_nodes = 0;
    std::string diagnostic;
};

/// Core solver on explicit curvature slices M(k, l) = R^k_{l m n} sharing a
/// base point with metric g. `curvature_scale` is |R| * L^2 for the flatness
/// test; probe slices add constraints but not to the reported residual.
SolveResult solve_slices(const std::vector<Mat>& base_slices, const std::vector<Mat>& probe_slices, const Mat& g,
                         double curvature_scale, const SolverOptions& opt);

/// Interpolates curvature and metric at x0, adds transported probe slices
/// and solves the commutation and self-adjointness constraints.
SolveResult solve_projectors(const geometry::CurvatureField& curv, const geometry::MetricField& metric,
                             const geometry::ConnectionField& conn, const Vec& x0, const SolverOptions& opt);

/// Pulls a (1,3) tensor at p back to x0, where t maps vectors at x0 to their
/// transports at p.
std::vector<double> pull_back_riemann(int n, const double* r, const Mat& t);

/// Curvature tensor at x0: interpolated, or with radius > 0 the mean over
/// valid nodes within `radius` cells of the nearest node (x0 included), each
/// transported to x0. Empty when x0 lies outside the valid region.
std::vector<double> curvature_at(const geometry::CurvatureField& curv, const geometry::ConnectionField& conn,
                                 const Vec& x0, double radius, int* averaged = nullptr);

/// All (m < n) slices of an interpolated curvature tensor.
std::vector<Mat> curvature_slices(int n, const double* riemann);

}  // namespace geosep::separation
