#pragma once

#include "geosep/metric.hpp"

namespace geosep::geometry {

/// Gamma^k_{lm} per node, layout [(k*n + l)*n + m].
struct ConnectionField {
    TensorField gamma;

    const GridSpec& grid() const { return gamma.grid; }
    int dim() const { return gamma.grid.ndim(); }
};

/// R^k_{lmn} per node, layout [((k*n + l)*n + m)*n + n'].
struct CurvatureField {
    TensorField riemann;

    const GridSpec& grid() const { return riemann.grid; }
    int dim() const { return riemann.grid.ndim(); }
    /// The (m, n') slice as a matrix M(k, l) = R^k_{l m n'}.
    Mat slice(std::size_t node, int m, int np) const;
};

ConnectionField christoffel(const MetricField& metric);

CurvatureField riemann(const ConnectionField& conn);

/// Contraction of the connection formula given g^{kn} and the metric
/// derivatives dg[m] = d g_{..} / dx_m (each n x n, column-major).
void christoffel_from_derivatives(const Mat& upper, const std::vector<Mat>& dg, double* gamma);

/// Curvature from the connection and its derivatives dgamma[a] = dGamma/dx_a.
void riemann_from_connection(int n, const double* gamma, const std::vector<const double*>& dgamma, double* r);

/// Largest |R^k_{lmn} + R^k_{mnl} + R^k_{nlm}| at a node.
double bianchi_residual(const CurvatureField& curv, std::size_t node);

/// Invariant sqrt(R_abcd R^abcd) at a node, using the metric there.
double curvature_norm(const CurvatureField& curv, const Mat& lower, const Mat& upper, std::size_t node);
double curvature_norm(int n, const double* riemann, const Mat& lower, const Mat& upper);

}  // namespace geosep::geometry
