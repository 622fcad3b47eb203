#pragma once

#include "geosep/curvature.hpp"

#include <functional>
#include <vector>

namespace geosep::geometry {

/// Evaluates Gamma^k_{lm} at x into gamma ([(k*n + l)*n + m]); returns false
/// outside the region where the connection is known.
using ConnectionFn = std::function<bool(const Vec& x, double* gamma)>;

/// Multilinear interpolation of a grid connection. The field must outlive
/// the returned callable.
ConnectionFn field_connection(const ConnectionField& conn);

/// Transports the columns of `frame` along the straight step x0 -> x1 with
/// the implicit midpoint rule (I + G/2) v' = (I - G/2) v, where
/// G^k_l = Gamma^k_{lm}(midpoint) dx^m. Returns false if the midpoint is
/// outside the connection's domain.
bool transport_step(const ConnectionFn& conn, const Vec& x0, const Vec& x1, Mat& frame);

/// Transports v along a polyline; throws TransportError on leaving the domain.
Vec parallel_transport(const ConnectionFn& conn, const Vec& v, const std::vector<Vec>& path);

/// One discrete geodesic step from x with tangent delta: the tangent is
/// transported along its own step (implicit midpoint, a few fixed-point
/// sweeps). `frame`, if given, is transported alongside. Returns false and
/// leaves the arguments untouched if the step leaves the domain.
bool geodesic_advance(const ConnectionFn& conn, Vec& x, Vec& delta, Mat* frame = nullptr);

struct GeodesicPath {
    std::vector<Vec> points;  // starts with the initial point
    bool truncated = false;
};

GeodesicPath geodesic_step(const ConnectionFn& conn, const Vec& x, const Vec& delta, int steps);

}  // namespace geosep::geometry
