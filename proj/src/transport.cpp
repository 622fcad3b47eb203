#include "geosep/transport.hpp"

namespace geosep::geometry {

namespace {

// G^k_l = Gamma^k_{lm} dx^m.
Mat connection_matrix(const std::vector<double>& gamma, const Vec& dx) {
    const int n = static_cast<int>(dx.size());
    Mat g = Mat::Zero(n, n);
    for (int k = 0; k < n; ++k)
        for (int l = 0; l < n; ++l) {
            double v = 0.0;
            for (int m = 0; m < n; ++m) v += gamma[(k * n + l) * n + m] * dx[m];
            g(k, l) = v;
        }
    return g;
}

Mat cayley(const Mat& g) {
    const Mat id = Mat::Identity(g.rows(), g.cols());
    return (id + 0.5 * g).partialPivLu().solve(id - 0.5 * g);
}

}  // namespace

ConnectionFn field_connection(const ConnectionField& conn) {
    return [&conn](const Vec& x, double* gamma) { return conn.gamma.interpolate(x, gamma); };
}

bool transport_step(const ConnectionFn& conn, const Vec& x0, const Vec& x1, Mat& frame) {
    const int n = static_cast<int>(x0.size());
    std::vector<double> gamma(static_cast<std::size_t>(n) * n * n);
    if (!conn(0.5 * (x0 + x1), gamma.data())) return false;
    frame = cayley(connection_matrix(gamma, x1 - x0)) * frame;
    return true;
}

Vec parallel_transport(const ConnectionFn& conn, const Vec& v, const std::vector<Vec>& path) {
    Mat f = v;
    for (std::size_t i = 0; i + 1 < path.size(); ++i)
        if (!transport_step(conn, path[i], path[i + 1], f))
            throw TransportError("parallel transport left the region where the connection is known");
    return f.col(0);
}

bool geodesic_advance(const ConnectionFn& conn, Vec& x, Vec& delta, Mat* frame) {
    const int n = static_cast<int>(x.size());
    std::vector<double> gamma(static_cast<std::size_t>(n) * n * n);
    Vec x1 = x + delta;
    Mat step;
    for (int sweep = 0; sweep < 6; ++sweep) {
        if (!conn(0.5 * (x + x1), gamma.data())) return false;
        step = cayley(connection_matrix(gamma, x1 - x));
        const Vec next = x + 0.5 * (delta + step * delta);
        const double change = (next - x1).norm();
        x1 = next;
        if (change <= 1e-14 * (1.0 + delta.norm())) break;
    }
    if (!conn(0.5 * (x + x1), gamma.data())) return false;
    step = cayley(connection_matrix(gamma, x1 - x));
    delta = step * delta;
    if (frame) *frame = step * *frame;
    x = x1;
    return true;
}

GeodesicPath geodesic_step(const ConnectionFn& conn, const Vec& x, const Vec& delta, int steps) {
    GeodesicPath path;
    path.points.push_back(x);
    Vec p = x, d = delta;
    std::vector<double> gamma(static_cast<std::size_t>(x.size() * x.size() * x.size()));
    if (!conn(x, gamma.data())) {
        path.truncated = steps > 0;
        return path;
    }
    for (int s = 0; s < steps; ++s) {
        if (!geodesic_advance(conn, p, d)) {
            path.truncated = true;
            break;
        }
        path.points.push_back(p);
    }
    return path;
}

}  // namespace geosep::geometry
