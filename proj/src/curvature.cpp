#include "geosep/curvature.hpp"

#include "geosep/parallel.hpp"

#include <cmath>

namespace geosep::geometry {

void christoffel_from_derivatives(const Mat& upper, const std::vector<Mat>& dg, double* gamma) {
    const int n = static_cast<int>(upper.rows());
    for (int k = 0; k < n; ++k)
        for (int l = 0; l < n; ++l)
            for (int m = l; m < n; ++m) {
                double acc = 0.0;
                for (int q = 0; q < n; ++q) acc += upper(k, q) * (dg[m](q, l) + dg[l](q, m) - dg[q](l, m));
                gamma[(k * n + l) * n + m] = gamma[(k * n + m) * n + l] = 0.5 * acc;
            }
}

void riemann_from_connection(int n, const double* gamma, const std::vector<const double*>& dgamma, double* r) {
    auto G = [&](int k, int l, int m) { return gamma[(k * n + l) * n + m]; };
    auto dG = [&](int a, int k, int l, int m) { return dgamma[a][(k * n + l) * n + m]; };
    for (int k = 0; k < n; ++k)
        for (int l = 0; l < n; ++l) {
            double* row = r + (k * n + l) * n * n;
            for (int m = 0; m < n; ++m) {
                row[m * n + m] = 0.0;
                for (int q = m + 1; q < n; ++q) {
                    double v = -dG(q, k, l, m) + dG(m, k, l, q);
                    for (int i = 0; i < n; ++i) v += G(k, i, m) * G(i, l, q) - G(k, i, q) * G(i, l, m);
                    row[m * n + q] = v;
                    row[q * n + m] = -v;
                }
            }
        }
}

ConnectionField christoffel(const MetricField& metric) {
    const int n = metric.dim();
    ConnectionField conn{TensorField(metric.grid(), n * n * n)};
    parallel_for(metric.grid().node_count(), [&](std::size_t i) {
        if (!metric.is_valid(i)) return;
        std::vector<Mat> dg(n, Mat(n, n));
        for (int a = 0; a < n; ++a)
            if (!metric.lower.derivative(i, a, dg[a].data())) return;
        christoffel_from_derivatives(metric.contravariant(i), dg, conn.gamma.at(i));
        conn.gamma.valid[i] = 1;
    });
    return conn;
}

CurvatureField riemann(const ConnectionField& conn) {
    const int n = conn.dim();
    const int c3 = n * n * n;
    CurvatureField curv{TensorField(conn.grid(), c3 * n)};
    parallel_for(conn.grid().node_count(), [&](std::size_t i) {
        if (!conn.gamma.is_valid(i)) return;
        std::vector<double> buf(static_cast<std::size_t>(c3) * n);
        std::vector<const double*> d(n);
        for (int a = 0; a < n; ++a) {
            if (!conn.gamma.derivative(i, a, buf.data() + a * c3)) return;
            d[a] = buf.data() + a * c3;
        }
        riemann_from_connection(n, conn.gamma.at(i), d, curv.riemann.at(i));
        curv.riemann.valid[i] = 1;
    });
    return curv;
}

Mat CurvatureField::slice(std::size_t node, int m, int np) const {
    const int n = dim();
    Mat s(n, n);
    const double* r = riemann.at(node);
    for (int k = 0; k < n; ++k)
        for (int l = 0; l < n; ++l) s(k, l) = r[((k * n + l) * n + m) * n + np];
    return s;
}

double bianchi_residual(const CurvatureField& curv, std::size_t node) {
    const int n = curv.dim();
    const double* r = curv.riemann.at(node);
    auto R = [&](int k, int l, int m, int q) { return r[((k * n + l) * n + m) * n + q]; };
    double worst = 0.0;
    for (int k = 0; k < n; ++k)
        for (int l = 0; l < n; ++l)
            for (int m = 0; m < n; ++m)
                for (int q = 0; q < n; ++q) worst = std::max(worst, std::abs(R(k, l, m, q) + R(k, m, q, l) + R(k, q, l, m)));
    return worst;
}

double curvature_norm(const CurvatureField& curv, const Mat& lower, const Mat& upper, std::size_t node) {
    return curvature_norm(curv.dim(), curv.riemann.at(node), lower, upper);
}

double curvature_norm(int n, const double* r, const Mat& lower, const Mat& upper) {
    auto R = [&](int k, int l, int m, int q) { return r[((k * n + l) * n + m) * n + q]; };
    // Fully lowered and fully raised forms, each built with one index moved.
    const std::size_t n4 = static_cast<std::size_t>(n) * n * n * n;
    std::vector<double> low(n4, 0.0), high(n4, 0.0);
    auto idx = [&](int a, int b, int c, int d) { return ((static_cast<std::size_t>(a) * n + b) * n + c) * n + d; };
    for (int a = 0; a < n; ++a)
        for (int b = 0; b < n; ++b)
            for (int c = 0; c < n; ++c)
                for (int d = 0; d < n; ++d) {
                    double v = 0.0;
                    for (int e = 0; e < n; ++e) v += lower(a, e) * R(e, b, c, d);
                    low[idx(a, b, c, d)] = v;
                }
    // R^{abcd} = g^{bf} g^{cp} g^{dq} R^a_{fpq}, contracted one index at a time.
    std::vector<double> t1(n4, 0.0), t2(n4, 0.0);
    for (int a = 0; a < n; ++a)
        for (int b = 0; b < n; ++b)
            for (int c = 0; c < n; ++c)
                for (int d = 0; d < n; ++d) {
                    double v = 0.0;
                    for (int q = 0; q < n; ++q) v += upper(d, q) * R(a, b, c, q);
                    t1[idx(a, b, c, d)] = v;
                }
    for (int a = 0; a < n; ++a)
        for (int b = 0; b < n; ++b)
            for (int c = 0; c < n; ++c)
                for (int d = 0; d < n; ++d) {
                    double v = 0.0;
                    for (int p = 0; p < n; ++p) v += upper(c, p) * t1[idx(a, b, p, d)];
                    t2[idx(a, b, c, d)] = v;
                }
    for (int a = 0; a < n; ++a)
        for (int b = 0; b < n; ++b)
            for (int c = 0; c < n; ++c)
                for (int d = 0; d < n; ++d) {
                    double v = 0.0;
                    for (int f = 0; f < n; ++f) v += upper(b, f) * t2[idx(a, f, c, d)];
                    high[idx(a, b, c, d)] = v;
                }
    double s = 0.0;
    for (std::size_t i = 0; i < n4; ++i) s += low[i] * high[i];
    return std::sqrt(std::max(0.0, s));
}

}  // namespace geosep::geometry
