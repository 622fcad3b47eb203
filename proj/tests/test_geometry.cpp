#include "geosep/curvature.hpp"
#include "geosep/metric.hpp"
#include "geosep/rng.hpp"
#include "geosep/stimulus.hpp"
#include "geosep/transport.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

using namespace geosep;
using namespace geosep::geometry;

namespace {

constexpr double kPi = std::numbers::pi;

Mat sphere_lower(const Vec& x) {
    Mat g = Mat::Identity(2, 2);
    g(0, 0) = std::cos(x[1]) * std::cos(x[1]);
    return g;
}

// Analytic connection of the unit sphere in (longitude, latitude).
bool sphere_gamma(const Vec& x, double* g) {
    std::fill(g, g + 8, 0.0);
    g[1] = g[2] = -std::tan(x[1]);                // Gamma^0_{01}, Gamma^0_{10}
    g[4] = std::sin(x[1]) * std::cos(x[1]);       // Gamma^1_{00}
    return true;
}

bool interior(const GridSpec& grid, std::size_t node, int margin) {
    const auto idx = grid.multi_index(node);
    for (int a = 0; a < grid.ndim(); ++a)
        if (idx[a] < margin || idx[a] > grid.count[a] - 1 - margin) return false;
    return true;
}

double max_gamma_error(int count) {
    const auto grid = GridSpec::uniform(2, -1, 1, count);
    const auto conn = christoffel(sample_metric(grid, sphere_lower));
    double err = 0;
    double truth[8];
    for (std::size_t i = 0; i < grid.node_count(); ++i) {
        if (!interior(grid, i, 1)) continue;
        sphere_gamma(grid.position(i), truth);
        for (int c = 0; c < 8; ++c) err = std::max(err, std::abs(conn.gamma.at(i)[c] - truth[c]));
    }
    return err;
}

// Segments of two points whose finite-difference velocity is v.
Series velocity_series(const std::vector<std::pair<Vec, Vec>>& xv, double dt) {
    Series s;
    s.dim = static_cast<int>(xv.front().first.size());
    for (const auto& [x, v] : xv) {
        Segment seg;
        seg.dt = dt;
        seg.points = PointMatrix(2, s.dim);
        seg.points.row(0) = (x - 0.5 * dt * v).transpose();
        seg.points.row(1) = (x + 0.5 * dt * v).transpose();
        s.segments.push_back(seg);
    }
    return s;
}

// Lowered R_{klmn} = g_{kp} R^p_{lmn} for constant curvature K.
double constant_curvature(const Mat& g, int k, int l, int m, int n, double K) {
    return K * (g(k, m) * g(l, n) - g(k, n) * g(l, m));
}

}  // namespace

TEST_CASE("isotropic velocities give an identity metric") {
    auto rng = stream_rng(21, 99);
    std::normal_distribution<double> gauss;
    std::uniform_real_distribution<double> un(-0.9, 0.9);
    std::vector<std::pair<Vec, Vec>> xv;
    for (int i = 0; i < 40000; ++i) {
        Vec x(2), v(2);
        x << un(rng), un(rng);
        v << gauss(rng), gauss(rng);
        xv.push_back({x, v});
    }
    const auto grid = GridSpec::uniform(2, -1, 1, 5);
    MetricOptions o;
    o.smoothing_sigma = 0;
    const auto m = estimate_metric(velocity_series(xv, 0.01), grid, o);
    for (std::size_t i = 0; i < grid.node_count(); ++i) {
        REQUIRE(m.is_valid(i));
        const double se = 3.0 * std::sqrt(2.0 / m.count[i]);
        CHECK((Mat(m.contravariant(i)) - Mat::Identity(2, 2)).cwiseAbs().maxCoeff() < se);
        CHECK((Mat(m.contravariant(i)) * Mat(m.covariant(i)) - Mat::Identity(2, 2)).norm() < 1e-12);
    }
}

TEST_CASE("line velocity variance is kT") {
    auto cfg = stimulus::sphere_line_config(3);
    cfg.n_segments = 20000;
    const auto series = stimulus::generate_trajectory(cfg);
    const auto grid = GridSpec::from_quantiles(series, {6, 6, 6});
    MetricOptions o;
    o.smoothing_sigma = 0;
    const auto m = estimate_metric(series, grid, o);
    std::vector<double> g33;
    for (std::size_t i = 0; i < grid.node_count(); ++i)
        if (m.is_valid(i) && m.count[i] >= 200) g33.push_back(m.contravariant(i)(2, 2));
    REQUIRE(g33.size() > 20);
    std::nth_element(g33.begin(), g33.begin() + g33.size() / 2, g33.end());
    CHECK(g33[g33.size() / 2] == doctest::Approx(0.01).epsilon(0.05));
}

TEST_CASE("chunked accumulation equals a single pass") {
    auto cfg = stimulus::sphere_line_config(3);
    cfg.n_segments = 3000;
    const auto series = stimulus::generate_trajectory(cfg);
    const auto grid = GridSpec::from_quantiles(series, {5, 5, 5});
    const auto one = accumulate(series, grid, series.segments.size());
    const auto chunked = accumulate(series, grid, 37);

    GridAccumulator manual(grid);
    for (std::size_t s = 0; s < series.segments.size(); ++s) {
        GridAccumulator part(grid);
        part.add_segment(series.segments[s]);
        manual.merge(part);
    }
    for (std::size_t i = 0; i < grid.node_count(); ++i) {
        CHECK(one.cells[i].count == chunked.cells[i].count);
        CHECK(one.cells[i].count == manual.cells[i].count);
        if (one.cells[i].count < 2) continue;
        const Mat c = one.cells[i].covariance();
        CHECK((chunked.cells[i].covariance() - c).norm() <= 1e-12 * c.norm());
        CHECK((manual.cells[i].covariance() - c).norm() <= 1e-12 * c.norm());
    }

    CellAccumulator a, b, empty;
    Vec v(2);
    v << 1, 2;
    a.add(v);
    b.add(-v);
    b.add(v);
    const auto ab = merge_accumulators(a, b);
    CHECK(ab.count == 3);
    CHECK(merge_accumulators(ab, empty).covariance() == ab.covariance());
    CHECK(merge_accumulators(empty, ab).covariance() == ab.covariance());
}

TEST_CASE("constant and rescaled metrics") {
    const auto grid = GridSpec::uniform(3, -1, 1, 9);
    const auto flat = sample_metric(grid, [](const Vec&) {
        Mat g(3, 3);
        g << 2, 0.3, 0, 0.3, 1, 0.1, 0, 0.1, 1.5;
        return g;
    });
    const auto conn = christoffel(flat);
    const auto curv = riemann(conn);
    double gmax = 0, rmax = 0;
    for (std::size_t i = 0; i < grid.node_count(); ++i) {
        for (int c = 0; c < 27; ++c) gmax = std::max(gmax, std::abs(conn.gamma.at(i)[c]));
        for (int c = 0; c < 81; ++c) rmax = std::max(rmax, std::abs(curv.riemann.at(i)[c]));
    }
    CHECK(gmax <= 1e-10);
    CHECK(rmax <= 1e-10);

    const auto grid2 = GridSpec::uniform(2, -1, 1, 17);
    const auto a = christoffel(sample_metric(grid2, sphere_lower));
    const auto b = christoffel(sample_metric(grid2, [](const Vec& x) { return Mat(7.0 * sphere_lower(x)); }));
    for (std::size_t i = 0; i < grid2.node_count(); ++i)
        for (int c = 0; c < 8; ++c) CHECK(b.gamma.at(i)[c] == doctest::Approx(a.gamma.at(i)[c]).epsilon(1e-10));
}

TEST_CASE("sphere connection and curvature") {
    const auto grid = GridSpec::uniform(2, -1, 1, 64);
    const auto metric = sample_metric(grid, sphere_lower);
    const auto conn = christoffel(metric);
    const auto curv = riemann(conn);
    double gerr = 0, kerr = 0;
    double truth[8];
    for (std::size_t i = 0; i < grid.node_count(); ++i) {
        if (!interior(grid, i, 1)) continue;
        sphere_gamma(grid.position(i), truth);
        for (int c = 0; c < 8; ++c) gerr = std::max(gerr, std::abs(conn.gamma.at(i)[c] - truth[c]));
        if (!interior(grid, i, 2)) continue;
        const Mat g = metric.covariant(i);
        const double r0101 = (g * curv.slice(i, 0, 1))(0, 1);
        kerr = std::max(kerr, std::abs(r0101 / g.determinant() - 1.0));
    }
    CHECK(gerr <= 1e-3);
    CHECK(kerr <= 1e-2);
}

TEST_CASE("connection converges at second order") {
    const double e1 = max_gamma_error(17), e2 = max_gamma_error(33), e3 = max_gamma_error(65);
    CHECK(e1 / e2 == doctest::Approx(4.0).epsilon(0.15));
    CHECK(e2 / e3 == doctest::Approx(4.0).epsilon(0.15));
}

TEST_CASE("product metric has block-diagonal curvature") {
    const auto grid = GridSpec::uniform(3, -0.8, 0.8, 13);
    const auto curv = riemann(christoffel(sample_metric(grid, [](const Vec& x) {
        Mat g = Mat::Identity(3, 3) * 100.0;
        g(0, 0) *= std::cos(x[1]) * std::cos(x[1]);
        g(2, 2) *= 1.0 + 0.3 * x[2] * x[2];
        return g;
    })));
    for (std::size_t i = 0; i < grid.node_count(); ++i) {
        if (!interior(grid, i, 2)) continue;
        const double* r = curv.riemann.at(i);
        double scale = 0, mixed = 0;
        for (int c = 0; c < 81; ++c) {
            const int k = c / 27, l = c / 9 % 3, m = c / 3 % 3, n = c % 3;
            scale = std::max(scale, std::abs(r[c]));
            if (k == 2 || l == 2 || m == 2 || n == 2) mixed = std::max(mixed, std::abs(r[c]));
        }
        CHECK(mixed <= 1e-10 * std::max(1.0, scale));
    }
}

TEST_CASE("curvature symmetries on a generic metric") {
    const auto grid = GridSpec::uniform(3, -1, 1, 11);
    const auto metric = sample_metric(grid, [](const Vec& x) {
        Mat g = Mat::Identity(3, 3);
        g(0, 1) = g(1, 0) = 0.3 * std::sin(x[2] + x[0]);
        g(0, 0) += 0.5 * x[1] * x[1];
        g(2, 2) = std::exp(0.4 * x[0] * x[1]);
        g(1, 2) = g(2, 1) = 0.2 * std::cos(x[0]);
        return g;
    });
    const auto curv = riemann(christoffel(metric));
    double norm = 0;
    for (std::size_t i = 0; i < grid.node_count(); ++i) {
        if (!curv.riemann.is_valid(i)) continue;
        const double* r = curv.riemann.at(i);
        auto R = [&](int k, int l, int m, int n) { return r[((k * 3 + l) * 3 + m) * 3 + n]; };
        for (int k = 0; k < 3; ++k)
            for (int l = 0; l < 3; ++l)
                for (int m = 0; m < 3; ++m)
                    for (int n = 0; n < 3; ++n) CHECK(R(k, l, m, n) == -R(k, l, n, m));
        CHECK(bianchi_residual(curv, i) < 1e-10);
        norm = std::max(norm, curvature_norm(curv, metric.covariant(i), metric.contravariant(i), i));
    }
    CHECK(norm > 0.1);
}

TEST_CASE("transformation law under a diffeomorphism") {
    // x = h(y); the metric in y is J^T g(h(y)) J with J = dh/dy.
    auto rng = stream_rng(31, 99);
    std::uniform_real_distribution<double> un(0.05, 0.15);
    const double a = un(rng), b = un(rng), c = un(rng);
    auto h = [=](const Vec& y) {
        Vec x(2);
        x << y[0] + a * std::sin(y[1]), y[1] + b * y[0] * y[0] + c * y[0] * y[1];
        return x;
    };
    auto jac = [=](const Vec& y) {
        Mat j(2, 2);
        j << 1, a * std::cos(y[1]), 2 * b * y[0] + c * y[1], 1 + c * y[0];
        return j;
    };
    const auto grid = GridSpec::uniform(2, -0.7, 0.7, 65);
    const auto metric = sample_metric(grid, [&](const Vec& y) {
        const Mat j = jac(y);
        return Mat(j.transpose() * sphere_lower(h(y)) * j);
    });
    const auto curv = riemann(christoffel(metric));
    double err = 0;
    for (std::size_t i = 0; i < grid.node_count(); ++i) {
        if (!interior(grid, i, 2)) continue;
        const Vec y = grid.position(i);
        const Mat j = jac(y), gx = sphere_lower(h(y));
        const Mat gy = metric.covariant(i);
        const double* r = curv.riemann.at(i);
        for (int k = 0; k < 2; ++k)
            for (int l = 0; l < 2; ++l)
                for (int m = 0; m < 2; ++m)
                    for (int n = 0; n < 2; ++n) {
                        // Fully covariant tensor: R'_{klmn} = J^p_k J^q_l J^s_m J^t_n R_{pqst}.
                        double expect = 0;
                        for (int p = 0; p < 2; ++p)
                            for (int q = 0; q < 2; ++q)
                                for (int s = 0; s < 2; ++s)
                                    for (int t = 0; t < 2; ++t)
                                        expect += j(p, k) * j(q, l) * j(s, m) * j(t, n) *
                                                  constant_curvature(gx, p, q, s, t, 1.0);
                        double got = 0;
                        for (int p = 0; p < 2; ++p) got += gy(k, p) * r[((p * 2 + l) * 2 + m) * 2 + n];
                        err = std::max(err, std::abs(got - expect));
                    }
    }
    CHECK(err < 1e-2);
}

TEST_CASE("holonomy around a latitude circle") {
    const int steps = 10000;
    std::vector<Vec> path;
    for (int i = 0; i <= steps; ++i) {
        Vec x(2);
        x << 2 * kPi * i / steps, 0.5;
        path.push_back(x);
    }
    Vec v(2);
    v << 0, 1;
    const Vec w = parallel_transport(sphere_gamma, v, path);
    // Angle in the orthonormal frame (e_lon / cos(lat), e_lat), mod 2 pi.
    double angle = std::atan2(w[0] * std::cos(0.5), w[1]);
    if (angle < 0) angle += 2 * kPi;
    CHECK(std::abs(angle - 2 * kPi * std::sin(0.5)) <= 1e-3);
    CHECK(std::sqrt(w[0] * w[0] * std::cos(0.5) * std::cos(0.5) + w[1] * w[1]) == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("transport preserves inner products") {
    auto rng = stream_rng(41, 99);
    std::uniform_real_distribution<double> un(-0.5, 0.5);
    std::vector<Vec> path{Vec::Zero(2)};
    for (int i = 0; i < 2000; ++i) {
        Vec step(2);
        step << un(rng), un(rng);
        Vec next = path.back() + 0.01 * step;
        next[1] = std::clamp(next[1], -1.0, 1.0);
        path.push_back(next);
    }
    Vec u(2), v(2);
    u << 1.0, 0.2;
    v << -0.3, 0.7;
    const Vec tu = parallel_transport(sphere_gamma, u, path), tv = parallel_transport(sphere_gamma, v, path);
    const Mat g0 = sphere_lower(path.front()), g1 = sphere_lower(path.back());
    CHECK(tu.dot(g1 * tv) == doctest::Approx(u.dot(g0 * v)).epsilon(1e-5));
    CHECK(tu.dot(g1 * tu) == doctest::Approx(u.dot(g0 * u)).epsilon(1e-5));

    const auto grid = GridSpec::uniform(2, -1.2, 1.2, 49);
    const auto conn = christoffel(sample_metric(grid, sphere_lower));
    CHECK_THROWS_AS(parallel_transport(field_connection(conn), u, {Vec::Zero(2), Vec::Constant(2, 5.0)}), TransportError);
}

TEST_CASE("geodesics are great circles") {
    auto on_sphere = [](const Vec& x) {
        return Eigen::Vector3d(std::cos(x[1]) * std::cos(x[0]), std::cos(x[1]) * std::sin(x[0]), std::sin(x[1]));
    };
    Vec x0 = Vec::Zero(2), d(2);
    d << 0.01, 0;
    const auto eq = geodesic_step(sphere_gamma, x0, d, 150);
    CHECK_FALSE(eq.truncated);
    for (const auto& p : eq.points) CHECK(std::abs(p[1]) < 1e-12);
    CHECK(eq.points.back()[0] == doctest::Approx(1.5).epsilon(1e-9));

    // Plane of the great circle through (1, 0, 0) with tangent (0, 0.6, 0.8).
    const Eigen::Vector3d n = Eigen::Vector3d(1, 0, 0).cross(Eigen::Vector3d(0, 0.6, 0.8));
    auto drift = [&](double h, double& arc) {
        Vec step(2);
        step << 0.6 * h, 0.8 * h;
        const auto path = geodesic_step(sphere_gamma, x0, step, static_cast<int>(std::lround(1.0 / h)));
        double off = 0;
        arc = 0;
        for (std::size_t i = 0; i < path.points.size(); ++i) {
            off = std::max(off, std::abs(n.dot(on_sphere(path.points[i]))));
            if (i) arc += (on_sphere(path.points[i]) - on_sphere(path.points[i - 1])).norm();
        }
        return off;
    };
    double arc1 = 0, arc2 = 0;
    const double off1 = drift(0.01, arc1), off2 = drift(0.005, arc2);
    CHECK(off1 < 1e-4);
    CHECK(off1 / off2 == doctest::Approx(4.0).epsilon(0.2));
    CHECK(arc2 == doctest::Approx(1.0).epsilon(1e-4));
}

TEST_CASE("smoothing reproduces quadratic metrics") {
    const auto grid = GridSpec::uniform(2, -1, 1, 15);
    auto lower = [](const Vec& x) {
        Mat g(2, 2);
        g << 2 + 0.3 * x[0] * x[0] - 0.1 * x[1], 0.2 * x[0] * x[1], 0.2 * x[0] * x[1], 1.5 + 0.2 * x[1] * x[1];
        return g;
    };
    auto m = sample_metric(grid, lower);
    smooth_metric_local(m, 2.0, 2, false);
    for (std::size_t i = 0; i < grid.node_count(); ++i) {
        REQUIRE(m.is_valid(i));
        CHECK((Mat(m.covariant(i)) - lower(grid.position(i))).norm() < 1e-10);
        CHECK((Mat(m.contravariant(i)) * Mat(m.covariant(i)) - Mat::Identity(2, 2)).norm() < 1e-10);
    }
}

TEST_CASE("sparse cells are invalid") {
    std::vector<std::pair<Vec, Vec>> xv;
    for (int i = 0; i < 30; ++i) xv.push_back({Vec::Constant(2, -0.9), Vec{{i % 2 ? 1.0 : -1.0, i / 2 % 2 ? 1.0 : -1.0}}});
    for (int i = 0; i < 5; ++i) xv.push_back({Vec::Constant(2, 0.9), Vec::Constant(2, i % 2 ? 1.0 : -0.5)});
    const auto grid = GridSpec::uniform(2, -1, 1, 5);
    const auto acc = accumulate(velocity_series(xv, 0.1), grid);
    const auto m = metric_from_accumulator(acc, 20);
    CHECK(m.is_valid(grid.nearest_node(Vec::Constant(2, -0.9))));
    CHECK_FALSE(m.is_valid(grid.nearest_node(Vec::Constant(2, 0.9))));
    CHECK(grid.nearest_node(Vec::Constant(2, 5.0)) == -1);
}
