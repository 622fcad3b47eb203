#include "checks.hpp"

#include "geosep/io.hpp"
#include "geosep/rng.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <numbers>
#include <random>

namespace geosep::acceptance {

using namespace geometry;
using separation::Status;
namespace fs = std::filesystem;

namespace {

constexpr double kPi = std::numbers::pi;

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

bool interior(const GridSpec& grid, std::size_t node, int margin) {
    const auto idx = grid.multi_index(node);
    for (int a = 0; a < grid.ndim(); ++a)
        if (idx[a] < margin || idx[a] > grid.count[a] - 1 - margin) return false;
    return true;
}

Mat sphere2(const Vec& x) {
    Mat g = Mat::Identity(2, 2);
    g(0, 0) = std::cos(x[1]) * std::cos(x[1]);
    return g;
}

Mat sphere_line(const Vec& x) {
    Mat g = Mat::Identity(3, 3) * 100.0;
    g(0, 0) *= std::cos(x[1]) * std::cos(x[1]);
    return g;
}

bool sphere_gamma(const Vec& x, double* g) {
    std::fill(g, g + 8, 0.0);
    g[1] = g[2] = -std::tan(x[1]);
    g[4] = std::sin(x[1]) * std::cos(x[1]);
    return true;
}

// Smooth SPD metric with seeded coefficients: M M^T + I/2 with
// M = I + 0.3 sin(W x + phase) entrywise.
std::function<Mat(const Vec&)> random_metric(std::uint64_t seed) {
    auto rng = stream_rng(seed, 99);
    std::normal_distribution<double> g;
    std::uniform_real_distribution<double> ph(0, 2 * kPi);
    std::vector<Vec> w(9, Vec(3));
    std::vector<double> phase(9);
    for (int i = 0; i < 9; ++i) {
        for (int a = 0; a < 3; ++a) w[i][a] = g(rng);
        phase[i] = ph(rng);
    }
    return [w, phase](const Vec& x) {
        Mat m = Mat::Identity(3, 3);
        for (int i = 0; i < 9; ++i) m(i / 3, i % 3) += 0.3 * std::sin(w[i].dot(x) + phase[i]);
        return Mat(m * m.transpose() + 0.5 * Mat::Identity(3, 3));
    };
}

struct Fields {
    MetricField metric;
    ConnectionField conn;
    CurvatureField curv;
};

Fields analytic(const std::function<Mat(const Vec&)>& lower, int dim, int count) {
    Fields f;
    f.metric = sample_metric(GridSpec::uniform(dim, -1, 1, count), lower);
    f.conn = christoffel(f.metric);
    f.curv = riemann(f.conn);
    return f;
}

Vec base3() {
    Vec x(3);
    x << 0.1, 0.2, 0.05;
    return x;
}

double transport_angle(int steps) {
    std::vector<Vec> path;
    path.reserve(steps + 1);
    for (int i = 0; i <= steps; ++i) {
        Vec x(2);
        x << 2 * kPi * i / steps, 0.5;
        path.push_back(x);
    }
    Vec v(2);
    v << 0, 1;
    const Vec w = parallel_transport(sphere_gamma, v, path);
    double a = std::atan2(w[0] * std::cos(0.5), w[1]);
    return a < 0 ? a + 2 * kPi : a;
}

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

Outcome metric_oracle(std::size_t segments) {
    const auto t0 = std::chrono::steady_clock::now();
    auto cfg = stimulus::sphere_line_config(3);
    cfg.n_segments = segments;
    const auto series = stimulus::generate_trajectory(cfg);
    const auto grid = GridSpec::from_quantiles(series, {16, 16, 16});
    const auto m = estimate_metric(series, grid, MetricOptions{});
    const double secs = seconds_since(t0);

    std::vector<double> err;
    for (std::size_t i = 0; i < grid.node_count(); ++i) {
        if (!m.is_valid(i) || m.count[i] < 50) continue;
        const Mat truth = cfg.source_metric(grid.position(i)).inverse();  // kT mu^-1
        err.push_back((Mat(m.contravariant(i)) - truth).norm() / truth.norm());
    }
    if (err.empty()) return {false, "no cell reached 50 samples"};
    std::sort(err.begin(), err.end());
    const double median = err[err.size() / 2];
    return {cfg.kT == 0.01 && median <= 0.10 && secs <= 120.0,
            fmt("median rel. Frobenius error %.4f (limit 0.10) over %zu cells, kT %.3g, %zu segments, %.1f s (limit 120)",
                median, err.size(), cfg.kT, segments, secs)};
}

Outcome analytic_geometry() {
    const auto grid = GridSpec::uniform(2, -1, 1, 64);
    const auto metric = sample_metric(grid, sphere2);
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
        kerr = std::max(kerr, std::abs((g * curv.slice(i, 0, 1))(0, 1) / g.determinant() - 1.0));
    }

    const auto fgrid = GridSpec::uniform(3, -1, 1, 12);
    const auto flat = sample_metric(fgrid, [](const Vec&) {
        Mat g(3, 3);
        g << 2, 0.3, 0, 0.3, 1, 0.1, 0, 0.1, 1.5;
        return g;
    });
    const auto fconn = christoffel(flat);
    const auto fcurv = riemann(fconn);
    double fg = 0, fr = 0;
    for (std::size_t i = 0; i < fgrid.node_count(); ++i) {
        fg = std::max(fg, Eigen::Map<const Vec>(fconn.gamma.at(i), 27).norm());
        fr = std::max(fr, Eigen::Map<const Vec>(fcurv.riemann.at(i), 81).norm());
    }
    return {gerr <= 1e-3 && kerr <= 1e-2 && fg <= 1e-10 && fr <= 1e-10,
            fmt("sphere 64^2: max |dGamma| %.3g (limit 1e-3), max |K - 1| %.3g (limit 1e-2); flat: |Gamma| %.3g, |R| "
                "%.3g (limit 1e-10)",
                gerr, kerr, fg, fr)};
}

Outcome holonomy() {
    const double expect = 2 * kPi * std::sin(0.5);
    const double coarse = transport_angle(10000), fine = transport_angle(1000000);
    const double err = std::abs(coarse - expect), vs_fine = std::abs(coarse - fine);
    return {err <= 1e-3 && vs_fine <= 1e-3,
            fmt("angle %.8f with 1e4 steps, %.8f with 1e6 steps, 2 pi sin(0.5) = %.8f; error %.3g (limit 1e-3)", coarse,
                fine, expect, err)};
}

Outcome projector_solver() {
    const auto sl = analytic(sphere_line, 3, 21);
    const auto res = separation::solve_projectors(sl.curv, sl.metric, sl.conn, base3(), {});
    bool ok = res.status == Status::Separable && res.projectors.size() == 2 && res.projectors[0].rank == 2 &&
              res.projectors[1].rank == 1;
    double complement = 1.0;
    if (res.projectors.size() == 2)
        complement = (res.projectors[0].matrix + res.projectors[1].matrix - Mat::Identity(3, 3)).norm();
    ok = ok && complement <= 1e-8 && res.idempotency_residual <= 1e-8 &&
         res.commutation_residual <= 1e-8 * res.curvature_norm;

    const auto flat = analytic([](const Vec&) { return Mat(Mat::Identity(3, 3) * 2.0); }, 3, 11);
    const auto fres = separation::solve_projectors(flat.curv, flat.metric, flat.conn, base3(), {});
    const auto rnd = analytic(random_metric(2024), 3, 21);
    const auto rres = separation::solve_projectors(rnd.curv, rnd.metric, rnd.conn, base3(), {});
    ok = ok && fres.status == Status::FlatExceptional && rres.status == Status::NotSeparable;
    return {ok, fmt("sphere x line: %s, %zu projectors, ranks (%d,%d), |P1+P2-I| %.2g, idempotency %.2g, commutation "
                    "%.2g (limit %.2g); flat: %s; random seeded metric: %s",
                    to_string(res.status).c_str(), res.projectors.size(),
                    res.projectors.empty() ? 0 : res.projectors[0].rank,
                    res.projectors.size() < 2 ? 0 : res.projectors[1].rank, complement, res.idempotency_residual,
                    res.commutation_residual, 1e-8 * res.curvature_norm, to_string(fres.status).c_str(),
                    to_string(rres.status).c_str())};
}

DeskRun run_desk(const std::string& dir) {
    DeskRun r;
    r.dir = dir;
    r.cfg = pipeline::default_config();
    fs::remove_all(dir);
    const auto t0 = std::chrono::steady_clock::now();
    try {
        r.code = pipeline::run_stage(pipeline::Stage::RunAll, r.cfg, dir);
        r.seconds = seconds_since(t0);
        const fs::path out(dir);
        r.report = separation::read_report(io::load_text((out / pipeline::files::kReport).string()));
        if (r.code != 0) return r;

        auto cfg = pipeline::parse_config(io::load_text((out / pipeline::files::kConfig).string()));
        if (!cfg.rig) throw ConfigError("output config has no frozen rig");
        cfg.rig->factors = cfg.stimulus.factors;
        const auto model = io::load_embedding((out / pipeline::files::kEmbedding).string());
        auto chart = io::load_chart((out / pipeline::files::kChart).string());
        chart.build_index();
        const auto map = pipeline::measurement_map(cfg, &*cfg.rig, &model);
        r.evaluation = pipeline::evaluate_test_lines(cfg, chart, map);
        r.evaluation_matches_file =
            pipeline::write_evaluation(*r.evaluation) == io::load_text((out / pipeline::files::kEvaluation).string());
    } catch (const std::exception& e) {
        r.error = e.what();
    }
    return r;
}

Outcome block_diagonality(const DeskRun& run) {
    if (!run.report) return {false, "desk run produced no report: " + run.error};
    const auto& root = *run.report;
    const auto sizes = root.block_sizes();
    const bool ok = root.status == Status::Separable && sizes == std::vector<int>{2, 1} && root.score.off_block <= 0.05;
    std::string blocks;
    for (int s : sizes) blocks += (blocks.empty() ? "" : ",") + std::to_string(s);
    return {ok, fmt("status %s, blocks (%s), off-block score %.4f (limit 0.05), dependence %.4f, %zu segments, run %.0f s",
                    to_string(root.status).c_str(), blocks.c_str(), root.score.off_block, root.score.dependence,
                    root.segments, run.seconds)};
}

Outcome test_line_reproduction(const DeskRun& run) {
    if (!run.evaluation) return {false, "no evaluation (exit code " + std::to_string(run.code) + ") " + run.error};
    const auto& e = *run.evaluation;
    // Latitude lines keep s_theta, longitude lines keep s_phi.
    double lat = 0, lon = 0;
    for (const auto& l : e.lines) {
        const int axis = l.family == "lat" ? 1 : l.family == "lon" ? 0 : -1;
        if (axis < 0) continue;
        double lo = 1e300, hi = -1e300;
        for (const auto& s : l.s)
            if (s) lo = std::min(lo, (*s)[axis]), hi = std::max(hi, (*s)[axis]);
        if (hi >= lo) (axis == 1 ? lat : lon) = std::max(axis == 1 ? lat : lon, hi - lo);
    }
    const double limit = 0.05 * e.patch_size;
    const double coverage = double(e.mapped) / double(e.mapped + e.missing);
    const bool ok = e.pass && run.evaluation_matches_file && e.rms_relative <= 0.05 && e.worst_sagitta <= 0.05 &&
                    e.grid_spread <= limit && lat <= limit && lon <= limit;
    return {ok, fmt("RMS %.4f = %.2f%% of patch %.2f (limit 5%%), worst sagitta %.4f (limit 0.05), coverage %.1f%%; "
                    "grid: s_B spread %.4f, s_theta spread on latitudes %.4f, s_phi spread on longitudes %.4f (limit "
                    "%.3f)%s",
                    e.rms, 100 * e.rms_relative, e.patch_size, e.worst_sagitta, 100 * coverage, e.grid_spread, lat, lon,
                    limit, run.evaluation_matches_file ? "" : "; evaluation file differs")};
}

Outcome accumulator_merge() {
    auto cfg = stimulus::sphere_line_config(3);
    cfg.n_segments = 20000;
    const auto series = stimulus::generate_trajectory(cfg);
    const auto grid = GridSpec::from_quantiles(series, {8, 8, 8});
    const auto single = accumulate(series, grid, series.segments.size());

    // Random partition merged in shuffled order.
    auto rng = stream_rng(7, 99);
    std::vector<GridAccumulator> parts;
    for (std::size_t s = 0; s < series.segments.size();) {
        const std::size_t len = 1 + rng() % 500;
        GridAccumulator part(grid);
        for (std::size_t e = std::min(series.segments.size(), s + len); s < e; ++s) part.add_segment(series.segments[s]);
        parts.push_back(std::move(part));
    }
    std::shuffle(parts.begin(), parts.end(), rng);
    GridAccumulator merged(grid);
    for (const auto& p : parts) merged.merge(p);

    double worst = 0;
    for (int chunk : {1, 97}) {
        const auto chunked = accumulate(series, grid, chunk);
        for (std::size_t i = 0; i < grid.node_count(); ++i) {
            if (single.cells[i].count < 2) continue;
            const Mat c = single.cells[i].covariance();
            worst = std::max(worst, (chunked.cells[i].covariance() - c).norm() / c.norm());
        }
    }
    bool counts = true;
    for (std::size_t i = 0; i < grid.node_count(); ++i) {
        counts = counts && merged.cells[i].count == single.cells[i].count;
        if (single.cells[i].count < 2) continue;
        const Mat c = single.cells[i].covariance();
        worst = std::max(worst, (merged.cells[i].covariance() - c).norm() / c.norm());
    }
    return {counts && worst <= 1e-12,
            fmt("chunked and shuffled merges vs single pass: max rel. difference %.3g (limit 1e-12), %zu parts", worst,
                parts.size())};
}

Outcome transformation_law() {
    double worst = 0;
    for (std::uint64_t seed : {11, 12, 13}) {
        auto rng = stream_rng(seed, 99);
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
            return Mat(j.transpose() * sphere2(h(y)) * j);
        });
        const auto curv = riemann(christoffel(metric));
        for (std::size_t i = 0; i < grid.node_count(); ++i) {
            if (!interior(grid, i, 2)) continue;
            const Vec y = grid.position(i);
            const Mat j = jac(y), gx = sphere2(h(y)), gy = metric.covariant(i);
            // Unit sphere: R_{pqst} = g_ps g_qt - g_pt g_qs in x, pulled back by J.
            const Mat gxj = j.transpose() * gx * j;
            for (int k = 0; k < 2; ++k)
                for (int l = 0; l < 2; ++l)
                    for (int m = 0; m < 2; ++m)
                        for (int n = 0; n < 2; ++n) {
                            const double expect = gxj(k, m) * gxj(l, n) - gxj(k, n) * gxj(l, m);
                            double got = 0;
                            for (int p = 0; p < 2; ++p) got += gy(k, p) * curv.riemann.at(i)[((p * 2 + l) * 2 + m) * 2 + n];
                            worst = std::max(worst, std::abs(got - expect));
                        }
        }
    }
    return {worst <= 1e-2, fmt("three seeded diffeomorphisms of the sphere chart: max |R'_klmn - J J J J R| %.3g "
                               "(limit 1e-2, 65^2 grid)",
                               worst)};
}

Outcome lle_weight_sums() {
    auto cfg = stimulus::sphere_line_config(3);
    cfg.n_segments = 3000;
    const auto rig = sensors::make_rig(cfg, {});
    const auto obs = sensors::observe_series(rig, stimulus::generate_trajectory(cfg));
    PointMatrix pts(cfg.n_segments, obs.dim);
    for (std::size_t i = 0; i < cfg.n_segments; ++i) pts.row(i) = obs.segments[i].points.row(0);
    const auto model = embedding::fit_lle(pts, {});
    double worst = 0;
    for (int i = 0; i < model.size(); ++i) {
        double s = 0;
        for (int j = 0; j < model.k; ++j) s += model.weights[i * model.k + j];
        worst = std::max(worst, std::abs(s - 1.0));
    }
    Vec p = pts.row(17).transpose();
    p += 1e-3 * Vec::Ones(p.size());
    const auto hits = model.index().knn(p.data(), model.k);
    PointMatrix nb(hits.size(), p.size());
    for (std::size_t j = 0; j < hits.size(); ++j) nb.row(j) = model.landmarks.row(hits[j].index);
    worst = std::max(worst, std::abs(embedding::reconstruction_weights(nb, p, model.regularization).sum() - 1.0));
    return {worst <= 1e-12, fmt("camera data, %d landmarks: max |sum w - 1| %.3g (limit 1e-12)", model.size(), worst)};
}

Outcome projector_algebra(const separation::SeparationNode* report) {
    double idem = 0, comp = 0, adj = 0;
    int count = 0;
    auto check = [&](const std::vector<separation::Projector>& ps, const Mat* g) {
        if (ps.empty()) return;
        const int n = static_cast<int>(ps.front().matrix.rows());
        Mat sum = Mat::Zero(n, n);
        for (const auto& p : ps) {
            idem = std::max(idem, (p.matrix * p.matrix - p.matrix).norm() / p.matrix.norm());
            if (g) adj = std::max(adj, (*g * p.matrix - (*g * p.matrix).transpose()).norm() / g->norm());
            sum += p.matrix;
            ++count;
        }
        comp = std::max(comp, (sum - Mat::Identity(n, n)).norm());
    };
    const std::vector<std::pair<std::function<Mat(const Vec&)>, int>> cases{
        {sphere_line, 3},
        {[](const Vec& x) {
             Mat g = Mat::Identity(4, 4);
             g(0, 0) = std::cos(x[1]) * std::cos(x[1]);
             g(2, 2) = 1 + 0.4 * x[3] * x[3];
             g(3, 3) = 1 + 0.4 * x[2] * x[2];
             return g;
         },
         4},
    };
    for (const auto& [lower, dim] : cases) {
        const auto f = analytic(lower, dim, dim == 3 ? 21 : 11);
        for (double t : {0.0, 0.1, -0.2}) {
            const Vec x0 = Vec::Constant(dim, t);
            const auto res = separation::solve_projectors(f.curv, f.metric, f.conn, x0, {});
            Mat g;
            f.metric.covariant_at(x0, g);
            check(res.projectors, &g);
        }
    }
    std::function<void(const separation::SeparationNode&)> walk = [&](const separation::SeparationNode& node) {
        check(node.solve.projectors, nullptr);
        for (const auto& c : node.children) walk(c);
    };
    if (report) walk(*report);
    return {count > 0 && idem <= 1e-8 && comp <= 1e-8 && adj <= 1e-8,
            fmt("%d projectors: max |P^2 - P|/|P| %.2g, max |sum P - I| %.2g, max g-asymmetry %.2g (limits 1e-8)", count,
                idem, comp, adj)};
}

Outcome identical_reruns(const std::string& scratch) {
    const fs::path root(scratch);
    const auto conf = "stimulus.segments = 20000\nembedding.landmarks = 4000\nrecursion.min_segments = 500\n";
    std::vector<int> codes;
    try {
        for (const char* d : {"a", "b"}) {
            fs::remove_all(root / d);
            auto cfg = pipeline::parse_config(conf);
            codes.push_back(pipeline::run_stage(pipeline::Stage::RunAll, cfg, (root / d).string()));
        }
    } catch (const std::exception& e) {
        return {false, std::string("pipeline failed: ") + e.what()};
    }
    std::size_t files = 0, differ = 0;
    std::string first;
    for (const auto& entry : fs::directory_iterator(root / "a")) {
        ++files;
        const auto other = root / "b" / entry.path().filename();
        if (!fs::exists(other) || read_file(entry.path()) != read_file(other)) {
            ++differ;
            if (first.empty()) first = entry.path().filename().string();
        }
    }
    std::size_t files_b = 0;
    for ([[maybe_unused]] const auto& entry : fs::directory_iterator(root / "b")) ++files_b;
    const bool ok = codes[0] == codes[1] && differ == 0 && files == files_b && files > 0;
    return {ok, fmt("two reduced camera runs (exit %d, %d): %zu artifacts, %zu differ%s%s", codes[0], codes[1], files,
                    differ, first.empty() ? "" : ", first ", first.c_str())};
}

}  // namespace geosep::acceptance
