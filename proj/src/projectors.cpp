#include "geosep/projectors.hpp"

#include "geosep/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

namespace geosep::separation {

namespace {

struct Clustering {
    Vec values;
    Mat vectors;  // g-orthonormal
    std::vector<int> start;  // cluster boundaries into the sorted eigenvalues
    double quality = -1.0;
};

Clustering cluster_element(const Mat& x, const Mat& g, double cluster_gap) {
    const Mat gx = g * x;
    const Mat s = 0.5 * (gx + gx.transpose());
    const Eigen::GeneralizedSelfAdjointEigenSolver<Mat> es(s, g);
    Clustering c;
    c.values = es.eigenvalues();
    c.vectors = es.eigenvectors();
    const int n = static_cast<int>(c.values.size());
    const double spread = c.values[n - 1] - c.values[0];
    c.start = {0};
    if (!(spread > 0)) return c;
    double smallest = std::numeric_limits<double>::infinity();
    for (int i = 1; i < n; ++i) {
        const double gap = c.values[i] - c.values[i - 1];
        if (gap > cluster_gap * spread) {
            c.start.push_back(i);
            smallest = std::min(smallest, gap / spread);
        }
    }
    c.quality = c.start.size() > 1 ? smallest : 0.0;
    return c;
}

int find_root(std::vector<int>& parent, int i) {
    while (parent[i] != i) i = parent[i] = parent[parent[i]];
    return i;
}

}  // namespace

std::string to_string(Status s) {
    switch (s) {
        case Status::Separable: return "Separable";
        case Status::NotSeparable: return "NotSeparable";
        case Status::FlatExceptional: return "FlatExceptional";
        case Status::Undetermined: return "Undetermined";
    }
    return "Undetermined";
}

Status status_from_string(const std::string& s) {
    for (Status v : {Status::Separable, Status::NotSeparable, Status::FlatExceptional, Status::Undetermined})
        if (to_string(v) == s) return v;
    throw FormatError("unknown separation status '" + s + "'");
}

std::vector<Mat> curvature_slices(int n, const double* r) {
    std::vector<Mat> out;
    for (int m = 0; m < n; ++m)
        for (int q = m + 1; q < n; ++q) {
            Mat s(n, n);
            for (int k = 0; k < n; ++k)
                for (int l = 0; l < n; ++l) s(k, l) = r[((k * n + l) * n + m) * n + q];
            out.push_back(s);
        }
    return out;
}

std::vector<double> pull_back_riemann(int n, const double* r, const Mat& t) {
    const Mat tinv = t.inverse();
    // Contract one index at a time: n^5 work instead of n^8.
    std::vector<double> a(r, r + static_cast<std::size_t>(n) * n * n * n), b(a.size());
    auto at = [n](int i, int j, int k, int l) { return static_cast<std::size_t>(((i * n + j) * n + k) * n + l); };
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            for (int k = 0; k < n; ++k)
                for (int l = 0; l < n; ++l) {
                    double v = 0.0;
                    for (int q = 0; q < n; ++q) v += tinv(i, q) * a[at(q, j, k, l)];
                    b[at(i, j, k, l)] = v;
                }
    for (int slot = 1; slot < 4; ++slot) {
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j)
                for (int k = 0; k < n; ++k)
                    for (int l = 0; l < n; ++l) {
                        int idx[4] = {i, j, k, l};
                        double v = 0.0;
                        for (int q = 0; q < n; ++q) {
                            int src[4] = {i, j, k, l};
                            src[slot] = q;
                            v += b[at(src[0], src[1], src[2], src[3])] * t(q, idx[slot]);
                        }
                        a[at(i, j, k, l)] = v;
                    }
        b.swap(a);
    }
    return b;
}

SolveResult solve_slices(const std::vector<Mat>& base_slices, const std::vector<Mat>& probe_slices, const Mat& g,
                         double curvature_scale, const SolverOptions& opt) {
    const int n = static_cast<int>(g.rows());
    const int n2 = n * n;
    SolveResult res;
    res.curvature_scale = curvature_scale;
    res.curvature_noise = opt.curvature_noise;
    for (const auto& m : base_slices) res.curvature_norm = std::max(res.curvature_norm, m.norm());
    if (n < 2) {
        res.status = Status::NotSeparable;
        res.nullity = 1;
        res.diagnostic = "one-dimensional space has no nontrivial projector";
        return res;
    }

    const bool flat = !(curvature_scale >= opt.flat_threshold) ||
                      (opt.curvature_noise > 0 && curvature_scale < opt.flat_snr * opt.curvature_noise);
    double scale = 0.0;
    for (const auto& m : base_slices) scale = std::max(scale, m.norm());
    for (const auto& m : probe_slices) scale = std::max(scale, m.norm());

    std::vector<Eigen::RowVectorXd> rows;
    const double gnorm = g.norm();
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) {
            // (gA)_ij - (gA)_ji; A is vectorised column-major.
            Eigen::RowVectorXd r = Eigen::RowVectorXd::Zero(n2);
            for (int k = 0; k < n; ++k) {
                r[k + j * n] += g(i, k) / gnorm;
                r[k + i * n] -= g(j, k) / gnorm;
            }
            rows.push_back(r);
        }
    if (!flat && scale > 0) {
        auto add = [&](const Mat& m) {
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < n; ++j) {
                    // (MA - AM)_ij
                    Eigen::RowVectorXd r = Eigen::RowVectorXd::Zero(n2);
                    for (int k = 0; k < n; ++k) {
                        r[k + j * n] += m(i, k) / scale;
                        r[i + k * n] -= m(k, j) / scale;
                    }
                    rows.push_back(r);
                }
        };
        for (const auto& m : base_slices) add(m);
        for (const auto& m : probe_slices) add(m);
    }
    Mat sys(static_cast<Eigen::Index>(rows.size()), n2);
    for (std::size_t i = 0; i < rows.size(); ++i) sys.row(static_cast<Eigen::Index>(i)) = rows[i];
    const Eigen::JacobiSVD<Mat> svd(sys, Eigen::ComputeFullV);
    Vec sv = Vec::Zero(n2);
    sv.head(svd.singularValues().size()) = svd.singularValues();
    const Mat v = svd.matrixV();
    res.singular_values = sv.reverse();
    const double smax = sv[0];

    int nullity = 0;
    for (int i = 0; i < n2; ++i)
        if (sv[i] <= opt.tol * smax) ++nullity;
    res.nullity = nullity;
    if (nullity < n2) {
        const double inside = res.singular_values[nullity - 1];
        const double outside = res.singular_values[nullity];
        res.gap_ratio = inside > 0 ? outside / inside : std::numeric_limits<double>::infinity();
    } else {
        res.gap_ratio = std::numeric_limits<double>::infinity();
    }

    if (flat) {
        res.status = Status::FlatExceptional;
        res.diagnostic = curvature_scale < opt.flat_threshold
                             ? "curvature vanishes at the base point; the constraints leave the projectors free"
                             : "curvature is indistinguishable from its noise level; treated as flat";
        return res;
    }
    if (nullity >= 2 && res.gap_ratio < opt.min_gap_ratio) {
        res.status = Status::Undetermined;
        res.diagnostic = "no clear gap between solution and constraint singular values";
        return res;
    }
    if (nullity <= 1) {
        res.status = Status::NotSeparable;
        res.diagnostic = "only multiples of the identity satisfy the constraints";
        return res;
    }

    const Mat ginv = g.inverse();
    std::vector<Mat> basis;
    for (int c = 0; c < nullity; ++c) {
        Mat b = Eigen::Map<const Mat>(v.col(n2 - 1 - c).data(), n, n);
        b = 0.5 * (b + ginv * b.transpose() * g);
        basis.push_back(b);
    }

    auto rng = stream_rng(opt.seed, streams::kSolver);
    std::normal_distribution<double> normal(0.0, 1.0);
    Clustering best;
    for (int t = 0; t < std::max(1, opt.trials); ++t) {
        Mat x = Mat::Zero(n, n);
        for (const auto& b : basis) x += normal(rng) * b;
        Clustering c = cluster_element(x, g, opt.cluster_gap);
        if (c.quality > best.quality) best = std::move(c);
    }
    const int clusters = static_cast<int>(best.start.size());
    if (clusters < 2) {
        res.status = Status::Undetermined;
        res.diagnostic = "generic solution has a single eigenvalue cluster";
        return res;
    }

    std::vector<Mat> cluster_proj;
    std::vector<int> cluster_rank;
    for (int c = 0; c < clusters; ++c) {
        const int b = best.start[c];
        const int e = c + 1 < clusters ? best.start[c + 1] : n;
        const Mat vc = best.vectors.middleCols(b, e - b);
        cluster_proj.push_back(vc * vc.transpose() * g);
        cluster_rank.push_back(e - b);
    }

    // Clusters linked by some solution are parts of one flat group.
    std::vector<int> parent(clusters);
    std::iota(parent.begin(), parent.end(), 0);
    for (int a = 0; a < clusters; ++a)
        for (int b = 0; b < clusters; ++b) {
            if (a == b) continue;
            double coupling = 0.0;
            for (const auto& nb : basis)
                coupling = std::max(coupling, (cluster_proj[a] * nb * cluster_proj[b]).norm() / std::max(nb.norm(), 1e-300));
            if (coupling > opt.coupling_tol) parent[find_root(parent, a)] = find_root(parent, b);
        }

    std::vector<int> roots;
    for (int c = 0; c < clusters; ++c)
        if (find_root(parent, c) == c) roots.push_back(c);
    if (roots.size() < 2) {
        res.status = Status::FlatExceptional;
        res.diagnostic = "all solutions couple into one flat group";
        return res;
    }
    for (int r : roots) {
        Projector p;
        p.matrix = Mat::Zero(n, n);
        int members = 0;
        for (int c = 0; c < clusters; ++c)
            if (find_root(parent, c) == r) {
                p.matrix += cluster_proj[c];
                p.rank += cluster_rank[c];
                ++members;
            }
        p.flat = members > 1;
        res.projectors.push_back(std::move(p));
    }
    std::stable_sort(res.projectors.begin(), res.projectors.end(),
                     [](const Projector& a, const Projector& b) { return a.rank > b.rank; });

    for (const auto& p : res.projectors) {
        res.idempotency_residual = std::max(res.idempotency_residual, (p.matrix * p.matrix - p.matrix).norm());
        for (const auto& m : base_slices)
            res.commutation_residual = std::max(res.commutation_residual, (m * p.matrix - p.matrix * m).norm());
    }
    res.status = Status::Separable;
    return res;
}

namespace {

bool transport_segment(const geometry::ConnectionFn& conn, const Vec& a, const Vec& b, Mat& t) {
    t = Mat::Identity(a.size(), a.size());
    const int steps = 8;
    for (int s = 0; s < steps; ++s)
        if (!geometry::transport_step(conn, a + (b - a) * (double(s) / steps), a + (b - a) * (double(s + 1) / steps), t))
            return false;
    return true;
}

}  // namespace

std::vector<double> curvature_at(const geometry::CurvatureField& curv, const geometry::ConnectionField& conn,
                                 const Vec& x0, double radius, int* averaged) {
    const int n = curv.dim();
    if (x0.size() != n) throw DomainError("base point dimension does not match the curvature field");
    const std::size_t n4 = static_cast<std::size_t>(n) * n * n * n;
    if (averaged) *averaged = 0;
    std::vector<double> r0(n4);
    if (!curv.riemann.interpolate(x0, r0.data())) return {};
    if (!(radius > 0)) return r0;
    const auto& grid = curv.grid();
    const auto centre = grid.nearest_node(x0);
    if (centre < 0) return r0;
    const auto conn_fn = geometry::field_connection(conn);
    const auto c = grid.multi_index(static_cast<std::size_t>(centre));
    const int reach = static_cast<int>(std::floor(radius));
    std::vector<double> sum(r0);
    int count = 1;
    std::vector<int> off(n, -reach);
    while (true) {
        double d2 = 0.0;
        std::size_t node = 0;
        bool inside = true;
        for (int a = 0; a < n; ++a) {
            d2 += double(off[a]) * off[a];
            const int q = c[a] + off[a];
            inside = inside && q >= 0 && q < grid.count[a];
            node += static_cast<std::size_t>(std::max(q, 0)) * grid.stride(a);
        }
        Mat t;
        if (inside && d2 <= radius * radius && curv.riemann.is_valid(node) &&
            transport_segment(conn_fn, x0, grid.position(node), t)) {
            const auto pulled = pull_back_riemann(n, curv.riemann.at(node), t);
            for (std::size_t i = 0; i < n4; ++i) sum[i] += pulled[i];
            ++count;
        }
        int a = 0;
        while (a < n && ++off[a] > reach) off[a++] = -reach;
        if (a == n) break;
    }
    for (std::size_t i = 0; i < n4; ++i) r0[i] = sum[i] / count;
    if (averaged) *averaged = count;
    return r0;
}

SolveResult solve_projectors(const geometry::CurvatureField& curv, const geometry::MetricField& metric,
                             const geometry::ConnectionField& conn, const Vec& x0, const SolverOptions& opt) {
    const int n = curv.dim();
    if (x0.size() != n) throw DomainError("base point dimension does not match the curvature field");
    int averaged = 0;
    const std::vector<double> r0 = curvature_at(curv, conn, x0, opt.average_radius, &averaged);
    Mat g;
    if (r0.empty() || !metric.covariant_at(x0, g)) {
        SolveResult res;
        res.status = Status::Undetermined;
        res.diagnostic = "curvature is not available at the base point";
        return res;
    }
    g = 0.5 * (g + g.transpose());
    const Mat ginv = g.inverse();
    const auto& grid = curv.grid();
    Vec extent(n);
    for (int a = 0; a < n; ++a) extent[a] = grid.hi[a] - grid.lo[a];

    std::vector<Mat> probe;
    int used = 0;
    if (opt.probe_points > 0) {
        const auto centre = grid.nearest_node(x0);
        std::vector<std::size_t> candidates;
        if (centre >= 0) {
            const auto c = grid.multi_index(static_cast<std::size_t>(centre));
            for (std::size_t i = 0; i < grid.node_count(); ++i) {
                if (!curv.riemann.is_valid(i) || i == static_cast<std::size_t>(centre)) continue;
                const auto idx = grid.multi_index(i);
                bool near = true;
                for (int a = 0; a < n; ++a) near = near && std::abs(idx[a] - c[a]) <= opt.probe_radius;
                if (near) candidates.push_back(i);
            }
        }
        auto rng = stream_rng(opt.seed, streams::kProbes);
        const auto conn_fn = geometry::field_connection(conn);
        for (std::size_t k = 0; k < candidates.size() && used < opt.probe_points; ++k) {
            std::uniform_int_distribution<std::size_t> pick(k, candidates.size() - 1);
            std::swap(candidates[k], candidates[pick(rng)]);
            // Slices at the probe, pulled back along the transport from x0 so
            // that they constrain the projector at x0.
            Mat t;
            if (!transport_segment(conn_fn, x0, grid.position(candidates[k]), t)) continue;
            const Mat tinv = t.inverse();
            for (const auto& m : curvature_slices(n, curv.riemann.at(candidates[k]))) probe.push_back(tinv * m * t);
            ++used;
        }
    }

    const double scale = geometry::curvature_norm(n, r0.data(), g, ginv) * extent.dot(g * extent);
    SolveResult res = solve_slices(curvature_slices(n, r0.data()), probe, g, scale, opt);
    res.probes_used = used;
    res.averaged_nodes = averaged;
    for (auto& p : res.projectors) p.base = x0;
    return res;
}

}  // namespace geosep::separation
