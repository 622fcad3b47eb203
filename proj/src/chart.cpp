#include "geosep/chart.hpp"

#include "geosep/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace geosep::separation {

SeedFrame build_seed_frame(const std::vector<Projector>& projectors, const Mat& g, const Mat& dy, const Vec& lengths) {
    const int n = static_cast<int>(g.rows());
    if (dy.rows() != n || dy.cols() != n) throw DomainError("seed vectors must form an n x n matrix");
    if (lengths.size() != n) throw DomainError("one length per seed vector is required");
    const Eigen::JacobiSVD<Mat> svd(dy);
    const Vec sv = svd.singularValues();
    if (!(sv[n - 1] > 1e-10 * sv[0])) throw ProjectionError("seed vectors are not linearly independent");
    auto gnorm = [&](const Vec& v) { return std::sqrt(std::max(0.0, v.dot(g * v))); };

    int total = 0;
    for (const auto& p : projectors) total += p.rank;
    if (total != n) throw ProjectionError("projector ranks do not add up to the dimension");

    SeedFrame f;
    f.vectors.resize(n, n);
    int col = 0;
    for (const auto& p : projectors) {
        std::vector<double> share(n);
        for (int i = 0; i < n; ++i) share[i] = gnorm(p.matrix * dy.col(i)) / gnorm(dy.col(i));
        std::vector<int> order(n);
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return share[a] > share[b]; });
        order.resize(p.rank);
        std::sort(order.begin(), order.end());
        const int first = col;
        for (int i : order) {
            Vec u = p.matrix * dy.col(i);
            for (int j = first; j < col; ++j) {
                const Vec& w = f.vectors.col(j);
                u -= (w.dot(g * u) / w.dot(g * w)) * w;
            }
            const double len = gnorm(u);
            if (!(len > 1e-6 * gnorm(dy.col(i)))) throw ProjectionError("projected seed vectors are rank deficient");
            f.vectors.col(col) = u * (lengths[i] / len);
            f.columns.push_back(i);
            ++col;
        }
        f.blocks.push_back(p.rank);
    }
    if (!projectors.empty()) f.base = projectors.front().base;
    return f;
}

std::size_t GeodesicChart::stride(int axis) const {
    std::size_t s = 1;
    for (int a = dim() - 1; a > axis; --a) s *= static_cast<std::size_t>(side(a));
    return s;
}

std::vector<int> GeodesicChart::lattice_index(std::size_t node) const {
    std::vector<int> idx(dim());
    for (int a = dim() - 1; a >= 0; --a) {
        idx[a] = static_cast<int>(node % side(a)) - extents[a];
        node /= side(a);
    }
    return idx;
}

std::size_t GeodesicChart::node_of(const std::vector<int>& lattice) const {
    std::size_t flat = 0;
    for (int a = 0; a < dim(); ++a) flat = flat * side(a) + static_cast<std::size_t>(lattice[a] + extents[a]);
    return flat;
}

Vec GeodesicChart::s_of(std::size_t node) const {
    const auto idx = lattice_index(node);
    Vec s(dim());
    for (int a = 0; a < dim(); ++a) s[a] = idx[a] * s_unit[a];
    return s;
}

std::size_t GeodesicChart::valid_count() const {
    return static_cast<std::size_t>(std::count(valid.begin(), valid.end(), std::uint8_t{1}));
}

geometry::GridSpec GeodesicChart::grid() const {
    geometry::GridSpec g;
    for (int a = 0; a < dim(); ++a) {
        g.lo.push_back(-extents[a] * s_unit[a]);
        g.hi.push_back(extents[a] * s_unit[a]);
        g.count.push_back(side(a));
    }
    return g;
}

std::optional<Vec> GeodesicChart::position_at(const Vec& s) const {
    const int n = dim();
    std::vector<int> base(n);
    std::vector<double> frac(n);
    for (int a = 0; a < n; ++a) {
        if (side(a) < 2) return std::nullopt;
        const double t = s[a] / s_unit[a] + extents[a];
        if (t < -1e-9 || t > side(a) - 1 + 1e-9) return std::nullopt;
        base[a] = std::clamp(static_cast<int>(std::floor(t)), 0, side(a) - 2);
        frac[a] = t - base[a];
    }
    std::size_t origin = 0;
    for (int a = 0; a < n; ++a) origin = origin * side(a) + base[a];
    Vec x = Vec::Zero(n);
    for (unsigned corner = 0; corner < (1u << n); ++corner) {
        std::size_t node = origin;
        double w = 1.0;
        for (int a = 0; a < n; ++a) {
            const bool up = (corner >> a) & 1u;
            w *= up ? frac[a] : 1.0 - frac[a];
            if (up) node += stride(a);
        }
        if (!valid[node]) return std::nullopt;
        x += w * positions.row(static_cast<Eigen::Index>(node)).transpose();
    }
    return x;
}

std::optional<Vec> GeodesicChart::solve_in_cell(const Vec& x, Vec s) const {
    const int n = dim();
    double typical = 0.0;
    const auto origin_row = static_cast<Eigen::Index>(node_of(std::vector<int>(n, 0)));
    for (int a = 0; a < n; ++a) typical = std::max(typical, frames.row(origin_row).segment(a * n, n).norm());
    const double tol = 1e-10 * std::max(typical, 1e-300);
    for (int it = 0; it < 40; ++it) {
        std::vector<int> base(n);
        std::vector<double> frac(n);
        for (int a = 0; a < n; ++a) {
            if (side(a) < 2) return std::nullopt;
            const double t = s[a] / s_unit[a] + extents[a];
            base[a] = std::clamp(static_cast<int>(std::floor(t)), 0, side(a) - 2);
            frac[a] = t - base[a];
        }
        std::size_t origin = 0;
        for (int a = 0; a < n; ++a) origin = origin * side(a) + base[a];
        Vec xs = Vec::Zero(n);
        Mat jac = Mat::Zero(n, n);
        for (unsigned corner = 0; corner < (1u << n); ++corner) {
            std::size_t node = origin;
            double w = 1.0;
            for (int a = 0; a < n; ++a) {
                const bool up = (corner >> a) & 1u;
                w *= up ? frac[a] : 1.0 - frac[a];
                if (up) node += stride(a);
            }
            if (!valid[node]) return std::nullopt;
            const Vec p = positions.row(static_cast<Eigen::Index>(node)).transpose();
            xs += w * p;
            for (int d = 0; d < n; ++d) {
                double wd = 1.0 / s_unit[d];
                for (int a = 0; a < n; ++a) {
                    const bool up = (corner >> a) & 1u;
                    if (a == d) wd *= up ? 1.0 : -1.0;
                    else wd *= up ? frac[a] : 1.0 - frac[a];
                }
                jac.col(d) += wd * p;
            }
        }
        const Vec r = x - xs;
        bool inside = true;
        for (int a = 0; a < n; ++a) inside = inside && frac[a] >= -1e-9 && frac[a] <= 1 + 1e-9;
        if (r.norm() <= tol && inside) return s;
        const Vec ds = jac.partialPivLu().solve(r);
        if (!ds.allFinite()) return std::nullopt;
        s += ds;
        for (int a = 0; a < n; ++a) {
            const double t = s[a] / s_unit[a] + extents[a];
            if (t < -0.5 || t > side(a) - 0.5) return std::nullopt;
        }
    }
    return std::nullopt;
}

std::optional<Vec> GeodesicChart::inverse(const Vec& x) const {
    if (!index_) throw DomainError("chart has no search index");
    if (x.size() != dim()) throw DomainError("chart inverse: dimension mismatch");
    const auto hits = index_->knn(x.data(), std::min(4, index_->size()));
    for (const auto& h : hits) {
        const auto s = solve_in_cell(x, s_of(static_cast<std::size_t>(index_nodes_[h.index])));
        if (s) return s;
    }
    return std::nullopt;
}

void GeodesicChart::build_index() {
    index_nodes_.clear();
    for (std::size_t i = 0; i < node_count(); ++i)
        if (valid[i]) index_nodes_.push_back(static_cast<int>(i));
    PointMatrix pts(static_cast<Eigen::Index>(index_nodes_.size()), dim());
    for (std::size_t k = 0; k < index_nodes_.size(); ++k) pts.row(static_cast<Eigen::Index>(k)) = positions.row(index_nodes_[k]);
    index_ = std::make_shared<const KdTree>(std::move(pts));
}

GeodesicChart build_chart(const geometry::ConnectionFn& conn, const SeedFrame& frame, const std::vector<int>& extents,
                          const std::vector<double>& s_unit) {
    const int n = static_cast<int>(frame.vectors.rows());
    if (static_cast<int>(extents.size()) != n || static_cast<int>(s_unit.size()) != n)
        throw DomainError("chart extents and units need one entry per axis");
    for (int a = 0; a < n; ++a) {
        if (extents[a] < 0) throw DomainError("chart extents must be non-negative");
        if (!(s_unit[a] > 0)) throw DomainError("chart s units must be positive");
    }
    GeodesicChart c;
    c.extents = extents;
    c.s_unit = s_unit;
    c.base = frame.base;
    c.blocks = frame.blocks;
    c.columns = frame.columns;
    std::size_t nodes = 1;
    for (int a = 0; a < n; ++a) nodes *= static_cast<std::size_t>(c.side(a));
    c.positions = PointMatrix::Zero(static_cast<Eigen::Index>(nodes), n);
    c.frames = PointMatrix::Zero(static_cast<Eigen::Index>(nodes), n * n);
    c.valid.assign(nodes, 0);

    std::vector<double> probe(static_cast<std::size_t>(n) * n * n);
    if (!conn(frame.base, probe.data())) return c;
    const std::size_t origin = c.node_of(std::vector<int>(n, 0));
    c.positions.row(static_cast<Eigen::Index>(origin)) = frame.base.transpose();
    c.frames.row(static_cast<Eigen::Index>(origin)) = Eigen::Map<const Eigen::RowVectorXd>(frame.vectors.data(), n * n);
    c.valid[origin] = 1;

    for (int a = 0; a < n; ++a) {
        std::vector<std::size_t> seeds;
        for (std::size_t i = 0; i < nodes; ++i) {
            if (!c.valid[i]) continue;
            const auto idx = c.lattice_index(i);
            bool seed = true;
            for (int k = a; k < n; ++k) seed = seed && idx[k] == 0;
            if (seed) seeds.push_back(i);
        }
        parallel_for(seeds.size(), [&](std::size_t j) {
            const std::size_t start = seeds[j];
            for (int dir : {1, -1}) {
                Vec x = c.positions.row(static_cast<Eigen::Index>(start)).transpose();
                Mat f = Eigen::Map<const Mat>(c.frames.row(static_cast<Eigen::Index>(start)).data(), n, n);
                auto idx = c.lattice_index(start);
                for (int step = 1; step <= extents[a]; ++step) {
                    Vec d = dir * f.col(a);
                    if (!geometry::geodesic_advance(conn, x, d, &f)) break;
                    idx[a] = dir * step;
                    const auto node = static_cast<Eigen::Index>(c.node_of(idx));
                    c.positions.row(node) = x.transpose();
                    c.frames.row(node) = Eigen::Map<const Eigen::RowVectorXd>(f.data(), n * n);
                    c.valid[static_cast<std::size_t>(node)] = 1;
                }
            }
        });
    }
    c.build_index();
    return c;
}

ChartMetric metric_in_chart(const GeodesicChart& chart, const geometry::MetricField& metric) {
    const int n = chart.dim();
    ChartMetric out{geometry::TensorField(chart.grid(), n * n), std::vector<std::uint8_t>(chart.node_count(), 0)};
    parallel_for(chart.node_count(), [&](std::size_t i) {
        if (!chart.valid[i]) return;
        const auto idx = chart.lattice_index(i);
        Mat jac(n, n);
        bool one_sided = false;
        for (int a = 0; a < n; ++a) {
            auto neighbour = [&](int off) -> std::optional<Vec> {
                auto j = idx;
                j[a] += off;
                if (std::abs(j[a]) > chart.extents[a]) return std::nullopt;
                const auto node = chart.node_of(j);
                if (!chart.valid[node]) return std::nullopt;
                return chart.positions.row(static_cast<Eigen::Index>(node)).transpose();
            };
            const auto up = neighbour(1), down = neighbour(-1);
            const Vec here = chart.positions.row(static_cast<Eigen::Index>(i)).transpose();
            if (up && down) {
                jac.col(a) = (*up - *down) / (2 * chart.s_unit[a]);
            } else if (up) {
                jac.col(a) = (*up - here) / chart.s_unit[a];
                one_sided = true;
            } else if (down) {
                jac.col(a) = (here - *down) / chart.s_unit[a];
                one_sided = true;
            } else {
                return;
            }
        }
        Mat g;
        if (!metric.covariant_at(chart.positions.row(static_cast<Eigen::Index>(i)).transpose(), g)) return;
        const Mat gs = jac.transpose() * g * jac;
        Eigen::Map<Mat>(out.metric.at(i), n, n) = 0.5 * (gs + gs.transpose());
        out.metric.valid[i] = 1;
        out.one_sided[i] = one_sided;
    });
    return out;
}

Series series_in_chart(const GeodesicChart& chart, const Series& series, std::size_t* dropped) {
    if (series.dim != chart.dim()) throw DomainError("series dimension does not match the chart");
    std::vector<std::vector<Segment>> parts(series.segments.size());
    std::vector<std::size_t> lost(series.segments.size(), 0);
    parallel_for(series.segments.size(), [&](std::size_t i) {
        const auto& seg = series.segments[i];
        std::vector<Vec> run;
        auto flush = [&] {
            if (run.size() >= 2) {
                Segment s;
                s.dt = seg.dt;
                s.points.resize(static_cast<Eigen::Index>(run.size()), chart.dim());
                for (std::size_t r = 0; r < run.size(); ++r) s.points.row(static_cast<Eigen::Index>(r)) = run[r].transpose();
                parts[i].push_back(std::move(s));
            } else {
                lost[i] += run.size();
            }
            run.clear();
        };
        for (Eigen::Index r = 0; r < seg.points.rows(); ++r) {
            const auto s = chart.inverse(seg.points.row(r).transpose());
            if (s) {
                run.push_back(*s);
            } else {
                ++lost[i];
                flush();
            }
        }
        flush();
    });
    Series out;
    out.dim = series.dim;
    for (auto& p : parts)
        for (auto& s : p) out.segments.push_back(std::move(s));
    if (dropped) *dropped = std::accumulate(lost.begin(), lost.end(), std::size_t{0});
    return out;
}

}  // namespace geosep::separation
