#include "geosep/separate.hpp"

#include <charconv>
#include <functional>
#include <map>
#include <numeric>
#include <sstream>

namespace geosep::separation {

namespace {

LevelFields fields_on(const Series& series, const geometry::GridSpec& grid, const SeparationOptions& opt) {
    LevelFields f;
    f.metric = geometry::estimate_metric(series, grid, opt.metric);
    f.conn = geometry::christoffel(f.metric);
    f.curv = geometry::riemann(f.conn);
    return f;
}

Series every_other(const Series& s, std::size_t parity) {
    Series out;
    out.dim = s.dim;
    for (std::size_t i = parity; i < s.segments.size(); i += 2) out.segments.push_back(s.segments[i]);
    return out;
}

// Half the invariant norm of the difference between curvature estimates from
// even and odd segments, in the same units as SolveResult::curvature_scale.
double split_half_noise(const Series& series, const LevelFields& full, const Vec& x0, const SeparationOptions& opt) {
    const int n = series.dim;
    Mat g;
    if (!full.metric.covariant_at(x0, g)) return 0.0;
    g = 0.5 * (g + g.transpose());
    std::vector<double> r[2];
    for (std::size_t h = 0; h < 2; ++h) {
        const LevelFields f = fields_on(every_other(series, h), full.metric.grid(), opt);
        r[h] = curvature_at(f.curv, f.conn, x0, opt.solver.average_radius);
        if (r[h].empty()) return 0.0;
    }
    std::vector<double> d(r[0].size());
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = r[0][i] - r[1][i];
    const auto& grid = full.metric.grid();
    Vec extent(n);
    for (int a = 0; a < n; ++a) extent[a] = grid.hi[a] - grid.lo[a];
    return 0.5 * geometry::curvature_norm(n, d.data(), g, g.inverse()) * extent.dot(g * extent);
}

std::vector<std::vector<int>> fuse_blocks(const std::vector<int>& sizes, const std::vector<PairCorrelation>& cross) {
    std::vector<int> parent(sizes.size());
    std::iota(parent.begin(), parent.end(), 0);
    std::function<int(int)> root = [&](int a) { return parent[a] == a ? a : parent[a] = root(parent[a]); };
    for (const auto& p : cross)
        if (!p.independent) parent[root(p.b)] = root(p.a);
    std::map<int, std::vector<int>> groups;
    int offset = 0;
    for (std::size_t b = 0; b < sizes.size(); ++b) {
        auto& axes = groups[root(static_cast<int>(b))];
        for (int k = 0; k < sizes[b]; ++k) axes.push_back(offset + k);
        offset += sizes[b];
    }
    std::vector<std::vector<int>> out;
    for (auto& [r, axes] : groups) out.push_back(std::move(axes));
    return out;
}

Series restrict_axes(const Series& series, const std::vector<int>& axes) {
    Series out;
    out.dim = static_cast<int>(axes.size());
    out.segments.reserve(series.segments.size());
    for (const auto& s : series.segments) {
        Segment r;
        r.dt = s.dt;
        r.points.resize(s.points.rows(), out.dim);
        for (int a = 0; a < out.dim; ++a) r.points.col(a) = s.points.col(axes[a]);
        out.segments.push_back(std::move(r));
    }
    return out;
}

SeparationNode separate_level(const Series& series, const Calibration& calib, const SeparationOptions& opt,
                              const LevelFields* given, int depth, const std::string& path,
                              std::vector<int> coords, SeparationResult* top) {
    SeparationNode node;
    node.path = path;
    node.coords = std::move(coords);
    node.segments = series.segments.size();
    const int n = series.dim;
    if (n == 1) {
        node.status = Status::NotSeparable;
        node.diagnostic = "one-dimensional block";
        return node;
    }
    if (series.segments.size() < opt.min_segments) {
        node.status = Status::Undetermined;
        node.diagnostic = "too few segments";
        return node;
    }

    LevelFields own;
    if (!given) {
        std::vector<int> counts(n, opt.grid.count);
        own = fields_on(series, geometry::GridSpec::from_quantiles(series, counts, opt.grid.quantile,
                                                                    1.0 - opt.grid.quantile), opt);
    }
    const LevelFields& fields = given ? *given : own;

    SolverOptions so = opt.solver;
    if (opt.split_half_noise) so.curvature_noise = split_half_noise(series, fields, calib.base, opt);
    node.solve = solve_projectors(fields.curv, fields.metric, fields.conn, calib.base, so);
    node.solved = true;
    node.status = node.solve.status;
    node.diagnostic = node.solve.diagnostic;
    if (node.status != Status::Separable) return node;

    SeedFrame frame;
    try {
        frame = seed_frame_for(node.solve, fields, calib, opt.chart.step);
    } catch (const ProjectionError& e) {
        node.status = Status::Undetermined;
        node.diagnostic = e.what();
        return node;
    }
    GeodesicChart chart = chart_for(fields, frame, opt.chart);
    node.chart_nodes = chart.valid_count();
    const ChartMetric cm = metric_in_chart(chart, fields.metric);
    node.score = block_score(cm.metric, frame.blocks, cm.one_sided);
    Series series_s = series_in_chart(chart, series, &node.dropped_points);
    if (node.score.nodes == 0 || node.score.off_block > opt.block_threshold ||
        node.score.dependence > opt.dependence_threshold) {
        node.status = Status::Undetermined;
        node.diagnostic = "metric in the chart is not block diagonal";
        return node;
    }
    node.cross = cross_block_independence(series_s, frame.blocks, opt.cross_floor);
    node.blocks = fuse_blocks(frame.blocks, node.cross);
    if (node.blocks.size() < 2) {
        node.status = Status::NotSeparable;
        node.diagnostic = "velocities are correlated across every split";
    } else if (node.blocks.size() < frame.blocks.size()) {
        node.diagnostic = "blocks fused by the cross-block test";
    }

    if (node.status == Status::Separable) {
        for (std::size_t b = 0; b < node.blocks.size(); ++b) {
            const auto& axes = node.blocks[b];
            const std::string child_path = path + "." + std::to_string(b);
            Series sub = restrict_axes(series_s, axes);
            const int m = sub.dim;
            Calibration c{Vec::Zero(m), Mat::Identity(m, m)};
            if (depth + 1 >= opt.max_depth && m > 1) {
                SeparationNode leaf;
                leaf.path = child_path;
                leaf.coords = axes;
                leaf.segments = sub.segments.size();
                leaf.diagnostic = "depth limit";
                node.children.push_back(std::move(leaf));
                continue;
            }
            node.children.push_back(separate_level(sub, c, opt, nullptr, depth + 1, child_path, axes, nullptr));
        }
    }
    if (top) {
        top->frame = frame;
        top->chart = std::move(chart);
        top->series_s = std::move(series_s);
    }
    return node;
}

std::string fmt(double v) {
    char buf[32];
    auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

double parse_double(const std::string& s) {
    double v = 0.0;
    auto r = std::from_chars(s.data(), s.data() + s.size(), v);
    if (r.ec != std::errc() || r.ptr != s.data() + s.size()) throw FormatError("bad number in report: " + s);
    return v;
}

std::string join(const std::vector<int>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) out += (i ? " " : "") + std::to_string(v[i]);
    return out;
}

std::string join(const Eigen::Ref<const Vec>& v) {
    std::string out;
    for (Eigen::Index i = 0; i < v.size(); ++i) out += (i ? " " : "") + fmt(v[i]);
    return out;
}

std::vector<std::string> words(const std::string& s) {
    std::istringstream in(s);
    std::vector<std::string> out;
    for (std::string w; in >> w;) out.push_back(w);
    return out;
}

std::vector<int> ints(const std::string& s) {
    std::vector<int> out;
    for (const auto& w : words(s)) out.push_back(static_cast<int>(parse_double(w)));
    return out;
}

Vec doubles(const std::string& s) {
    const auto w = words(s);
    Vec v(static_cast<Eigen::Index>(w.size()));
    for (std::size_t i = 0; i < w.size(); ++i) v[static_cast<Eigen::Index>(i)] = parse_double(w[i]);
    return v;
}

void write_node(std::ostringstream& out, const SeparationNode& nd) {
    const std::string k = "node." + nd.path + ".";
    out << k << "coords = " << join(nd.coords) << "\n";
    out << k << "status = " << to_string(nd.status) << "\n";
    out << k << "segments = " << nd.segments << "\n";
    std::string blocks;
    for (std::size_t b = 0; b < nd.blocks.size(); ++b) blocks += (b ? " ; " : "") + join(nd.blocks[b]);
    out << k << "blocks = " << blocks << "\n";
    out << k << "solved = " << (nd.solved ? 1 : 0) << "\n";
    if (nd.solved) {
        const auto& s = nd.solve;
        out << k << "solve.status = " << to_string(s.status) << "\n";
        out << k << "solve.nullity = " << s.nullity << "\n";
        out << k << "solve.gap_ratio = " << fmt(s.gap_ratio) << "\n";
        out << k << "solve.singular_values = " << join(s.singular_values) << "\n";
        out << k << "solve.curvature_scale = " << fmt(s.curvature_scale) << "\n";
        out << k << "solve.curvature_noise = " << fmt(s.curvature_noise) << "\n";
        out << k << "solve.curvature_norm = " << fmt(s.curvature_norm) << "\n";
        out << k << "solve.idempotency_residual = " << fmt(s.idempotency_residual) << "\n";
        out << k << "solve.commutation_residual = " << fmt(s.commutation_residual) << "\n";
        out << k << "solve.averaged_nodes = " << s.averaged_nodes << "\n";
        out << k << "solve.projectors = " << s.projectors.size() << "\n";
        for (std::size_t p = 0; p < s.projectors.size(); ++p) {
            const auto& pr = s.projectors[p];
            const std::string pk = k + "projector." + std::to_string(p) + ".";
            out << pk << "rank = " << pr.rank << "\n";
            out << pk << "flat = " << (pr.flat ? 1 : 0) << "\n";
            out << pk << "base = " << join(pr.base) << "\n";
            out << pk << "matrix = " << join(Eigen::Map<const Vec>(pr.matrix.data(), pr.matrix.size())) << "\n";
        }
    }
    out << k << "block_score.off_block = " << fmt(nd.score.off_block) << "\n";
    out << k << "block_score.dependence = " << fmt(nd.score.dependence) << "\n";
    out << k << "block_score.nodes = " << nd.score.nodes << "\n";
    out << k << "cross = " << nd.cross.size() << "\n";
    for (std::size_t c = 0; c < nd.cross.size(); ++c) {
        const auto& p = nd.cross[c];
        out << k << "cross." << c << " = " << p.a << " " << p.b << " " << fmt(p.max_corr) << " " << fmt(p.threshold)
            << " " << (p.independent ? 1 : 0) << "\n";
    }
    out << k << "chart_nodes = " << nd.chart_nodes << "\n";
    out << k << "dropped_points = " << nd.dropped_points << "\n";
    out << k << "diagnostic = " << nd.diagnostic << "\n";
    std::vector<std::string> kids;
    for (const auto& c : nd.children) kids.push_back(c.path);
    std::string list;
    for (std::size_t i = 0; i < kids.size(); ++i) list += (i ? " " : "") + kids[i];
    out << k << "children = " << list << "\n";
    for (const auto& c : nd.children) write_node(out, c);
}

}  // namespace

LevelFields estimate_fields(const Series& series, const SeparationOptions& opt) {
    std::vector<int> counts(series.dim, opt.grid.count);
    return fields_on(series, geometry::GridSpec::from_quantiles(series, counts, opt.grid.quantile, 1.0 - opt.grid.quantile),
                     opt);
}

SeedFrame seed_frame_for(const SolveResult& solve, const LevelFields& fields, const Calibration& calib, double step) {
    Mat g;
    if (!fields.metric.covariant_at(calib.base, g)) throw ProjectionError("metric is not available at the base point");
    g = 0.5 * (g + g.transpose());
    const int n = static_cast<int>(g.rows());
    Vec lengths(n);
    for (int i = 0; i < n; ++i) lengths[i] = step * std::sqrt(calib.dy.col(i).dot(g * calib.dy.col(i)));
    SeedFrame frame = build_seed_frame(solve.projectors, g, calib.dy, lengths);
    frame.base = calib.base;
    return frame;
}

GeodesicChart chart_for(const LevelFields& fields, const SeedFrame& frame, const ChartOptions& opt) {
    const int n = static_cast<int>(frame.vectors.rows());
    return build_chart(geometry::field_connection(fields.conn), frame, std::vector<int>(n, opt.extent),
                       std::vector<double>(n, opt.step));
}

SeparationResult separate(const Series& series, const Calibration& calib, const SeparationOptions& opt,
                          const LevelFields* fields) {
    if (calib.base.size() != series.dim || calib.dy.rows() != series.dim || calib.dy.cols() != series.dim)
        throw DomainError("calibration does not match the series dimension");
    SeparationResult res;
    std::vector<int> axes(series.dim);
    std::iota(axes.begin(), axes.end(), 0);
    res.root = separate_level(series, calib, opt, fields, 0, "0", axes, &res);
    return res;
}

std::vector<int> SeparationNode::block_sizes() const {
    std::vector<int> out;
    for (const auto& b : blocks) out.push_back(static_cast<int>(b.size()));
    return out;
}

std::vector<int> SeparationNode::leaf_sizes() const {
    if (children.empty()) return {dim()};
    std::vector<int> out;
    for (const auto& c : children) {
        const auto l = c.leaf_sizes();
        out.insert(out.end(), l.begin(), l.end());
    }
    return out;
}

std::string write_report(const SeparationNode& root, const SeparationOptions& opt) {
    std::ostringstream out;
    out << "report.version = 1\n";
    out << "summary.status = " << to_string(root.status) << "\n";
    out << "summary.leaf_sizes = " << join(root.leaf_sizes()) << "\n";
    out << "threshold.block_score = " << fmt(opt.block_threshold) << "\n";
    out << "threshold.dependence = " << fmt(opt.dependence_threshold) << "\n";
    out << "threshold.cross_floor = " << fmt(opt.cross_floor) << "\n";
    out << "threshold.solver_tol = " << fmt(opt.solver.tol) << "\n";
    out << "threshold.min_gap_ratio = " << fmt(opt.solver.min_gap_ratio) << "\n";
    out << "threshold.flat_snr = " << fmt(opt.solver.flat_snr) << "\n";
    write_node(out, root);
    return out.str();
}

SeparationNode read_report(const std::string& text) {
    std::map<std::string, std::string> kv;
    std::istringstream in(text);
    for (std::string line; std::getline(in, line);) {
        if (line.empty() || line[0] == '#') continue;
        const auto eq = line.find(" = ");
        if (eq == std::string::npos) {
            const auto bare = line.find(" =");
            if (bare == std::string::npos || bare + 2 != line.size()) throw FormatError("report line without '=': " + line);
            kv[line.substr(0, bare)] = "";
            continue;
        }
        kv[line.substr(0, eq)] = line.substr(eq + 3);
    }
    auto get = [&](const std::string& key) -> const std::string& {
        auto it = kv.find(key);
        if (it == kv.end()) throw FormatError("report is missing " + key);
        return it->second;
    };
    if (get("report.version") != "1") throw FormatError("unsupported report version");

    std::function<SeparationNode(const std::string&)> read_node = [&](const std::string& path) {
        SeparationNode nd;
        nd.path = path;
        const std::string k = "node." + path + ".";
        nd.coords = ints(get(k + "coords"));
        nd.status = status_from_string(get(k + "status"));
        nd.segments = static_cast<std::size_t>(parse_double(get(k + "segments")));
        std::string blocks = get(k + "blocks");
        for (std::size_t pos = 0; !blocks.empty();) {
            const auto semi = blocks.find(';', pos);
            nd.blocks.push_back(ints(blocks.substr(pos, semi == std::string::npos ? std::string::npos : semi - pos)));
            if (semi == std::string::npos) break;
            pos = semi + 1;
        }
        nd.solved = get(k + "solved") == "1";
        if (nd.solved) {
            auto& s = nd.solve;
            s.status = status_from_string(get(k + "solve.status"));
            s.nullity = static_cast<int>(parse_double(get(k + "solve.nullity")));
            s.gap_ratio = parse_double(get(k + "solve.gap_ratio"));
            s.singular_values = doubles(get(k + "solve.singular_values"));
            s.curvature_scale = parse_double(get(k + "solve.curvature_scale"));
            s.curvature_noise = parse_double(get(k + "solve.curvature_noise"));
            s.curvature_norm = parse_double(get(k + "solve.curvature_norm"));
            s.idempotency_residual = parse_double(get(k + "solve.idempotency_residual"));
            s.commutation_residual = parse_double(get(k + "solve.commutation_residual"));
            s.averaged_nodes = static_cast<int>(parse_double(get(k + "solve.averaged_nodes")));
            const int np = static_cast<int>(parse_double(get(k + "solve.projectors")));
            for (int p = 0; p < np; ++p) {
                const std::string pk = k + "projector." + std::to_string(p) + ".";
                Projector pr;
                pr.rank = static_cast<int>(parse_double(get(pk + "rank")));
                pr.flat = get(pk + "flat") == "1";
                pr.base = doubles(get(pk + "base"));
                const Vec m = doubles(get(pk + "matrix"));
                const auto dim = static_cast<Eigen::Index>(std::lround(std::sqrt(static_cast<double>(m.size()))));
                if (dim * dim != m.size()) throw FormatError("projector matrix is not square");
                pr.matrix = Eigen::Map<const Mat>(m.data(), dim, dim);
                s.projectors.push_back(std::move(pr));
            }
        }
        nd.score.off_block = parse_double(get(k + "block_score.off_block"));
        nd.score.dependence = parse_double(get(k + "block_score.dependence"));
        nd.score.nodes = static_cast<std::size_t>(parse_double(get(k + "block_score.nodes")));
        const int nc = static_cast<int>(parse_double(get(k + "cross")));
        for (int c = 0; c < nc; ++c) {
            const auto w = words(get(k + "cross." + std::to_string(c)));
            if (w.size() != 5) throw FormatError("cross entry needs five fields");
            PairCorrelation p;
            p.a = static_cast<int>(parse_double(w[0]));
            p.b = static_cast<int>(parse_double(w[1]));
            p.max_corr = parse_double(w[2]);
            p.threshold = parse_double(w[3]);
            p.independent = w[4] == "1";
            nd.cross.push_back(p);
        }
        nd.chart_nodes = static_cast<std::size_t>(parse_double(get(k + "chart_nodes")));
        nd.dropped_points = static_cast<std::size_t>(parse_double(get(k + "dropped_points")));
        nd.diagnostic = get(k + "diagnostic");
        for (const auto& child : words(get(k + "children"))) nd.children.push_back(read_node(child));
        return nd;
    };
    return read_node("0");
}

int exit_code(Status s) {
    switch (s) {
        case Status::Separable: return 0;
        case Status::NotSeparable: return 2;
        case Status::FlatExceptional: return 3;
        case Status::Undetermined: return 4;
    }
    return 1;
}

}  // namespace geosep::separation
