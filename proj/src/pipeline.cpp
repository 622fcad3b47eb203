#include "geosep/pipeline.hpp"

#include "geosep/io.hpp"
#include "geosep/parallel.hpp"
#include "geosep/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>

namespace geosep::pipeline {

namespace fs = std::filesystem;

namespace {

const std::vector<std::pair<Stage, std::string>> kStageNames = {
    {Stage::Simulate, "simulate"}, {Stage::Sense, "sense"},       {Stage::Embed, "embed"},
    {Stage::Metric, "metric"},     {Stage::Curvature, "curvature"}, {Stage::Separate, "separate"},
    {Stage::Chart, "chart"},       {Stage::Evaluate, "evaluate"}, {Stage::Plot, "plot"},
    {Stage::RunAll, "run-all"}};

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string short_num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

struct Run {
    PipelineConfig& cfg;
    fs::path dir;

    std::string file(const char* name) const { return (dir / name).string(); }
    bool exists(const char* name) const { return fs::exists(dir / name); }
    std::string need(const char* name) const {
        if (!exists(name)) throw FormatError(std::string("missing artifact ") + name);
        return file(name);
    }
    bool cameras() const { return cfg.sensing == SensingMode::Cameras; }

    // The rig frozen by the sense stage, when the given config has none.
    void adopt_rig() {
        if (!cameras() || cfg.rig || !exists(files::kConfig)) return;
        const auto stored = parse_config(io::load_text(file(files::kConfig)));
        if (stored.rig) {
            cfg.rig = stored.rig;
            cfg.rig->factors = cfg.stimulus.factors;
        }
    }
    const sensors::SensorRig& rig() const {
        if (!cfg.rig) throw ConfigError("no frozen rig; run the sense stage first");
        return *cfg.rig;
    }
    void save_config() const { io::save_text(file(files::kConfig), write_config(cfg)); }
};

Series copy_series(const Series& s) { return s; }

int simulate(Run& r) {
    r.save_config();
    io::save_series(r.file(files::kSource), stimulus::generate_trajectory(r.cfg.stimulus));
    return 0;
}

int sense(Run& r) {
    const Series source = io::load_series(r.need(files::kSource));
    if (!r.cameras()) {
        io::save_series(r.file(files::kSensors), source);
        r.save_config();
        return 0;
    }
    if (!r.cfg.rig) r.cfg.rig = sensors::make_rig(r.cfg.stimulus, r.cfg.rig_options);
    r.cfg.rig->factors = r.cfg.stimulus.factors;
    r.cfg.rig->validate();
    r.save_config();
    io::save_series(r.file(files::kSensors), sensors::observe_series(*r.cfg.rig, source));
    return 0;
}

int embed(Run& r) {
    const Series sensed = io::load_series(r.need(files::kSensors));
    if (!r.cameras()) {
        io::save_series(r.file(files::kMeasured), copy_series(sensed));
        return 0;
    }
    const auto& e = r.cfg.embedding;
    const auto model = embedding::fit_lle(embedding::select_landmarks(sensed, e.landmarks, e.landmark_seed), e.lle);
    io::save_embedding(r.file(files::kEmbedding), model);
    io::save_series(r.file(files::kMeasured), embedding::embed_series(model, sensed));
    return 0;
}

geometry::GridSpec level_grid(const PipelineConfig& cfg, const Series& s) {
    const auto& g = cfg.separation.grid;
    return geometry::GridSpec::from_quantiles(s, std::vector<int>(s.dim, g.count), g.quantile, 1.0 - g.quantile);
}

int metric(Run& r) {
    const Series measured = io::load_series(r.need(files::kMeasured));
    io::save_metric(r.file(files::kMetric),
                    geometry::estimate_metric(measured, level_grid(r.cfg, measured), r.cfg.separation.metric));
    return 0;
}

int curvature(Run& r) {
    const auto m = io::load_metric(r.need(files::kMetric));
    const auto conn = geometry::christoffel(m);
    io::save_connection(r.file(files::kConnection), conn);
    io::save_curvature(r.file(files::kCurvature), geometry::riemann(conn));
    return 0;
}

separation::LevelFields load_fields(const Run& r) {
    separation::LevelFields f;
    f.metric = io::load_metric(r.need(files::kMetric));
    f.conn = io::load_connection(r.need(files::kConnection));
    f.curv = io::load_curvature(r.need(files::kCurvature));
    if (!(f.metric.grid() == f.conn.grid()) || !(f.metric.grid() == f.curv.grid()))
        throw FormatError("metric, connection and curvature files use different grids");
    return f;
}

struct MapContext {
    std::shared_ptr<const embedding::EmbeddingModel> model;  // stable address for the map
    MeasurementMap map;
};

MapContext load_map(Run& r) {
    MapContext c;
    if (r.cameras()) {
        r.adopt_rig();
        c.model = std::make_shared<const embedding::EmbeddingModel>(io::load_embedding(r.need(files::kEmbedding)));
        c.map = measurement_map(r.cfg, &r.rig(), c.model.get());
    } else {
        c.map = measurement_map(r.cfg, nullptr, nullptr);
    }
    return c;
}

int separate_stage(Run& r) {
    const Series measured = io::load_series(r.need(files::kMeasured));
    const auto fields = load_fields(r);
    MapContext ctx;
    if (r.cfg.calibration == CalibrationMode::Reference) ctx = load_map(r);
    const auto calib = calibrate(r.cfg, ctx.map, measured);
    auto res = separation::separate(measured, calib, r.cfg.separation, &fields);
    io::save_text(r.file(files::kReport), separation::write_report(res.root, r.cfg.separation));
    for (const char* stale : {files::kChart, files::kSeriesS}) fs::remove(r.dir / stale);
    if (res.chart) {
        io::save_chart(r.file(files::kChart), *res.chart);
        io::save_series(r.file(files::kSeriesS), res.series_s);
    }
    return separation::exit_code(res.root.status);
}

int chart_stage(Run& r) {
    const auto root = separation::read_report(io::load_text(r.need(files::kReport)));
    if (root.status != separation::Status::Separable)
        throw SolverError("the report is " + separation::to_string(root.status) + "; there is no chart to build");
    const Series measured = io::load_series(r.need(files::kMeasured));
    const auto fields = load_fields(r);
    MapContext ctx;
    if (r.cfg.calibration == CalibrationMode::Reference) ctx = load_map(r);
    const auto calib = calibrate(r.cfg, ctx.map, measured);
    const auto frame = separation::seed_frame_for(root.solve, fields, calib, r.cfg.separation.chart.step);
    auto chart = separation::chart_for(fields, frame, r.cfg.separation.chart);
    io::save_chart(r.file(files::kChart), chart);
    io::save_series(r.file(files::kSeriesS), separation::series_in_chart(chart, measured));
    return 0;
}

int evaluate_stage(Run& r) {
    const auto chart = io::load_chart(r.need(files::kChart));
    const auto ctx = load_map(r);
    const auto e = evaluate_test_lines(r.cfg, chart, ctx.map);
    io::save_text(r.file(files::kEvaluation), write_evaluation(e));
    io::save_text(r.file(files::kTestLines), test_lines_csv(e));
    return 0;
}

plot::Path first_two(const Segment& s, std::size_t limit) {
    plot::Path p;
    for (Eigen::Index i = 0; i < s.points.rows() && p.size() < limit; ++i)
        p.push_back({s.points(i, 0), s.points.cols() > 1 ? s.points(i, 1) : 0.0});
    return p;
}

void plot_series(const Run& r, const char* input, const std::string& stem, const std::string& title,
                 const std::string& axis, bool lines, std::size_t max_segments) {
    Series s;
    s.dim = 2;
    if (r.exists(input)) s = io::load_series(r.file(input));
    plot::Layer l;
    l.name = lines ? "segments" : "samples";
    l.lines = lines;
    for (std::size_t i = 0; i < s.segments.size() && i < max_segments; ++i) l.paths.push_back(first_two(s.segments[i], 1000));
    const std::vector<plot::Layer> layers{l};
    io::save_text(r.file((stem + ".svg").c_str()), plot::render_svg(title, axis + "0", axis + "1", layers));
    io::save_text(r.file((stem + ".csv").c_str()), plot::layers_csv(layers));
}

int plot_stage(Run& r) {
    plot_series(r, files::kMeasured, "plot_xtilde", "trajectory samples in measurement coordinates", "x~", false, 300);
    plot_series(r, files::kSeriesS, "plot_s_segments", "trajectory segments in geodesic coordinates", "s", true, 300);

    // Test lines: s against the known source lines, and the first-block grid.
    std::map<std::string, plot::Layer> layers;
    const std::map<std::string, std::string> colors{
        {"truth", "#999999"}, {"a", "#d62728"}, {"b", "#1f77b4"}, {"lat", "#2ca02c"}, {"lon", "#9467bd"}};
    if (r.exists(files::kTestLines)) {
        std::istringstream in(io::load_text(r.file(files::kTestLines)));
        std::string line;
        std::getline(in, line);
        std::map<std::pair<std::string, std::string>, std::pair<plot::Path, plot::Path>> paths;
        std::vector<std::pair<std::string, std::string>> order;
        while (std::getline(in, line)) {
            std::vector<std::string> c;
            std::istringstream ls(line);
            for (std::string cell; std::getline(ls, cell, ',');) c.push_back(cell);
            if (c.size() != 10) throw FormatError("bad test-line row: " + line);
            const auto key = std::make_pair(c[0], c[1]);
            if (!paths.count(key)) order.push_back(key);
            auto& [truth, est] = paths[key];
            // The first block's two axes are the longitude/latitude plane.
            truth.push_back({std::stod(c[3]), std::stod(c[4])});
            if (c[9] == "1") est.push_back({std::stod(c[6]), std::stod(c[7])});
        }
        for (const auto& key : order) {
            auto& [truth, est] = paths[key];
            auto& t = layers["truth"];
            t.name = "source lines";
            t.color = colors.at("truth");
            t.paths.push_back(truth);
            auto& l = layers[key.first];
            l.name = "s: " + key.first;
            l.color = colors.count(key.first) ? colors.at(key.first) : "#000000";
            l.paths.push_back(est);
        }
    }
    std::vector<plot::Layer> out;
    for (const char* k : {"truth", "a", "b", "lat", "lon"})
        if (layers.count(k)) out.push_back(layers[k]);
    io::save_text(r.file("plot_testlines.svg"), plot::render_svg("test lines in s (first block)", "s0", "s1", out));
    io::save_text(r.file("plot_testlines.csv"), plot::layers_csv(out));
    return 0;
}

}  // namespace

Stage stage_from_string(const std::string& s) {
    for (const auto& [st, name] : kStageNames)
        if (name == s) return st;
    throw ConfigError("unknown stage '" + s + "'");
}

std::string to_string(Stage s) {
    for (const auto& [st, name] : kStageNames)
        if (st == s) return name;
    return "unknown";
}

MeasurementMap measurement_map(const PipelineConfig& cfg, const sensors::SensorRig* rig,
                               const embedding::EmbeddingModel* model) {
    if (cfg.sensing == SensingMode::Direct) return [](const Vec& x) { return x; };
    if (!rig || !model) throw DomainError("camera sensing needs a rig and an embedding model");
    return [rig, model](const Vec& x) { return embedding::embed(*model, sensors::observe(*rig, x)); };
}

separation::Calibration calibrate(const PipelineConfig& cfg, const MeasurementMap& map, const Series& measured) {
    const int n = measured.dim;
    separation::Calibration c;
    if (cfg.calibration == CalibrationMode::Blind) {
        c.base.resize(n);
        std::vector<double> v;
        for (int a = 0; a < n; ++a) {
            v.clear();
            for (const auto& s : measured.segments)
                for (Eigen::Index i = 0; i < s.points.rows(); ++i) v.push_back(s.points(i, a));
            if (v.empty()) throw DomainError("cannot calibrate on an empty series");
            std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2), v.end());
            c.base[a] = v[v.size() / 2];
        }
        c.dy = Mat::Identity(n, n);
        return c;
    }
    const int src = cfg.stimulus.dim();
    if (src != n) throw DomainError("reference calibration needs as many measurement as source coordinates");
    const Vec origin = Vec::Zero(src);
    const double h = cfg.evaluate.fd_step;
    c.base = map(origin);
    c.dy.resize(n, n);
    for (int i = 0; i < src; ++i) {
        Vec a = origin, b = origin;
        a[i] += h;
        b[i] -= h;
        c.dy.col(i) = (map(a) - map(b)) / (2.0 * h);
    }
    return c;
}

Evaluation evaluate_test_lines(const PipelineConfig& cfg, const separation::GeodesicChart& chart,
                               const MeasurementMap& map) {
    Evaluation e;
    const int n = chart.dim();
    if (cfg.stimulus.dim() != 3 || n != 3) {
        e.diagnostic = "test lines need a three-dimensional source";
        return e;
    }
    const auto& ev = cfg.evaluate;
    const auto& f0 = cfg.stimulus.factors.front();
    e.patch_size = f0.kind == stimulus::ManifoldKind::SpherePatch ? 2.0 * f0.patch_angle * f0.radius : 2.0 * ev.half_range;

    std::vector<int> column(n);
    for (int j = 0; j < n; ++j) column[j] = chart.columns.empty() ? j : chart.columns[j];
    std::vector<int> last_block;
    if (!chart.blocks.empty()) {
        const int size = chart.blocks.back();
        for (int j = n - size; j < n; ++j) last_block.push_back(column[j]);
    }

    double se = 0.0;
    for (const char* family : {"a", "b", "lat", "lon"})
        for (double c : ev.offsets) {
            TestLine line;
            line.family = family;
            line.offset = c;
            for (int k = 0; k < ev.points; ++k) {
                const double u = -ev.half_range + 2.0 * ev.half_range * k / (ev.points - 1);
                Vec x(3);
                const std::string f = family;
                if (f == "a") x << u, c, u;
                else if (f == "b") x << c, u, -u;
                else if (f == "lat") x << u, c, 0.0;
                else x << c, u, 0.0;
                line.source.push_back(x);
                std::optional<Vec> s;
                try {
                    if (auto raw = chart.inverse(map(x))) {
                        Vec ordered(n);
                        for (int j = 0; j < n; ++j) ordered[column[j]] = (*raw)[j];
                        s = ordered;
                    }
                } catch (const ExtrapolationError&) {
                } catch (const ProjectionError&) {
                }
                line.s.push_back(s);
            }
            std::vector<Vec> pts;
            double line_se = 0.0;
            for (std::size_t k = 0; k < line.s.size(); ++k) {
                if (!line.s[k]) {
                    ++line.missing;
                    continue;
                }
                const double d2 = (*line.s[k] - line.source[k]).squaredNorm();
                line_se += d2;
                pts.push_back(*line.s[k]);
            }
            e.missing += static_cast<std::size_t>(line.missing);
            e.mapped += pts.size();
            se += line_se;
            if (!pts.empty()) line.rms = std::sqrt(line_se / static_cast<double>(pts.size()));
            if (pts.size() > 2) {
                const Vec a = pts.front(), chord = pts.back() - a;
                const double len = chord.norm();
                double sag = 0.0;
                for (const auto& p : pts) {
                    const Vec d = p - a;
                    sag = std::max(sag, (d - d.dot(chord) / (len * len) * chord).norm());
                }
                line.sagitta = len > 0 ? sag / len : 0.0;
                e.worst_sagitta = std::max(e.worst_sagitta, line.sagitta);
            }
            if ((line.family == "lat" || line.family == "lon") && !pts.empty())
                for (int axis : last_block) {
                    double lo = pts.front()[axis], hi = lo;
                    for (const auto& p : pts) lo = std::min(lo, p[axis]), hi = std::max(hi, p[axis]);
                    e.grid_spread = std::max(e.grid_spread, hi - lo);
                }
            e.lines.push_back(std::move(line));
        }
    if (e.mapped > 0) e.rms = std::sqrt(se / static_cast<double>(e.mapped));
    e.rms_relative = e.patch_size > 0 ? e.rms / e.patch_size : 0.0;
    e.partial = e.missing > 0;
    const double coverage = static_cast<double>(e.mapped) / static_cast<double>(e.mapped + e.missing);
    e.pass = e.mapped > 0 && coverage >= 0.9 && e.rms_relative <= ev.rms_limit && e.worst_sagitta <= ev.sagitta_limit;
    if (e.partial) e.diagnostic = std::to_string(e.missing) + " test-line points fall outside the chart";
    return e;
}

std::string write_evaluation(const Evaluation& e) {
    std::ostringstream o;
    o << "evaluation.version = 1\n";
    o << "pass = " << (e.pass ? "true" : "false") << "\n";
    o << "rms = " << num(e.rms) << "\n";
    o << "patch_size = " << num(e.patch_size) << "\n";
    o << "rms_relative = " << num(e.rms_relative) << "\n";
    o << "worst_sagitta = " << num(e.worst_sagitta) << "\n";
    o << "grid_spread = " << num(e.grid_spread) << "\n";
    o << "mapped = " << e.mapped << "\n";
    o << "missing = " << e.missing << "\n";
    o << "partial = " << (e.partial ? "true" : "false") << "\n";
    o << "diagnostic = " << e.diagnostic << "\n";
    for (std::size_t i = 0; i < e.lines.size(); ++i) {
        const auto& l = e.lines[i];
        o << "line." << i << " = " << l.family << " " << num(l.offset) << " rms " << num(l.rms) << " sagitta "
          << num(l.sagitta) << " missing " << l.missing << "\n";
    }
    return o.str();
}

std::string test_lines_csv(const Evaluation& e) {
    std::ostringstream o;
    o << "family,offset,index,x0,x1,x2,s0,s1,s2,mapped\n";
    for (const auto& l : e.lines)
        for (std::size_t k = 0; k < l.source.size(); ++k) {
            const Vec& x = l.source[k];
            o << l.family << "," << short_num(l.offset) << "," << k << "," << num(x[0]) << "," << num(x[1]) << ","
              << num(x[2]);
            if (l.s[k]) {
                const Vec& s = *l.s[k];
                o << "," << num(s[0]) << "," << num(s[1]) << "," << num(s[2]) << ",1\n";
            } else {
                o << ",nan,nan,nan,0\n";
            }
        }
    return o.str();
}

int run_stage(Stage stage, PipelineConfig& cfg, const std::string& out_dir) {
    set_thread_count(cfg.threads);
    Run r{cfg, fs::path(out_dir)};
    auto guarded = [&](Stage s, int (*fn)(Run&)) {
        try {
            return fn(r);
        } catch (const StageError&) {
            throw;
        } catch (const std::exception& ex) {
            throw StageError(s, ex.what());
        }
    };
    try {
        fs::create_directories(r.dir);
    } catch (const fs::filesystem_error& ex) {
        throw StageError(stage, ex.what());
    }
    if (stage != Stage::Simulate && stage != Stage::RunAll && stage != Stage::Sense) guarded(stage, [](Run& run) {
        run.adopt_rig();
        return 0;
    });
    switch (stage) {
        case Stage::Simulate: return guarded(stage, simulate);
        case Stage::Sense: return guarded(stage, sense);
        case Stage::Embed: return guarded(stage, embed);
        case Stage::Metric: return guarded(stage, metric);
        case Stage::Curvature: return guarded(stage, curvature);
        case Stage::Separate: return guarded(stage, separate_stage);
        case Stage::Chart: return guarded(stage, chart_stage);
        case Stage::Evaluate: return guarded(stage, evaluate_stage);
        case Stage::Plot: return guarded(stage, plot_stage);
        case Stage::RunAll: {
            for (auto s : {Stage::Simulate, Stage::Sense, Stage::Embed, Stage::Metric, Stage::Curvature})
                run_stage(s, cfg, out_dir);
            const int code = run_stage(Stage::Separate, cfg, out_dir);
            if (code == 0) run_stage(Stage::Evaluate, cfg, out_dir);
            else fs::remove(r.dir / files::kEvaluation), fs::remove(r.dir / files::kTestLines);
            run_stage(Stage::Plot, cfg, out_dir);
            return code;
        }
    }
    return 1;
}

}  // namespace geosep::pipeline
