#include "geosep/config.hpp"
#include "geosep/io.hpp"
#include "geosep/pipeline.hpp"
#include "geosep/plot.hpp"
#include "geosep/rng.hpp"

#include <doctest.h>

#include <filesystem>
#include <random>
#include <sstream>

using namespace geosep;
namespace fs = std::filesystem;

namespace {

Series random_series(int dim, int segments, std::uint64_t seed) {
    auto rng = stream_rng(seed, 99);
    std::normal_distribution<double> g;
    Series s;
    s.dim = dim;
    for (int i = 0; i < segments; ++i) {
        Segment seg;
        seg.dt = 0.1 + 0.01 * i;
        seg.points = PointMatrix(2 + i % 4, dim);
        for (Eigen::Index c = 0; c < seg.points.size(); ++c) seg.points.data()[c] = g(rng);
        s.segments.push_back(seg);
    }
    return s;
}

bool same(const Series& a, const Series& b) {
    if (a.dim != b.dim || a.segments.size() != b.segments.size()) return false;
    for (std::size_t i = 0; i < a.segments.size(); ++i)
        if (a.segments[i].dt != b.segments[i].dt || a.segments[i].points.rows() != b.segments[i].points.rows() ||
            !(a.segments[i].points.array() == b.segments[i].points.array()).all())
            return false;
    return true;
}

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / ("geosep_test_" + name)) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("series binary and csv round trips") {
    const auto s = random_series(3, 9, 1);
    std::stringstream bin;
    io::write_series(bin, s);
    CHECK(same(io::read_series(bin), s));

    std::stringstream csv;
    io::write_series_csv(csv, s);
    CHECK(csv.str().rfind("segment,dt,x0,x1,x2\n", 0) == 0);
    CHECK(same(io::read_series_csv(csv), s));

    std::stringstream bad("GBSX\x01\0\0\0");
    CHECK_THROWS_AS(io::read_series(bad), FormatError);
    std::string truncated;
    {
        std::stringstream full;
        io::write_series(full, s);
        truncated = full.str().substr(0, full.str().size() - 5);
    }
    std::stringstream cut(truncated);
    CHECK_THROWS_AS(io::read_series(cut), FormatError);
}

TEST_CASE("field, embedding and chart files round trip") {
    TempDir dir("io");
    const auto grid = geometry::GridSpec::uniform(2, -1, 1, 6);
    auto metric = geometry::sample_metric(grid, [](const Vec& x) {
        Mat g = Mat::Identity(2, 2);
        g(0, 0) = 1 + x[0] * x[0];
        return g;
    });
    metric.upper.valid[3] = metric.lower.valid[3] = 0;
    metric.count.assign(grid.node_count(), 42);
    io::save_metric((dir.path / "m.gbsf").string(), metric);
    const auto m2 = io::load_metric((dir.path / "m.gbsf").string());
    CHECK(m2.grid() == grid);
    CHECK(m2.upper.data == metric.upper.data);
    CHECK(m2.lower.data == metric.lower.data);
    CHECK(m2.upper.valid == metric.upper.valid);
    CHECK(m2.count == metric.count);
    CHECK_THROWS_AS(io::load_connection((dir.path / "m.gbsf").string()), FormatError);

    const auto conn = geometry::christoffel(metric);
    io::save_connection((dir.path / "c.gbsf").string(), conn);
    CHECK(io::load_connection((dir.path / "c.gbsf").string()).gamma.data == conn.gamma.data);

    PointMatrix pts(60, 3);
    auto rng = stream_rng(2, 99);
    std::uniform_real_distribution<double> un(-1, 1);
    for (int i = 0; i < 60; ++i) pts.row(i) << un(rng), un(rng), 0.5 * un(rng);
    embedding::LleOptions o;
    o.dim = 2;
    o.k = 6;
    const auto model = embedding::fit_lle(pts, o);
    io::save_embedding((dir.path / "e.gbse").string(), model);
    const auto model2 = io::load_embedding((dir.path / "e.gbse").string());
    CHECK((model2.embedded.array() == model.embedded.array()).all());
    CHECK(model2.weights == model.weights);
    CHECK(embedding::embed(model2, pts.row(5).transpose()) == embedding::embed(model, pts.row(5).transpose()));

    const geometry::ConnectionFn zero = [](const Vec&, double* g) {
        std::fill(g, g + 8, 0.0);
        return true;
    };
    separation::SeedFrame f{Vec::Zero(2), Mat::Identity(2, 2) * 0.1, {2}, {1, 0}};
    auto chart = separation::build_chart(zero, f, {2, 3}, {0.1, 0.1});
    io::save_chart((dir.path / "s.gbsc").string(), chart);
    auto chart2 = io::load_chart((dir.path / "s.gbsc").string());
    CHECK(chart2.extents == chart.extents);
    CHECK(chart2.columns == chart.columns);
    CHECK((chart2.positions.array() == chart.positions.array()).all());
    CHECK(chart2.valid == chart.valid);
}

TEST_CASE("configuration text") {
    const auto def = pipeline::default_config();
    const auto text = pipeline::write_config(def);
    CHECK(pipeline::write_config(pipeline::parse_config(text)) == text);
    CHECK(pipeline::write_config(pipeline::parse_config("")) == text);
    CHECK(text.find("grid.count = 12") != std::string::npos);
    CHECK(text.find("threshold.block_score = 0.05") != std::string::npos);

    const auto cfg = pipeline::parse_config("# comment\nsensing.mode = direct\nstimulus.seed = 9  # trailing\n");
    CHECK(cfg.sensing == pipeline::SensingMode::Direct);
    CHECK(cfg.stimulus.rng_seed == 9);

    CHECK_THROWS_AS(pipeline::parse_config("no.such.key = 1\n"), ConfigError);
    CHECK_THROWS_AS(pipeline::parse_config("grid.count = 4\ngrid.count = 5\n"), ConfigError);
    CHECK_THROWS_AS(pipeline::parse_config("grid.count = twelve\n"), ConfigError);
    CHECK_THROWS_AS(pipeline::parse_config("stimulus.kT = -1\n"), ConfigError);
}

TEST_CASE("plots") {
    const auto empty = plot::render_svg("t", "x", "y", {});
    CHECK(empty.find("<svg") == 0);
    CHECK(empty.find("polyline") == std::string::npos);
    CHECK(plot::layers_csv({}) == "layer,path,x,y\n");

    plot::Layer a{"a", "#ff0000", true, {{{0, 0}, {1, 2}, {2, 1}}, {{0, 1}, {1, 1}}}};
    plot::Layer b{"b & c", "#0000ff", false, {{{0.5, 0.5}}}};
    const auto svg = plot::render_svg("title <1>", "x", "y", {a, b});
    CHECK(svg == plot::render_svg("title <1>", "x", "y", {a, b}));
    CHECK(svg.find("title &lt;1&gt;") != std::string::npos);
    CHECK(svg.find("b &amp; c") != std::string::npos);
    const auto csv = plot::layers_csv({a, b});
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 1 + 5 + 1);
}

TEST_CASE("stage names") {
    using pipeline::Stage;
    for (auto s : {Stage::Simulate, Stage::Sense, Stage::Embed, Stage::Metric, Stage::Curvature, Stage::Separate,
                   Stage::Chart, Stage::Evaluate, Stage::Plot, Stage::RunAll})
        CHECK(pipeline::stage_from_string(pipeline::to_string(s)) == s);
    CHECK_THROWS(pipeline::stage_from_string("bogus"));
}

TEST_CASE("small direct pipeline") {
    TempDir dir("pipeline");
    auto cfg = pipeline::parse_config("sensing.mode = direct\nstimulus.segments = 20000\nrecursion.min_segments = 500\n");
    const auto out = dir.path.string();

    auto missing = cfg;
    CHECK_THROWS_AS(pipeline::run_stage(pipeline::Stage::Separate, missing, out), pipeline::StageError);

    const int code = pipeline::run_stage(pipeline::Stage::RunAll, cfg, out);
    CHECK((code == 0 || code == 2 || code == 3 || code == 4));
    for (const char* f : {pipeline::files::kConfig, pipeline::files::kSource, pipeline::files::kMeasured,
                          pipeline::files::kMetric, pipeline::files::kConnection, pipeline::files::kCurvature,
                          pipeline::files::kReport})
        CHECK(fs::exists(dir.path / f));
    const auto report = separation::read_report(io::load_text((dir.path / pipeline::files::kReport).string()));
    CHECK(separation::exit_code(report.status) == code);
    const auto source = io::load_series((dir.path / pipeline::files::kSource).string());
    CHECK(source.segments.size() == 20000);
    CHECK(source.dim == 3);
    if (code == 0) CHECK(fs::exists(dir.path / pipeline::files::kEvaluation));
}
