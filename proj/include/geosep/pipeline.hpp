#pragma once

#include "geosep/config.hpp"

#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace geosep::pipeline {

enum class Stage { Simulate, Sense, Embed, Metric, Curvature, Separate, Chart, Evaluate, Plot, RunAll };

Stage stage_from_string(const std::string& s);
std::string to_string(Stage s);

/// Any failure inside a stage, tagged with the stage name.
struct StageError : std::runtime_error {
    StageError(Stage s, const std::string& what) : std::runtime_error(to_string(s) + ": " + what), stage(s) {}
    Stage stage;
};

/// Artifact file names inside the output directory.
namespace files {
inline constexpr const char* kConfig = "config.conf";
inline constexpr const char* kSource = "source.gbss";
inline constexpr const char* kSensors = "sensors.gbss";
inline constexpr const char* kEmbedding = "embedding.gbse";
inline constexpr const char* kMeasured = "measured.gbss";
inline constexpr const char* kMetric = "metric.gbsf";
inline constexpr const char* kConnection = "connection.gbsf";
inline constexpr const char* kCurvature = "curvature.gbsf";
inline constexpr const char* kReport = "report.txt";
inline constexpr const char* kChart = "chart.gbsc";
inline constexpr const char* kSeriesS = "series_s.gbss";
inline constexpr const char* kEvaluation = "evaluation.txt";
inline constexpr const char* kTestLines = "testlines.csv";
}  // namespace files

using MeasurementMap = std::function<Vec(const Vec&)>;

/// Source coordinates -> x~: observe then embed, or the identity for direct
/// sensing. The rig and model must outlive the returned map.
MeasurementMap measurement_map(const PipelineConfig& cfg, const sensors::SensorRig* rig,
                               const embedding::EmbeddingModel* model);

separation::Calibration calibrate(const PipelineConfig& cfg, const MeasurementMap& map, const Series& measured);

struct TestLine {
    std::string family;  // a, b, lat or lon
    double offset = 0.0;
    std::vector<Vec> source;
    std::vector<std::optional<Vec>> s;  // chart coordinates in source axis order
    double rms = 0.0;                   // over mapped points, |s - x|
    double sagitta = 0.0;               // max distance from the chord / chord length
    int missing = 0;
};

struct Evaluation {
    std::vector<TestLine> lines;
    double rms = 0.0;
    double patch_size = 0.0;
    double rms_relative = 0.0;
    double worst_sagitta = 0.0;
    /// Largest spread of the last block's s along a lat or lon line; zero when
    /// those lines stay in the first block as they should.
    double grid_spread = 0.0;
    std::size_t mapped = 0, missing = 0;
    bool partial = false;
    bool pass = false;
    std::string diagnostic;
};

/// Maps the test lines through the measurement map and the chart inverse.
/// Needs a three-dimensional source. The chart axes are matched to source
/// axes through chart.columns.
Evaluation evaluate_test_lines(const PipelineConfig& cfg, const separation::GeodesicChart& chart,
                               const MeasurementMap& map);

std::string write_evaluation(const Evaluation& e);
std::string test_lines_csv(const Evaluation& e);

/// Runs one stage against the artifacts in out_dir and returns the process
/// exit code (0, or 2-4 from the separation status). Throws StageError.
int run_stage(Stage stage, PipelineConfig& cfg, const std::string& out_dir);

}  // namespace geosep::pipeline
