#pragma once

#include "geosep/chart.hpp"
#include "geosep/curvature.hpp"
#include "geosep/separation.hpp"

#include <optional>
#include <string>
#include <vector>

namespace geosep::separation {

struct GridOptions {
    int count = 12;           // nodes per axis
    double quantile = 0.005;  // bounds from the [q, 1 - q] sample quantiles
};

struct ChartOptions {
    double step = 0.05;  // s units per lattice step
    int extent = 22;     // lattice steps each way from the base point
};

struct SeparationOptions {
    GridOptions grid;
    geometry::MetricOptions metric;
    SolverOptions solver;
    /// Estimate the curvature noise from two halves of the segments and feed
    /// it to the flatness test.
    bool split_half_noise = true;
    ChartOptions chart;
    double block_threshold = 0.05;
    double dependence_threshold = 0.15;
    double cross_floor = 0.02;
    int max_depth = 4;
    std::size_t min_segments = 1000;
};

/// Geometry of one level on its own grid.
struct LevelFields {
    geometry::MetricField metric;
    geometry::ConnectionField conn;
    geometry::CurvatureField curv;
};

LevelFields estimate_fields(const Series& series, const SeparationOptions& opt);

/// Base point and seed vectors of a level. Seed vector i gets g-length
/// step * |dy_i|_g and s unit `step`, so that a seed that is the image of a
/// unit coordinate step keeps that coordinate's scale in s.
struct Calibration {
    Vec base;
    Mat dy;
};

struct SeparationNode {
    std::string path = "0";
    std::vector<int> coords;  // axes of the parent level's s (root: x~ axes)
    Status status = Status::Undetermined;
    std::vector<std::vector<int>> blocks;  // local axes of each accepted block
    SolveResult solve;
    bool solved = false;
    BlockScore score;
    std::vector<PairCorrelation> cross;
    std::size_t segments = 0;
    std::size_t chart_nodes = 0;
    std::size_t dropped_points = 0;
    std::string diagnostic;
    std::vector<SeparationNode> children;

    int dim() const { return static_cast<int>(coords.size()); }
    std::vector<int> block_sizes() const;
    /// Leaf block sizes over the whole tree, in root s order.
    std::vector<int> leaf_sizes() const;
};

struct SeparationResult {
    SeparationNode root;
    std::optional<GeodesicChart> chart;  // root chart when one was built
    SeedFrame frame;
    Series series_s;  // the input series in root s coordinates
};

/// Solves at calib.base, builds the geodesic chart, scores it, fuses blocks
/// that fail the cross-block test and recurses into every block of two or
/// more dimensions. `fields` may carry precomputed root geometry.
SeparationResult separate(const Series& series, const Calibration& calib, const SeparationOptions& opt,
                          const LevelFields* fields = nullptr);

/// Root chart for a solved level (used by separate and by the chart stage).
GeodesicChart chart_for(const LevelFields& fields, const SeedFrame& frame, const ChartOptions& opt);
SeedFrame seed_frame_for(const SolveResult& solve, const LevelFields& fields, const Calibration& calib,
                         double step);

/// Structured text report, one `key = value` per line.
std::string write_report(const SeparationNode& root, const SeparationOptions& opt);
SeparationNode read_report(const std::string& text);

int exit_code(Status s);

}  // namespace geosep::separation
