#pragma once

#include "geosep/embedding.hpp"
#include "geosep/sensors.hpp"
#include "geosep/separate.hpp"
#include "geosep/stimulus.hpp"

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace geosep::pipeline {

enum class SensingMode { Cameras, Direct };

/// Reference: base point and seed vectors are the images of the source origin
/// and of small source coordinate steps. Blind: base point is the per-axis
/// median of the measured series and the seeds are the x~ axes.
enum class CalibrationMode { Reference, Blind };

struct EmbeddingStage {
    embedding::LleOptions lle;
    std::size_t landmarks = 20000;
    std::uint64_t landmark_seed = 1;
};

/// Test lines through the source origin. Family "a" runs along (u, c, u),
/// family "b" along (c, u, -u), with u in [-half_range, half_range] and one
/// line per offset c. Patch size for the relative RMS is the patch diameter.
struct EvaluateOptions {
    double fd_step = 0.02;  // source step for the calibration vectors dy
    double half_range = 0.5;
    int points = 21;
    std::vector<double> offsets{-0.5, -0.25, 0.0, 0.25, 0.5};
    double rms_limit = 0.05;
    double sagitta_limit = 0.05;
};

struct PipelineConfig {
    stimulus::StimulusConfig stimulus;
    SensingMode sensing = SensingMode::Cameras;
    sensors::RigOptions rig_options;
    std::optional<sensors::SensorRig> rig;  // frozen cameras and placements
    EmbeddingStage embedding;
    separation::SeparationOptions separation;
    CalibrationMode calibration = CalibrationMode::Reference;
    EvaluateOptions evaluate;
    int threads = 0;  // 0 = runtime default
};

/// Desk-scale sphere x line run with the estimated-data solver settings.
PipelineConfig default_config();

/// Parses `key = value` lines with dotted keys; '#' starts a comment. Keys
/// not listed in the output of write_config are rejected. Missing keys keep
/// their defaults.
PipelineConfig parse_config(const std::string& text);

/// Every key with its current value, in a fixed order.
std::string write_config(const PipelineConfig& cfg);

std::string to_string(SensingMode m);

}  // namespace geosep::pipeline
