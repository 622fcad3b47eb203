#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace geosep {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Points stored one per row, so a segment serializes as a contiguous
/// row-major block.
using PointMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// A run of uniformly spaced samples of one trajectory.
struct Segment {
    double dt = 0.0;
    PointMatrix points;

    std::size_t size() const { return static_cast<std::size_t>(points.rows()); }
    int dim() const { return static_cast<int>(points.cols()); }
};

/// An ordered collection of independent segments of a common dimension.
struct Series {
    int dim = 0;
    std::vector<Segment> segments;

    std::size_t point_count() const {
        std::size_t total = 0;
        for (const auto& s : segments) total += s.size();
        return total;
    }
};

struct DomainError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct SamplingError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ProjectionError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ExtrapolationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct TransportError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct FormatError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct SolverError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace geosep
