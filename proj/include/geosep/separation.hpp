#pragma once

#include "geosep/chart.hpp"
#include "geosep/metric.hpp"
#include "geosep/projectors.hpp"

#include <string>
#include <vector>

namespace geosep::separation {

struct BlockScore {
    /// Mean over nodes of |off-block| / |G| for the correlation-normalised
    /// metric G = D^-1/2 g D^-1/2.
    double off_block = 0.0;
    /// Mean relative spread of each diagonal block along the other blocks'
    /// coordinates (zero when g_A depends on s_A only).
    double dependence = 0.0;
    std::size_t nodes = 0;
};

/// Scores nodes that are valid and not flagged in `skip` (may be empty).
BlockScore block_score(const geometry::TensorField& metric_s, const std::vector<int>& blocks,
                       const std::vector<std::uint8_t>& skip = {});

struct PairCorrelation {
    int a = 0, b = 0;          // block indices
    double max_corr = 0.0;     // largest |corr| of velocities across the pair
    double threshold = 0.0;
    bool independent = true;
};

/// Global second-order cross-block velocity correlations of a series in s.
/// threshold = max(3 / sqrt(N), floor).
std::vector<PairCorrelation> cross_block_independence(const Series& series_s, const std::vector<int>& blocks,
                                                      double floor = 0.0);

/// Keeps only the coordinates [offset, offset + size) of every point.
Series restrict_series(const Series& series, int offset, int size);

}  // namespace geosep::separation
