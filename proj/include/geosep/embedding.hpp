#pragma once

#include "geosep/kdtree.hpp"
#include "geosep/types.hpp"

#include <cstdint>
#include <memory>
#include <vector>

namespace geosep::embedding {

/// Out-of-sample rule. Weights: LLE reconstruction weights against the k
/// nearest landmarks. LocalAffine: weighted affine fit of the embedding over
/// the local tangent plane of the landmarks; the weights fall to zero at the
/// edge of the neighbourhood so the map stays continuous when neighbours change.
enum class OutOfSample { Weights, LocalAffine };

struct LleOptions {
    int k = 12;
    int dim = 3;
    /// Gram regularization as a fraction of the local Gram trace.
    double regularization = 1e-3;
    std::uint64_t seed = 1;
    int max_iterations = 400;
    /// Eigen residual relative to the first unwanted eigenvalue.
    double tolerance = 1e-6;
    OutOfSample out_of_sample = OutOfSample::Weights;
    int affine_neighbors = 40;
};

/// Locally linear embedding of a landmark set plus the data needed for the
/// out-of-sample map. The stored embedding has zero mean and unit covariance
/// per coordinate, (1/N) Y^T Y = I.
struct EmbeddingModel {
    PointMatrix landmarks;        // N x m
    std::vector<int> neighbors;   // N x k, row-major
    std::vector<double> weights;  // N x k, rows sum to 1
    PointMatrix embedded;         // N x n
    Vec eigenvalues;              // bottom n non-trivial eigenvalues
    int k = 12;
    double regularization = 1e-3;
    /// Nearest-landmark distance above which embed() refuses to extrapolate.
    double max_distance = 0.0;
    OutOfSample out_of_sample = OutOfSample::Weights;
    int affine_neighbors = 40;

    int input_dim() const { return static_cast<int>(landmarks.cols()); }
    int output_dim() const { return static_cast<int>(embedded.cols()); }
    int size() const { return static_cast<int>(landmarks.rows()); }

    /// Rebuilds the search index; called after fitting or loading.
    void build_index();
    const KdTree& index() const;

private:
    std::shared_ptr<const KdTree> index_;
};

/// Weights w (sum 1) minimising |p - sum_j w_j q_j|^2 + reg * tr(C) * |w|^2
/// over the rows q_j of `neighborhood`.
Vec reconstruction_weights(const PointMatrix& neighborhood, const Eigen::Ref<const Vec>& p, double regularization);

/// Uniform random subset of the points of a series (row order preserved).
PointMatrix select_landmarks(const Series& data, std::size_t count, std::uint64_t seed);

EmbeddingModel fit_lle(const PointMatrix& data, const LleOptions& opt);

/// Relative residual max_i |M y_i - lambda_i y_i| / |y_i| of the stored
/// embedding against M = (I - W)^T (I - W).
double eigen_residual(const EmbeddingModel& model);

/// Out-of-sample map per model.out_of_sample. The weight rule is exact at
/// landmarks; the local affine rule smooths over them.
Vec embed(const EmbeddingModel& model, const Eigen::Ref<const Vec>& p);

Series embed_series(const EmbeddingModel& model, const Series& data);

}  // namespace geosep::embedding
