#include "geosep/embedding.hpp"

#include "geosep/parallel.hpp"
#include "geosep/rng.hpp"

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

namespace geosep::embedding {

namespace {

using SpMat = Eigen::SparseMatrix<double>;

SpMat lle_matrix(int n, int k, const std::vector<int>& nbr, const std::vector<double>& w) {
    // I - W, then M = (I - W)^T (I - W).
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(static_cast<std::size_t>(n) * (k + 1));
    for (int i = 0; i < n; ++i) {
        trip.emplace_back(i, i, 1.0);
        for (int j = 0; j < k; ++j) trip.emplace_back(i, nbr[i * k + j], -w[i * k + j]);
    }
    SpMat iw(n, n);
    iw.setFromTriplets(trip.begin(), trip.end());
    SpMat m = SpMat(iw.transpose()) * iw;
    m.makeCompressed();
    return m;
}

// Bottom `want` eigenpairs of the PSD matrix m on the orthogonal complement of
// the constant vector, by shift-invert block subspace iteration.
void bottom_eigenpairs(const SpMat& m, int want, const LleOptions& opt, Mat& vectors, Vec& values) {
    const int n = static_cast<int>(m.rows());
    const int block = std::min(n - 1, want + 6);
    const double shift = 1e-12 * std::max(1.0, m.diagonal().mean());
    SpMat shifted = m;
    for (int i = 0; i < n; ++i) shifted.coeffRef(i, i) += shift;
    Eigen::SimplicialLDLT<SpMat> ldlt(shifted);
    if (ldlt.info() != Eigen::Success) throw SolverError("LLE eigen-solver: factorization failed");

    const Vec ones = Vec::Constant(n, 1.0 / std::sqrt(static_cast<double>(n)));
    auto deflate = [&](Mat& x) {
        for (int c = 0; c < x.cols(); ++c) x.col(c) -= ones.dot(x.col(c)) * ones;
    };

    auto rng = stream_rng(opt.seed, streams::kEigen);
    std::normal_distribution<double> normal(0.0, 1.0);
    Mat x(n, block);
    for (int c = 0; c < block; ++c)
        for (int r = 0; r < n; ++r) x(r, c) = normal(rng);

    Vec prev(want);
    for (int it = 0; it < opt.max_iterations; ++it) {
        deflate(x);
        Eigen::HouseholderQR<Mat> qr(x);
        x = qr.householderQ() * Mat::Identity(n, block);
        const Mat mx = m * x;
        const Mat h = x.transpose() * mx;
        const Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (h + h.transpose()));
        const Mat ritz = x * es.eigenvectors();
        const Vec theta = es.eigenvalues();

        const Mat resid = m * ritz.leftCols(want) - ritz.leftCols(want) * theta.head(want).asDiagonal();
        double worst = 0;
        for (int c = 0; c < want; ++c) worst = std::max(worst, resid.col(c).norm());
        prev = theta.head(want);
        vectors = ritz.leftCols(want);
        values = theta.head(want);
        // Residuals are measured against the first unwanted Ritz value, which
        // sets the scale of the spectral gap at the tiny end of the spectrum.
        if (worst <= opt.tolerance * std::max(theta[want], 1e-300)) return;

        Mat next(n, block);
        for (int c = 0; c < block; ++c) next.col(c) = ldlt.solve(ritz.col(c));
        if (ldlt.info() != Eigen::Success) throw SolverError("LLE eigen-solver: back-substitution failed");
        x = std::move(next);
    }
    throw SolverError("LLE eigen-solver did not converge in " + std::to_string(opt.max_iterations) + " iterations");
}

}  // namespace

void EmbeddingModel::build_index() { index_ = std::make_shared<const KdTree>(landmarks); }

const KdTree& EmbeddingModel::index() const {
    if (!index_) throw DomainError("embedding model has no search index");
    return *index_;
}

Vec reconstruction_weights(const PointMatrix& neighborhood, const Eigen::Ref<const Vec>& p, double regularization) {
    const int k = static_cast<int>(neighborhood.rows());
    Mat z(k, neighborhood.cols());
    for (int j = 0; j < k; ++j) z.row(j) = neighborhood.row(j) - p.transpose();
    Mat c = z * z.transpose();
    const double tr = c.trace();
    c.diagonal().array() += regularization * (tr > 0 ? tr : 1.0);
    Vec w = c.ldlt().solve(Vec::Ones(k));
    const double s = w.sum();
    if (!std::isfinite(s) || std::abs(s) < 1e-300) throw SolverError("degenerate LLE neighbourhood");
    return w / s;
}

PointMatrix select_landmarks(const Series& data, std::size_t count, std::uint64_t seed) {
    const std::size_t total = data.point_count();
    if (total == 0) throw DomainError("cannot select landmarks from an empty series");
    count = std::min(count, total);
    std::vector<std::size_t> idx(total);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    auto rng = stream_rng(seed, streams::kLandmarks);
    // Partial Fisher-Yates; deterministic for a given seed.
    for (std::size_t i = 0; i < count; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, total - 1);
        std::swap(idx[i], idx[pick(rng)]);
    }
    idx.resize(count);
    std::sort(idx.begin(), idx.end());

    PointMatrix out(static_cast<Eigen::Index>(count), data.dim);
    std::size_t seg = 0, base = 0, row = 0;
    for (std::size_t want : idx) {
        while (want >= base + data.segments[seg].size()) base += data.segments[seg++].size();
        out.row(static_cast<Eigen::Index>(row++)) = data.segments[seg].points.row(static_cast<Eigen::Index>(want - base));
    }
    return out;
}

EmbeddingModel fit_lle(const PointMatrix& data, const LleOptions& opt) {
    const int n_pts = static_cast<int>(data.rows());
    if (opt.dim < 1) throw DomainError("LLE target dimension must be >= 1");
    if (opt.k <= opt.dim) throw DomainError("LLE needs more neighbours than target dimensions (k > n)");
    if (n_pts <= opt.k + 1) throw DomainError("LLE needs more points than neighbours");

    EmbeddingModel model;
    model.landmarks = data;
    model.k = opt.k;
    model.regularization = opt.regularization;
    model.out_of_sample = opt.out_of_sample;
    model.affine_neighbors = opt.affine_neighbors;
    model.build_index();
    const auto& tree = model.index();

    const int k = opt.k;
    model.neighbors.assign(static_cast<std::size_t>(n_pts) * k, 0);
    model.weights.assign(static_cast<std::size_t>(n_pts) * k, 0.0);
    std::vector<double> kth(static_cast<std::size_t>(n_pts));
    parallel_for(static_cast<std::size_t>(n_pts), [&](std::size_t i) {
        const auto hits = tree.knn(data.row(static_cast<Eigen::Index>(i)).data(), k, static_cast<int>(i));
        PointMatrix nb(k, data.cols());
        for (int j = 0; j < k; ++j) {
            model.neighbors[i * k + j] = hits[j].index;
            nb.row(j) = data.row(hits[j].index);
        }
        const Vec w = reconstruction_weights(nb, data.row(static_cast<Eigen::Index>(i)).transpose(), opt.regularization);
        for (int j = 0; j < k; ++j) model.weights[i * k + j] = w[j];
        kth[i] = std::sqrt(hits.back().dist2);
    });

    std::vector<double> sorted = kth;
    const auto q = static_cast<std::size_t>(0.99 * (sorted.size() - 1));
    std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(q), sorted.end());
    model.max_distance = 2.0 * sorted[q];

    const SpMat m = lle_matrix(n_pts, k, model.neighbors, model.weights);
    Mat vecs;
    Vec vals;
    bottom_eigenpairs(m, opt.dim, opt, vecs, vals);

    model.eigenvalues = vals;
    model.embedded = PointMatrix(vecs * std::sqrt(static_cast<double>(n_pts)));
    for (int c = 0; c < opt.dim; ++c) {
        Eigen::Index at = 0;
        model.embedded.col(c).cwiseAbs().maxCoeff(&at);
        if (model.embedded(at, c) < 0) model.embedded.col(c) *= -1.0;
    }
    return model;
}

double eigen_residual(const EmbeddingModel& model) {
    const SpMat m = lle_matrix(model.size(), model.k, model.neighbors, model.weights);
    double worst = 0;
    for (int c = 0; c < model.output_dim(); ++c) {
        const Vec y = model.embedded.col(c);
        const Vec r = m * y - model.eigenvalues[c] * y;
        worst = std::max(worst, r.norm() / y.norm());
    }
    return worst;
}

namespace {

Vec embed_local_affine(const EmbeddingModel& model, const Eigen::Ref<const Vec>& p) {
    const int k = std::min(model.affine_neighbors, model.size());
    const int n = model.output_dim();
    const int m = model.input_dim();
    if (k < n + 2) throw DomainError("embed: too few neighbours for a local affine fit");
    const auto hits = model.index().knn(p.data(), k);
    if (std::sqrt(hits.front().dist2) > model.max_distance)
        throw ExtrapolationError("embed: point lies outside the sampled region");
    const double r2 = hits.back().dist2;
    if (!(r2 > 0)) return model.embedded.row(hits.front().index).transpose();
    std::vector<double> w(hits.size());
    Vec mean = Vec::Zero(m);
    double wsum = 0.0;
    for (std::size_t j = 0; j < hits.size(); ++j) {
        const double t = 1.0 - hits[j].dist2 / r2;
        w[j] = t > 0 ? t * t : 0.0;
        wsum += w[j];
        mean += w[j] * model.landmarks.row(hits[j].index).transpose();
    }
    mean /= wsum;
    Mat cov = Mat::Zero(m, m);
    for (std::size_t j = 0; j < hits.size(); ++j) {
        const Vec d = model.landmarks.row(hits[j].index).transpose() - mean;
        cov.noalias() += w[j] * d * d.transpose();
    }
    const Eigen::SelfAdjointEigenSolver<Mat> es(cov);
    const Mat tangent = es.eigenvectors().rightCols(n);
    Mat a(static_cast<Eigen::Index>(hits.size()), n + 1);
    Mat y(static_cast<Eigen::Index>(hits.size()), n);
    for (std::size_t j = 0; j < hits.size(); ++j) {
        const auto r = static_cast<Eigen::Index>(j);
        const double sw = std::sqrt(w[j]);
        a(r, 0) = sw;
        a.block(r, 1, 1, n) = sw * (tangent.transpose() * (model.landmarks.row(hits[j].index).transpose() - p)).transpose();
        y.row(r) = sw * model.embedded.row(hits[j].index);
    }
    const Mat ata = a.transpose() * a;
    const Mat coef = (ata + 1e-12 * ata.trace() * Mat::Identity(n + 1, n + 1)).ldlt().solve(a.transpose() * y);
    return coef.row(0).transpose();
}

}  // namespace

Vec embed(const EmbeddingModel& model, const Eigen::Ref<const Vec>& p) {
    if (p.size() != model.input_dim()) throw DomainError("embed: input dimension mismatch");
    if (model.out_of_sample == OutOfSample::LocalAffine) return embed_local_affine(model, p);
    const auto hits = model.index().knn(p.data(), model.k);
    if (hits.empty()) throw DomainError("embed: empty model");
    if (hits.front().dist2 == 0.0) return model.embedded.row(hits.front().index).transpose();
    if (std::sqrt(hits.front().dist2) > model.max_distance)
        throw ExtrapolationError("embed: point lies outside the sampled region");
    PointMatrix nb(static_cast<Eigen::Index>(hits.size()), p.size());
    for (std::size_t j = 0; j < hits.size(); ++j) nb.row(static_cast<Eigen::Index>(j)) = model.landmarks.row(hits[j].index);
    const Vec w = reconstruction_weights(nb, p, model.regularization);
    Vec y = Vec::Zero(model.output_dim());
    for (std::size_t j = 0; j < hits.size(); ++j) y += w[static_cast<Eigen::Index>(j)] * model.embedded.row(hits[j].index).transpose();
    return y;
}

Series embed_series(const EmbeddingModel& model, const Series& data) {
    Series out;
    out.dim = model.output_dim();
    out.segments.resize(data.segments.size());
    parallel_for(data.segments.size(), [&](std::size_t i) {
        const auto& in = data.segments[i];
        Segment s;
        s.dt = in.dt;
        s.points.resize(in.points.rows(), out.dim);
        for (Eigen::Index r = 0; r < in.points.rows(); ++r) s.points.row(r) = embed(model, in.points.row(r).transpose()).transpose();
        out.segments[i] = std::move(s);
    });
    return out;
}

}  // namespace geosep::embedding
