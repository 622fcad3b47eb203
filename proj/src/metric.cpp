#include "geosep/metric.hpp"

#include "geosep/parallel.hpp"

#include <algorithm>
#include <cmath>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace geosep::geometry {

namespace {

// Inverts a symmetric matrix if it is positive definite with a sane
// condition number.
bool spd_inverse(const Mat& m, Mat& inv) {
    const Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (m + m.transpose()));
    if (es.info() != Eigen::Success) return false;
    const Vec ev = es.eigenvalues();
    if (!(ev[0] > 0) || !std::isfinite(ev[ev.size() - 1]) || ev[0] < 1e-12 * ev[ev.size() - 1]) return false;
    inv = es.eigenvectors() * ev.cwiseInverse().asDiagonal() * es.eigenvectors().transpose();
    inv = 0.5 * (inv + inv.transpose());
    return true;
}

int worker_count() {
#ifdef _OPENMP
    return std::max(1, omp_get_max_threads());
#else
    return 1;
#endif
}

}  // namespace

void CellAccumulator::add(const Eigen::Ref<const Vec>& v) {
    if (count == 0) {
        sum = Vec::Zero(v.size());
        outer = Mat::Zero(v.size(), v.size());
    }
    ++count;
    sum += v;
    outer.noalias() += v * v.transpose();
}

void CellAccumulator::merge(const CellAccumulator& other) {
    if (other.count == 0) return;
    if (count == 0) {
        *this = other;
        return;
    }
    if (sum.size() != other.sum.size()) throw DomainError("cannot merge accumulators of different dimension");
    count += other.count;
    sum += other.sum;
    outer += other.outer;
}

Mat CellAccumulator::covariance() const {
    if (count < 2) throw DomainError("covariance needs at least two samples");
    const double n = static_cast<double>(count);
    Mat c = (outer - sum * sum.transpose() / n) / (n - 1.0);
    return 0.5 * (c + c.transpose());
}

CellAccumulator merge_accumulators(const CellAccumulator& a, const CellAccumulator& b) {
    CellAccumulator out = a;
    out.merge(b);
    return out;
}

std::size_t GridAccumulator::add_segment(const Segment& seg) {
    if (seg.dim() != grid.ndim()) throw DomainError("segment dimension does not match the grid");
    if (!(seg.dt > 0)) throw DomainError("segment dt must be positive");
    std::size_t binned = 0;
    for (Eigen::Index r = 0; r + 1 < seg.points.rows(); ++r) {
        const Vec a = seg.points.row(r).transpose();
        const Vec b = seg.points.row(r + 1).transpose();
        const auto node = grid.nearest_node(0.5 * (a + b));
        if (node < 0) continue;
        cells[static_cast<std::size_t>(node)].add((b - a) / seg.dt);
        ++binned;
    }
    return binned;
}

void GridAccumulator::merge(const GridAccumulator& other) {
    if (!(other.grid == grid)) throw DomainError("cannot merge accumulators over different grids");
    for (std::size_t i = 0; i < cells.size(); ++i) cells[i].merge(other.cells[i]);
}

GridAccumulator accumulate(const Series& series, const GridSpec& grid, std::size_t chunk_segments) {
    grid.validate();
    if (series.dim != grid.ndim()) throw DomainError("series dimension does not match the grid");
    if (chunk_segments == 0) throw DomainError("chunk size must be positive");
    GridAccumulator total(grid);
    const std::size_t chunks = (series.segments.size() + chunk_segments - 1) / chunk_segments;
    // Chunks are reduced in index order so the result does not depend on the
    // number of threads.
    const std::size_t batch = static_cast<std::size_t>(worker_count());
    for (std::size_t first = 0; first < chunks; first += batch) {
        const std::size_t here = std::min(batch, chunks - first);
        std::vector<GridAccumulator> partial(here, GridAccumulator(grid));
        parallel_for(here, [&](std::size_t j) {
            const std::size_t begin = (first + j) * chunk_segments;
            const std::size_t end = std::min(series.segments.size(), begin + chunk_segments);
            for (std::size_t s = begin; s < end; ++s) partial[j].add_segment(series.segments[s]);
        });
        for (const auto& p : partial) total.merge(p);
    }
    return total;
}

MetricField metric_from_accumulator(const GridAccumulator& acc, int min_count) {
    const int n = acc.grid.ndim();
    MetricField f{TensorField(acc.grid, n * n), TensorField(acc.grid, n * n), std::vector<std::uint64_t>(acc.grid.node_count(), 0)};
    parallel_for(acc.cells.size(), [&](std::size_t i) {
        const auto& cell = acc.cells[i];
        f.count[i] = cell.count;
        if (cell.count < static_cast<std::uint64_t>(std::max(2, min_count))) return;
        const Mat up = cell.covariance();
        Mat low;
        if (!spd_inverse(up, low)) return;
        Eigen::Map<Mat>(f.upper.at(i), n, n) = up;
        Eigen::Map<Mat>(f.lower.at(i), n, n) = low;
        f.upper.valid[i] = f.lower.valid[i] = 1;
    });
    return f;
}

void smooth_metric(MetricField& field, double sigma_cells) {
    if (sigma_cells <= 0) return;
    const GridSpec& grid = field.grid();
    const int n = field.dim();
    const int comps = n * n;
    const int radius = static_cast<int>(std::ceil(3.0 * sigma_cells));
    std::vector<double> kernel(2 * radius + 1);
    for (int r = -radius; r <= radius; ++r) kernel[r + radius] = std::exp(-0.5 * r * r / (sigma_cells * sigma_cells));

    const std::size_t nodes = grid.node_count();
    // Convolve mask * g and the mask itself, then divide.
    std::vector<double> value(nodes * comps, 0.0), weight(nodes, 0.0);
    for (std::size_t i = 0; i < nodes; ++i) {
        if (!field.lower.is_valid(i)) continue;
        weight[i] = 1.0;
        std::copy(field.lower.at(i), field.lower.at(i) + comps, value.begin() + static_cast<std::ptrdiff_t>(i * comps));
    }
    for (int axis = 0; axis < grid.ndim(); ++axis) {
        std::vector<double> nv(nodes * comps, 0.0), nw(nodes, 0.0);
        const std::size_t s = grid.stride(axis);
        const int cnt = grid.count[axis];
        parallel_for(nodes, [&](std::size_t i) {
            const int at = grid.multi_index(i)[axis];
            for (int r = -radius; r <= radius; ++r) {
                const int j = at + r;
                if (j < 0 || j >= cnt) continue;
                const std::size_t src = i + static_cast<std::ptrdiff_t>(r) * static_cast<std::ptrdiff_t>(s);
                const double w = kernel[r + radius];
                nw[i] += w * weight[src];
                for (int c = 0; c < comps; ++c) nv[i * comps + c] += w * value[src * comps + c];
            }
        });
        value.swap(nv);
        weight.swap(nw);
    }
    parallel_for(nodes, [&](std::size_t i) {
        if (!field.lower.is_valid(i)) return;
        Mat low = Eigen::Map<const Mat>(value.data() + i * comps, n, n) / weight[i];
        low = 0.5 * (low + low.transpose());
        Mat up;
        if (!spd_inverse(low, up)) {
            field.upper.valid[i] = field.lower.valid[i] = 0;
            return;
        }
        Eigen::Map<Mat>(field.lower.at(i), n, n) = low;
        Eigen::Map<Mat>(field.upper.at(i), n, n) = up;
    });
}

void smooth_metric_local(MetricField& field, double sigma_cells, int degree, bool count_weighted) {
    if (sigma_cells <= 0) return;
    if (degree < 0 || degree > 2) throw DomainError("local fit degree must be 0, 1 or 2");
    const GridSpec& grid = field.grid();
    const int n = field.dim();
    const int comps = n * n;
    const int radius = static_cast<int>(std::ceil(3.0 * sigma_cells));
    const std::size_t nodes = grid.node_count();

    // Offsets inside the cube of the given radius.
    std::vector<std::vector<int>> offsets;
    std::vector<double> kernel;
    {
        std::vector<int> o(n, -radius);
        while (true) {
            double r2 = 0.0;
            for (int v : o) r2 += double(v) * v;
            if (r2 <= double(radius) * radius) {
                offsets.push_back(o);
                kernel.push_back(std::exp(-0.5 * r2 / (sigma_cells * sigma_cells)));
            }
            int a = 0;
            while (a < n && ++o[a] > radius) o[a++] = -radius;
            if (a == n) break;
        }
    }
    auto basis_size = [n](int d) { return d == 0 ? 1 : d == 1 ? 1 + n : 1 + n + n * (n + 1) / 2; };
    auto fill_basis = [n](const std::vector<int>& o, int d, double* b) {
        int k = 0;
        b[k++] = 1.0;
        if (d >= 1)
            for (int a = 0; a < n; ++a) b[k++] = o[a];
        if (d >= 2)
            for (int a = 0; a < n; ++a)
                for (int c = a; c < n; ++c) b[k++] = double(o[a]) * o[c];
    };

    std::vector<double> out(nodes * comps, 0.0);
    std::vector<std::uint8_t> ok(nodes, 0);
    parallel_for(nodes, [&](std::size_t i) {
        if (!field.lower.is_valid(i)) return;
        const auto at = grid.multi_index(i);
        std::vector<std::size_t> src;
        std::vector<const std::vector<int>*> off;
        std::vector<double> w;
        for (std::size_t k = 0; k < offsets.size(); ++k) {
            std::size_t j = 0;
            bool inside = true;
            for (int a = 0; a < n && inside; ++a) {
                const int c = at[a] + offsets[k][a];
                inside = c >= 0 && c < grid.count[a];
                j += static_cast<std::size_t>(c) * grid.stride(a);
            }
            if (!inside || !field.lower.is_valid(j)) continue;
            src.push_back(j);
            off.push_back(&offsets[k]);
            w.push_back(kernel[k] * (count_weighted ? static_cast<double>(std::max<std::uint64_t>(field.count[j], 1)) : 1.0));
        }
        for (int d = degree; d >= 0; --d) {
            const int p = basis_size(d);
            if (static_cast<int>(src.size()) < 2 * p) continue;
            Mat design(static_cast<Eigen::Index>(src.size()), p);
            Mat rhs(static_cast<Eigen::Index>(src.size()), comps);
            for (std::size_t r = 0; r < src.size(); ++r) {
                const double sw = std::sqrt(w[r]);
                Vec row(p);
                fill_basis(*off[r], d, row.data());
                design.row(static_cast<Eigen::Index>(r)) = sw * row.transpose();
                for (int c = 0; c < comps; ++c) rhs(static_cast<Eigen::Index>(r), c) = sw * field.lower.at(src[r])[c];
            }
            const Eigen::JacobiSVD<Mat> svd(design, Eigen::ComputeThinU | Eigen::ComputeThinV);
            const Vec sv = svd.singularValues();
            if (!(sv[p - 1] > 1e-6 * sv[0])) continue;
            const Mat coef = svd.solve(rhs);
            for (int c = 0; c < comps; ++c) out[i * comps + c] = coef(0, c);
            ok[i] = 1;
            return;
        }
    });
    parallel_for(nodes, [&](std::size_t i) {
        if (!field.lower.is_valid(i)) return;
        Mat low = Eigen::Map<const Mat>(out.data() + i * comps, n, n);
        low = 0.5 * (low + low.transpose());
        Mat up;
        if (!ok[i] || !spd_inverse(low, up)) {
            field.upper.valid[i] = field.lower.valid[i] = 0;
            return;
        }
        Eigen::Map<Mat>(field.lower.at(i), n, n) = low;
        Eigen::Map<Mat>(field.upper.at(i), n, n) = up;
    });
}

MetricField estimate_metric(const Series& series, const GridSpec& grid, const MetricOptions& opt) {
    if (series.segments.empty()) throw DomainError("cannot estimate a metric from an empty series");
    MetricField f = metric_from_accumulator(accumulate(series, grid, opt.chunk_segments), opt.min_count);
    if (opt.smoothing_order == 0 && !opt.count_weighted)
        smooth_metric(f, opt.smoothing_sigma);
    else
        smooth_metric_local(f, opt.smoothing_sigma, opt.smoothing_order, opt.count_weighted);
    return f;
}

MetricField sample_metric(const GridSpec& grid, const std::function<Mat(const Vec&)>& lower) {
    grid.validate();
    const int n = grid.ndim();
    MetricField f{TensorField(grid, n * n), TensorField(grid, n * n), std::vector<std::uint64_t>(grid.node_count(), 0)};
    for (std::size_t i = 0; i < grid.node_count(); ++i) {
        const Mat low = lower(grid.position(i));
        Mat up;
        if (low.rows() != n || low.cols() != n) throw DomainError("analytic metric has the wrong shape");
        if (!spd_inverse(low, up)) continue;
        Eigen::Map<Mat>(f.lower.at(i), n, n) = low;
        Eigen::Map<Mat>(f.upper.at(i), n, n) = up;
        f.upper.valid[i] = f.lower.valid[i] = 1;
    }
    return f;
}

bool MetricField::covariant_at(const Eigen::Ref<const Vec>& x, Mat& g) const {
    g.resize(dim(), dim());
    if (!lower.interpolate(x, g.data())) return false;
    return true;
}

}  // namespace geosep::geometry
