#include "geosep/separation.hpp"

#include <cmath>
#include <map>

namespace geosep::separation {

namespace {

std::vector<int> block_of_axis(const std::vector<int>& blocks) {
    std::vector<int> owner;
    for (std::size_t b = 0; b < blocks.size(); ++b)
        for (int k = 0; k < blocks[b]; ++k) owner.push_back(static_cast<int>(b));
    return owner;
}

}  // namespace

BlockScore block_score(const geometry::TensorField& metric_s, const std::vector<int>& blocks,
                       const std::vector<std::uint8_t>& skip) {
    const int n = metric_s.grid.ndim();
    const auto owner = block_of_axis(blocks);
    if (static_cast<int>(owner.size()) != n) throw DomainError("block sizes do not add up to the metric dimension");
    BlockScore score;
    double off_sum = 0.0;
    const std::size_t nodes = metric_s.grid.node_count();
    auto used = [&](std::size_t i) { return metric_s.is_valid(i) && (skip.empty() || !skip[i]); };
    for (std::size_t i = 0; i < nodes; ++i) {
        if (!used(i)) continue;
        const Eigen::Map<const Mat> g(metric_s.at(i), n, n);
        const Vec d = g.diagonal().cwiseMax(1e-300).cwiseSqrt().cwiseInverse();
        const Mat c = d.asDiagonal() * g * d.asDiagonal();
        double off = 0.0;
        for (int k = 0; k < n; ++k)
            for (int l = 0; l < n; ++l)
                if (owner[k] != owner[l]) off += c(k, l) * c(k, l);
        off_sum += std::sqrt(off) / c.norm();
        ++score.nodes;
    }
    if (score.nodes == 0) return score;
    score.off_block = off_sum / static_cast<double>(score.nodes);

    // For each block, group nodes by their own-block lattice coordinates and
    // measure how much the block's metric varies across each group.
    double dep_sum = 0.0;
    int dep_terms = 0;
    int offset = 0;
    for (std::size_t b = 0; b < blocks.size(); ++b) {
        const int size = blocks[b];
        if (size == n) {
            offset += size;
            continue;
        }
        std::map<std::vector<int>, std::vector<std::size_t>> groups;
        for (std::size_t i = 0; i < nodes; ++i) {
            if (!used(i)) continue;
            const auto idx = metric_s.grid.multi_index(i);
            groups[std::vector<int>(idx.begin() + offset, idx.begin() + offset + size)].push_back(i);
        }
        for (const auto& [key, members] : groups) {
            if (members.size() < 2) continue;
            Mat mean = Mat::Zero(size, size);
            for (auto i : members) mean += Eigen::Map<const Mat>(metric_s.at(i), n, n).block(offset, offset, size, size);
            mean /= static_cast<double>(members.size());
            double var = 0.0;
            for (auto i : members)
                var += (Eigen::Map<const Mat>(metric_s.at(i), n, n).block(offset, offset, size, size) - mean).squaredNorm();
            var /= static_cast<double>(members.size());
            dep_sum += std::sqrt(var) / mean.norm();
            ++dep_terms;
        }
        offset += size;
    }
    score.dependence = dep_terms > 0 ? dep_sum / dep_terms : 0.0;
    return score;
}

std::vector<PairCorrelation> cross_block_independence(const Series& series_s, const std::vector<int>& blocks,
                                                      double floor) {
    std::vector<PairCorrelation> out;
    if (blocks.size() < 2) return out;
    const int n = series_s.dim;
    const auto owner = block_of_axis(blocks);
    if (static_cast<int>(owner.size()) != n) throw DomainError("block sizes do not add up to the series dimension");
    std::uint64_t count = 0;
    Vec sum = Vec::Zero(n);
    Mat outer = Mat::Zero(n, n);
    for (const auto& seg : series_s.segments)
        for (Eigen::Index r = 0; r + 1 < seg.points.rows(); ++r) {
            const Vec v = (seg.points.row(r + 1) - seg.points.row(r)).transpose() / seg.dt;
            ++count;
            sum += v;
            outer.noalias() += v * v.transpose();
        }
    if (count < 2) throw DomainError("not enough velocity samples for a correlation test");
    const double N = static_cast<double>(count);
    const Mat cov = (outer - sum * sum.transpose() / N) / (N - 1.0);
    const double threshold = std::max(3.0 / std::sqrt(N), floor);
    for (std::size_t a = 0; a < blocks.size(); ++a)
        for (std::size_t b = a + 1; b < blocks.size(); ++b) {
            PairCorrelation p;
            p.a = static_cast<int>(a);
            p.b = static_cast<int>(b);
            for (int k = 0; k < n; ++k)
                for (int l = 0; l < n; ++l)
                    if (owner[k] == static_cast<int>(a) && owner[l] == static_cast<int>(b))
                        p.max_corr = std::max(p.max_corr, std::abs(cov(k, l)) / std::sqrt(cov(k, k) * cov(l, l)));
            p.threshold = threshold;
            p.independent = p.max_corr <= threshold;
            out.push_back(p);
        }
    return out;
}

Series restrict_series(const Series& series, int offset, int size) {
    if (offset < 0 || size < 1 || offset + size > series.dim) throw DomainError("coordinate range outside the series");
    Series out;
    out.dim = size;
    out.segments.reserve(series.segments.size());
    for (const auto& s : series.segments) {
        Segment r;
        r.dt = s.dt;
        r.points = s.points.middleCols(offset, size);
        out.segments.push_back(std::move(r));
    }
    return out;
}

}  // namespace geosep::separation
