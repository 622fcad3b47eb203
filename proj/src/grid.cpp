#include "geosep/grid.hpp"

#include <algorithm>
#include <cmath>

namespace geosep::geometry {

std::size_t GridSpec::node_count() const {
    std::size_t n = 1;
    for (int c : count) n *= static_cast<std::size_t>(c);
    return n;
}

std::size_t GridSpec::stride(int axis) const {
    std::size_t s = 1;
    for (int a = ndim() - 1; a > axis; --a) s *= static_cast<std::size_t>(count[a]);
    return s;
}

std::vector<int> GridSpec::multi_index(std::size_t flat) const {
    std::vector<int> idx(count.size());
    for (int a = ndim() - 1; a >= 0; --a) {
        idx[a] = static_cast<int>(flat % count[a]);
        flat /= count[a];
    }
    return idx;
}

std::size_t GridSpec::flat_index(const std::vector<int>& idx) const {
    std::size_t flat = 0;
    for (int a = 0; a < ndim(); ++a) flat = flat * count[a] + idx[a];
    return flat;
}

Vec GridSpec::position(std::size_t flat) const {
    const auto idx = multi_index(flat);
    Vec x(ndim());
    for (int a = 0; a < ndim(); ++a) x[a] = lo[a] + idx[a] * step(a);
    return x;
}

std::int64_t GridSpec::nearest_node(const Eigen::Ref<const Vec>& x) const {
    std::size_t flat = 0;
    for (int a = 0; a < ndim(); ++a) {
        const double t = std::round((x[a] - lo[a]) / step(a));
        if (!(t >= 0 && t <= count[a] - 1)) return -1;
        flat = flat * count[a] + static_cast<std::size_t>(t);
    }
    return static_cast<std::int64_t>(flat);
}

void GridSpec::validate() const {
    if (count.empty()) throw DomainError("grid has no axes");
    if (lo.size() != count.size() || hi.size() != count.size()) throw DomainError("grid bounds do not match axis count");
    for (int a = 0; a < ndim(); ++a) {
        if (count[a] < 5) throw DomainError("grid needs at least 5 nodes per axis");
        if (!(hi[a] > lo[a]) || !std::isfinite(lo[a]) || !std::isfinite(hi[a]))
            throw DomainError("grid bounds must satisfy lo < hi");
    }
}

GridSpec GridSpec::from_quantiles(const Series& series, const std::vector<int>& count, double q_lo, double q_hi) {
    if (static_cast<int>(count.size()) != series.dim) throw DomainError("grid axis count does not match series dimension");
    const std::size_t total = series.point_count();
    if (total == 0) throw DomainError("cannot size a grid from an empty series");
    GridSpec g;
    g.count = count;
    std::vector<double> col;
    col.reserve(total);
    for (int a = 0; a < series.dim; ++a) {
        col.clear();
        for (const auto& s : series.segments)
            for (Eigen::Index r = 0; r < s.points.rows(); ++r) col.push_back(s.points(r, a));
        auto pick = [&](double q) {
            const auto k = static_cast<std::size_t>(std::llround(q * static_cast<double>(total - 1)));
            std::nth_element(col.begin(), col.begin() + static_cast<std::ptrdiff_t>(k), col.end());
            return col[k];
        };
        g.lo.push_back(pick(q_lo));
        g.hi.push_back(pick(q_hi));
    }
    g.validate();
    return g;
}

GridSpec GridSpec::uniform(int ndim, double lo, double hi, int count) {
    GridSpec g;
    g.lo.assign(ndim, lo);
    g.hi.assign(ndim, hi);
    g.count.assign(ndim, count);
    g.validate();
    return g;
}

TensorField::TensorField(GridSpec g, int comps)
    : grid(std::move(g)), components(comps), data(grid.node_count() * comps, 0.0), valid(grid.node_count(), 0) {}

std::size_t TensorField::valid_count() const {
    return static_cast<std::size_t>(std::count(valid.begin(), valid.end(), std::uint8_t{1}));
}

bool TensorField::derivative(std::size_t node, int axis, double* out) const {
    const int i = grid.multi_index(node)[axis];
    const int last = grid.count[axis] - 1;
    const std::size_t s = grid.stride(axis);
    const double h = grid.step(axis);
    auto ok = [&](int offset) { return i + offset >= 0 && i + offset <= last && valid[node + offset * static_cast<std::ptrdiff_t>(s)]; };
    auto f = [&](int offset) { return at(node + offset * static_cast<std::ptrdiff_t>(s)); };
    const double* f0 = at(node);
    if (ok(1) && ok(-1)) {
        const double *p = f(1), *m = f(-1);
        for (int c = 0; c < components; ++c) out[c] = (p[c] - m[c]) / (2 * h);
    } else if (ok(1) && ok(2)) {
        const double *p = f(1), *pp = f(2);
        for (int c = 0; c < components; ++c) out[c] = (-3 * f0[c] + 4 * p[c] - pp[c]) / (2 * h);
    } else if (ok(-1) && ok(-2)) {
        const double *m = f(-1), *mm = f(-2);
        for (int c = 0; c < components; ++c) out[c] = (3 * f0[c] - 4 * m[c] + mm[c]) / (2 * h);
    } else if (ok(1)) {
        const double* p = f(1);
        for (int c = 0; c < components; ++c) out[c] = (p[c] - f0[c]) / h;
    } else if (ok(-1)) {
        const double* m = f(-1);
        for (int c = 0; c < components; ++c) out[c] = (f0[c] - m[c]) / h;
    } else {
        return false;
    }
    return true;
}

bool TensorField::interpolate(const Eigen::Ref<const Vec>& x, double* out) const {
    const int n = grid.ndim();
    if (x.size() != n || !x.allFinite()) return false;
    std::vector<int> base(n);
    std::vector<double> frac(n);
    for (int a = 0; a < n; ++a) {
        const double t = (x[a] - grid.lo[a]) / grid.step(a);
        const int last = grid.count[a] - 1;
        if (t < -1e-9 || t > last + 1e-9) return false;
        base[a] = std::clamp(static_cast<int>(std::floor(t)), 0, last - 1);
        frac[a] = std::clamp(t - base[a], 0.0, 1.0);
    }
    std::fill(out, out + components, 0.0);
    const std::size_t origin = grid.flat_index(base);
    for (unsigned corner = 0; corner < (1u << n); ++corner) {
        std::size_t node = origin;
        double w = 1.0;
        for (int a = 0; a < n; ++a) {
            const bool up = (corner >> a) & 1u;
            w *= up ? frac[a] : 1.0 - frac[a];
            if (up) node += grid.stride(a);
        }
        if (!valid[node]) return false;
        if (w == 0.0) continue;
        const double* v = at(node);
        for (int c = 0; c < components; ++c) out[c] += w * v[c];
    }
    return true;
}

}  // namespace geosep::geometry
