#include "geosep/stimulus.hpp"

#include "geosep/parallel.hpp"
#include "geosep/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

namespace geosep::stimulus {

namespace {

// Conformal exponent sigma(x) and its gradient for a ConformalBump factor.
double bump_sigma(const ManifoldSpec& f, const Vec& x, Vec* grad) {
    const int n = static_cast<int>(x.size());
    Vec d(n);
    for (int i = 0; i < n; ++i) d[i] = x[i] - (i < static_cast<int>(f.bump_center.size()) ? f.bump_center[i] : 0.0);
    const double w2 = f.bump_width * f.bump_width;
    const double sigma = f.bump_amplitude * std::exp(-d.squaredNorm() / (2.0 * w2));
    if (grad) *grad = -sigma / w2 * d;
    return sigma;
}

// Unit-metric gradient of the admissibility boundary function at x (points
// outward). Only meaningful near the boundary.
Vec boundary_gradient(const ManifoldSpec& f, const Vec& x) {
    Vec g = Vec::Zero(x.size());
    switch (f.kind) {
        case ManifoldKind::SpherePatch: {
            const double c = std::cos(x[1]) * std::cos(x[0]);
            const double s = std::sqrt(std::max(1e-300, 1.0 - c * c));
            g[0] = std::cos(x[1]) * std::sin(x[0]) / s;
            g[1] = std::sin(x[1]) * std::cos(x[0]) / s;
            break;
        }
        case ManifoldKind::Line:
            g[0] = x[0] >= 0 ? 1.0 : -1.0;
            break;
        case ManifoldKind::Euclidean:
            break;
    }
    return g;
}

// Specular reflection of v about the boundary normal, in the mass metric.
// `trial` is the rejected position that left the admissible region.
void reflect(const ManifoldSpec& f, const Vec& x, Vec& v, const Vec& trial) {
    if (f.kind == ManifoldKind::Euclidean) {
        // Box walls are axis aligned and mu is conformal: flip outgoing axes.
        for (int i = 0; i < x.size(); ++i)
            if (std::abs(trial[i]) > f.half_width && trial[i] * v[i] > 0) v[i] = -v[i];
        return;
    }
    const Vec grad = boundary_gradient(f, x);
    const Mat mu_inv = f.mass_matrix(x).inverse();
    const Vec normal = mu_inv * grad;
    const double outward = grad.dot(v);
    if (outward <= 0) return;
    v -= 2.0 * outward / grad.dot(normal) * normal;
}

Vec acceleration(const ManifoldSpec& f, const Vec& x, const Vec& v) {
    const int n = static_cast<int>(x.size());
    const auto gamma = f.christoffel(x);
    Vec a = Vec::Zero(n);
    for (int k = 0; k < n; ++k)
        for (int l = 0; l < n; ++l)
            for (int m = 0; m < n; ++m) a[k] -= gamma[(k * n + l) * n + m] * v[l] * v[m];
    if (f.potential != PotentialKind::Zero) a -= f.mass_matrix(x).ldlt().solve(f.potential_gradient(x));
    return a;
}

void rk4_step(const ManifoldSpec& f, Vec& x, Vec& v, double h) {
    const Vec k1x = v;
    const Vec k1v = acceleration(f, x, v);
    const Vec x2 = x + 0.5 * h * k1x, v2 = v + 0.5 * h * k1v;
    const Vec k2x = v2;
    const Vec k2v = acceleration(f, x2, v2);
    const Vec x3 = x + 0.5 * h * k2x, v3 = v + 0.5 * h * k2v;
    const Vec k3x = v3;
    const Vec k3v = acceleration(f, x3, v3);
    const Vec x4 = x + h * k3x, v4 = v + h * k3v;
    const Vec k4x = v4;
    const Vec k4v = acceleration(f, x4, v4);
    x += h / 6.0 * (k1x + 2 * k2x + 2 * k3x + k4x);
    v += h / 6.0 * (k1v + 2 * k2v + 2 * k3v + k4v);
}

}  // namespace

int ManifoldSpec::dim() const {
    switch (kind) {
        case ManifoldKind::SpherePatch: return 2;
        case ManifoldKind::Line: return 1;
        case ManifoldKind::Euclidean: return euclid_dim;
    }
    return 0;
}

void ManifoldSpec::validate() const {
    if (!(mass > 0)) throw DomainError("factor mass must be positive");
    switch (kind) {
        case ManifoldKind::SpherePatch:
            if (!(radius > 0)) throw DomainError("sphere radius must be positive");
            if (!(patch_angle > 0 && patch_angle < std::numbers::pi / 2))
                throw DomainError("sphere patch_angle must lie in (0, pi/2) for the longitude/latitude chart");
            if (std::abs(center.norm() - 1.0) > 1e-9) throw DomainError("sphere patch center must be a unit vector");
            break;
        case ManifoldKind::Line:
            if (!(half_length > 0)) throw DomainError("line half_length must be positive");
            break;
        case ManifoldKind::Euclidean:
            if (euclid_dim < 1 || euclid_dim > 3) throw DomainError("euclidean dim must be 1..3");
            if (!(half_width > 0)) throw DomainError("euclidean half_width must be positive");
            if (!(bump_width > 0)) throw DomainError("bump width must be positive");
            break;
    }
    if (potential == PotentialKind::Harmonic && !(stiffness >= 0)) throw DomainError("stiffness must be >= 0");
}

bool ManifoldSpec::admissible(const Vec& x) const {
    if (x.size() != dim() || !x.allFinite()) return false;
    switch (kind) {
        case ManifoldKind::SpherePatch:
            return std::abs(x[1]) < std::numbers::pi / 2 && std::abs(x[0]) < std::numbers::pi &&
                   std::cos(x[1]) * std::cos(x[0]) >= std::cos(patch_angle);
        case ManifoldKind::Line:
            return std::abs(x[0]) <= half_length;
        case ManifoldKind::Euclidean:
            return x.cwiseAbs().maxCoeff() <= half_width;
    }
    return false;
}

Mat ManifoldSpec::mass_matrix(const Vec& x) const {
    const int n = dim();
    Mat mu = Mat::Identity(n, n) * mass;
    switch (kind) {
        case ManifoldKind::SpherePatch: {
            const double c = std::cos(x[1]);
            mu(0, 0) = mass * radius * radius * c * c;
            mu(1, 1) = mass * radius * radius;
            break;
        }
        case ManifoldKind::Line: break;
        case ManifoldKind::Euclidean:
            if (mass_kind == MassKind::ConformalBump) mu *= std::exp(2.0 * bump_sigma(*this, x, nullptr));
            break;
    }
    return mu;
}

std::vector<double> ManifoldSpec::christoffel(const Vec& x) const {
    const int n = dim();
    std::vector<double> g(static_cast<std::size_t>(n * n * n), 0.0);
    auto at = [&](int k, int l, int m) -> double& { return g[(k * n + l) * n + m]; };
    switch (kind) {
        case ManifoldKind::SpherePatch: {
            const double t = x[1];
            at(0, 0, 1) = at(0, 1, 0) = -std::tan(t);
            at(1, 0, 0) = std::sin(t) * std::cos(t);
            break;
        }
        case ManifoldKind::Line: break;
        case ManifoldKind::Euclidean:
            if (mass_kind == MassKind::ConformalBump) {
                Vec ds;
                bump_sigma(*this, x, &ds);
                for (int k = 0; k < n; ++k)
                    for (int l = 0; l < n; ++l)
                        for (int m = 0; m < n; ++m)
                            at(k, l, m) = (k == l ? ds[m] : 0.0) + (k == m ? ds[l] : 0.0) - (l == m ? ds[k] : 0.0);
            }
            break;
    }
    return g;
}

double ManifoldSpec::potential_energy(const Vec& x) const {
    if (potential == PotentialKind::Zero) return 0.0;
    return 0.5 * stiffness * x.squaredNorm();
}

Vec ManifoldSpec::potential_gradient(const Vec& x) const {
    if (potential == PotentialKind::Zero) return Vec::Zero(x.size());
    return stiffness * x;
}

int StimulusConfig::dim() const {
    int n = 0;
    for (const auto& f : factors) n += f.dim();
    return n;
}

std::vector<int> StimulusConfig::offsets() const {
    std::vector<int> off;
    int n = 0;
    for (const auto& f : factors) {
        off.push_back(n);
        n += f.dim();
    }
    return off;
}

std::vector<int> StimulusConfig::block_sizes() const {
    std::vector<int> b;
    for (const auto& f : factors) b.push_back(f.dim());
    return b;
}

void StimulusConfig::validate() const {
    if (factors.empty()) throw DomainError("stimulus needs at least one factor");
    for (const auto& f : factors) f.validate();
    if (!(kT > 0)) throw DomainError("kT must be positive");
    if (!(dt > 0)) throw DomainError("dt must be positive");
    if (segment_length < 2) throw DomainError("segment_length must be >= 2");
    if (substeps < 1) throw DomainError("substeps must be >= 1");
    if (max_attempts < 1) throw DomainError("max_attempts must be >= 1");
}

bool StimulusConfig::admissible(const Vec& x) const {
    if (x.size() != dim()) return false;
    const auto off = offsets();
    for (std::size_t i = 0; i < factors.size(); ++i)
        if (!factors[i].admissible(x.segment(off[i], factors[i].dim()))) return false;
    return true;
}

Mat StimulusConfig::mass_matrix(const Vec& x) const {
    const int n = dim();
    Mat mu = Mat::Zero(n, n);
    const auto off = offsets();
    for (std::size_t i = 0; i < factors.size(); ++i) {
        const int d = factors[i].dim();
        mu.block(off[i], off[i], d, d) = factors[i].mass_matrix(x.segment(off[i], d));
    }
    return mu;
}

Mat StimulusConfig::source_metric(const Vec& x) const { return mass_matrix(x) / kT; }

std::vector<double> StimulusConfig::christoffel(const Vec& x) const {
    const int n = dim();
    std::vector<double> g(static_cast<std::size_t>(n * n * n), 0.0);
    const auto off = offsets();
    for (std::size_t i = 0; i < factors.size(); ++i) {
        const int d = factors[i].dim();
        const int o = off[i];
        const auto local = factors[i].christoffel(x.segment(o, d));
        for (int k = 0; k < d; ++k)
            for (int l = 0; l < d; ++l)
                for (int m = 0; m < d; ++m) g[((o + k) * n + o + l) * n + o + m] = local[(k * d + l) * d + m];
    }
    return g;
}

double energy(const StimulusConfig& cfg, const PhaseSample& s) {
    if (s.x.size() != cfg.dim() || s.v.size() != cfg.dim()) throw DomainError("phase sample has wrong dimension");
    if (!cfg.admissible(s.x)) throw DomainError("phase sample position outside the chart");
    double e = 0.5 * s.v.dot(cfg.mass_matrix(s.x) * s.v);
    const auto off = cfg.offsets();
    for (std::size_t i = 0; i < cfg.factors.size(); ++i)
        e += cfg.factors[i].potential_energy(s.x.segment(off[i], cfg.factors[i].dim()));
    return e;
}

PhaseSample sample_factor_state(const StimulusConfig& cfg, const ManifoldSpec& f, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> normal(0.0, 1.0);
    const int n = f.dim();
    Vec x(n);
    bool accepted = false;
    for (int attempt = 0; attempt < cfg.max_attempts && !accepted; ++attempt) {
        // Proposal follows the sqrt(det mu) marginal where it is available in
        // closed form; the remaining factors are handled by rejection.
        double accept = 1.0;
        switch (f.kind) {
            case ManifoldKind::SpherePatch: {
                // Uniform on the spherical cap: cos(d) uniform, azimuth uniform.
                const double cd = 1.0 - unit(rng) * (1.0 - std::cos(f.patch_angle));
                const double sd = std::sqrt(std::max(0.0, 1.0 - cd * cd));
                const double az = 2.0 * std::numbers::pi * unit(rng);
                const double px = cd, py = sd * std::cos(az), pz = sd * std::sin(az);
                x[0] = std::atan2(py, px);
                x[1] = std::asin(std::clamp(pz, -1.0, 1.0));
                break;
            }
            case ManifoldKind::Line:
                x[0] = (2.0 * unit(rng) - 1.0) * f.half_length;
                break;
            case ManifoldKind::Euclidean: {
                for (int i = 0; i < n; ++i) x[i] = (2.0 * unit(rng) - 1.0) * f.half_width;
                if (f.mass_kind == MassKind::ConformalBump) {
                    const double top = std::max(0.0, f.bump_amplitude);
                    accept *= std::exp(n * (bump_sigma(f, x, nullptr) - top));
                }
                break;
            }
        }
        if (f.potential != PotentialKind::Zero) accept *= std::exp(-f.potential_energy(x) / cfg.kT);
        if (!f.admissible(x)) continue;
        if (accept >= 1.0 || unit(rng) < accept) accepted = true;
    }
    if (!accepted) throw SamplingError("position rejection sampling exceeded " + std::to_string(cfg.max_attempts) + " attempts");

    // Velocity ~ N(0, kT mu^{-1}): v = L^{-T} z sqrt(kT) with mu = L L^T.
    Vec z(n);
    for (int i = 0; i < n; ++i) z[i] = normal(rng);
    const Eigen::LLT<Mat> llt(f.mass_matrix(x));
    Vec v = llt.matrixU().solve(z) * std::sqrt(cfg.kT);
    return {x, v, 0.0};
}

void advance_factor(const StimulusConfig& cfg, const ManifoldSpec& f, Vec& x, Vec& v, double dt) {
    const double h = dt / cfg.substeps;
    for (int s = 0; s < cfg.substeps; ++s) {
        Vec xt = x, vt = v;
        rk4_step(f, xt, vt, h);
        if (f.admissible(xt)) {
            x = xt;
            v = vt;
            continue;
        }
        // Hit the wall during this substep: reflect at the current (interior)
        // position and retry; a corner may need a full reversal.
        reflect(f, x, v, xt);
        xt = x;
        vt = v;
        rk4_step(f, xt, vt, h);
        if (!f.admissible(xt)) {
            v = -v;
            xt = x;
            vt = v;
            rk4_step(f, xt, vt, h);
            if (!f.admissible(xt)) continue;
        }
        x = xt;
        v = vt;
    }
}

Segment sample_mb_segment(const StimulusConfig& cfg, std::mt19937_64& rng) {
    const int n = cfg.dim();
    Segment seg;
    seg.dt = cfg.dt;
    seg.points.resize(cfg.segment_length, n);
    const auto off = cfg.offsets();
    for (std::size_t i = 0; i < cfg.factors.size(); ++i) {
        const auto& f = cfg.factors[i];
        const int d = f.dim();
        PhaseSample s = sample_factor_state(cfg, f, rng);
        for (int p = 0; p < cfg.segment_length; ++p) {
            if (p > 0) advance_factor(cfg, f, s.x, s.v, cfg.dt);
            for (int j = 0; j < d; ++j) seg.points(p, off[i] + j) = s.x[j];
        }
    }
    return seg;
}

Series generate_trajectory(const StimulusConfig& cfg) {
    cfg.validate();
    Series out;
    out.dim = cfg.dim();
    out.segments.resize(cfg.n_segments);
    parallel_for(cfg.n_segments, [&](std::size_t i) {
        auto rng = stream_rng(cfg.rng_seed, streams::kStimulus, i);
        out.segments[i] = sample_mb_segment(cfg, rng);
    });
    return out;
}

StimulusConfig sphere_line_config(std::uint64_t seed) {
    StimulusConfig cfg;
    ManifoldSpec sphere;
    sphere.kind = ManifoldKind::SpherePatch;
    sphere.radius = 1.0;
    sphere.patch_angle = 1.0;
    auto rng = stream_rng(seed, streams::kSpherePatch);
    std::normal_distribution<double> normal(0.0, 1.0);
    Eigen::Vector3d c(normal(rng), normal(rng), normal(rng));
    sphere.center = c.normalized();
    ManifoldSpec line;
    line.kind = ManifoldKind::Line;
    line.half_length = 1.0;
    cfg.factors = {sphere, line};
    cfg.rng_seed = seed;
    return cfg;
}

}  // namespace geosep::stimulus
