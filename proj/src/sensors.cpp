#include "geosep/sensors.hpp"

#include "geosep/parallel.hpp"
#include "geosep/rng.hpp"

#include <cmath>
#include <numbers>
#include <random>

namespace geosep::sensors {

namespace {

double poly(const std::array<double, 6>& a, double u, double v) {
    return a[0] + a[1] * u + a[2] * v + a[3] * u * u + a[4] * u * v + a[5] * v * v;
}

Eigen::Vector3d random_unit(std::mt19937_64& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    Eigen::Vector3d v(normal(rng), normal(rng), normal(rng));
    return v.normalized();
}

// Right-handed frame whose first column is `first`.
Eigen::Matrix3d frame_from(const Eigen::Vector3d& first, std::mt19937_64& rng) {
    Eigen::Vector3d a = first.normalized();
    Eigen::Vector3d t = random_unit(rng);
    Eigen::Vector3d b = (t - t.dot(a) * a).normalized();
    Eigen::Matrix3d m;
    m.col(0) = a;
    m.col(1) = b;
    m.col(2) = a.cross(b);
    return m;
}

}  // namespace

Eigen::Vector2d CameraModel::pinhole(const Eigen::Vector3d& world) const {
    const Eigen::Vector3d p = orientation.transpose() * (world - position);
    if (!(p.z() > 1e-6 * focal_distance)) throw ProjectionError("particle is not in front of the camera focal plane");
    return {focal_distance * p.x() / p.z(), focal_distance * p.y() / p.z()};
}

Eigen::Vector2d CameraModel::distort(const Eigen::Vector2d& uv) const {
    return {poly(distort_u, uv.x(), uv.y()), poly(distort_v, uv.x(), uv.y())};
}

Eigen::Matrix2d CameraModel::distortion_jacobian(const Eigen::Vector2d& uv) const {
    const double u = uv.x(), v = uv.y();
    Eigen::Matrix2d j;
    j << distort_u[1] + 2 * distort_u[3] * u + distort_u[4] * v, distort_u[2] + distort_u[4] * u + 2 * distort_u[5] * v,
        distort_v[1] + 2 * distort_v[3] * u + distort_v[4] * v, distort_v[2] + distort_v[4] * u + 2 * distort_v[5] * v;
    return j;
}

void CameraModel::validate() const {
    const double ortho = (orientation.transpose() * orientation - Eigen::Matrix3d::Identity()).norm();
    if (ortho > 1e-9 || std::abs(orientation.determinant() - 1.0) > 1e-9)
        throw DomainError("camera orientation must be a proper rotation");
    if (!(focal_distance > 0)) throw DomainError("camera focal distance must be positive");
}

int SensorRig::input_dim() const {
    int n = 0;
    for (const auto& f : factors) n += f.dim();
    return n;
}

std::vector<Eigen::Vector3d> SensorRig::particles(const Vec& x) const {
    if (x.size() != input_dim()) throw DomainError("state dimension does not match the rig");
    std::vector<Eigen::Vector3d> out;
    out.reserve(factors.size());
    int o = 0;
    for (std::size_t i = 0; i < factors.size(); ++i) {
        const auto& f = factors[i];
        const auto& pl = placements[i];
        Eigen::Vector3d local = Eigen::Vector3d::Zero();
        switch (f.kind) {
            case stimulus::ManifoldKind::SpherePatch: {
                const double phi = x[o], theta = x[o + 1];
                local = f.radius * Eigen::Vector3d(std::cos(theta) * std::cos(phi), std::cos(theta) * std::sin(phi),
                                                   std::sin(theta));
                break;
            }
            case stimulus::ManifoldKind::Line:
                local.x() = x[o];
                break;
            case stimulus::ManifoldKind::Euclidean:
                for (int k = 0; k < f.dim(); ++k) local[k] = x[o + k];
                break;
        }
        out.push_back(pl.origin + pl.axes * local);
        o += f.dim();
    }
    return out;
}

void SensorRig::validate() const {
    if (cameras.empty()) throw DomainError("rig has no cameras");
    if (placements.size() != factors.size()) throw DomainError("rig needs one placement per factor");
    for (const auto& c : cameras) c.validate();
    if (output_dim() < 2 * input_dim() + 1)
        throw DomainError("rig produces fewer than 2n+1 signals; the state-to-sensor map may not be invertible");
}

SensorRig make_rig(const stimulus::StimulusConfig& cfg, const RigOptions& opt) {
    cfg.validate();
    auto rng = stream_rng(opt.seed, streams::kRig);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };

    SensorRig rig;
    rig.factors = cfg.factors;
    Eigen::Vector3d scene = Eigen::Vector3d::Zero();
    Eigen::Vector3d facing = Eigen::Vector3d::Zero();
    for (const auto& f : cfg.factors) {
        Placement pl;
        switch (f.kind) {
            case stimulus::ManifoldKind::SpherePatch:
                pl.axes = frame_from(f.center, rng);
                facing += f.center;
                break;
            default:
                pl.origin = Eigen::Vector3d(uniform(-0.5, 0.5), uniform(-0.5, 0.5), uniform(-0.5, 0.5));
                pl.axes = frame_from(random_unit(rng), rng);
                break;
        }
        rig.placements.push_back(pl);
    }
    // Non-sphere factors sit just outside the patch so that every camera
    // sees the whole scene from one side.
    for (std::size_t i = 0; i < cfg.factors.size(); ++i) {
        if (cfg.factors[i].kind == stimulus::ManifoldKind::SpherePatch) {
            scene += cfg.factors[i].radius * cfg.factors[i].center;
        } else {
            if (facing.norm() > 0) rig.placements[i].origin += 1.3 * facing.normalized();
            scene += rig.placements[i].origin;
        }
    }
    scene /= static_cast<double>(cfg.factors.size());
    if (facing.norm() == 0) facing = Eigen::Vector3d::UnitZ();
    facing.normalize();

    // Images of the admissible region used to bound the warp Jacobian.
    std::vector<Vec> states;
    {
        auto srng = stream_rng(opt.seed, streams::kRig, 1);
        for (int i = 0; i < 400; ++i) {
            Vec x(cfg.dim());
            const auto off = cfg.offsets();
            for (std::size_t k = 0; k < cfg.factors.size(); ++k)
                x.segment(off[k], cfg.factors[k].dim()) = stimulus::sample_factor_state(cfg, cfg.factors[k], srng).x;
            states.push_back(x);
        }
    }

    for (int c = 0; c < opt.camera_count; ++c) {
        CameraModel cam;
        Eigen::Vector3d dir = random_unit(rng);
        if (dir.dot(facing) < 0.3) dir = (dir + facing).normalized();
        cam.position = scene + opt.camera_distance * dir;
        Eigen::Vector3d axis = (scene - cam.position).normalized() + 0.05 * random_unit(rng);
        axis.normalize();
        Eigen::Matrix3d frame = frame_from(axis, rng);
        // Columns: image x, image y, optical axis.
        cam.orientation.col(2) = frame.col(0);
        cam.orientation.col(0) = frame.col(1);
        cam.orientation.col(1) = frame.col(0).cross(frame.col(1));
        cam.focal_distance = uniform(0.8, 1.2) * opt.camera_distance / 2.0;

        const double scale = uniform(0.8, 1.25);
        const double angle = uniform(-std::numbers::pi, std::numbers::pi);
        const double skew = uniform(-0.2, 0.2);
        Eigen::Matrix2d rot;
        rot << std::cos(angle), -std::sin(angle), std::sin(angle), std::cos(angle);
        Eigen::Matrix2d shear;
        shear << 1.0, skew, 0.0, 1.0;
        const Eigen::Matrix2d lin = scale * rot * shear;
        cam.distort_u = {uniform(-0.2, 0.2), lin(0, 0), lin(0, 1), 0, 0, 0};
        cam.distort_v = {uniform(-0.2, 0.2), lin(1, 0), lin(1, 1), 0, 0, 0};
        std::array<double, 6> qu{}, qv{};
        for (int k = 3; k < 6; ++k) {
            qu[k] = uniform(-opt.max_quadratic, opt.max_quadratic);
            qv[k] = uniform(-opt.max_quadratic, opt.max_quadratic);
        }
        for (int shrink = 0; shrink < 40; ++shrink) {
            for (int k = 3; k < 6; ++k) {
                cam.distort_u[k] = qu[k];
                cam.distort_v[k] = qv[k];
            }
            bool ok = true;
            for (const auto& x : states) {
                for (const auto& p : SensorRig{{cam}, rig.factors, rig.placements}.particles(x)) {
                    const Eigen::Vector2d uv = cam.pinhole(p);
                    const Eigen::JacobiSVD<Eigen::Matrix2d> svd(cam.distortion_jacobian(uv));
                    const auto s = svd.singularValues();
                    if (s[0] > 2.0 || s[1] < 0.5) ok = false;
                }
                if (!ok) break;
            }
            if (ok) break;
            for (int k = 3; k < 6; ++k) {
                qu[k] *= 0.8;
                qv[k] *= 0.8;
            }
        }
        rig.cameras.push_back(cam);
    }
    rig.validate();
    return rig;
}

Vec observe(const SensorRig& rig, const Vec& x) {
    const auto parts = rig.particles(x);
    Vec out(rig.output_dim());
    int o = 0;
    for (const auto& cam : rig.cameras)
        for (const auto& p : parts) {
            const Eigen::Vector2d img = cam.image(p);
            out[o++] = img.x();
            out[o++] = img.y();
        }
    return out;
}

Series observe_series(const SensorRig& rig, const Series& source) {
    Series out;
    out.dim = rig.output_dim();
    out.segments.resize(source.segments.size());
    parallel_for(source.segments.size(), [&](std::size_t i) {
        const auto& in = source.segments[i];
        Segment s;
        s.dt = in.dt;
        s.points.resize(in.points.rows(), out.dim);
        for (Eigen::Index r = 0; r < in.points.rows(); ++r) s.points.row(r) = observe(rig, in.points.row(r).transpose()).transpose();
        out.segments[i] = std::move(s);
    });
    return out;
}

}  // namespace geosep::sensors
