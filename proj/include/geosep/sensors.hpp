#pragma once

#include "geosep/stimulus.hpp"
#include "geosep/types.hpp"

#include <array>
#include <cstdint>
#include <vector>

namespace geosep::sensors {

/// Pinhole camera followed by a full second-order polynomial image warp.
/// orientation columns are the camera x, y and optical axes in world frame.
/// Warped coordinate c = a0 + a1 u + a2 v + a3 u^2 + a4 u v + a5 v^2.
struct CameraModel {
    Eigen::Vector3d position = Eigen::Vector3d::Zero();
    Eigen::Matrix3d orientation = Eigen::Matrix3d::Identity();
    double focal_distance = 1.0;
    std::array<double, 6> distort_u{0, 1, 0, 0, 0, 0};
    std::array<double, 6> distort_v{0, 0, 1, 0, 0, 0};

    /// Undistorted focal-plane coordinates; throws ProjectionError when the
    /// point is not strictly in front of the camera.
    Eigen::Vector2d pinhole(const Eigen::Vector3d& world) const;
    Eigen::Vector2d distort(const Eigen::Vector2d& uv) const;
    Eigen::Matrix2d distortion_jacobian(const Eigen::Vector2d& uv) const;
    Eigen::Vector2d image(const Eigen::Vector3d& world) const { return distort(pinhole(world)); }
    void validate() const;
};

/// Rigid placement of one stimulus factor in the laboratory frame.
struct Placement {
    Eigen::Vector3d origin = Eigen::Vector3d::Zero();
    Eigen::Matrix3d axes = Eigen::Matrix3d::Identity();
};

struct SensorRig {
    std::vector<CameraModel> cameras;
    std::vector<stimulus::ManifoldSpec> factors;
    std::vector<Placement> placements;

    int input_dim() const;
    int output_dim() const { return static_cast<int>(2 * cameras.size() * factors.size()); }
    /// Laboratory positions of the particles, one per factor.
    std::vector<Eigen::Vector3d> particles(const Vec& x) const;
    void validate() const;
};

struct RigOptions {
    int camera_count = 5;
    double camera_distance = 5.0;
    double max_quadratic = 0.3;
    std::uint64_t seed = 1;
};

/// Draws camera poses, intrinsics and warps from a seeded generator and
/// shrinks the quadratic warp until its Jacobian singular values stay within
/// [0.5, 2] on sampled images of the admissible region.
SensorRig make_rig(const stimulus::StimulusConfig& cfg, const RigOptions& opt);

Vec observe(const SensorRig& rig, const Vec& x);
Series observe_series(const SensorRig& rig, const Series& source);

}  // namespace geosep::sensors
