#pragma once

#include "geosep/types.hpp"

#include <cstdint>
#include <random>
#include <vector>

namespace geosep::stimulus {

enum class ManifoldKind { SpherePatch, Line, Euclidean };

/// Position dependence of the mass matrix of a Euclidean factor.
/// Constant: mu = mass * I.  ConformalBump: mu = mass * exp(2 sigma(x)) * I
/// with sigma(x) = amplitude * exp(-|x - center|^2 / (2 width^2)).
enum class MassKind { Constant, ConformalBump };

enum class PotentialKind { Zero, Harmonic };

/// One independent factor of the configuration space, in local coordinates.
///
/// SpherePatch uses (longitude phi, latitude theta) centred on the patch so
/// that mu = mass * radius^2 * diag(cos^2 theta, 1); the admissible region is
/// the geodesic disc of angular radius patch_angle around (0, 0).
/// Line uses the arc-length coordinate in [-half_length, half_length].
/// Euclidean uses Cartesian coordinates in the box [-half_width, half_width]^dim.
struct ManifoldSpec {
    ManifoldKind kind = ManifoldKind::Line;
    double radius = 1.0;
    double patch_angle = 1.0;
    Eigen::Vector3d center = Eigen::Vector3d::UnitX();
    double half_length = 1.0;
    int euclid_dim = 1;
    double half_width = 1.0;

    double mass = 1.0;
    MassKind mass_kind = MassKind::Constant;
    double bump_amplitude = 0.0;
    double bump_width = 1.0;
    std::vector<double> bump_center;

    PotentialKind potential = PotentialKind::Zero;
    double stiffness = 0.0;

    int dim() const;
    void validate() const;
    bool admissible(const Vec& x) const;
    Mat mass_matrix(const Vec& x) const;
    /// Christoffel symbols of mass_matrix, layout [k*n*n + l*n + m].
    std::vector<double> christoffel(const Vec& x) const;
    double potential_energy(const Vec& x) const;
    Vec potential_gradient(const Vec& x) const;
};

struct StimulusConfig {
    std::vector<ManifoldSpec> factors;
    double kT = 0.01;
    int segment_length = 7;
    double dt = 0.3;
    std::size_t n_segments = 200000;
    std::uint64_t rng_seed = 1;
    int substeps = 8;
    int max_attempts = 10000;

    int dim() const;
    std::vector<int> offsets() const;
    std::vector<int> block_sizes() const;
    void validate() const;
    bool admissible(const Vec& x) const;
    /// Full block-diagonal mass matrix.
    Mat mass_matrix(const Vec& x) const;
    /// Trajectory-induced covariant metric mu / kT.
    Mat source_metric(const Vec& x) const;
    std::vector<double> christoffel(const Vec& x) const;
};

struct PhaseSample {
    Vec x;
    Vec v;
    double t = 0.0;
};

double energy(const StimulusConfig& cfg, const PhaseSample& s);

/// Draws (x, v) from the equilibrium density of one factor.
PhaseSample sample_factor_state(const StimulusConfig& cfg, const ManifoldSpec& f, std::mt19937_64& rng);

/// Integrates the free (or potential-driven) motion of one factor over one
/// output interval dt, reflecting specularly off the admissible boundary.
void advance_factor(const StimulusConfig& cfg, const ManifoldSpec& f, Vec& x, Vec& v, double dt);

Segment sample_mb_segment(const StimulusConfig& cfg, std::mt19937_64& rng);

/// n_segments independent segments; segment i uses its own RNG stream so the
/// output depends only on rng_seed.
Series generate_trajectory(const StimulusConfig& cfg);

/// The sphere-patch x line configuration used by the camera experiment.
StimulusConfig sphere_line_config(std::uint64_t seed = 1);

}  // namespace geosep::stimulus
