#pragma once

#include "serialtrack/core.hpp"

#include <cstdint>
#include <optional>

namespace serialtrack {

/// Prescribed motion x -> x + u(x). Angles are in degrees; rotation is about
/// the z axis (the x-y plane in 2D).
struct DeformationSpec {
  enum class Kind { identity, translation, rotation, uniaxial_stretch, simple_shear, star_pattern };

  Kind kind = Kind::identity;
  std::array<double, 3> translation{0.0, 0.0, 0.0};
  std::array<double, 3> center{0.0, 0.0, 0.0};
  double angle_deg = 0.0;
  int axis = 0;             // stretch axis
  double stretch = 1.0;     // lambda
  int shear_axis = 0;       // displaced component
  int shear_normal = 1;     // coordinate the displacement grows with
  double tan_gamma = 0.0;
  double star_amplitude = 2.0;
  double star_period_min = 10.0;
  double star_period_max = 300.0;
  double star_extent = 4001.0;

  static DeformationSpec make_translation(std::array<double, 3> t);
  static DeformationSpec make_rotation(double angle_deg, std::array<double, 3> center);
  static DeformationSpec make_stretch(int axis, double ratio, std::array<double, 3> center);
  static DeformationSpec make_shear(int axis, int normal, double tan_gamma,
                                    std::array<double, 3> center);
  static DeformationSpec make_star(double amplitude = 2.0);
};

/// Spatial period of the star pattern at column x.
double star_period(const DeformationSpec& spec, double x);

/// Validates the invariants of a deformation for a given dimensionality.
void validate(const DeformationSpec& spec, int dim);

template <int Dim>
Vec<Dim> displacement_at(const DeformationSpec& spec, const Vec<Dim>& x);

/// Deformation gradient F = I + grad u of the prescribed field at x.
template <int Dim>
Mat<Dim> deformation_gradient_at(const DeformationSpec& spec, const Vec<Dim>& x);

struct SynthImageSpec {
  std::array<int, 3> dims{512, 512, 1};
  double seeding_density = 0.006;
  double psf_amplitude = 1.0;
  double psf_sigma = 1.0;
  double noise_pct = 0.05;
  double min_dist = 5.0;
  std::uint64_t rng_seed = 1;
  bool clamp = false;
  double intensity_max = 1.0;
};

void validate(const SynthImageSpec& spec, int dim);

/// Dart-throwing Poisson-disc sampling over [0, dims-1]^d with a background
/// grid; throws InfeasibleDensity when the target cannot be placed.
template <int Dim>
ParticleSet<Dim> poisson_disc_sample(const Extents<Dim>& dims, double min_dist,
                                     double density, std::uint64_t seed);

/// Exact deformed positions. When `frame` is given, particles falling outside
/// [0, frame-1] are flagged out-of-frame (never removed).
template <int Dim>
ParticleSet<Dim> apply_deformation(const ParticleSet<Dim>& particles,
                                   const DeformationSpec& spec,
                                   const std::optional<Extents<Dim>>& frame = std::nullopt);

/// Sum of Gaussian PSFs at pixel centers plus Gaussian noise.
///
/// `shapes`, when non-empty, holds one deformation gradient per particle; the
/// PSF covariance becomes sigma^2 F F^T ("soft" particles).
template <int Dim>
Image<Dim> render_image(const ParticleSet<Dim>& particles, const SynthImageSpec& spec,
                        const std::vector<Mat<Dim>>& shapes = {});

template <int Dim>
Extents<Dim> extents_of(const SynthImageSpec& spec) {
  Extents<Dim> e{};
  for (int a = 0; a < Dim; ++a) e[a] = spec.dims[a];
  return e;
}

}  // namespace serialtrack
