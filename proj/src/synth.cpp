#include "serialtrack/synth.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <numbers>
#include <random>

namespace serialtrack {

DeformationSpec DeformationSpec::make_translation(std::array<double, 3> t) {
  DeformationSpec s;
  s.kind = Kind::translation;
  s.translation = t;
  return s;
}

DeformationSpec DeformationSpec::make_rotation(double angle_deg, std::array<double, 3> center) {
  DeformationSpec s;
  s.kind = Kind::rotation;
  s.angle_deg = angle_deg;
  s.center = center;
  return s;
}

DeformationSpec DeformationSpec::make_stretch(int axis, double ratio, std::array<double, 3> center) {
  DeformationSpec s;
  s.kind = Kind::uniaxial_stretch;
  s.axis = axis;
  s.stretch = ratio;
  s.center = center;
  return s;
}

DeformationSpec DeformationSpec::make_shear(int axis, int normal, double tan_gamma,
                                            std::array<double, 3> center) {
  DeformationSpec s;
  s.kind = Kind::simple_shear;
  s.shear_axis = axis;
  s.shear_normal = normal;
  s.tan_gamma = tan_gamma;
  s.center = center;
  return s;
}

DeformationSpec DeformationSpec::make_star(double amplitude) {
  DeformationSpec s;
  s.kind = Kind::star_pattern;
  s.star_amplitude = amplitude;
  return s;
}

double star_period(const DeformationSpec& spec, double x) {
  return spec.star_period_min +
         (spec.star_period_max - spec.star_period_min) / spec.star_extent * (x - 1.0);
}

void validate(const DeformationSpec& spec, int dim) {
  using K = DeformationSpec::Kind;
  switch (spec.kind) {
    case K::identity:
    case K::translation:
      break;
    case K::rotation:
      if (!(spec.angle_deg >= 0.0 && spec.angle_deg < 360.0))
        throw Error(ErrorCode::ConfigInvalid, "rotation angle must lie in [0, 360)");
      break;
    case K::uniaxial_stretch:
      if (!(spec.stretch > 0.0)) throw Error(ErrorCode::ConfigInvalid, "stretch ratio must be > 0");
      if (spec.axis < 0 || spec.axis >= dim)
        throw Error(ErrorCode::DimMismatch, "stretch axis outside the domain dimension");
      break;
    case K::simple_shear:
      if (!(spec.tan_gamma >= 0.0)) throw Error(ErrorCode::ConfigInvalid, "tan(gamma) must be >= 0");
      if (spec.shear_axis < 0 || spec.shear_axis >= dim || spec.shear_normal < 0 ||
          spec.shear_normal >= dim || spec.shear_axis == spec.shear_normal)
        throw Error(ErrorCode::DimMismatch, "shear plane outside the domain dimension");
      break;
    case K::star_pattern:
      if (dim != 2) throw Error(ErrorCode::DimMismatch, "star pattern is defined for 2D only");
      break;
  }
  if (dim == 2 && spec.kind == K::translation && spec.translation[2] != 0.0)
    throw Error(ErrorCode::DimMismatch, "3D translation applied to a 2D set");
}

template <int Dim>
Vec<Dim> displacement_at(const DeformationSpec& spec, const Vec<Dim>& x) {
  using K = DeformationSpec::Kind;
  Vec<Dim> u = Vec<Dim>::Zero();
  Vec<Dim> c;
  for (int a = 0; a < Dim; ++a) c[a] = spec.center[a];
  switch (spec.kind) {
    case K::identity:
      break;
    case K::translation:
      for (int a = 0; a < Dim; ++a) u[a] = spec.translation[a];
      break;
    case K::rotation: {
      const double t = spec.angle_deg * std::numbers::pi / 180.0;
      const double dx = x[0] - c[0], dy = x[1] - c[1];
      u[0] = std::cos(t) * dx - std::sin(t) * dy - dx;
      u[1] = std::sin(t) * dx + std::cos(t) * dy - dy;
      break;
    }
    case K::uniaxial_stretch:
      u[spec.axis] = (spec.stretch - 1.0) * (x[spec.axis] - c[spec.axis]);
      break;
    case K::simple_shear:
      u[spec.shear_axis] = spec.tan_gamma * (x[spec.shear_normal] - c[spec.shear_normal]);
      break;
    case K::star_pattern:
      u[1] = spec.star_amplitude *
             std::sin(2.0 * std::numbers::pi * x[0] / star_period(spec, x[0]));
      break;
  }
  return u;
}

template <int Dim>
Mat<Dim> deformation_gradient_at(const DeformationSpec& spec, const Vec<Dim>& x) {
  using K = DeformationSpec::Kind;
  Mat<Dim> F = Mat<Dim>::Identity();
  switch (spec.kind) {
    case K::identity:
    case K::translation:
      break;
    case K::rotation: {
      const double t = spec.angle_deg * std::numbers::pi / 180.0;
      F(0, 0) = std::cos(t);
      F(0, 1) = -std::sin(t);
      F(1, 0) = std::sin(t);
      F(1, 1) = std::cos(t);
      break;
    }
    case K::uniaxial_stretch:
      F(spec.axis, spec.axis) = spec.stretch;
      break;
    case K::simple_shear:
      F(spec.shear_axis, spec.shear_normal) = spec.tan_gamma;
      break;
    case K::star_pattern: {
      const double lam = star_period(spec, x[0]);
      const double dlam = (spec.star_period_max - spec.star_period_min) / spec.star_extent;
      const double phase = 2.0 * std::numbers::pi * x[0] / lam;
      const double dphase = 2.0 * std::numbers::pi * (lam - x[0] * dlam) / (lam * lam);
      F(1, 0) = spec.star_amplitude * std::cos(phase) * dphase;
      break;
    }
  }
  return F;
}

void validate(const SynthImageSpec& spec, int dim) {
  for (int a = 0; a < dim; ++a)
    if (spec.dims[a] < 2) throw Error(ErrorCode::ConfigInvalid, "image dims must be >= 2");
  if (!(spec.seeding_density > 0.0)) throw Error(ErrorCode::ConfigInvalid, "seeding_density must be > 0");
  if (!(spec.psf_sigma > 0.0)) throw Error(ErrorCode::ConfigInvalid, "psf_sigma must be > 0");
  if (!(spec.noise_pct >= 0.0)) throw Error(ErrorCode::ConfigInvalid, "noise_pct must be >= 0");
  if (!(spec.min_dist > 0.0)) throw Error(ErrorCode::ConfigInvalid, "min_dist must be > 0");
}

template <int Dim>
ParticleSet<Dim> poisson_disc_sample(const Extents<Dim>& dims, double min_dist,
                                     double density, std::uint64_t seed) {
  double volume = 1.0;
  for (int a = 0; a < Dim; ++a) volume *= dims[a];
  const auto target = static_cast<std::size_t>(std::llround(density * volume));

  // feasibility margin: packing fraction <= 0.4 of the densest packing
  const double r = 0.5 * min_dist;
  const double ball = Dim == 2 ? std::numbers::pi * r * r : 4.0 / 3.0 * std::numbers::pi * r * r * r;
  const double densest = Dim == 2 ? 0.9069 : 0.7405;
  Vec<Dim> lo, hi;
  double usable = 1.0;
  for (int a = 0; a < Dim; ++a) {
    lo[a] = r;
    hi[a] = dims[a] - 1 - r;
    usable *= std::max(hi[a] - lo[a], 0.0);
  }
  if (target > 0 && (usable <= 0.0 || target * ball > 0.4 * densest * volume))
    throw Error(ErrorCode::InfeasibleDensity, "requested density cannot be packed at min_dist");

  const double cell = min_dist / std::sqrt(static_cast<double>(Dim));
  Extents<Dim> gdims{};
  for (int a = 0; a < Dim; ++a) gdims[a] = std::max(1, static_cast<int>(std::ceil(dims[a] / cell)) + 1);
  std::vector<int> grid(element_count<Dim>(gdims), -1);
  const int reach = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(Dim))));

  std::mt19937_64 rng(seed);
  std::array<std::uniform_real_distribution<double>, Dim> uni;
  for (int a = 0; a < Dim; ++a) uni[a] = std::uniform_real_distribution<double>(lo[a], hi[a]);

  ParticleSet<Dim> out;
  out.positions.reserve(target);
  const double md2 = min_dist * min_dist;
  const std::size_t budget = 100 * std::max<std::size_t>(target, 1);
  std::size_t draws = 0;
  constexpr int kAttemptsPerCandidate = 30;
  while (out.positions.size() < target) {
    bool placed = false;
    for (int attempt = 0; attempt < kAttemptsPerCandidate && !placed; ++attempt) {
      if (++draws > budget)
        throw Error(ErrorCode::InfeasibleDensity, "Poisson-disc candidate budget exhausted");
      Vec<Dim> p;
      for (int a = 0; a < Dim; ++a) p[a] = uni[a](rng);
      std::array<int, Dim> c{};
      for (int a = 0; a < Dim; ++a) c[a] = static_cast<int>(p[a] / cell);
      bool ok = true;
      std::array<int, Dim> q{};
      const int span = 2 * reach + 1;
      int total = 1;
      for (int a = 0; a < Dim; ++a) total *= span;
      for (int n = 0; n < total && ok; ++n) {
        int rem = n;
        bool inside = true;
        for (int a = 0; a < Dim; ++a) {
          q[a] = c[a] + rem % span - reach;
          rem /= span;
          if (q[a] < 0 || q[a] >= gdims[a]) inside = false;
        }
        if (!inside) continue;
        const int other = grid[ravel<Dim>(q, gdims)];
        if (other >= 0 && (out.positions[other] - p).squaredNorm() < md2) ok = false;
      }
      if (ok) {
        grid[ravel<Dim>(c, gdims)] = static_cast<int>(out.positions.size());
        out.positions.push_back(p);
        placed = true;
      }
    }
  }
  out.out_of_frame.assign(out.positions.size(), false);
  return out;
}

template <int Dim>
ParticleSet<Dim> apply_deformation(const ParticleSet<Dim>& particles,
                                   const DeformationSpec& spec,
                                   const std::optional<Extents<Dim>>& frame) {
  validate(spec, Dim);
  ParticleSet<Dim> out;
  out.frame = particles.frame;
  out.positions.reserve(particles.size());
  out.out_of_frame.assign(particles.size(), false);
  for (std::size_t i = 0; i < particles.size(); ++i) {
    const Vec<Dim>& x = particles.positions[i];
    Vec<Dim> y = x + displacement_at<Dim>(spec, x);
    out.positions.push_back(y);
    if (frame) {
      for (int a = 0; a < Dim; ++a)
        if (y[a] < 0.0 || y[a] > (*frame)[a] - 1) out.out_of_frame[i] = true;
    } else if (!particles.out_of_frame.empty()) {
      out.out_of_frame[i] = particles.out_of_frame[i];
    }
  }
  return out;
}

template <int Dim>
Image<Dim> render_image(const ParticleSet<Dim>& particles, const SynthImageSpec& spec,
                        const std::vector<Mat<Dim>>& shapes) {
  validate(spec, Dim);
  const Extents<Dim> dims = extents_of<Dim>(spec);
  Image<Dim> img(dims);
  const double s2 = spec.psf_sigma * spec.psf_sigma;
  constexpr double kSupport = 8.0;

  for (std::size_t i = 0; i < particles.size(); ++i) {
    const Vec<Dim>& p = particles.positions[i];
    Mat<Dim> cov = s2 * Mat<Dim>::Identity();
    if (!shapes.empty()) cov = s2 * shapes[i] * shapes[i].transpose();
    const Mat<Dim> prec = cov.inverse();
    std::array<int, Dim> lo{}, hi{};
    bool empty = false;
    for (int a = 0; a < Dim; ++a) {
      const double half = kSupport * std::sqrt(cov(a, a));
      lo[a] = std::max(0, static_cast<int>(std::ceil(p[a] - half)));
      hi[a] = std::min(dims[a] - 1, static_cast<int>(std::floor(p[a] + half)));
      if (lo[a] > hi[a]) empty = true;
    }
    if (empty) continue;
    std::array<int, Dim> q = lo;
    while (true) {
      Vec<Dim> d;
      for (int a = 0; a < Dim; ++a) d[a] = q[a] - p[a];
      img.at(q) += spec.psf_amplitude * std::exp(-0.5 * d.dot(prec * d));
      int a = 0;
      for (; a < Dim; ++a) {
        if (++q[a] <= hi[a]) break;
        q[a] = lo[a];
      }
      if (a == Dim) break;
    }
  }

  if (spec.noise_pct > 0.0) {
    std::mt19937_64 rng(spec.rng_seed);
    std::normal_distribution<double> noise(0.0, spec.noise_pct * spec.psf_amplitude);
    for (double& v : img.data) v += noise(rng);
  }
  if (spec.clamp)
    for (double& v : img.data) v = std::clamp(v, 0.0, spec.intensity_max);
  return img;
}

template Vec<2> displacement_at<2>(const DeformationSpec&, const Vec<2>&);
template Vec<3> displacement_at<3>(const DeformationSpec&, const Vec<3>&);
template Mat<2> deformation_gradient_at<2>(const DeformationSpec&, const Vec<2>&);
template Mat<3> deformation_gradient_at<3>(const DeformationSpec&, const Vec<3>&);
template ParticleSet<2> poisson_disc_sample<2>(const Extents<2>&, double, double, std::uint64_t);
template ParticleSet<3> poisson_disc_sample<3>(const Extents<3>&, double, double, std::uint64_t);
template ParticleSet<2> apply_deformation<2>(const ParticleSet<2>&, const DeformationSpec&,
                                             const std::optional<Extents<2>>&);
template ParticleSet<3> apply_deformation<3>(const ParticleSet<3>&, const DeformationSpec&,
                                             const std::optional<Extents<3>>&);
template Image<2> render_image<2>(const ParticleSet<2>&, const SynthImageSpec&,
                                  const std::vector<Mat<2>>&);
template Image<3> render_image<3>(const ParticleSet<3>&, const SynthImageSpec&,
                                  const std::vector<Mat<3>>&);

}  // namespace serialtrack
