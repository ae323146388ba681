#pragma once

#include "serialtrack/core.hpp"

#include <optional>

namespace serialtrack {

struct DetectionConfig {
  enum class Method { threshold_radial, log_gaussian };

  Method method = Method::threshold_radial;
  double intensity_threshold = 0.5;  // fraction of the image (or response) max
  double particle_radius = 3.0;      // p_size, px
  std::optional<double> min_blob_volume;  // px^d; default 2
  std::optional<double> max_blob_volume;  // px^d; default (4 p_size)^d
  double presmooth_sigma = 0.5;      // gradient smoothing for radial symmetry

  void validate() const;
  double min_volume(int dim) const;
  double max_volume(int dim) const;
};

template <int Dim>
struct Detection {
  ParticleSet<Dim> particles;
  bool no_particles = false;  // warning flag, not an error
};

/// Threshold segmentation + radial-symmetry subpixel centers.
template <int Dim>
Detection<Dim> detect_threshold_radial(const Image<Dim>& image, const DetectionConfig& cfg);

/// Laplacian-of-Gaussian peaks + 3-point Gaussian interpolation.
template <int Dim>
Detection<Dim> detect_log(const Image<Dim>& image, const DetectionConfig& cfg);

/// Dispatches on cfg.method.
template <int Dim>
Detection<Dim> detect(const Image<Dim>& image, const DetectionConfig& cfg);

/// Separable Gaussian blur with replicated borders.
template <int Dim>
Image<Dim> gaussian_blur(const Image<Dim>& image, double sigma);

/// -LoG(image) at scale sigma, separable, replicated borders.
template <int Dim>
Image<Dim> negative_log_response(const Image<Dim>& image, double sigma);

/// Least-squares point closest to the lines through each pixel of `box`
/// along the intensity gradient of `smoothed`.
template <int Dim>
Vec<Dim> radial_symmetry_center(const Image<Dim>& smoothed, const std::array<int, Dim>& lo,
                                const std::array<int, Dim>& hi);

/// Offset of the vertex of a Gaussian through three equally spaced samples.
double gaussian_peak_offset(double minus, double center, double plus, double floor);

}  // namespace serialtrack
