#include "serialtrack/detect.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numbers>

namespace serialtrack {

void DetectionConfig::validate() const {
  if (!(intensity_threshold > 0.0 && intensity_threshold < 1.0))
    throw Error(ErrorCode::ConfigInvalid, "intensity_threshold must lie in (0, 1)");
  if (!(particle_radius >= 1.0)) throw Error(ErrorCode::ConfigInvalid, "particle_radius must be >= 1");
  if (min_blob_volume && !(*min_blob_volume >= 1.0))
    throw Error(ErrorCode::ConfigInvalid, "min_blob_volume must be >= 1");
  if (max_blob_volume && min_blob_volume && *max_blob_volume < *min_blob_volume)
    throw Error(ErrorCode::ConfigInvalid, "max_blob_volume must be >= min_blob_volume");
}

double DetectionConfig::min_volume(int) const { return min_blob_volume.value_or(2.0); }

double DetectionConfig::max_volume(int dim) const {
  return max_blob_volume.value_or(std::pow(4.0 * particle_radius, dim));
}

namespace {

std::vector<double> gaussian_kernel(double sigma, int radius) {
  std::vector<double> k(2 * radius + 1);
  double sum = 0.0;
  for (int t = -radius; t <= radius; ++t) {
    k[t + radius] = std::exp(-0.5 * t * t / (sigma * sigma));
    sum += k[t + radius];
  }
  for (double& v : k) v /= sum;
  return k;
}

// Second derivative of the (normalized) Gaussian, corrected to zero sum.
std::vector<double> gaussian_d2_kernel(double sigma, int radius) {
  const std::vector<double> g = gaussian_kernel(sigma, radius);
  std::vector<double> k(g.size());
  const double s2 = sigma * sigma;
  double sum = 0.0;
  for (int t = -radius; t <= radius; ++t) {
    k[t + radius] = (t * t / (s2 * s2) - 1.0 / s2) * g[t + radius];
    sum += k[t + radius];
  }
  for (std::size_t i = 0; i < k.size(); ++i) k[i] -= sum * g[i];
  return k;
}

template <int Dim>
Image<Dim> convolve_axis(const Image<Dim>& in, const std::vector<double>& kernel, int axis) {
  Image<Dim> out(in.dims);
  const int radius = static_cast<int>(kernel.size() / 2);
  const int n = in.dims[axis];
  std::size_t stride = 1;
  for (int a = 0; a < axis; ++a) stride *= in.dims[a];
  const std::size_t total = in.size();
  std::vector<double> line(n);
  // iterate over all lines along `axis`
  for (std::size_t start = 0; start < total; ++start) {
    if ((start / stride) % n != 0) continue;
    for (int i = 0; i < n; ++i) line[i] = in.data[start + i * stride];
    for (int i = 0; i < n; ++i) {
      double acc = 0.0;
      for (int t = -radius; t <= radius; ++t) {
        const int j = std::clamp(i + t, 0, n - 1);
        acc += kernel[t + radius] * line[j];
      }
      out.data[start + i * stride] = acc;
    }
  }
  return out;
}

template <int Dim>
std::array<int, Dim> step(std::array<int, Dim> p, int axis, int delta) {
  p[axis] += delta;
  return p;
}

template <int Dim>
void sort_and_dedupe(ParticleSet<Dim>& set) {
  std::sort(set.positions.begin(), set.positions.end(), [](const Vec<Dim>& a, const Vec<Dim>& b) {
    for (int i = 0; i < Dim; ++i)
      if (a[i] != b[i]) return a[i] < b[i];
    return false;
  });
  std::vector<Vec<Dim>> kept;
  kept.reserve(set.positions.size());
  for (const auto& p : set.positions) {
    bool dup = false;
    // sorted by x: only look back while the x gap is < 1
    for (auto it = kept.rbegin(); it != kept.rend() && p[0] - (*it)[0] < 1.0; ++it)
      if ((p - *it).norm() < 1.0) {
        dup = true;
        break;
      }
    if (!dup) kept.push_back(p);
  }
  set.positions = std::move(kept);
  set.out_of_frame.assign(set.positions.size(), false);
}

}  // namespace

template <int Dim>
Image<Dim> gaussian_blur(const Image<Dim>& image, double sigma) {
  const int radius = std::max(1, static_cast<int>(std::ceil(4.0 * sigma)));
  const auto k = gaussian_kernel(sigma, radius);
  Image<Dim> out = image;
  for (int a = 0; a < Dim; ++a) out = convolve_axis(out, k, a);
  return out;
}

template <int Dim>
Image<Dim> negative_log_response(const Image<Dim>& image, double sigma) {
  const int radius = std::max(1, static_cast<int>(std::ceil(4.0 * sigma)));
  const auto g = gaussian_kernel(sigma, radius);
  const auto d2 = gaussian_d2_kernel(sigma, radius);
  Image<Dim> response(image.dims);
  for (int term = 0; term < Dim; ++term) {
    Image<Dim> part = image;
    for (int a = 0; a < Dim; ++a) part = convolve_axis(part, a == term ? d2 : g, a);
    for (std::size_t i = 0; i < response.size(); ++i) response.data[i] -= part.data[i];
  }
  return response;
}

template <int Dim>
Vec<Dim> radial_symmetry_center(const Image<Dim>& smoothed, const std::array<int, Dim>& lo,
                                const std::array<int, Dim>& hi) {
  // intensity-weighted centroid as the distance reference for the weights
  double wsum = 0.0;
  Vec<Dim> c0 = Vec<Dim>::Zero();
  double vmin = kInf;
  std::array<int, Dim> q = lo;
  auto advance = [&](std::array<int, Dim>& p) {
    for (int a = 0; a < Dim; ++a) {
      if (++p[a] <= hi[a]) return true;
      p[a] = lo[a];
    }
    return false;
  };
  do vmin = std::min(vmin, smoothed.at(q));
  while (advance(q));
  q = lo;
  do {
    const double w = smoothed.at(q) - vmin;
    for (int a = 0; a < Dim; ++a) c0[a] += w * q[a];
    wsum += w;
  } while (advance(q));
  if (wsum > 0.0) {
    c0 /= wsum;
  } else {
    for (int a = 0; a < Dim; ++a) c0[a] = 0.5 * (lo[a] + hi[a]);
  }

  Mat<Dim> lhs = Mat<Dim>::Zero();
  Vec<Dim> rhs = Vec<Dim>::Zero();
  q = lo;
  do {
    Vec<Dim> g;
    bool ok = true;
    for (int a = 0; a < Dim; ++a) {
      if (q[a] <= 0 || q[a] >= smoothed.dims[a] - 1) {
        ok = false;
        break;
      }
      g[a] = 0.5 * (smoothed.at(step<Dim>(q, a, 1)) - smoothed.at(step<Dim>(q, a, -1)));
    }
    if (!ok) continue;
    const double g2 = g.squaredNorm();
    if (g2 <= 0.0) continue;
    Vec<Dim> x;
    for (int a = 0; a < Dim; ++a) x[a] = q[a];
    const double dist = std::max((x - c0).norm(), 1e-6);
    const double w = g2 / dist;
    const Vec<Dim> n = g / std::sqrt(g2);
    const Mat<Dim> proj = Mat<Dim>::Identity() - n * n.transpose();
    lhs += w * proj;
    rhs += w * proj * x;
  } while (advance(q));

  Vec<Dim> c = c0;
  Eigen::FullPivLU<Mat<Dim>> lu(lhs);
  if (lu.isInvertible()) c = lu.solve(rhs);
  for (int a = 0; a < Dim; ++a) {
    if (!std::isfinite(c[a])) c[a] = c0[a];
    c[a] = std::clamp(c[a], static_cast<double>(lo[a]), static_cast<double>(hi[a]));
  }
  return c;
}

template <int Dim>
Detection<Dim> detect_threshold_radial(const Image<Dim>& image, const DetectionConfig& cfg) {
  cfg.validate();
  Detection<Dim> out;
  if (image.empty()) {
    out.no_particles = true;
    return out;
  }
  const double vmax = *std::max_element(image.data.begin(), image.data.end());
  const double level = cfg.intensity_threshold * vmax;
  const double vmin_blob = cfg.min_volume(Dim), vmax_blob = cfg.max_volume(Dim);

  std::vector<int> label(image.size(), -1);
  std::vector<std::size_t> stack;
  const Image<Dim> smoothed =
      cfg.presmooth_sigma > 0.0 ? gaussian_blur(image, cfg.presmooth_sigma) : image;

  int next_label = 0;
  for (std::size_t seed = 0; seed < image.size(); ++seed) {
    if (label[seed] >= 0 || !(vmax > 0.0) || image.data[seed] <= level) continue;
    // flood fill with full (8 / 26) connectivity
    std::array<int, Dim> lo = unravel<Dim>(seed, image.dims), hi = lo;
    std::size_t count = 0;
    label[seed] = next_label;
    stack.assign(1, seed);
    while (!stack.empty()) {
      const std::size_t cur = stack.back();
      stack.pop_back();
      ++count;
      const auto p = unravel<Dim>(cur, image.dims);
      for (int a = 0; a < Dim; ++a) {
        lo[a] = std::min(lo[a], p[a]);
        hi[a] = std::max(hi[a], p[a]);
      }
      int span = 1;
      for (int a = 0; a < Dim; ++a) span *= 3;
      for (int n = 0; n < span; ++n) {
        std::array<int, Dim> nb{};
        int rem = n;
        for (int a = 0; a < Dim; ++a) {
          nb[a] = p[a] + rem % 3 - 1;
          rem /= 3;
        }
        if (!image.contains(nb)) continue;
        const std::size_t ni = image.index(nb);
        if (label[ni] < 0 && image.data[ni] > level) {
          label[ni] = next_label;
          stack.push_back(ni);
        }
      }
    }
    ++next_label;
    if (count < vmin_blob || count > vmax_blob) continue;
    for (int a = 0; a < Dim; ++a) {
      lo[a] = std::max(0, lo[a] - 1);
      hi[a] = std::min(image.dims[a] - 1, hi[a] + 1);
    }
    out.particles.positions.push_back(radial_symmetry_center<Dim>(smoothed, lo, hi));
  }
  sort_and_dedupe(out.particles);
  out.no_particles = out.particles.empty();
  return out;
}

double gaussian_peak_offset(double minus, double center, double plus, double floor) {
  const double lm = std::log(std::max(minus, floor));
  const double l0 = std::log(std::max(center, floor));
  const double lp = std::log(std::max(plus, floor));
  const double denom = lm - 2.0 * l0 + lp;
  if (denom == 0.0) return 0.0;
  return 0.5 * (lm - lp) / denom;
}

template <int Dim>
Detection<Dim> detect_log(const Image<Dim>& image, const DetectionConfig& cfg) {
  cfg.validate();
  Detection<Dim> out;
  if (image.empty()) {
    out.no_particles = true;
    return out;
  }
  const double sigma_f = cfg.particle_radius / std::numbers::sqrt2;
  const Image<Dim> response = negative_log_response(image, sigma_f);
  const double rmax = *std::max_element(response.data.begin(), response.data.end());
  if (!(rmax > 0.0)) {
    out.no_particles = true;
    return out;
  }
  const double level = cfg.intensity_threshold * rmax;
  const double floor = 1e-12 * rmax;
  const int half = static_cast<int>(std::round(cfg.particle_radius));
  int span = 1;
  for (int a = 0; a < Dim; ++a) span *= 2 * half + 1;

  for (std::size_t i = 0; i < response.size(); ++i) {
    const double v = response.data[i];
    if (v <= level) continue;
    const auto p = unravel<Dim>(i, response.dims);
    bool is_max = true;
    for (int n = 0; n < span && is_max; ++n) {
      std::array<int, Dim> nb{};
      int rem = n;
      for (int a = 0; a < Dim; ++a) {
        nb[a] = p[a] + rem % (2 * half + 1) - half;
        rem /= 2 * half + 1;
      }
      if (!response.contains(nb)) continue;
      const std::size_t j = response.index(nb);
      if (j == i) continue;
      // ties resolved toward the lower linear index
      if (response.data[j] > v || (response.data[j] == v && j < i)) is_max = false;
    }
    if (!is_max) continue;
    Vec<Dim> c;
    bool keep = true;
    for (int a = 0; a < Dim; ++a) {
      double off = 0.0;
      if (p[a] > 0 && p[a] < response.dims[a] - 1)
        off = gaussian_peak_offset(response.at(step<Dim>(p, a, -1)), v,
                                   response.at(step<Dim>(p, a, 1)), floor);
      if (std::abs(off) > 1.0) keep = false;
      c[a] = p[a] + off;
    }
    if (keep) out.particles.positions.push_back(c);
  }
  sort_and_dedupe(out.particles);
  out.no_particles = out.particles.empty();
  return out;
}

template <int Dim>
Detection<Dim> detect(const Image<Dim>& image, const DetectionConfig& cfg) {
  return cfg.method == DetectionConfig::Method::log_gaussian ? detect_log(image, cfg)
                                                             : detect_threshold_radial(image, cfg);
}

template Image<2> gaussian_blur<2>(const Image<2>&, double);
template Image<3> gaussian_blur<3>(const Image<3>&, double);
template Image<2> negative_log_response<2>(const Image<2>&, double);
template Image<3> negative_log_response<3>(const Image<3>&, double);
template Vec<2> radial_symmetry_center<2>(const Image<2>&, const std::array<int, 2>&,
                                          const std::array<int, 2>&);
template Vec<3> radial_symmetry_center<3>(const Image<3>&, const std::array<int, 3>&,
                                          const std::array<int, 3>&);
template Detection<2> detect_threshold_radial<2>(const Image<2>&, const DetectionConfig&);
template Detection<3> detect_threshold_radial<3>(const Image<3>&, const DetectionConfig&);
template Detection<2> detect_log<2>(const Image<2>&, const DetectionConfig&);
template Detection<3> detect_log<3>(const Image<3>&, const DetectionConfig&);
template Detection<2> detect<2>(const Image<2>&, const DetectionConfig&);
template Detection<3> detect<3>(const Image<3>&, const DetectionConfig&);

}  // namespace serialtrack
