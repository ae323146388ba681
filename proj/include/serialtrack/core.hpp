#pragma once

#include <Eigen/Core>

#include <array>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace serialtrack {

template <int Dim>
using Vec = Eigen::Matrix<double, Dim, 1>;

template <int Dim>
using Mat = Eigen::Matrix<double, Dim, Dim>;

template <int Dim>
using Extents = std::array<int, Dim>;

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// Stable error codes; the string form is what summary.json records.
enum class ErrorCode {
  InfeasibleDensity,
  DimMismatch,
  TooFewNeighbors,
  NoSamples,
  SolverDiverged,
  EmptyAfterRemoval,
  NoMatches,
  DetectionCollapse,
  OddFrameCount,
  GridTooSmall,
  SingularF,
  ConfigInvalid,
  InputMissing,
  IoError,
};

std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

/// Particle centroids of one frame. Coordinates are in pixel units with the
/// origin at the center of pixel (0, 0[, 0]).
template <int Dim>
struct ParticleSet {
  std::vector<Vec<Dim>> positions;
  /// Parallel to positions when non-empty; set by the synthetic generator for
  /// particles that left the image domain.
  std::vector<bool> out_of_frame;
  int frame = 0;

  std::size_t size() const { return positions.size(); }
  bool empty() const { return positions.empty(); }
};

/// Dense scalar image, x varies fastest: index = x + nx * (y + ny * z).
template <int Dim>
struct Image {
  Extents<Dim> dims{};
  std::vector<double> data;

  Image() = default;
  explicit Image(const Extents<Dim>& d, double fill = 0.0) : dims(d) {
    std::size_t n = 1;
    for (int v : d) n *= static_cast<std::size_t>(v);
    data.assign(n, fill);
  }

  std::size_t size() const { return data.size(); }
  bool empty() const { return data.empty(); }

  std::size_t index(const std::array<int, Dim>& p) const {
    std::size_t idx = 0;
    for (int a = Dim - 1; a >= 0; --a) idx = idx * dims[a] + p[a];
    return idx;
  }
  double& at(const std::array<int, Dim>& p) { return data[index(p)]; }
  double at(const std::array<int, Dim>& p) const { return data[index(p)]; }

  bool contains(const std::array<int, Dim>& p) const {
    for (int a = 0; a < Dim; ++a)
      if (p[a] < 0 || p[a] >= dims[a]) return false;
    return true;
  }
};

/// Multi-index <-> linear index helpers shared by images and grids.
template <int Dim>
std::array<int, Dim> unravel(std::size_t idx, const Extents<Dim>& dims) {
  std::array<int, Dim> p{};
  for (int a = 0; a < Dim; ++a) {
    p[a] = static_cast<int>(idx % dims[a]);
    idx /= dims[a];
  }
  return p;
}

template <int Dim>
std::size_t ravel(const std::array<int, Dim>& p, const Extents<Dim>& dims) {
  std::size_t idx = 0;
  for (int a = Dim - 1; a >= 0; --a) idx = idx * dims[a] + p[a];
  return idx;
}

template <int Dim>
std::size_t element_count(const Extents<Dim>& dims) {
  std::size_t n = 1;
  for (int v : dims) n *= static_cast<std::size_t>(v);
  return n;
}

/// Multilinear interpolation of an image at a continuous point. Returns
/// `outside` when the point is not inside [0, dims-1] on every axis.
template <int Dim>
double sample_linear(const Image<Dim>& img, const Vec<Dim>& x, double outside = 0.0);

}  // namespace serialtrack
