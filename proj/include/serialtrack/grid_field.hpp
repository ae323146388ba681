#pragma once

#include "serialtrack/core.hpp"
#include "serialtrack/descriptor.hpp"

namespace serialtrack {

/// Regular axis-aligned node lattice: node i sits at origin + i .* spacing.
template <int Dim>
struct GridSpec {
  Vec<Dim> origin = Vec<Dim>::Zero();
  Vec<Dim> spacing = Vec<Dim>::Ones();
  Extents<Dim> dims{};

  std::size_t node_count() const { return element_count<Dim>(dims); }
  Vec<Dim> node_position(std::size_t idx) const {
    const auto p = unravel<Dim>(idx, dims);
    Vec<Dim> x;
    for (int a = 0; a < Dim; ++a) x[a] = origin[a] + p[a] * spacing[a];
    return x;
  }
  bool operator==(const GridSpec& o) const {
    return origin == o.origin && spacing == o.spacing && dims == o.dims;
  }

  /// Grid of spacing h covering the bounding box of `points` padded by one
  /// cell on each side.
  static GridSpec covering(const std::vector<Vec<Dim>>& points, double h);
  static GridSpec covering_box(const Vec<Dim>& lo, const Vec<Dim>& hi, double h);
};

/// d-component vector field sampled at grid nodes; column j is node j.
template <int Dim>
struct GridField {
  GridSpec<Dim> grid;
  Eigen::Matrix<double, Dim, Eigen::Dynamic> values;

  GridField() = default;
  explicit GridField(const GridSpec<Dim>& g)
      : grid(g), values(Eigen::Matrix<double, Dim, Eigen::Dynamic>::Zero(Dim, g.node_count())) {}

  static GridField constant(const GridSpec<Dim>& g, const Vec<Dim>& v) {
    GridField f(g);
    f.values.colwise() = v;
    return f;
  }
};

/// How nodes without samples are filled.
enum class Inpaint {
  laplace,  // discrete harmonic: each empty node is its neighbors' mean
  linear,   // local affine fits on the grid faces, harmonic inside; exact on linear fields
};

/// Cell averaging of scattered samples onto the nearest node, then inpainting
/// of the nodes that received no sample. Throws NoSamples.
template <int Dim>
GridField<Dim> scatter_to_grid(const std::vector<Vec<Dim>>& points,
                               const std::vector<Vec<Dim>>& values, const GridSpec<Dim>& grid,
                               Inpaint method = Inpaint::laplace);

/// Valid matches of `matches`, placed at their reference positions.
template <int Dim>
GridField<Dim> scatter_to_grid(const MatchSet<Dim>& matches,
                               const std::vector<Vec<Dim>>& a_reference,
                               const GridSpec<Dim>& grid, Inpaint method = Inpaint::laplace);

/// Multilinear interpolation; points outside the grid clamp to the boundary.
template <int Dim>
Vec<Dim> interpolate(const GridField<Dim>& field, const Vec<Dim>& x);

template <int Dim>
std::vector<Vec<Dim>> grid_to_scatter(const GridField<Dim>& field,
                                      const std::vector<Vec<Dim>>& points);

/// Resamples `field` onto the nodes of `grid`.
template <int Dim>
GridField<Dim> resample(const GridField<Dim>& field, const GridSpec<Dim>& grid);

/// Max over nodes of the Euclidean norm of (a - b); grids must agree.
template <int Dim>
double max_difference(const GridField<Dim>& a, const GridField<Dim>& b);

}  // namespace serialtrack
