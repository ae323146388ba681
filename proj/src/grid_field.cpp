#include "serialtrack/grid_field.hpp"

#include <Eigen/IterativeLinearSolvers>
#include <Eigen/QR>
#include <Eigen/SparseCore>

#include <cmath>

namespace serialtrack {

template <int Dim>
GridSpec<Dim> GridSpec<Dim>::covering_box(const Vec<Dim>& lo, const Vec<Dim>& hi, double h) {
  GridSpec g;
  g.spacing = Vec<Dim>::Constant(h);
  for (int a = 0; a < Dim; ++a) {
    g.origin[a] = lo[a] - h;
    const int cells = static_cast<int>(std::ceil((hi[a] - lo[a]) / h)) + 2;
    g.dims[a] = std::max(cells + 1, 2);
  }
  return g;
}

template <int Dim>
GridSpec<Dim> GridSpec<Dim>::covering(const std::vector<Vec<Dim>>& points, double h) {
  if (points.empty()) throw Error(ErrorCode::NoSamples, "cannot build a grid over no points");
  Vec<Dim> lo = points.front(), hi = lo;
  for (const auto& p : points) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  return covering_box(lo, hi, h);
}

namespace {

template <int Dim>
std::array<int, Dim> nearest_node(const GridSpec<Dim>& g, const Vec<Dim>& x) {
  std::array<int, Dim> p{};
  for (int a = 0; a < Dim; ++a)
    p[a] = std::clamp(static_cast<int>(std::lround((x[a] - g.origin[a]) / g.spacing[a])), 0,
                      g.dims[a] - 1);
  return p;
}

}  // namespace

namespace {

using Triplets = std::vector<Eigen::Triplet<double>>;

// Each empty node equals the mean of its grid neighbors (discrete Laplace
// equation with the sampled nodes as Dirichlet data).
template <int Dim>
void laplace_system(const GridField<Dim>& field, const std::vector<int>& unknown, int nu,
                    Triplets& trip, Eigen::MatrixXd& rhs) {
  const auto& grid = field.grid;
  for (std::size_t i = 0; i < grid.node_count(); ++i) {
    if (unknown[i] < 0) continue;
    const auto p = unravel<Dim>(i, grid.dims);
    int degree = 0;
    for (int a = 0; a < Dim; ++a) {
      for (int s : {-1, 1}) {
        auto q = p;
        q[a] += s;
        if (q[a] < 0 || q[a] >= grid.dims[a]) continue;
        ++degree;
        const std::size_t j = ravel<Dim>(q, grid.dims);
        if (unknown[j] >= 0) {
          trip.emplace_back(unknown[i], unknown[j], -1.0);
        } else {
          rhs.row(unknown[i]) += field.values.col(j).transpose();
        }
      }
    }
    trip.emplace_back(unknown[i], unknown[i], static_cast<double>(degree));
  }
  (void)nu;
}

// Value at x0 of the affine least-squares fit through the given samples;
// the plain mean when the samples do not span an affine frame.
template <int Dim, typename PosFn, typename ValFn>
Vec<Dim> affine_at(const Vec<Dim>& x0, std::size_t m, double scale, PosFn&& pos, ValFn&& val) {
  Eigen::MatrixXd design(m, Dim + 1);
  Eigen::MatrixXd vals(m, Dim);
  for (std::size_t h = 0; h < m; ++h) {
    design(h, 0) = 1.0;
    design.row(h).tail(Dim) = (pos(h) - x0).transpose() / scale;
    vals.row(h) = val(h).transpose();
  }
  if (static_cast<int>(m) > Dim) {
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
    if (qr.rank() == Dim + 1) return qr.solve(vals).row(0).transpose();
  }
  return vals.colwise().mean().transpose();
}

// Empty nodes on the grid faces get a local affine least-squares fit of the
// nearest sampled nodes; linear fields then extend exactly through the
// harmonic fill. Returns the number of nodes fixed.
template <int Dim>
int extrapolate_faces(GridField<Dim>& field, std::vector<int>& unknown) {
  const auto& grid = field.grid;
  const int want = 8 * Dim;
  std::vector<Vec<Dim>> known_pos;
  std::vector<std::size_t> known_id;
  for (std::size_t i = 0; i < grid.node_count(); ++i)
    if (unknown[i] < 0) {
      known_pos.push_back(grid.node_position(i));
      known_id.push_back(i);
    }
  const NeighborIndex<Dim> index(known_pos);
  int fixed = 0;
  for (std::size_t i = 0; i < grid.node_count(); ++i) {
    if (unknown[i] < 0) continue;
    const auto p = unravel<Dim>(i, grid.dims);
    bool face = false;
    for (int a = 0; a < Dim; ++a) face = face || p[a] == 0 || p[a] == grid.dims[a] - 1;
    if (!face) continue;
    const Vec<Dim> x0 = grid.node_position(i);
    auto hits = index.knn(x0, want);
    // Far from the data the fit must span a patch as wide as the distance it
    // extrapolates over, or a thin strip of nodes sets the gradient.
    if (!hits.empty()) {
      const double reach = 2.0 * std::sqrt(hits.front().dist2);
      if (reach > std::sqrt(hits.back().dist2)) {
        auto wide = index.within(x0, reach);
        if (wide.size() > hits.size()) hits = std::move(wide);
      }
    }
    field.values.col(i) = affine_at<Dim>(
        x0, hits.size(), grid.spacing.mean(),
        [&](std::size_t h) { return known_pos[hits[h].index]; },
        [&](std::size_t h) { return Vec<Dim>(field.values.col(known_id[hits[h].index])); });
    unknown[i] = -1;
    ++fixed;
  }
  return fixed;
}

// Sampled nodes take the local affine fit of the nearest samples at the node
// itself, so a sample's offset from its node does not leak gradient x offset
// into the node value.
template <int Dim>
void fit_sampled_nodes(GridField<Dim>& field, const std::vector<int>& count,
                       const std::vector<Vec<Dim>>& points, const std::vector<Vec<Dim>>& values) {
  const auto& grid = field.grid;
  const NeighborIndex<Dim> index(points);
  const int want = 3 * (Dim + 1);
  for (std::size_t i = 0; i < grid.node_count(); ++i) {
    if (count[i] == 0) continue;
    const Vec<Dim> x0 = grid.node_position(i);
    const auto hits = index.knn(x0, want);
    field.values.col(i) = affine_at<Dim>(
        x0, hits.size(), grid.spacing.mean(),
        [&](std::size_t h) { return points[hits[h].index]; },
        [&](std::size_t h) { return values[hits[h].index]; });
  }
}

}  // namespace

template <int Dim>
GridField<Dim> scatter_to_grid(const std::vector<Vec<Dim>>& points,
                               const std::vector<Vec<Dim>>& values, const GridSpec<Dim>& grid,
                               Inpaint method) {
  if (points.empty()) throw Error(ErrorCode::NoSamples, "no samples to grid");
  const std::size_t n = grid.node_count();
  GridField<Dim> field(grid);
  std::vector<int> count(n, 0);
  for (std::size_t i = 0; i < points.size(); ++i) {
    const std::size_t node = ravel<Dim>(nearest_node(grid, points[i]), grid.dims);
    field.values.col(node) += values[i];
    ++count[node];
  }
  for (std::size_t i = 0; i < n; ++i)
    if (count[i] > 0) field.values.col(i) /= count[i];
  if (method == Inpaint::linear) fit_sampled_nodes(field, count, points, values);
  std::vector<int> unknown(n, -1);
  for (std::size_t i = 0; i < n; ++i)
    if (count[i] == 0) unknown[i] = 0;
  if (method == Inpaint::linear) extrapolate_faces(field, unknown);
  // unknowns: nodes still without a value
  int nu = 0;
  for (std::size_t i = 0; i < n; ++i)
    if (unknown[i] >= 0) unknown[i] = nu++;
  if (nu == 0) return field;

  Triplets trip;
  trip.reserve(static_cast<std::size_t>(nu) * (2 * Dim + 1));
  Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(nu, Dim);
  laplace_system(field, unknown, nu, trip, rhs);
  Eigen::SparseMatrix<double> lhs(nu, nu);
  lhs.setFromTriplets(trip.begin(), trip.end());

  Eigen::MatrixXd sol;
  {
    Eigen::ConjugateGradient<Eigen::SparseMatrix<double>, Eigen::Lower | Eigen::Upper> cg;
    cg.setTolerance(1e-12);
    cg.setMaxIterations(std::max(1000, 10 * nu));
    cg.compute(lhs);
    // warm start from the sample mean so far-away holes start near the data
    Eigen::Matrix<double, 1, Dim> mean = Eigen::Matrix<double, 1, Dim>::Zero();
    int defined = 0;
    for (std::size_t i = 0; i < n; ++i)
      if (unknown[i] < 0) {
        mean += field.values.col(i).transpose();
        ++defined;
      }
    mean /= defined;
    sol.resize(nu, Dim);
    for (int a = 0; a < Dim; ++a)
      sol.col(a) = cg.solveWithGuess(rhs.col(a), Eigen::VectorXd::Constant(nu, mean[a]));
  }
  for (std::size_t i = 0; i < n; ++i)
    if (unknown[i] >= 0) field.values.col(i) = sol.row(unknown[i]).transpose();
  return field;
}

template <int Dim>
GridField<Dim> scatter_to_grid(const MatchSet<Dim>& matches,
                               const std::vector<Vec<Dim>>& a_reference,
                               const GridSpec<Dim>& grid, Inpaint method) {
  std::vector<Vec<Dim>> pts, vals;
  for (const auto& m : matches.matches) {
    if (!m.valid) continue;
    pts.push_back(a_reference[m.a]);
    vals.push_back(m.u);
  }
  return scatter_to_grid<Dim>(pts, vals, grid, method);
}

template <int Dim>
Vec<Dim> interpolate(const GridField<Dim>& field, const Vec<Dim>& x) {
  const auto& g = field.grid;
  std::array<int, Dim> base{};
  std::array<double, Dim> frac{};
  for (int a = 0; a < Dim; ++a) {
    const double t = std::clamp((x[a] - g.origin[a]) / g.spacing[a], 0.0,
                                static_cast<double>(g.dims[a] - 1));
    int b = static_cast<int>(std::floor(t));
    if (b >= g.dims[a] - 1) b = g.dims[a] - 2;
    base[a] = b;
    frac[a] = t - b;
  }
  Vec<Dim> acc = Vec<Dim>::Zero();
  for (int corner = 0; corner < (1 << Dim); ++corner) {
    double w = 1.0;
    std::array<int, Dim> p{};
    for (int a = 0; a < Dim; ++a) {
      const bool hi = (corner >> a) & 1;
      w *= hi ? frac[a] : 1.0 - frac[a];
      p[a] = base[a] + (hi ? 1 : 0);
    }
    if (w != 0.0) acc += w * field.values.col(ravel<Dim>(p, g.dims));
  }
  return acc;
}

template <int Dim>
std::vector<Vec<Dim>> grid_to_scatter(const GridField<Dim>& field,
                                      const std::vector<Vec<Dim>>& points) {
  std::vector<Vec<Dim>> out;
  out.reserve(points.size());
  for (const auto& p : points) out.push_back(interpolate(field, p));
  return out;
}

template <int Dim>
GridField<Dim> resample(const GridField<Dim>& field, const GridSpec<Dim>& grid) {
  if (field.grid == grid) return field;
  GridField<Dim> out(grid);
  for (std::size_t i = 0; i < grid.node_count(); ++i)
    out.values.col(i) = interpolate(field, grid.node_position(i));
  return out;
}

template <int Dim>
double max_difference(const GridField<Dim>& a, const GridField<Dim>& b) {
  if (a.values.cols() == 0) return 0.0;
  return (a.values - b.values).colwise().norm().maxCoeff();
}

template struct GridSpec<2>;
template struct GridSpec<3>;
template GridField<2> scatter_to_grid<2>(const std::vector<Vec<2>>&, const std::vector<Vec<2>>&,
                                         const GridSpec<2>&, Inpaint);
template GridField<3> scatter_to_grid<3>(const std::vector<Vec<3>>&, const std::vector<Vec<3>>&,
                                         const GridSpec<3>&, Inpaint);
template GridField<2> scatter_to_grid<2>(const MatchSet<2>&, const std::vector<Vec<2>>&,
                                         const GridSpec<2>&, Inpaint);
template GridField<3> scatter_to_grid<3>(const MatchSet<3>&, const std::vector<Vec<3>>&,
                                         const GridSpec<3>&, Inpaint);
template Vec<2> interpolate<2>(const GridField<2>&, const Vec<2>&);
template Vec<3> interpolate<3>(const GridField<3>&, const Vec<3>&);
template std::vector<Vec<2>> grid_to_scatter<2>(const GridField<2>&, const std::vector<Vec<2>>&);
template std::vector<Vec<3>> grid_to_scatter<3>(const GridField<3>&, const std::vector<Vec<3>>&);
template GridField<2> resample<2>(const GridField<2>&, const GridSpec<2>&);
template GridField<3> resample<3>(const GridField<3>&, const GridSpec<3>&);
template double max_difference<2>(const GridField<2>&, const GridField<2>&);
template double max_difference<3>(const GridField<3>&, const GridField<3>&);

}  // namespace serialtrack
