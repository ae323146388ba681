#include "serialtrack/global_step.hpp"

#include <cmath>

namespace serialtrack {

namespace {

// Trapezoidal node weights that make the mirrored-Neumann operator symmetric.
template <int Dim>
Eigen::VectorXd symmetry_weights(const GridSpec<Dim>& grid) {
  const std::size_t n = grid.node_count();
  Eigen::VectorXd w(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto p = unravel<Dim>(i, grid.dims);
    double v = 1.0;
    for (int a = 0; a < Dim; ++a)
      if (p[a] == 0 || p[a] == grid.dims[a] - 1) v *= 0.5;
    w[i] = v;
  }
  return w;
}

template <int Dim>
Eigen::VectorXd diagonal(const GridSpec<Dim>& grid, double c) {
  double d = 1.0;
  for (int a = 0; a < Dim; ++a) d += 2.0 * c / (grid.spacing[a] * grid.spacing[a]);
  return Eigen::VectorXd::Constant(static_cast<Eigen::Index>(grid.node_count()), d);
}

}  // namespace

template <int Dim>
Eigen::VectorXd apply_screened_operator(const GridSpec<Dim>& grid, double c,
                                        const Eigen::VectorXd& x) {
  Eigen::VectorXd y = x;
  if (c == 0.0) return y;
  std::size_t stride = 1;
  for (int a = 0; a < Dim; ++a) {
    const int n = grid.dims[a];
    const double k = c / (grid.spacing[a] * grid.spacing[a]);
    const std::size_t total = grid.node_count();
    for (std::size_t i = 0; i < total; ++i) {
      const int pa = static_cast<int>((i / stride) % n);
      // mirrored ghost: x[-1] = x[1], x[n] = x[n-2]
      const double lo = pa > 0 ? x[i - stride] : x[i + stride];
      const double hi = pa < n - 1 ? x[i + stride] : x[i - stride];
      y[i] -= k * (lo - 2.0 * x[i] + hi);
    }
    stride *= n;
  }
  return y;
}

template <int Dim>
GridField<Dim> solve_global(const GridField<Dim>& rhs, double c, const GlobalSolveOptions& opts,
                            GlobalSolveReport* report) {
  if (!(c >= 0.0)) throw Error(ErrorCode::ConfigInvalid, "alpha_over_mu must be >= 0");
  if (!rhs.values.allFinite()) throw Error(ErrorCode::SolverDiverged, "non-finite right-hand side");
  if (report) *report = {};
  if (c == 0.0) return rhs;

  const GridSpec<Dim>& grid = rhs.grid;
  const Eigen::VectorXd w = symmetry_weights(grid);
  const Eigen::VectorXd inv_diag = diagonal(grid, c).cwiseInverse();  // W A has diagonal w .* d
  const auto n = static_cast<Eigen::Index>(grid.node_count());
  const long cap = static_cast<long>(opts.iteration_factor) * n;

  GridField<Dim> out(grid);
  for (int comp = 0; comp < Dim; ++comp) {
    const Eigen::VectorXd b = w.cwiseProduct(rhs.values.row(comp).transpose());
    const double bnorm = b.norm();
    Eigen::VectorXd x = rhs.values.row(comp).transpose();
    if (bnorm == 0.0) {
      out.values.row(comp).setZero();
      continue;
    }
    Eigen::VectorXd r = b - w.cwiseProduct(apply_screened_operator(grid, c, x));
    // Jacobi on W A: diag(W A) = w .* d, so M^-1 r = r ./ (w .* d)
    Eigen::VectorXd z = inv_diag.cwiseProduct(r.cwiseQuotient(w));
    Eigen::VectorXd p = z;
    double rz = r.dot(z);
    long it = 0;
    double rel = r.norm() / bnorm;
    while (rel > opts.relative_tolerance && it < cap) {
      const Eigen::VectorXd ap = w.cwiseProduct(apply_screened_operator(grid, c, p));
      const double alpha = rz / p.dot(ap);
      x += alpha * p;
      r -= alpha * ap;
      z = inv_diag.cwiseProduct(r.cwiseQuotient(w));
      const double rz_new = r.dot(z);
      p = z + (rz_new / rz) * p;
      rz = rz_new;
      ++it;
      rel = r.norm() / bnorm;
    }
    if (!(rel <= opts.relative_tolerance))
      throw Error(ErrorCode::SolverDiverged, "screened-Poisson solve did not converge");
    out.values.row(comp) = x.transpose();
    if (report) {
      report->iterations = std::max(report->iterations, static_cast<int>(it));
      report->relative_residual = std::max(report->relative_residual, rel);
    }
  }
  return out;
}

template <int Dim>
GridField<Dim> update_dual(const GridField<Dim>& theta, const GridField<Dim>& u_hat,
                           const GridField<Dim>& u_grid) {
  if (!(theta.grid == u_hat.grid) || !(theta.grid == u_grid.grid))
    throw Error(ErrorCode::DimMismatch, "dual update on mismatched grids");
  GridField<Dim> out(theta.grid);
  out.values = theta.values + u_hat.values - u_grid.values;
  return out;
}

template Eigen::VectorXd apply_screened_operator<2>(const GridSpec<2>&, double,
                                                    const Eigen::VectorXd&);
template Eigen::VectorXd apply_screened_operator<3>(const GridSpec<3>&, double,
                                                    const Eigen::VectorXd&);
template GridField<2> solve_global<2>(const GridField<2>&, double, const GlobalSolveOptions&,
                                      GlobalSolveReport*);
template GridField<3> solve_global<3>(const GridField<3>&, double, const GlobalSolveOptions&,
                                      GlobalSolveReport*);
template GridField<2> update_dual<2>(const GridField<2>&, const GridField<2>&, const GridField<2>&);
template GridField<3> update_dual<3>(const GridField<3>&, const GridField<3>&, const GridField<3>&);

}  // namespace serialtrack
