#pragma once

#include "serialtrack/grid_field.hpp"

namespace serialtrack {

struct GlobalSolveOptions {
  double relative_tolerance = 1e-8;
  /// Iteration cap as a multiple of the node count.
  int iteration_factor = 10;
};

struct GlobalSolveReport {
  int iterations = 0;
  double relative_residual = 0.0;
};

/// Solves (I - c * Laplacian) u_hat = rhs componentwise with c = alpha/mu, the
/// (2d+1)-point Laplacian and homogeneous Neumann conditions via mirrored
/// ghost nodes. Jacobi-preconditioned conjugate gradients on the symmetrized
/// operator. Throws SolverDiverged when the tolerance is not reached.
template <int Dim>
GridField<Dim> solve_global(const GridField<Dim>& rhs, double alpha_over_mu,
                            const GlobalSolveOptions& opts = {},
                            GlobalSolveReport* report = nullptr);

/// y = (I - c * Laplacian) x for one scalar component (mirrored Neumann).
template <int Dim>
Eigen::VectorXd apply_screened_operator(const GridSpec<Dim>& grid, double alpha_over_mu,
                                        const Eigen::VectorXd& x);

/// theta + u_hat - u_grid, nodewise.
template <int Dim>
GridField<Dim> update_dual(const GridField<Dim>& theta, const GridField<Dim>& u_hat,
                           const GridField<Dim>& u_grid);

}  // namespace serialtrack
