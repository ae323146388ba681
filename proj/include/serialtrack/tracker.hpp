#pragma once

#include "serialtrack/descriptor.hpp"
#include "serialtrack/detect.hpp"
#include "serialtrack/global_step.hpp"
#include "serialtrack/grid_field.hpp"

#include <optional>

namespace serialtrack {

struct TrackingConfig {
  enum class Mode { incremental, cumulative, double_frame };
  enum class Rigidity { hard, soft };

  Mode mode = Mode::incremental;
  Rigidity rigidity = Rigidity::hard;
  int k_start = 25;                   // max neighbor count
  double search_radius = kInf;        // px, "size of search field"
  double alpha_over_mu = 1e-2;        // px^2
  double eps_converge = 1e-2;         // px, max-norm change of u_hat
  int iter_max = 20;
  std::optional<double> eps_d;        // px; default 0.5 * mean NN spacing of P_n
  std::optional<double> grid_spacing; // px; default max(2, 0.5 * mean NN spacing)
  bool ghost_removal = true;
  int ghost_start_iteration = 0;
  Inpaint inpaint = Inpaint::linear;  // empty grid nodes
  OutlierConfig outlier;
  DetectionConfig detection;

  void validate() const;
};

template <int Dim>
struct TrackResult {
  ParticleSet<Dim> reference;  // P_n as given / detected
  ParticleSet<Dim> deformed;   // P_nt (soft mode: final re-detection, deformed coordinates)
  MatchSet<Dim> matches;       // a/b index into reference/deformed
  GridField<Dim> u_hat;
  GridField<Dim> theta;
  int iterations = 0;
  std::vector<double> match_ratio_history;
  std::vector<int> removed_reference;  // ghosts on the final iteration
  std::vector<int> removed_deformed;
  double eps_d = 0.0;
};

/// Exponentially decreasing neighbor count: max(1, round(k_start 2^(-iteration/2))).
int k_schedule(int iteration, int k_start);

template <int Dim>
struct GhostFilter {
  std::vector<bool> keep_reference;
  std::vector<bool> keep_deformed;
};

/// Keeps P in P_n iff some Q in P_nt lies within eps_d of P + u_hat(P), and Q
/// iff some warped P lies within eps_d of it. Throws EmptyAfterRemoval.
template <int Dim>
GhostFilter<Dim> remove_ghosts(const std::vector<Vec<Dim>>& reference,
                               const std::vector<Vec<Dim>>& deformed,
                               const GridField<Dim>& u_hat, double eps_d);

/// ADMM tracking of two centroid sets ("hard" particles).
template <int Dim>
TrackResult<Dim> track_hard(const ParticleSet<Dim>& reference, const ParticleSet<Dim>& deformed,
                            const TrackingConfig& cfg,
                            const GridField<Dim>* predictor = nullptr);

/// output(x) = input(x + u_hat(x)); samples outside the input are 0.
template <int Dim>
Image<Dim> warp_image(const Image<Dim>& image, const GridField<Dim>& u_hat);

/// ADMM tracking with per-iteration image warping and re-detection ("soft"
/// particles).
template <int Dim>
TrackResult<Dim> track_soft(const Image<Dim>& reference, const Image<Dim>& deformed,
                            const TrackingConfig& cfg,
                            const GridField<Dim>* predictor = nullptr);

/// As track_soft with the reference centroids already detected.
template <int Dim>
TrackResult<Dim> track_soft(const ParticleSet<Dim>& reference, const Image<Dim>& deformed,
                            const TrackingConfig& cfg,
                            const GridField<Dim>* predictor = nullptr);

}  // namespace serialtrack
