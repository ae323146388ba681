#pragma once

#include "serialtrack/tracker.hpp"

#include <functional>
#include <iosfwd>

namespace serialtrack {

enum class StrainMeasure { small, green_lagrange };

/// Nodewise tensors on the grid of the displacement field they came from.
template <int Dim>
struct TensorField {
  GridSpec<Dim> grid;
  std::vector<Mat<Dim>> F;
  std::vector<Mat<Dim>> small_strain;    // (grad u + grad u^T) / 2
  std::vector<Mat<Dim>> green_lagrange;  // (F^T F - I) / 2
  std::vector<bool> valid;  // central stencil on every axis and det F > 0

  const std::vector<Mat<Dim>>& strain(StrainMeasure m) const {
    return m == StrainMeasure::small ? small_strain : green_lagrange;
  }
};

/// F = I + grad u by central differences; second-order one-sided
/// differences on the grid faces (those nodes are flagged invalid).
/// Throws GridTooSmall below 3 nodes on any axis.
template <int Dim>
TensorField<Dim> deformation_gradient(const GridField<Dim>& u);

template <int Dim>
Mat<Dim> strain_of(const Mat<Dim>& F, StrainMeasure m);

template <int Dim>
struct PolarDecomposition {
  Mat<Dim> R;
  Mat<Dim> U;
};

/// F = R U with U = (F^T F)^(1/2) from a symmetric eigendecomposition.
/// Throws SingularF when det F <= 1e-12.
template <int Dim>
PolarDecomposition<Dim> polar_decompose(const Mat<Dim>& F);

/// `x,y[,z],F11,F12,...,valid`
template <int Dim>
void write_tensor_csv(std::ostream& os, const TensorField<Dim>& field);

/// Links detections to synthetic ground truth.
template <int Dim>
struct GroundTruth {
  std::vector<int> reference_id;  // per reference detection, -1 if unassociated
  std::vector<int> deformed_id;   // per deformed detection
  std::vector<Vec<Dim>> true_u;   // per reference detection (zero if unassociated)
  std::vector<bool> trackable;    // associated and partner inside the deformed frame
};

/// Each detection takes the nearest ground-truth particle within `tol`.
/// `gt_deformed` is index-aligned with `gt_reference`; partners flagged
/// out_of_frame are not trackable.
template <int Dim>
GroundTruth<Dim> associate(const std::vector<Vec<Dim>>& reference_detections,
                           const std::vector<Vec<Dim>>& deformed_detections,
                           const ParticleSet<Dim>& gt_reference,
                           const ParticleSet<Dim>& gt_deformed, double tol = 0.5);

struct PairMetrics {
  std::size_t detected = 0;   // reference detections
  std::size_t trackable = 0;  // with an in-frame ground-truth partner
  std::size_t matched = 0;    // valid matches of trackable particles
  std::size_t correct = 0;    // valid matches linking the ground-truth pair
  std::size_t valid = 0;      // all valid matches
  double tracking_ratio = 0.0;       // matched / trackable
  double correct_match_ratio = 0.0;  // correct / valid
  double overlap_ratio = 0.0;        // correct / detected
  double disp_rms = 0.0;             // per component, over correct matches, px
  double field_rms = 0.0;            // per component, u_hat at trackable particles, px
  double strain_rms = -1.0;          // per component over valid nodes; -1 when not evaluated
};

/// Analytic deformation gradient used for strain errors.
template <int Dim>
using GradientFn = std::function<Mat<Dim>(const Vec<Dim>&)>;

template <int Dim>
PairMetrics evaluate(const TrackResult<Dim>& result, const GroundTruth<Dim>& truth,
                     const GradientFn<Dim>& true_gradient = {},
                     StrainMeasure measure = StrainMeasure::green_lagrange);

}  // namespace serialtrack
