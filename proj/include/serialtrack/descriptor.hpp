#pragma once

#include "serialtrack/core.hpp"
#include "serialtrack/neighbor_index.hpp"

#include <Eigen/Core>

namespace serialtrack {

/// Scale- and rotation-invariant neighbor topology of one particle.
///
/// `r` holds neighbor distances over the first-neighbor distance (r[0] == 1).
/// In 2D `angles[0]` holds polar angles relative to the first-neighbor
/// direction. In 3D `angles[0]` is the polar angle theta in [0, pi] and
/// `angles[1]` the azimuth phi in [0, 2 pi), both in the local frame
/// e1 = r1/|r1|, e3 = +-(r1 x r2)/|r1 x r2| with e3 . r3 > 0, e2 = e3 x e1.
template <int Dim>
struct Descriptor {
  static constexpr int kAngleFeatures = Dim - 1;

  int m = 0;  // neighbors used; 0 marks an unmatchable particle
  Eigen::VectorXd r;
  std::array<Eigen::VectorXd, kAngleFeatures> angles;
  Mat<Dim> frame = Mat<Dim>::Identity();  // columns e1..ed (3D only)

  bool valid() const { return m > 0; }
};

/// min(|a - b|, 2 pi - |a - b|) for angles in [0, 2 pi).
double circular_distance(double a, double b);

/// Throws TooFewNeighbors when the particle has fewer than 1 (2D) or
/// 3 (3D) neighbors within search_radius or no non-degenerate 3D frame.
template <int Dim>
Descriptor<Dim> build_descriptor(int particle, const NeighborIndex<Dim>& index, int k,
                                 double search_radius);

/// Descriptors for every point of the index; unmatchable ones have m == 0.
template <int Dim>
std::vector<Descriptor<Dim>> build_descriptors(const NeighborIndex<Dim>& index, int k,
                                               double search_radius);

/// Feature distances between two descriptors over their first min(m_a, m_b)
/// entries, each divided by that count. Index 0 is D_r, then one entry per
/// angle feature.
template <int Dim>
std::array<double, Dim> feature_distances(const Descriptor<Dim>& a, const Descriptor<Dim>& b);

template <int Dim>
struct Match {
  int a = -1;
  int b = -1;
  Vec<Dim> u = Vec<Dim>::Zero();  // pos_B(b) - pos_A(a)
  bool valid = true;
};

template <int Dim>
struct MatchSet {
  std::vector<Match<Dim>> matches;
  std::size_t reference_count = 0;

  double match_ratio() const {
    return reference_count == 0 ? 0.0
                                : static_cast<double>(matches.size()) / reference_count;
  }
  std::size_t valid_count() const {
    std::size_t n = 0;
    for (const auto& m : matches) n += m.valid;
    return n;
  }
};

/// Positions, descriptors and a spatial index for one side of a matching.
template <int Dim>
struct FeatureSet {
  NeighborIndex<Dim> index;  // over the descriptor geometry
  std::vector<Descriptor<Dim>> descriptors;

  static FeatureSet build(std::vector<Vec<Dim>> positions, int k, double search_radius) {
    FeatureSet fs{NeighborIndex<Dim>(std::move(positions)), {}};
    fs.descriptors = build_descriptors(fs.index, k, search_radius);
    return fs;
  }
  const std::vector<Vec<Dim>>& positions() const { return index.points(); }
};

/// Simultaneous-argmin descriptor matching.
///
/// Candidates for a are the particles of B within search_radius of
/// a's position in `a.positions()` (the predictor-warped geometry), limited to
/// the `max_candidates` nearest when that is positive. a matches
/// b when b minimizes every feature distance at once; exact ties prefer the
/// spatially closer candidate, then the lower index. A particle of B claimed
/// by several particles of A stays with the spatially closest claimant.
/// Displacements are measured from `a_reference` (unwarped positions) to B.
template <int Dim>
MatchSet<Dim> match_particles(const FeatureSet<Dim>& a, const FeatureSet<Dim>& b,
                              const std::vector<Vec<Dim>>& a_reference, double search_radius,
                              int max_candidates = 0);

struct OutlierConfig {
  double threshold = 4.0;  // normalized residual
  double epsilon = 0.1;    // px
  int neighbors = 0;       // 0 = 8 (2D) / 26 (3D)
};

/// One pass of the normalized median test over the nearest matched
/// neighbors; invalidates matches whose normalized residual exceeds the
/// threshold. `a_reference` supplies the positions of the matched A particles.
template <int Dim>
MatchSet<Dim> remove_outliers(const MatchSet<Dim>& matches,
                              const std::vector<Vec<Dim>>& a_reference,
                              const OutlierConfig& cfg = {});

}  // namespace serialtrack
