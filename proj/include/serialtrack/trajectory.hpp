#pragma once

#include "serialtrack/tracker.hpp"

#include <functional>
#include <iosfwd>
#include <string>

namespace serialtrack {

using FramePair = std::pair<int, int>;

/// Frame pairs tracked by each mode. Throws OddFrameCount (double_frame with
/// an odd count) and ConfigInvalid (fewer than two frames).
std::vector<FramePair> pair_frames(int n_frames, TrackingConfig::Mode mode);

/// Input frames: centroids for hard tracking; images (and their detected
/// reference centroids) for soft tracking.
template <int Dim>
struct FrameSet {
  std::vector<ParticleSet<Dim>> particles;
  std::vector<Image<Dim>> images;  // empty unless rigidity == soft

  int size() const { return static_cast<int>(particles.size()); }
};

/// Tracks frame `from` against frame `to`, optionally seeded by a predictor.
template <int Dim>
using PairTracker =
    std::function<TrackResult<Dim>(int from, int to, const GridField<Dim>* predictor)>;

template <int Dim>
PairTracker<Dim> make_pair_tracker(const FrameSet<Dim>& frames, const TrackingConfig& cfg);

template <int Dim>
struct PairOutcome {
  FramePair pair{};
  std::optional<TrackResult<Dim>> result;
  std::optional<ErrorCode> error;
  std::string message;
  double seconds = 0.0;

  bool ok() const { return result.has_value(); }
};

/// Runs every pair of `cfg.mode` in order. With `use_predictor`, pair i is
/// seeded by the u_hat of pair i-1 when that pair succeeded (incremental and
/// cumulative modes). Failed pairs are recorded and the sequence continues.
template <int Dim>
std::vector<PairOutcome<Dim>> track_sequence(int n_frames, const TrackingConfig& cfg,
                                             const PairTracker<Dim>& tracker,
                                             bool use_predictor = true);

/// Pairs (0, t) for t = 1..N-1 with the previous-u_hat predictor.
template <int Dim>
std::vector<PairOutcome<Dim>> cumulative_track(const FrameSet<Dim>& frames,
                                               const TrackingConfig& cfg);

template <int Dim>
struct Trajectory {
  int id = 0;
  int start = 0;  // first frame
  std::vector<Vec<Dim>> positions;
  std::vector<bool> extrapolated;
  std::vector<int> particle;  // id within the frame's particle set, -1 if extrapolated

  int end() const { return start + static_cast<int>(positions.size()) - 1; }
  bool covers(int frame) const { return frame >= start && frame <= end(); }
  const Vec<Dim>& at(int frame) const { return positions[frame - start]; }
  Vec<Dim> cumulative(int frame) const { return at(frame) - positions.front(); }
};

/// Chains the matches of consecutive pairs (t, t+1) into segments. Every
/// particle of every frame ends up in exactly one segment (possibly of
/// length one). Deformed-side ids are mapped onto frames[t+1] by the nearest
/// particle within eps_d of the pair.
template <int Dim>
std::vector<Trajectory<Dim>> chain_segments(const FrameSet<Dim>& frames,
                                            const std::vector<PairOutcome<Dim>>& incremental);

struct MergeOptions {
  double join_tol = 1.0;  // px
  int max_rounds = 5;
};

struct MergeReport {
  int rounds = 0;
  int joins = 0;
};

/// Joins segments whose constant-velocity extrapolation (one frame beyond
/// either end) meets another segment: gap 0 when the extrapolation lands
/// within join_tol of the other endpoint, gap 1 when both extrapolations meet
/// within join_tol (the missing frame is filled and flagged). Repeats until a
/// round joins nothing or max_rounds is reached.
template <int Dim>
std::vector<Trajectory<Dim>> merge_segments(std::vector<Trajectory<Dim>> segments,
                                            const MergeOptions& opts,
                                            MergeReport* report = nullptr);

template <int Dim>
struct IncrementalCumulative {
  std::vector<PairOutcome<Dim>> pairs;
  std::vector<Trajectory<Dim>> trajectories;  // all merged trajectories
  MergeReport merge;
};

/// Incremental pairs with the previous-u_hat predictor, chained and merged.
/// Trajectories starting at frame 0 carry the cumulative displacement.
template <int Dim>
IncrementalCumulative<Dim> incremental_cumulative(const FrameSet<Dim>& frames,
                                                  const TrackingConfig& cfg,
                                                  std::optional<double> join_tol = std::nullopt);

/// `traj_id,frame,x,y[,z],ux_cum,uy_cum[,uz_cum],extrapolated`
template <int Dim>
void write_trajectories_csv(std::ostream& os, const std::vector<Trajectory<Dim>>& trajectories);

}  // namespace serialtrack
