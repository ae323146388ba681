#pragma once

#include "serialtrack/postproc.hpp"
#include "serialtrack/synth.hpp"
#include "serialtrack/trajectory.hpp"

#include <filesystem>
#include <string>

namespace serialtrack {

/// SplitMix64 of (base, stream): independent per-frame RNG seeds.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);

/// A synthetic frame sequence: frame t shows the seed particles moved by
/// `frames[t]` (total motion from the seeds).
struct SequenceSpec {
  SynthImageSpec image;
  std::vector<DeformationSpec> frames;
  bool soft = false;  // render each particle with its local deformation gradient
};

template <int Dim>
struct SyntheticSequence {
  ParticleSet<Dim> seeds;               // undeformed, covers every frame's preimage
  std::vector<ParticleSet<Dim>> truth;  // per frame, index-aligned with seeds
  std::vector<Image<Dim>> images;
};

/// Seeds particles over the union of the frame and the preimages of the frame
/// under every deformation (plus a PSF margin), so the imaged field behaves
/// as if unbounded. Frame t uses noise seed derive_seed(rng_seed, t).
template <int Dim>
SyntheticSequence<Dim> make_sequence(const SequenceSpec& spec, int max_parallel = 1);

/// Point X with X + u(X) = x (Newton on the prescribed field).
template <int Dim>
Vec<Dim> invert_deformation(const DeformationSpec& spec, const Vec<Dim>& x);

enum class PresetFamily { translation, rotation, stretch, shear, star };

struct Preset {
  std::string name;
  int dim = 2;
  PresetFamily family = PresetFamily::translation;
  std::array<int, 3> dims{512, 512, 1};
  std::vector<double> densities;  // per px^d
  std::vector<double> values;     // deformation parameter per frame, frame 0 first
  TrackingConfig tracking;
  bool soft = false;              // anisotropic blobs; tracked both soft and hard
  double noise_pct = 0.05;

  DeformationSpec deformation(double value) const;
};

/// translation2d/3d, rotation2d/3d, stretch2d/3d, shear2d/3d, star2d,
/// soft_stretch2d, soft_shear2d.
const std::vector<Preset>& benchmark_presets();

/// Throws ConfigInvalid for unknown names.
const Preset& find_preset(const std::string& name);

struct StepRow {
  int step = 0;  // pair index, 1-based
  int from = 0, to = 0;
  double value = 0.0;  // deformation parameter of frame `to`
  bool ok = false;
  std::string error;
  PairMetrics metrics;
  int iterations = 0;
  std::vector<double> match_ratio_history;
  double seconds = 0.0;
  // incremental presets: cumulative motion frame 0 -> to from merged trajectories
  double cumulative_ratio = -1.0;
  double cumulative_rms = -1.0;
  // rotation presets: direct pair (0, to) tracked fraction of frame-0 detections
  double overlap_ratio = -1.0;
};

struct StarProfile {
  std::vector<double> x, uy, uy_true;
  double amplitude_right = 0.0;  // least-squares amplitude for x > 500
  double amplitude_left = 0.0;   // for x < 500
};

struct DensityRun {
  double density = 0.0;
  std::size_t seeds = 0;
  std::size_t detected_frame0 = 0;
  std::vector<StepRow> rows;
  std::vector<StepRow> hard_rows;  // soft presets: same images, hard tracking
  std::optional<StarProfile> star;
  double seconds = 0.0;
};

struct BenchmarkOptions {
  std::optional<std::vector<double>> densities;
  std::optional<std::vector<double>> values;
  std::optional<std::array<int, 3>> dims;
  std::optional<double> noise_pct;
  std::optional<TrackingConfig> tracking;
  std::uint64_t seed = 1;
  int max_parallel = 1;
};

struct BenchmarkResult {
  Preset preset;  // after overrides
  std::vector<DensityRun> runs;
  double seconds = 0.0;
};

/// Runs every density of the preset. When `out_dir` is set, writes per-density
/// metrics CSVs (and the star profile / trajectories) there.
BenchmarkResult run_benchmark(const Preset& preset, const BenchmarkOptions& options,
                              const std::optional<std::filesystem::path>& out_dir = std::nullopt);

}  // namespace serialtrack
