#include "serialtrack/benchmark.hpp"

#include "serialtrack/io.hpp"
#include "serialtrack/parallel.hpp"

#include <Eigen/LU>

#include <chrono>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

namespace serialtrack {

namespace fs = std::filesystem;

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  std::uint64_t z = base + 0x9E3779B97F4A7C15ull * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

template <int Dim>
Vec<Dim> invert_deformation(const DeformationSpec& spec, const Vec<Dim>& x) {
  Vec<Dim> X = x - displacement_at<Dim>(spec, x);
  for (int it = 0; it < 50; ++it) {
    const Vec<Dim> r = X + displacement_at<Dim>(spec, X) - x;
    if (r.norm() < 1e-10) break;
    X -= deformation_gradient_at<Dim>(spec, X).lu().solve(r);
  }
  return X;
}

namespace {

using clk = std::chrono::steady_clock;
double since(clk::time_point t) { return std::chrono::duration<double>(clk::now() - t).count(); }

// Points on the faces of the box [0, ext-1]^d, spaced about `step`.
template <int Dim>
std::vector<Vec<Dim>> frame_boundary(const Extents<Dim>& ext, double step) {
  std::array<std::vector<double>, Dim> ticks;
  for (int a = 0; a < Dim; ++a) {
    const double len = ext[a] - 1.0;
    const int n = std::max(1, static_cast<int>(std::ceil(len / step)));
    for (int i = 0; i <= n; ++i) ticks[a].push_back(len * i / n);
  }
  std::vector<Vec<Dim>> out;
  std::array<std::size_t, Dim> idx{};
  while (true) {
    Vec<Dim> p;
    bool face = false;
    for (int a = 0; a < Dim; ++a) {
      p[a] = ticks[a][idx[a]];
      face = face || idx[a] == 0 || idx[a] + 1 == ticks[a].size();
    }
    if (face) out.push_back(p);
    int a = 0;
    while (a < Dim && ++idx[a] == ticks[a].size()) idx[a++] = 0;
    if (a == Dim) break;
  }
  return out;
}

}  // namespace

template <int Dim>
SyntheticSequence<Dim> make_sequence(const SequenceSpec& spec, int max_parallel) {
  validate(spec.image, Dim);
  if (spec.frames.empty()) throw Error(ErrorCode::ConfigInvalid, "sequence has no frames");
  for (const auto& d : spec.frames) validate(d, Dim);
  const Extents<Dim> ext = extents_of<Dim>(spec.image);

  Vec<Dim> lo = Vec<Dim>::Zero(), hi;
  for (int a = 0; a < Dim; ++a) hi[a] = ext[a] - 1.0;
  const auto boundary = frame_boundary<Dim>(ext, 4.0);
  double stretch = 1.0;
  for (const auto& d : spec.frames) {
    if (d.kind == DeformationSpec::Kind::identity) continue;
    for (const auto& x : boundary) {
      const Vec<Dim> X = invert_deformation<Dim>(d, x);
      lo = lo.cwiseMin(X);
      hi = hi.cwiseMax(X);
      stretch = std::max(stretch, deformation_gradient_at<Dim>(d, X).norm());
    }
  }
  const double margin = 4.0 * spec.image.psf_sigma * stretch + spec.image.min_dist;
  lo.array() -= margin;
  hi.array() += margin;
  lo = lo.array().floor();
  Extents<Dim> box{};
  for (int a = 0; a < Dim; ++a) box[a] = static_cast<int>(std::ceil(hi[a] - lo[a])) + 1;

  SyntheticSequence<Dim> seq;
  seq.seeds = poisson_disc_sample<Dim>(box, spec.image.min_dist, spec.image.seeding_density,
                                       spec.image.rng_seed);
  for (auto& p : seq.seeds.positions) p += lo;
  seq.seeds.out_of_frame.clear();

  const std::size_t n = spec.frames.size();
  seq.truth.resize(n);
  seq.images.resize(n);
  parallel_for(n, max_parallel, [&](std::size_t t) {
    seq.truth[t] = apply_deformation<Dim>(seq.seeds, spec.frames[t], ext);
    seq.truth[t].frame = static_cast<int>(t);
    SynthImageSpec img = spec.image;
    img.rng_seed = derive_seed(spec.image.rng_seed, t);
    std::vector<Mat<Dim>> shapes;
    if (spec.soft) {
      shapes.reserve(seq.seeds.positions.size());
      for (const auto& X : seq.seeds.positions)
        shapes.push_back(deformation_gradient_at<Dim>(spec.frames[t], X));
    }
    seq.images[t] = render_image<Dim>(seq.truth[t], img, shapes);
  });
  return seq;
}

DeformationSpec Preset::deformation(double v) const {
  std::array<double, 3> c{};
  for (int a = 0; a < dim; ++a) c[a] = 0.5 * (dims[a] - 1);
  switch (family) {
    case PresetFamily::translation:
      return v == 0.0 ? DeformationSpec{} : DeformationSpec::make_translation({v, 0.0, 0.0});
    case PresetFamily::rotation:
      return v == 0.0 ? DeformationSpec{} : DeformationSpec::make_rotation(v, c);
    case PresetFamily::stretch:
      return v == 1.0 ? DeformationSpec{} : DeformationSpec::make_stretch(0, v, c);
    case PresetFamily::shear:
      // 2D: u_x grows with y; 3D: u_x grows with z
      return v == 0.0 ? DeformationSpec{}
                      : DeformationSpec::make_shear(0, dim == 2 ? 1 : 2, v, c);
    case PresetFamily::star:
      return v == 0.0 ? DeformationSpec{} : DeformationSpec::make_star(2.0 * v);
  }
  return {};
}

namespace {

std::vector<double> range(double a, double b, double step) {
  std::vector<double> out;
  const int n = static_cast<int>(std::lround((b - a) / step));
  for (int i = 0; i <= n; ++i) out.push_back(a + step * i);
  return out;
}

std::vector<Preset> build_presets() {
  std::vector<Preset> out;
  const std::vector<double> sd2{0.003, 0.006, 0.012};
  const std::vector<double> sd3{1e-4, 5e-4, 1e-3};
  auto make = [&](std::string name, int dim, PresetFamily fam, TrackingConfig::Mode mode,
                  double search, std::vector<double> values) {
    Preset p;
    p.name = std::move(name);
    p.dim = dim;
    p.family = fam;
    p.dims = dim == 2 ? std::array<int, 3>{512, 512, 1} : std::array<int, 3>{64, 64, 64};
    p.densities = dim == 2 ? sd2 : sd3;
    p.values = std::move(values);
    p.tracking.mode = mode;
    p.tracking.search_radius = search;
    p.tracking.k_start = 25;
    p.tracking.detection.intensity_threshold = 0.5;
    p.tracking.detection.particle_radius = 3.0;
    return p;
  };
  using M = TrackingConfig::Mode;
  for (int dim : {2, 3}) {
    const std::string s = std::to_string(dim) + "d";
    out.push_back(make("translation" + s, dim, PresetFamily::translation, M::incremental, kInf,
                       range(0.0, 4.0, 0.1)));
    out.push_back(make("rotation" + s, dim, PresetFamily::rotation, M::incremental, kInf,
                       range(0.0, 180.0, 10.0)));
    out.push_back(make("stretch" + s, dim, PresetFamily::stretch, M::cumulative, 50.0,
                       range(1.0, 3.0, 0.1)));
    out.push_back(make("shear" + s, dim, PresetFamily::shear, M::cumulative, 50.0,
                       range(0.0, 0.45, 0.05)));
  }
  Preset star = make("star2d", 2, PresetFamily::star, M::incremental, 50.0, {0.0, 1.0});
  star.dims = {4001, 501, 1};
  out.push_back(star);
  Preset ss = make("soft_stretch2d", 2, PresetFamily::stretch, M::cumulative, 50.0,
                   range(1.0, 3.0, 0.1));
  ss.soft = true;
  ss.tracking.rigidity = TrackingConfig::Rigidity::soft;
  out.push_back(ss);
  Preset sh = make("soft_shear2d", 2, PresetFamily::shear, M::cumulative, 50.0,
                   range(0.0, 0.45, 0.05));
  sh.soft = true;
  sh.tracking.rigidity = TrackingConfig::Rigidity::soft;
  out.push_back(sh);
  return out;
}

// Ground-truth id of every detection in every frame.
template <int Dim>
std::vector<std::vector<int>> truth_ids(const SyntheticSequence<Dim>& seq,
                                        const FrameSet<Dim>& frames) {
  std::vector<std::vector<int>> ids(frames.particles.size());
  for (std::size_t t = 0; t < ids.size(); ++t) {
    const NeighborIndex<Dim> idx(seq.truth[t].positions);
    for (const auto& p : frames.particles[t].positions) {
      const auto h = idx.nearest(p);
      ids[t].push_back(h.index >= 0 && h.dist2 <= 0.25 ? h.index : -1);
    }
  }
  return ids;
}

template <int Dim>
GradientFn<Dim> pair_gradient(const DeformationSpec& from, const DeformationSpec& to) {
  return [from, to](const Vec<Dim>& x) {
    const Vec<Dim> X = invert_deformation<Dim>(from, x);
    return Mat<Dim>(deformation_gradient_at<Dim>(to, X) *
                    deformation_gradient_at<Dim>(from, X).inverse());
  };
}

template <int Dim>
StepRow score_pair(const PairOutcome<Dim>& o, const SyntheticSequence<Dim>& seq,
                   const std::vector<DeformationSpec>& defs, const std::vector<double>& values) {
  StepRow row;
  row.from = o.pair.first;
  row.to = o.pair.second;
  row.value = values[row.to];
  row.ok = o.ok();
  row.seconds = o.seconds;
  if (!o.ok()) {
    row.error = std::string(to_string(*o.error)) + ": " + o.message;
    return row;
  }
  const auto& r = *o.result;
  const auto truth = associate<Dim>(r.reference.positions, r.deformed.positions,
                                    seq.truth[row.from], seq.truth[row.to]);
  row.metrics = evaluate<Dim>(r, truth, pair_gradient<Dim>(defs[row.from], defs[row.to]));
  row.iterations = r.iterations;
  row.match_ratio_history = r.match_ratio_history;
  return row;
}

// Cumulative motion 0 -> t carried by merged trajectories.
template <int Dim>
void score_trajectories(std::vector<StepRow>& rows, const std::vector<Trajectory<Dim>>& trajs,
                        const SyntheticSequence<Dim>& seq,
                        const std::vector<std::vector<int>>& ids) {
  std::vector<const Trajectory<Dim>*> from0(ids[0].size(), nullptr);
  for (const auto& t : trajs)
    if (t.start == 0 && t.particle.front() >= 0) from0[t.particle.front()] = &t;
  for (auto& row : rows) {
    const int t = row.to;
    std::size_t trackable = 0, correct = 0;
    double se = 0.0;
    for (std::size_t i = 0; i < ids[0].size(); ++i) {
      const int id = ids[0][i];
      if (id < 0 || seq.truth[t].out_of_frame[id]) continue;
      ++trackable;
      const Trajectory<Dim>* tr = from0[i];
      if (!tr || !tr->covers(t) || tr->extrapolated[t]) continue;
      const int j = tr->particle[t];
      if (j < 0 || ids[t][j] != id) continue;
      ++correct;
      const Vec<Dim> truth_u = seq.truth[t].positions[id] - seq.truth[0].positions[id];
      se += (tr->cumulative(t) - truth_u).squaredNorm();
    }
    row.cumulative_ratio = trackable ? static_cast<double>(correct) / trackable : 0.0;
    row.cumulative_rms = correct ? std::sqrt(se / (Dim * static_cast<double>(correct))) : 0.0;
  }
}

template <int Dim>
StarProfile star_profile(const GridField<Dim>& u_hat, const DeformationSpec& star,
                         const std::array<int, 3>& dims) {
  StarProfile p;
  const double y = 0.5 * (dims[1] - 1);
  double num_r = 0, den_r = 0, num_l = 0, den_l = 0;
  for (int x = 0; x < dims[0]; ++x) {
    Vec<Dim> X = Vec<Dim>::Zero();
    X[0] = x;
    X[1] = y;
    if constexpr (Dim == 3) X[2] = 0.5 * (dims[2] - 1);
    const double uy = interpolate(u_hat, X)[1];
    const double truth = displacement_at<Dim>(star, X)[1];
    p.x.push_back(x);
    p.uy.push_back(uy);
    p.uy_true.push_back(truth);
    const double s = truth / star.star_amplitude;
    if (x > 500) num_r += uy * s, den_r += s * s;
    else if (x < 500) num_l += uy * s, den_l += s * s;
  }
  p.amplitude_right = den_r > 0 ? num_r / den_r : 0.0;
  p.amplitude_left = den_l > 0 ? num_l / den_l : 0.0;
  return p;
}

std::string metrics_header() {
  return "step,from,to,value,ok,tracking_ratio,correct_match_ratio,overlap_ratio,disp_rms,"
         "field_rms,strain_rms,iterations,cumulative_ratio,cumulative_rms,direct_overlap_ratio\n";
}

std::string metrics_csv(const std::vector<StepRow>& rows) {
  std::ostringstream os;
  os << metrics_header();
  for (const auto& r : rows) {
    const auto& m = r.metrics;
    os << r.step << ',' << r.from << ',' << r.to << ',' << format_number(r.value) << ','
       << (r.ok ? 1 : 0) << ',' << format_number(m.tracking_ratio) << ','
       << format_number(m.correct_match_ratio) << ',' << format_number(m.overlap_ratio) << ','
       << format_number(m.disp_rms) << ',' << format_number(m.field_rms) << ','
       << format_number(m.strain_rms) << ',' << r.iterations << ','
       << format_number(r.cumulative_ratio) << ',' << format_number(r.cumulative_rms) << ','
       << format_number(r.overlap_ratio) << '\n';
  }
  return os.str();
}

template <int Dim>
DensityRun run_density(const Preset& preset, double density, const BenchmarkOptions& opt,
                       const std::optional<fs::path>& out_dir) {
  const auto t0 = clk::now();
  DensityRun run;
  run.density = density;

  SequenceSpec spec;
  spec.image.dims = preset.dims;
  spec.image.seeding_density = density;
  spec.image.noise_pct = preset.noise_pct;
  spec.image.rng_seed = derive_seed(opt.seed, static_cast<std::uint64_t>(density * 1e9));
  spec.soft = preset.soft;
  std::vector<DeformationSpec> defs;
  for (double v : preset.values) defs.push_back(preset.deformation(v));
  spec.frames = defs;
  const SyntheticSequence<Dim> seq = make_sequence<Dim>(spec, opt.max_parallel);
  run.seeds = seq.seeds.positions.size();

  const TrackingConfig& cfg = preset.tracking;
  FrameSet<Dim> frames;
  frames.particles.resize(seq.images.size());
  parallel_for(seq.images.size(), opt.max_parallel, [&](std::size_t t) {
    frames.particles[t] = detect<Dim>(seq.images[t], cfg.detection).particles;
    frames.particles[t].frame = static_cast<int>(t);
  });
  if (preset.soft) frames.images = seq.images;
  run.detected_frame0 = frames.particles[0].positions.size();

  auto number_rows = [](std::vector<StepRow>& rows) {
    for (std::size_t i = 0; i < rows.size(); ++i) rows[i].step = static_cast<int>(i) + 1;
  };
  const std::string tag = "_sd" + format_number(density);

  if (cfg.mode == TrackingConfig::Mode::incremental) {
    const auto inc = incremental_cumulative<Dim>(frames, cfg);
    for (const auto& o : inc.pairs) run.rows.push_back(score_pair<Dim>(o, seq, defs, preset.values));
    number_rows(run.rows);
    if (preset.family != PresetFamily::star) {
      score_trajectories<Dim>(run.rows, inc.trajectories, seq, truth_ids<Dim>(seq, frames));
      if (out_dir) {
        std::ostringstream os;
        write_trajectories_csv<Dim>(os, inc.trajectories);
        write_text(*out_dir / ("trajectories" + tag + ".csv"), os.str());
      }
    }
    if (preset.family == PresetFamily::rotation) {
      const auto direct = cumulative_track<Dim>(frames, cfg);
      for (std::size_t i = 0; i < direct.size() && i < run.rows.size(); ++i) {
        const StepRow d = score_pair<Dim>(direct[i], seq, defs, preset.values);
        run.rows[i].overlap_ratio = d.ok ? d.metrics.overlap_ratio : 0.0;
      }
    }
    if (preset.family == PresetFamily::star && !inc.pairs.empty() && inc.pairs[0].ok()) {
      run.star = star_profile<Dim>(inc.pairs[0].result->u_hat, defs.back(), preset.dims);
      if (out_dir) {
        std::ostringstream os;
        os << "x,uy,uy_true\n";
        for (std::size_t i = 0; i < run.star->x.size(); ++i)
          os << format_number(run.star->x[i]) << ',' << format_number(run.star->uy[i]) << ','
             << format_number(run.star->uy_true[i]) << '\n';
        write_text(*out_dir / ("star_profile" + tag + ".csv"), os.str());
      }
    }
  } else {
    const auto pairs = cumulative_track<Dim>(frames, cfg);
    for (const auto& o : pairs) run.rows.push_back(score_pair<Dim>(o, seq, defs, preset.values));
    number_rows(run.rows);
    if (preset.soft) {
      TrackingConfig hard = cfg;
      hard.rigidity = TrackingConfig::Rigidity::hard;
      const auto hp = cumulative_track<Dim>(frames, hard);
      for (const auto& o : hp) run.hard_rows.push_back(score_pair<Dim>(o, seq, defs, preset.values));
      number_rows(run.hard_rows);
    }
  }
  if (out_dir) {
    write_text(*out_dir / ("metrics" + tag + ".csv"), metrics_csv(run.rows));
    if (!run.hard_rows.empty())
      write_text(*out_dir / ("metrics_hard" + tag + ".csv"), metrics_csv(run.hard_rows));
  }
  run.seconds = since(t0);
  return run;
}

}  // namespace

const std::vector<Preset>& benchmark_presets() {
  static const std::vector<Preset> presets = build_presets();
  return presets;
}

const Preset& find_preset(const std::string& name) {
  for (const auto& p : benchmark_presets())
    if (p.name == name) return p;
  throw Error(ErrorCode::ConfigInvalid, "unknown benchmark preset '" + name + "'");
}

BenchmarkResult run_benchmark(const Preset& base, const BenchmarkOptions& opt,
                              const std::optional<fs::path>& out_dir) {
  const auto t0 = clk::now();
  BenchmarkResult res;
  res.preset = base;
  Preset& p = res.preset;
  if (opt.densities) p.densities = *opt.densities;
  if (opt.values) p.values = *opt.values;
  if (opt.dims) p.dims = *opt.dims;
  if (opt.noise_pct) p.noise_pct = *opt.noise_pct;
  if (opt.tracking) p.tracking = *opt.tracking;
  if (p.values.size() < 2) throw Error(ErrorCode::ConfigInvalid, "benchmark needs >= 2 frames");
  if (p.densities.empty()) throw Error(ErrorCode::ConfigInvalid, "benchmark needs a density");
  p.tracking.validate();
  for (double d : p.densities) {
    if (p.dim == 2) res.runs.push_back(run_density<2>(p, d, opt, out_dir));
    else res.runs.push_back(run_density<3>(p, d, opt, out_dir));
  }
  res.seconds = since(t0);
  return res;
}

template SyntheticSequence<2> make_sequence<2>(const SequenceSpec&, int);
template SyntheticSequence<3> make_sequence<3>(const SequenceSpec&, int);
template Vec<2> invert_deformation<2>(const DeformationSpec&, const Vec<2>&);
template Vec<3> invert_deformation<3>(const DeformationSpec&, const Vec<3>&);

}  // namespace serialtrack
