// serialtrack <command> --config <path> [--out <dir>] [--seed <n>] [--max-parallel <n>]

#include "serialtrack/config.hpp"
#include "serialtrack/detect.hpp"
#include "serialtrack/io.hpp"
#include "serialtrack/parallel.hpp"
#include "serialtrack/postproc.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace serialtrack;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitError = 1;
constexpr int kExitUsage = 2;
constexpr int kExitFailedPairs = 3;

// Every command fills the same summary layout.
struct Summary {
  Command command = Command::track;
  json pairs = json::array();
  json metrics = json::object();
  std::optional<Error> error;
  bool failed_pairs = false;

  json to_json(double wall_clock) const {
    json j;
    j["schema"] = 1;
    j["command"] = std::string(to_string(command));
    j["status"] = error ? "error" : failed_pairs ? "failed_pairs" : "ok";
    j["error"] = error ? json{{"code", std::string(to_string(error->code()))},
                              {"message", error->what()}}
                       : json(nullptr);
    j["pairs"] = pairs;
    j["metrics"] = metrics;
    j["wall_clock"] = wall_clock;
    return j;
  }
};

std::string frame_tag(int t) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%03d", t);
  return buf;
}

std::string pair_tag(int a, int b) { return frame_tag(a) + "_" + frame_tag(b); }

json pair_record(int from, int to, bool ok, int iterations, const std::vector<double>& history,
                 const std::string& error, std::optional<double> density) {
  return json{{"from", from},
              {"to", to},
              {"density", density ? json(*density) : json(nullptr)},
              {"ok", ok},
              {"iterations", iterations},
              {"match_ratio_history", history},
              {"error", error.empty() ? json(nullptr) : json(error)}};
}

template <typename Fn>
void write_csv(const fs::path& path, Fn&& body) {
  std::ostringstream os;
  body(os);
  write_text(path, os.str());
}

template <int Dim>
void run_synth(const RunConfig& cfg, const fs::path& out, Summary& s) {
  SequenceSpec spec = cfg.synth;
  spec.image.rng_seed = cfg.seed;
  const auto seq = make_sequence<Dim>(spec, cfg.max_parallel);
  for (std::size_t t = 0; t < seq.images.size(); ++t) {
    write_image<Dim>(out / ("frame_" + frame_tag(static_cast<int>(t))), seq.images[t]);
    write_csv(out / ("truth_" + frame_tag(static_cast<int>(t)) + ".csv"),
              [&](std::ostream& os) { write_particles_csv<Dim>(os, seq.truth[t]); });
  }
  s.metrics = {{"frames", seq.images.size()}, {"seeds", seq.seeds.positions.size()}};
}

template <int Dim>
void run_detect(const RunConfig& cfg, const fs::path& out, Summary& s) {
  const std::size_t n = cfg.images.size();
  std::vector<ParticleSet<Dim>> found(n);
  std::vector<bool> empty(n);
  parallel_for(n, cfg.max_parallel, [&](std::size_t t) {
    const auto det = detect<Dim>(read_image<Dim>(cfg.images[t]), cfg.tracking.detection);
    found[t] = det.particles;
    found[t].frame = static_cast<int>(t);
    empty[t] = det.no_particles;
  });
  json counts = json::array(), warnings = json::array();
  for (std::size_t t = 0; t < n; ++t) {
    write_csv(out / ("centroids_" + frame_tag(static_cast<int>(t)) + ".csv"),
              [&](std::ostream& os) { write_particles_csv<Dim>(os, found[t]); });
    counts.push_back(found[t].positions.size());
    if (empty[t]) warnings.push_back("no particles in frame " + std::to_string(t));
  }
  s.metrics = {{"detected", counts}, {"warnings", warnings}};
}

template <int Dim>
void run_track(const RunConfig& cfg, const fs::path& out, Summary& s) {
  const TrackingConfig& tc = cfg.tracking;
  FrameSet<Dim> frames;
  if (!cfg.images.empty()) {
    const std::size_t n = cfg.images.size();
    frames.images.resize(n);
    frames.particles.resize(n);
    parallel_for(n, cfg.max_parallel, [&](std::size_t t) {
      frames.images[t] = read_image<Dim>(cfg.images[t]);
      frames.particles[t] = detect<Dim>(frames.images[t], tc.detection).particles;
      frames.particles[t].frame = static_cast<int>(t);
    });
    if (tc.rigidity == TrackingConfig::Rigidity::hard) frames.images.clear();
  } else {
    for (std::size_t t = 0; t < cfg.centroids.size(); ++t) {
      frames.particles.push_back(read_particles_csv<Dim>(cfg.centroids[t]));
      frames.particles.back().frame = static_cast<int>(t);
    }
  }

  std::vector<PairOutcome<Dim>> pairs;
  std::optional<std::size_t> trajectories;
  if (tc.mode == TrackingConfig::Mode::incremental) {
    auto inc = incremental_cumulative<Dim>(frames, tc, cfg.join_tol);
    write_csv(out / "trajectories.csv",
              [&](std::ostream& os) { write_trajectories_csv<Dim>(os, inc.trajectories); });
    trajectories = inc.trajectories.size();
    pairs = std::move(inc.pairs);
  } else {
    pairs = track_sequence<Dim>(frames.size(), tc, make_pair_tracker(frames, tc));
  }

  std::size_t ok = 0;
  for (const auto& o : pairs) {
    const auto [a, b] = o.pair;
    if (!o.ok()) {
      s.failed_pairs = true;
      s.pairs.push_back(pair_record(a, b, false, 0, {},
                                    std::string(to_string(*o.error)) + ": " + o.message,
                                    std::nullopt));
      continue;
    }
    ++ok;
    const auto& r = *o.result;
    const std::string tag = pair_tag(a, b);
    write_csv(out / ("matches_" + tag + ".csv"), [&](std::ostream& os) {
      write_matches_csv<Dim>(os, r.matches, r.reference.positions);
    });
    write_csv(out / ("field_" + tag + ".csv"),
              [&](std::ostream& os) { write_grid_csv<Dim>(os, r.u_hat); });
    bool gridded = true;
    for (int d = 0; d < Dim; ++d) gridded = gridded && r.u_hat.grid.dims[d] >= 3;
    if (gridded)
      write_csv(out / ("gradient_" + tag + ".csv"), [&](std::ostream& os) {
        write_tensor_csv<Dim>(os, deformation_gradient(r.u_hat));
      });
    s.pairs.push_back(pair_record(a, b, true, r.iterations, r.match_ratio_history, "",
                                  std::nullopt));
  }
  s.metrics = {{"frames", frames.size()},
               {"pairs_ok", ok},
               {"pairs_failed", pairs.size() - ok},
               {"trajectories", trajectories ? json(*trajectories) : json(nullptr)}};
}

void run_bench(const RunConfig& cfg, const fs::path& out, Summary& s) {
  BenchmarkOptions opt = cfg.bench;
  opt.seed = cfg.seed;
  opt.max_parallel = cfg.max_parallel;
  const BenchmarkResult res = run_benchmark(find_preset(cfg.preset), opt, out);
  json runs = json::array();
  for (const auto& run : res.runs) {
    double min_ratio = 1.0, max_rms = 0.0;
    for (const auto& row : run.rows) {
      s.pairs.push_back(pair_record(row.from, row.to, row.ok, row.iterations,
                                    row.match_ratio_history, row.error, run.density));
      if (!row.ok) s.failed_pairs = true;
      min_ratio = std::min(min_ratio, row.ok ? row.metrics.tracking_ratio : 0.0);
      if (row.ok) max_rms = std::max(max_rms, row.metrics.disp_rms);
    }
    json r = {{"density", run.density},
              {"seeds", run.seeds},
              {"detected_frame0", run.detected_frame0},
              {"min_tracking_ratio", min_ratio},
              {"max_disp_rms", max_rms},
              {"seconds", run.seconds}};
    if (run.star) {
      r["star_amplitude_right"] = run.star->amplitude_right;
      r["star_amplitude_left"] = run.star->amplitude_left;
    }
    runs.push_back(r);
  }
  s.metrics = {{"preset", res.preset.name}, {"runs", runs}};
}

// Output directory named by the config, read leniently so that a config
// failing validation still reports where it asked for.
std::optional<fs::path> peek_output(const fs::path& config_path) {
  std::ifstream in(config_path);
  const json j = json::parse(in, nullptr, false);
  if (!j.is_object() || !j.contains("output") || !j["output"].is_string()) return std::nullopt;
  const fs::path p = j["output"].get<std::string>();
  return p.is_absolute() ? p : fs::absolute(config_path).parent_path() / p;
}

int execute(Command command, const fs::path& config_path, const std::optional<fs::path>& out_opt,
            std::optional<std::uint64_t> seed, std::optional<int> max_parallel) {
  const auto t0 = std::chrono::steady_clock::now();
  Summary s;
  s.command = command;
  fs::path out = out_opt ? *out_opt
                         : peek_output(config_path).value_or(
                               fs::absolute(config_path).parent_path() / "out");
  try {
    RunConfig cfg = load_run_config(config_path);
    if (seed) cfg.seed = *seed;
    if (max_parallel) {
      if (*max_parallel < 1) throw Error(ErrorCode::ConfigInvalid, "--max-parallel must be >= 1");
      cfg.max_parallel = *max_parallel;
    }
    check_for_command(cfg, command);
    fs::create_directories(out);
    switch (command) {
      case Command::synth:
        cfg.dim == 2 ? run_synth<2>(cfg, out, s) : run_synth<3>(cfg, out, s);
        break;
      case Command::detect:
        cfg.dim == 2 ? run_detect<2>(cfg, out, s) : run_detect<3>(cfg, out, s);
        break;
      case Command::track:
        cfg.dim == 2 ? run_track<2>(cfg, out, s) : run_track<3>(cfg, out, s);
        break;
      case Command::benchmark:
        run_bench(cfg, out, s);
        break;
    }
  } catch (const Error& e) {
    s.error = e;
  } catch (const fs::filesystem_error& e) {
    s.error = Error(ErrorCode::IoError, e.what());
  }
  const double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  try {
    write_text(out / "summary.json", s.to_json(wall).dump(2) + "\n");
  } catch (const std::exception& e) {
    std::cerr << "cannot write summary: " << e.what() << '\n';
    return kExitError;
  }
  if (s.error) {
    std::cerr << to_string(s.error->code()) << ": " << s.error->what() << '\n';
    return kExitError;
  }
  return s.failed_pairs ? kExitFailedPairs : kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Serial particle tracking"};
  std::string command;
  std::string config;
  std::optional<std::string> out;
  std::optional<std::uint64_t> seed;
  std::optional<int> max_parallel;
  app.add_option("command", command, "synth, detect, track or benchmark")
      ->required()
      ->check(CLI::IsMember({"synth", "detect", "track", "benchmark"}));
  app.add_option("--config", config, "run configuration (JSON)")->required();
  app.add_option("--out", out, "output directory");
  app.add_option("--seed", seed, "RNG seed");
  app.add_option("--max-parallel", max_parallel, "worker threads");
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }
  std::optional<fs::path> out_dir;
  if (out) out_dir = fs::path(*out);
  return execute(parse_command(command), config, out_dir, seed, max_parallel);
}
