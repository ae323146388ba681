#include "serialtrack/config.hpp"

#include <json.hpp>

#include <fstream>
#include <set>
#include <sstream>

namespace serialtrack {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

[[noreturn]] void invalid(const std::string& what) { throw Error(ErrorCode::ConfigInvalid, what); }

// Reads the fields of one JSON object and rejects keys nobody asked for.
class Reader {
 public:
  Reader(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) invalid(where_ + " must be an object");
  }
  void done() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key())) invalid("unknown key " + where_ + "." + it.key());
  }

  const json* get(const std::string& key) {
    seen_.insert(key);
    const auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }
  std::string path(const std::string& key) const { return where_ + "." + key; }

  template <typename T>
  void read(const std::string& key, T& out) {
    if (const json* v = get(key)) out = as<T>(*v, path(key));
  }
  template <typename T>
  void read(const std::string& key, std::optional<T>& out) {
    if (const json* v = get(key)) {
      if (v->is_null()) out.reset();
      else out = as<T>(*v, path(key));
    }
  }

  template <typename T>
  static T as(const json& v, const std::string& where) {
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) invalid(where + " must be a boolean");
      return v.get<bool>();
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) invalid(where + " must be a string");
      return v.get<std::string>();
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer()) invalid(where + " must be an integer");
      if constexpr (std::is_unsigned_v<T>) {
        if (v.is_number_unsigned()) return v.get<T>();
        if (v.get<long long>() < 0) invalid(where + " must be >= 0");
      }
      return v.get<T>();
    } else {
      static_assert(std::is_same_v<T, double>);
      if (v.is_string()) {
        const auto s = v.get<std::string>();
        if (s == "inf") return kInf;
        invalid(where + " must be a number or \"inf\"");
      }
      if (!v.is_number()) invalid(where + " must be a number");
      return v.get<double>();
    }
  }

 private:
  const json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

template <typename E>
E pick(const std::string& s, std::initializer_list<std::pair<const char*, E>> options,
       const std::string& where) {
  for (const auto& [name, e] : options)
    if (s == name) return e;
  invalid("unknown value \"" + s + "\" for " + where);
}

template <typename E>
void read_enum(Reader& r, const std::string& key, E& out,
               std::initializer_list<std::pair<const char*, E>> options) {
  if (const json* v = r.get(key)) out = pick(Reader::as<std::string>(*v, r.path(key)), options, r.path(key));
}

std::vector<double> number_list(const json& v, const std::string& where) {
  if (!v.is_array() || v.empty()) invalid(where + " must be a non-empty array");
  std::vector<double> out;
  for (const auto& e : v) out.push_back(Reader::as<double>(e, where));
  return out;
}

std::array<int, 3> dims_of(const json& v, const std::string& where, int dim) {
  if (!v.is_array() || static_cast<int>(v.size()) != dim)
    invalid(where + " must hold " + std::to_string(dim) + " integers");
  std::array<int, 3> d{1, 1, 1};
  for (int a = 0; a < dim; ++a) d[a] = Reader::as<int>(v[a], where);
  return d;
}

std::array<double, 3> triple(const json& v, const std::string& where) {
  if (!v.is_array() || v.size() < 1 || v.size() > 3) invalid(where + " must hold 1 to 3 numbers");
  std::array<double, 3> t{0.0, 0.0, 0.0};
  for (std::size_t a = 0; a < v.size(); ++a) t[a] = Reader::as<double>(v[a], where);
  return t;
}

DetectionConfig parse_detection(const json& j, const std::string& where) {
  DetectionConfig d;
  Reader r(j, where);
  read_enum(r, "method", d.method,
            {{"threshold_radial", DetectionConfig::Method::threshold_radial},
             {"log_gaussian", DetectionConfig::Method::log_gaussian}});
  r.read("intensity_threshold", d.intensity_threshold);
  r.read("particle_radius", d.particle_radius);
  r.read("min_blob_volume", d.min_blob_volume);
  r.read("max_blob_volume", d.max_blob_volume);
  r.read("presmooth_sigma", d.presmooth_sigma);
  r.done();
  return d;
}

TrackingConfig parse_tracking(const json& j, const std::string& where, TrackingConfig t) {
  Reader r(j, where);
  using T = TrackingConfig;
  read_enum(r, "mode", t.mode,
            {{"incremental", T::Mode::incremental},
             {"cumulative", T::Mode::cumulative},
             {"double_frame", T::Mode::double_frame}});
  read_enum(r, "rigidity", t.rigidity, {{"hard", T::Rigidity::hard}, {"soft", T::Rigidity::soft}});
  r.read("k_start", t.k_start);
  r.read("search_radius", t.search_radius);
  r.read("alpha_over_mu", t.alpha_over_mu);
  r.read("eps_converge", t.eps_converge);
  r.read("iter_max", t.iter_max);
  r.read("eps_d", t.eps_d);
  r.read("grid_spacing", t.grid_spacing);
  r.read("ghost_removal", t.ghost_removal);
  r.read("ghost_start_iteration", t.ghost_start_iteration);
  read_enum(r, "inpaint", t.inpaint, {{"laplace", Inpaint::laplace}, {"linear", Inpaint::linear}});
  if (const json* o = r.get("outlier")) {
    Reader ro(*o, r.path("outlier"));
    ro.read("threshold", t.outlier.threshold);
    ro.read("epsilon", t.outlier.epsilon);
    ro.read("neighbors", t.outlier.neighbors);
    ro.done();
  }
  if (const json* d = r.get("detection")) t.detection = parse_detection(*d, r.path("detection"));
  r.done();
  return t;
}

SynthImageSpec parse_image(const json& j, const std::string& where, int dim) {
  SynthImageSpec s;
  Reader r(j, where);
  if (const json* d = r.get("dims")) s.dims = dims_of(*d, r.path("dims"), dim);
  r.read("seeding_density", s.seeding_density);
  r.read("psf_amplitude", s.psf_amplitude);
  r.read("psf_sigma", s.psf_sigma);
  r.read("noise_pct", s.noise_pct);
  r.read("min_dist", s.min_dist);
  r.read("clamp", s.clamp);
  r.read("intensity_max", s.intensity_max);
  r.done();
  return s;
}

DeformationSpec parse_deformation(const json& j, const std::string& where) {
  using K = DeformationSpec::Kind;
  DeformationSpec d;
  Reader r(j, where);
  read_enum(r, "kind", d.kind,
            {{"identity", K::identity},
             {"translation", K::translation},
             {"rotation", K::rotation},
             {"uniaxial_stretch", K::uniaxial_stretch},
             {"simple_shear", K::simple_shear},
             {"star_pattern", K::star_pattern}});
  if (const json* v = r.get("translation")) d.translation = triple(*v, r.path("translation"));
  if (const json* v = r.get("center")) d.center = triple(*v, r.path("center"));
  r.read("angle_deg", d.angle_deg);
  r.read("axis", d.axis);
  r.read("stretch", d.stretch);
  r.read("shear_axis", d.shear_axis);
  r.read("shear_normal", d.shear_normal);
  r.read("tan_gamma", d.tan_gamma);
  r.read("star_amplitude", d.star_amplitude);
  r.read("star_period_min", d.star_period_min);
  r.read("star_period_max", d.star_period_max);
  r.read("star_extent", d.star_extent);
  r.done();
  return d;
}

std::vector<fs::path> path_list(const json& v, const std::string& where, const fs::path& base) {
  if (!v.is_array()) invalid(where + " must be an array of paths");
  std::vector<fs::path> out;
  for (const auto& e : v) {
    const fs::path p = Reader::as<std::string>(e, where);
    out.push_back(p.is_absolute() ? p : base / p);
  }
  return out;
}

}  // namespace

std::string_view to_string(Command c) {
  switch (c) {
    case Command::synth: return "synth";
    case Command::detect: return "detect";
    case Command::track: return "track";
    case Command::benchmark: return "benchmark";
  }
  return "?";
}

Command parse_command(const std::string& s) {
  return pick<Command>(s,
              {{"synth", Command::synth},
               {"detect", Command::detect},
               {"track", Command::track},
               {"benchmark", Command::benchmark}},
              "command");
}

RunConfig parse_run_config(const std::string& text, const fs::path& base_dir) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    invalid(std::string("config is not valid JSON: ") + e.what());
  }
  RunConfig cfg;
  Reader r(j, "config");

  const json* schema = r.get("schema");
  if (!schema) invalid("config.schema is required");
  if (Reader::as<int>(*schema, "config.schema") != 1) invalid("unsupported config.schema");

  if (const json* v = r.get("command")) cfg.command = parse_command(Reader::as<std::string>(*v, "config.command"));
  r.read("dim", cfg.dim);
  if (cfg.dim != 2 && cfg.dim != 3) invalid("config.dim must be 2 or 3");
  r.read("seed", cfg.seed);
  r.read("max_parallel", cfg.max_parallel);
  if (cfg.max_parallel < 1) invalid("config.max_parallel must be >= 1");
  if (const json* v = r.get("output")) {
    const fs::path p = Reader::as<std::string>(*v, "config.output");
    cfg.output = p.is_absolute() ? p : base_dir / p;
  }

  // benchmark presets carry their own tracking defaults
  const json* bench = r.get("benchmark");
  if (bench) {
    Reader rb(*bench, "config.benchmark");
    const json* name = rb.get("preset");
    if (!name) invalid("config.benchmark.preset is required");
    cfg.preset = Reader::as<std::string>(*name, "config.benchmark.preset");
    const Preset& p = find_preset(cfg.preset);
    cfg.tracking = p.tracking;
    cfg.dim = p.dim;
    if (const json* v = rb.get("densities")) cfg.bench.densities = number_list(*v, rb.path("densities"));
    if (const json* v = rb.get("values")) cfg.bench.values = number_list(*v, rb.path("values"));
    if (const json* v = rb.get("dims")) cfg.bench.dims = dims_of(*v, rb.path("dims"), p.dim);
    rb.read("noise_pct", cfg.bench.noise_pct);
    rb.done();
  }
  if (const json* t = r.get("tracking")) {
    cfg.tracking = parse_tracking(*t, "config.tracking", cfg.tracking);
    if (bench) cfg.bench.tracking = cfg.tracking;
  }
  cfg.tracking.validate();

  if (const json* s = r.get("synth")) {
    Reader rs(*s, "config.synth");
    if (const json* v = rs.get("image")) cfg.synth.image = parse_image(*v, rs.path("image"), cfg.dim);
    if (const json* v = rs.get("frames")) {
      if (!v->is_array() || v->size() < 1) invalid("config.synth.frames must be a non-empty array");
      for (std::size_t i = 0; i < v->size(); ++i)
        cfg.synth.frames.push_back(
            parse_deformation((*v)[i], "config.synth.frames[" + std::to_string(i) + "]"));
    }
    rs.read("soft", cfg.synth.soft);
    rs.done();
    validate(cfg.synth.image, cfg.dim);
    for (const auto& d : cfg.synth.frames) {
      try {
        validate(d, cfg.dim);
      } catch (const Error& e) {
        invalid(e.what());
      }
    }
  }

  if (const json* in = r.get("inputs")) {
    Reader ri(*in, "config.inputs");
    if (const json* v = ri.get("images")) cfg.images = path_list(*v, ri.path("images"), base_dir);
    if (const json* v = ri.get("centroids")) cfg.centroids = path_list(*v, ri.path("centroids"), base_dir);
    ri.done();
  }
  r.read("join_tol", cfg.join_tol);
  if (cfg.join_tol && !(*cfg.join_tol > 0.0)) invalid("config.join_tol must be > 0");
  r.done();
  return cfg;
}

RunConfig load_run_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::InputMissing, "cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str(), fs::absolute(path).parent_path());
}

void check_for_command(const RunConfig& cfg, Command command) {
  if (cfg.command && *cfg.command != command)
    invalid("config is for command " + std::string(to_string(*cfg.command)));
  auto exists = [](const std::vector<fs::path>& paths) {
    for (const auto& p : paths)
      if (!fs::exists(p)) throw Error(ErrorCode::InputMissing, "missing input " + p.string());
  };
  switch (command) {
    case Command::synth:
      if (cfg.synth.frames.empty()) invalid("synth needs config.synth.frames");
      break;
    case Command::detect:
      if (cfg.images.empty()) invalid("detect needs config.inputs.images");
      exists(cfg.images);
      break;
    case Command::track: {
      const bool soft = cfg.tracking.rigidity == TrackingConfig::Rigidity::soft;
      if (soft && cfg.images.empty()) invalid("soft tracking needs config.inputs.images");
      if (cfg.images.empty() && cfg.centroids.empty())
        invalid("track needs config.inputs.centroids or config.inputs.images");
      if (!cfg.images.empty() && !cfg.centroids.empty())
        invalid("give either centroids or images to track, not both");
      const std::size_t n = cfg.images.empty() ? cfg.centroids.size() : cfg.images.size();
      if (n < 2) invalid("track needs at least two frames");
      exists(cfg.images);
      exists(cfg.centroids);
      break;
    }
    case Command::benchmark:
      if (cfg.preset.empty()) invalid("benchmark needs config.benchmark.preset");
      break;
  }
}

}  // namespace serialtrack
