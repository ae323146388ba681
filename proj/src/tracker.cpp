#include "serialtrack/tracker.hpp"

#include <cmath>
#include <algorithm>
#include <functional>
#include <memory>

namespace serialtrack {

void TrackingConfig::validate() const {
  if (k_start < 1) throw Error(ErrorCode::ConfigInvalid, "k_start must be >= 1");
  if (!(search_radius > 0.0)) throw Error(ErrorCode::ConfigInvalid, "search_radius must be > 0");
  if (!(alpha_over_mu >= 0.0) || !std::isfinite(alpha_over_mu))
    throw Error(ErrorCode::ConfigInvalid, "alpha_over_mu must be finite and >= 0");
  if (!(eps_converge > 0.0)) throw Error(ErrorCode::ConfigInvalid, "eps_converge must be > 0");
  if (iter_max < 1) throw Error(ErrorCode::ConfigInvalid, "iter_max must be >= 1");
  if (eps_d && !(*eps_d > 0.0)) throw Error(ErrorCode::ConfigInvalid, "eps_d must be > 0");
  if (grid_spacing && !(*grid_spacing > 0.0))
    throw Error(ErrorCode::ConfigInvalid, "grid_spacing must be > 0");
  if (ghost_start_iteration < 0)
    throw Error(ErrorCode::ConfigInvalid, "ghost_start_iteration must be >= 0");
  if (!(outlier.threshold > 0.0) || !(outlier.epsilon >= 0.0) || outlier.neighbors < 0)
    throw Error(ErrorCode::ConfigInvalid, "invalid outlier settings");
  detection.validate();
}

int k_schedule(int iteration, int k_start) {
  const double k = std::round(k_start * std::pow(2.0, -iteration / 2.0));
  return std::max(1, static_cast<int>(k));
}

template <int Dim>
GhostFilter<Dim> remove_ghosts(const std::vector<Vec<Dim>>& reference,
                               const std::vector<Vec<Dim>>& deformed,
                               const GridField<Dim>& u_hat, double eps_d) {
  GhostFilter<Dim> out;
  out.keep_reference.assign(reference.size(), false);
  out.keep_deformed.assign(deformed.size(), false);
  if (reference.empty() || deformed.empty())
    throw Error(ErrorCode::EmptyAfterRemoval, "ghost removal on an empty set");

  std::vector<Vec<Dim>> warped;
  warped.reserve(reference.size());
  for (const auto& p : reference) warped.push_back(p + interpolate(u_hat, p));

  const NeighborIndex<Dim> def_index(deformed);
  for (std::size_t i = 0; i < warped.size(); ++i)
    out.keep_reference[i] = std::sqrt(def_index.nearest(warped[i]).dist2) <= eps_d;
  const NeighborIndex<Dim> warp_index(warped);
  for (std::size_t j = 0; j < deformed.size(); ++j)
    out.keep_deformed[j] = std::sqrt(warp_index.nearest(deformed[j]).dist2) <= eps_d;

  auto none = [](const std::vector<bool>& v) {
    return std::none_of(v.begin(), v.end(), [](bool b) { return b; });
  };
  if (none(out.keep_reference) || none(out.keep_deformed))
    throw Error(ErrorCode::EmptyAfterRemoval, "ghost removal emptied a particle set");
  return out;
}

template <int Dim>
Image<Dim> warp_image(const Image<Dim>& image, const GridField<Dim>& u_hat) {
  Image<Dim> out(image.dims);
  for (std::size_t i = 0; i < out.data.size(); ++i) {
    const auto p = unravel<Dim>(i, image.dims);
    Vec<Dim> x;
    for (int a = 0; a < Dim; ++a) x[a] = p[a];
    out.data[i] = sample_linear(image, Vec<Dim>(x + interpolate(u_hat, x)), 0.0);
  }
  return out;
}

namespace {

template <int Dim>
std::vector<Vec<Dim>> gather(const std::vector<Vec<Dim>>& pts, const std::vector<int>& ids) {
  std::vector<Vec<Dim>> out;
  out.reserve(ids.size());
  for (int i : ids) out.push_back(pts[i]);
  return out;
}

// The deformed side of one ADMM iteration.
template <int Dim>
struct DeformedView {
  std::vector<Vec<Dim>> geometry;  // descriptor/search coordinates
  std::vector<Vec<Dim>> actual;    // deformed-frame coordinates
  std::vector<int> ids;            // into the result's deformed set
};

template <int Dim>
struct LoopSetup {
  std::vector<Vec<Dim>> reference;
  GridSpec<Dim> grid;
  GridField<Dim> u_hat;
  double eps_d = 0.0;
  bool warp_reference = true;
  // soft mode: the deformed image domain; reference particles whose warped
  // position falls more than eps_d outside it cannot appear in the warped image
  std::optional<std::pair<Vec<Dim>, Vec<Dim>>> deformed_box;
  // returns the deformed side for the current u_hat
  std::function<DeformedView<Dim>(const GridField<Dim>&)> next;
};

template <int Dim>
TrackResult<Dim> run_admm(LoopSetup<Dim> s, const TrackingConfig& cfg) {
  TrackResult<Dim> res;
  res.eps_d = s.eps_d;
  const double c = cfg.alpha_over_mu;
  GridField<Dim> u_hat = std::move(s.u_hat);
  GridField<Dim> theta(s.grid);

  int perfect = 0;
  MatchSet<Dim> last;
  DeformedView<Dim> last_view;
  std::vector<int> last_alive;
  GhostFilter<Dim> last_filter;
  for (int it = 0;; ++it) {
    const int k = k_schedule(it, cfg.k_start);
    DeformedView<Dim> view = s.next(u_hat);
    // Ghosts are judged against the current field on the full sets, so a
    // particle rejected while the field was still poor can come back.
    std::vector<int> alive;
    const bool screen = cfg.ghost_removal && it > cfg.ghost_start_iteration;
    if (screen) {
      last_filter = remove_ghosts<Dim>(s.reference, view.actual, u_hat, s.eps_d);
      for (std::size_t i = 0; i < s.reference.size(); ++i)
        if (last_filter.keep_reference[i]) alive.push_back(static_cast<int>(i));
      DeformedView<Dim> kept;
      for (std::size_t j = 0; j < view.ids.size(); ++j) {
        if (!last_filter.keep_deformed[j]) continue;
        kept.geometry.push_back(view.geometry[j]);
        kept.actual.push_back(view.actual[j]);
        kept.ids.push_back(view.ids[j]);
      }
      view = std::move(kept);
    } else {
      alive.resize(s.reference.size());
      for (std::size_t i = 0; i < alive.size(); ++i) alive[i] = static_cast<int>(i);
      last_filter = {};
    }
    if (s.deformed_box) {
      const auto& [lo, hi] = *s.deformed_box;
      std::erase_if(alive, [&](int i) {
        const Vec<Dim> w = s.reference[i] + interpolate(u_hat, s.reference[i]);
        return (w.array() < lo.array() - s.eps_d).any() || (w.array() > hi.array() + s.eps_d).any();
      });
      if (alive.empty())
        throw Error(ErrorCode::EmptyAfterRemoval, "no reference particle maps into the image");
    }
    const std::vector<Vec<Dim>> a_ref = gather(s.reference, alive);
    std::vector<Vec<Dim>> a_geom = a_ref;
    if (s.warp_reference)
      for (auto& p : a_geom) p += interpolate(u_hat, p);

    const auto fa = FeatureSet<Dim>::build(a_geom, k, cfg.search_radius);
    const auto fb = FeatureSet<Dim>::build(view.geometry, k, cfg.search_radius);
    // The first pass searches the whole field with the most discriminative
    // descriptors; afterwards the warp is close, so only the k nearest
    // candidates compete (k = 1 is plain nearest-neighbor linking).
    const int limit = it == 0 ? 0 : k;
    MatchSet<Dim> m = match_particles(fa, fb, a_ref, cfg.search_radius, limit);
    for (auto& mt : m.matches) mt.u = view.actual[mt.b] - a_ref[mt.a];
    const double ratio = m.match_ratio();
    res.match_ratio_history.push_back(ratio);
    // The outlier test looks at the motion left over after the current
    // field: under large strain the total displacement varies by more than a
    // particle spacing across a neighborhood, which hides one-spacing mislinks.
    for (auto& mt : m.matches) mt.u = view.geometry[mt.b] - a_geom[mt.a];
    m = remove_outliers(m, a_ref, cfg.outlier);
    for (auto& mt : m.matches) mt.u = view.actual[mt.b] - a_ref[mt.a];

    GridField<Dim> next_u = u_hat;
    if (m.valid_count() > 0) {
      const GridField<Dim> u_grid = scatter_to_grid(m, a_ref, s.grid, cfg.inpaint);
      GridField<Dim> rhs(s.grid);
      rhs.values = u_grid.values - theta.values;
      next_u = solve_global(rhs, c);
      theta = update_dual(theta, next_u, u_grid);
    }
    const double change = max_difference(next_u, u_hat);
    u_hat = std::move(next_u);
    if (ratio == 1.0) ++perfect;

    last = std::move(m);
    last_view = std::move(view);
    last_alive = std::move(alive);
    res.iterations = it + 1;
    if (change <= cfg.eps_converge || it + 1 >= cfg.iter_max || perfect >= 5) break;
  }

  for (std::size_t i = 0; i < last_filter.keep_reference.size(); ++i)
    if (!last_filter.keep_reference[i]) res.removed_reference.push_back(static_cast<int>(i));
  for (std::size_t j = 0; j < last_filter.keep_deformed.size(); ++j)
    if (!last_filter.keep_deformed[j]) res.removed_deformed.push_back(static_cast<int>(j));

  if (last.valid_count() == 0)
    throw Error(ErrorCode::NoMatches, "no matched particles on the final iteration");

  // re-index matches onto the full sets
  res.matches.reference_count = s.reference.size();
  for (const auto& mt : last.matches) {
    Match<Dim> out = mt;
    out.a = last_alive[mt.a];
    out.b = last_view.ids[mt.b];
    res.matches.matches.push_back(out);
  }
  res.u_hat = std::move(u_hat);
  res.theta = std::move(theta);
  return res;
}

template <int Dim>
double default_h(const TrackingConfig& cfg, double spacing) {
  return cfg.grid_spacing ? *cfg.grid_spacing : std::max(2.0, 0.5 * spacing);
}

template <int Dim>
GridField<Dim> initial_field(const GridSpec<Dim>& grid, const GridField<Dim>* predictor) {
  if (!predictor || predictor->values.cols() == 0) return GridField<Dim>(grid);
  return resample(*predictor, grid);
}

}  // namespace

template <int Dim>
TrackResult<Dim> track_hard(const ParticleSet<Dim>& reference, const ParticleSet<Dim>& deformed,
                            const TrackingConfig& cfg, const GridField<Dim>* predictor) {
  cfg.validate();
  if (reference.positions.empty() || deformed.positions.empty())
    throw Error(ErrorCode::NoMatches, "empty particle set");

  const double spacing = mean_nn_spacing(reference.positions);
  LoopSetup<Dim> s;
  s.reference = reference.positions;
  s.eps_d = cfg.eps_d ? *cfg.eps_d : 0.5 * spacing;
  if (!(s.eps_d > 0.0)) s.eps_d = 1.0;
  s.grid = GridSpec<Dim>::covering(reference.positions, default_h<Dim>(cfg, spacing));
  s.u_hat = initial_field(s.grid, predictor);
  s.warp_reference = true;

  s.next = [&deformed](const GridField<Dim>&) {
    DeformedView<Dim> v;
    v.geometry = deformed.positions;
    v.actual = v.geometry;
    v.ids.resize(v.geometry.size());
    for (std::size_t j = 0; j < v.ids.size(); ++j) v.ids[j] = static_cast<int>(j);
    return v;
  };

  TrackResult<Dim> res = run_admm(std::move(s), cfg);
  res.reference = reference;
  res.deformed = deformed;
  return res;
}

template <int Dim>
TrackResult<Dim> track_soft(const ParticleSet<Dim>& reference, const Image<Dim>& deformed,
                            const TrackingConfig& cfg, const GridField<Dim>* predictor) {
  cfg.validate();
  if (reference.positions.size() < 3)
    throw Error(ErrorCode::DetectionCollapse, "fewer than 3 reference particles");

  const double spacing = mean_nn_spacing(reference.positions);
  LoopSetup<Dim> s;
  s.reference = reference.positions;
  s.eps_d = cfg.eps_d ? *cfg.eps_d : 0.5 * spacing;
  if (!(s.eps_d > 0.0)) s.eps_d = 1.0;
  Vec<Dim> lo = Vec<Dim>::Zero(), hi;
  for (int a = 0; a < Dim; ++a) hi[a] = deformed.dims[a] - 1;
  s.grid = GridSpec<Dim>::covering_box(lo, hi, default_h<Dim>(cfg, spacing));
  s.u_hat = initial_field(s.grid, predictor);
  s.warp_reference = false;
  s.deformed_box = std::make_pair(lo, hi);

  auto current = std::make_shared<std::vector<Vec<Dim>>>();
  s.next = [&deformed, &cfg, current](const GridField<Dim>& u_hat) {
    const Image<Dim> warped = warp_image(deformed, u_hat);
    const Detection<Dim> det = detect(warped, cfg.detection);
    if (det.particles.positions.size() < 3)
      throw Error(ErrorCode::DetectionCollapse, "fewer than 3 particles in the warped image");
    DeformedView<Dim> v;
    v.geometry = det.particles.positions;
    v.actual.reserve(v.geometry.size());
    for (const auto& x : v.geometry) v.actual.push_back(x + interpolate(u_hat, x));
    v.ids.resize(v.geometry.size());
    for (std::size_t j = 0; j < v.ids.size(); ++j) v.ids[j] = static_cast<int>(j);
    *current = v.actual;
    return v;
  };

  TrackResult<Dim> res = run_admm(std::move(s), cfg);
  res.reference = reference;
  res.deformed.positions = *current;
  res.deformed.frame = reference.frame + 1;
  return res;
}

template <int Dim>
TrackResult<Dim> track_soft(const Image<Dim>& reference, const Image<Dim>& deformed,
                            const TrackingConfig& cfg, const GridField<Dim>* predictor) {
  if (reference.dims != deformed.dims)
    throw Error(ErrorCode::DimMismatch, "image sizes differ");
  cfg.validate();
  const Detection<Dim> det = detect(reference, cfg.detection);
  return track_soft(det.particles, deformed, cfg, predictor);
}

template GhostFilter<2> remove_ghosts<2>(const std::vector<Vec<2>>&, const std::vector<Vec<2>>&,
                                         const GridField<2>&, double);
template GhostFilter<3> remove_ghosts<3>(const std::vector<Vec<3>>&, const std::vector<Vec<3>>&,
                                         const GridField<3>&, double);
template Image<2> warp_image<2>(const Image<2>&, const GridField<2>&);
template Image<3> warp_image<3>(const Image<3>&, const GridField<3>&);
template TrackResult<2> track_hard<2>(const ParticleSet<2>&, const ParticleSet<2>&,
                                      const TrackingConfig&, const GridField<2>*);
template TrackResult<3> track_hard<3>(const ParticleSet<3>&, const ParticleSet<3>&,
                                      const TrackingConfig&, const GridField<3>*);
template TrackResult<2> track_soft<2>(const ParticleSet<2>&, const Image<2>&,
                                      const TrackingConfig&, const GridField<2>*);
template TrackResult<3> track_soft<3>(const ParticleSet<3>&, const Image<3>&,
                                      const TrackingConfig&, const GridField<3>*);
template TrackResult<2> track_soft<2>(const Image<2>&, const Image<2>&, const TrackingConfig&,
                                      const GridField<2>*);
template TrackResult<3> track_soft<3>(const Image<3>&, const Image<3>&, const TrackingConfig&,
                                      const GridField<3>*);

}  // namespace serialtrack
