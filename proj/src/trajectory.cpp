#include "serialtrack/trajectory.hpp"

#include "serialtrack/io.hpp"

#include <algorithm>
#include <chrono>
#include <map>
#include <ostream>

namespace serialtrack {

std::vector<FramePair> pair_frames(int n_frames, TrackingConfig::Mode mode) {
  if (n_frames < 2) throw Error(ErrorCode::ConfigInvalid, "need at least two frames");
  std::vector<FramePair> out;
  switch (mode) {
    case TrackingConfig::Mode::incremental:
      for (int t = 0; t + 1 < n_frames; ++t) out.emplace_back(t, t + 1);
      break;
    case TrackingConfig::Mode::cumulative:
      for (int t = 1; t < n_frames; ++t) out.emplace_back(0, t);
      break;
    case TrackingConfig::Mode::double_frame:
      if (n_frames % 2 != 0)
        throw Error(ErrorCode::OddFrameCount,
                    "double_frame mode needs an even frame count, got " + std::to_string(n_frames));
      for (int t = 0; t + 1 < n_frames; t += 2) out.emplace_back(t, t + 1);
      break;
  }
  return out;
}

template <int Dim>
PairTracker<Dim> make_pair_tracker(const FrameSet<Dim>& frames, const TrackingConfig& cfg) {
  if (cfg.rigidity == TrackingConfig::Rigidity::soft) {
    if (frames.images.size() != frames.particles.size())
      throw Error(ErrorCode::ConfigInvalid, "soft tracking needs an image per frame");
    return [&frames, cfg](int from, int to, const GridField<Dim>* pred) {
      return track_soft(frames.particles[from], frames.images[to], cfg, pred);
    };
  }
  return [&frames, cfg](int from, int to, const GridField<Dim>* pred) {
    return track_hard(frames.particles[from], frames.particles[to], cfg, pred);
  };
}

template <int Dim>
std::vector<PairOutcome<Dim>> track_sequence(int n_frames, const TrackingConfig& cfg,
                                             const PairTracker<Dim>& tracker,
                                             bool use_predictor) {
  const auto pairs = pair_frames(n_frames, cfg.mode);
  std::vector<PairOutcome<Dim>> out;
  out.reserve(pairs.size());
  const bool chained = use_predictor && cfg.mode != TrackingConfig::Mode::double_frame;
  for (const auto& pr : pairs) {
    PairOutcome<Dim> o;
    o.pair = pr;
    const GridField<Dim>* pred = nullptr;
    if (chained && !out.empty() && out.back().ok()) pred = &out.back().result->u_hat;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      o.result = tracker(pr.first, pr.second, pred);
    } catch (const Error& e) {
      o.error = e.code();
      o.message = e.what();
    }
    o.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    out.push_back(std::move(o));
  }
  return out;
}

template <int Dim>
std::vector<PairOutcome<Dim>> cumulative_track(const FrameSet<Dim>& frames,
                                               const TrackingConfig& cfg) {
  TrackingConfig c = cfg;
  c.mode = TrackingConfig::Mode::cumulative;
  return track_sequence<Dim>(frames.size(), c, make_pair_tracker(frames, c), true);
}

template <int Dim>
std::vector<Trajectory<Dim>> chain_segments(const FrameSet<Dim>& frames,
                                            const std::vector<PairOutcome<Dim>>& incremental) {
  const int n = frames.size();
  std::map<int, const TrackResult<Dim>*> by_start;
  for (const auto& o : incremental)
    if (o.ok() && o.pair.second == o.pair.first + 1) by_start[o.pair.first] = &*o.result;

  std::vector<Trajectory<Dim>> segs;
  std::vector<std::vector<int>> seg_of(n);
  for (int t = 0; t < n; ++t) seg_of[t].assign(frames.particles[t].positions.size(), -1);

  for (int t = 0; t < n; ++t) {
    const auto& pts = frames.particles[t].positions;
    for (std::size_t i = 0; i < pts.size(); ++i) {
      if (seg_of[t][i] >= 0) continue;
      Trajectory<Dim> s;
      s.start = t;
      s.positions.push_back(pts[i]);
      s.extrapolated.push_back(false);
      s.particle.push_back(static_cast<int>(i));
      seg_of[t][i] = static_cast<int>(segs.size());
      segs.push_back(std::move(s));
    }
    const auto it = by_start.find(t);
    if (it == by_start.end() || t + 1 >= n) continue;
    const TrackResult<Dim>& r = *it->second;
    const auto& next = frames.particles[t + 1].positions;
    if (next.empty()) continue;
    const NeighborIndex<Dim> next_index(next);

    // best claim per next-frame particle: smallest deviation from u_hat
    std::map<int, std::pair<double, int>> claim;
    for (const auto& m : r.matches.matches) {
      if (!m.valid || m.a < 0 || m.a >= static_cast<int>(pts.size())) continue;
      const auto hit = next_index.nearest(r.deformed.positions[m.b]);
      if (hit.index < 0 || hit.dist2 > r.eps_d * r.eps_d) continue;
      const double dev = (m.u - interpolate(r.u_hat, pts[m.a])).norm();
      auto [pos, inserted] = claim.try_emplace(hit.index, dev, m.a);
      if (!inserted && std::make_pair(dev, m.a) < pos->second) pos->second = {dev, m.a};
    }
    for (const auto& [j, c] : claim) {
      if (seg_of[t + 1][j] >= 0) continue;
      const int s = seg_of[t][c.second];
      if (segs[s].end() != t) continue;
      segs[s].positions.push_back(next[j]);
      segs[s].extrapolated.push_back(false);
      segs[s].particle.push_back(j);
      seg_of[t + 1][j] = s;
    }
  }
  for (std::size_t i = 0; i < segs.size(); ++i) segs[i].id = static_cast<int>(i);
  return segs;
}

namespace {

template <int Dim>
Vec<Dim> forward(const Trajectory<Dim>& s) {
  const std::size_t n = s.positions.size();
  if (n < 2) return s.positions.back();
  return 2.0 * s.positions[n - 1] - s.positions[n - 2];
}

template <int Dim>
Vec<Dim> backward(const Trajectory<Dim>& s) {
  if (s.positions.size() < 2) return s.positions.front();
  return 2.0 * s.positions[0] - s.positions[1];
}

struct Join {
  double cost;
  int from, to;
  bool operator<(const Join& o) const {
    return std::tie(cost, from, to) < std::tie(o.cost, o.from, o.to);
  }
};

}  // namespace

template <int Dim>
std::vector<Trajectory<Dim>> merge_segments(std::vector<Trajectory<Dim>> segs,
                                            const MergeOptions& opts, MergeReport* report) {
  MergeReport rep;
  const double tol = opts.join_tol;
  for (int round = 0; round < opts.max_rounds; ++round) {
    // segments grouped by start frame, indexed by start and backward points
    std::map<int, std::vector<int>> starting;
    for (std::size_t i = 0; i < segs.size(); ++i)
      starting[segs[i].start].push_back(static_cast<int>(i));
    std::map<int, std::pair<NeighborIndex<Dim>, NeighborIndex<Dim>>> index;
    for (const auto& [f, ids] : starting) {
      std::vector<Vec<Dim>> first, back;
      for (int i : ids) {
        first.push_back(segs[i].positions.front());
        back.push_back(backward(segs[i]));
      }
      index.emplace(f, std::make_pair(NeighborIndex<Dim>(first), NeighborIndex<Dim>(back)));
    }

    std::vector<Join> cands;
    for (std::size_t si = 0; si < segs.size(); ++si) {
      const auto& s = segs[si];
      const Vec<Dim> fwd = forward(s);
      if (auto it = index.find(s.end() + 1); it != index.end()) {
        const auto& ids = starting[s.end() + 1];
        std::map<int, double> best;
        for (const auto& h : it->second.first.within(fwd, tol)) best[ids[h.index]] = std::sqrt(h.dist2);
        for (const auto& h : it->second.second.within(s.positions.back(), tol)) {
          const double d = std::sqrt(h.dist2);
          auto [p, ins] = best.try_emplace(ids[h.index], d);
          if (!ins) p->second = std::min(p->second, d);
        }
        for (const auto& [t, d] : best) cands.push_back({d, static_cast<int>(si), t});
      }
      if (auto it = index.find(s.end() + 2); it != index.end()) {
        const auto& ids = starting[s.end() + 2];
        for (const auto& h : it->second.second.within(fwd, tol))
          cands.push_back({std::sqrt(h.dist2), static_cast<int>(si), ids[h.index]});
      }
    }
    std::sort(cands.begin(), cands.end());
    std::vector<int> next(segs.size(), -1), prev(segs.size(), -1);
    int joins = 0;
    for (const auto& c : cands) {
      if (next[c.from] >= 0 || prev[c.to] >= 0 || c.from == c.to) continue;
      next[c.from] = c.to;
      prev[c.to] = c.from;
      ++joins;
    }
    if (joins == 0) break;
    rep.rounds = round + 1;
    rep.joins += joins;

    std::vector<Trajectory<Dim>> merged;
    for (std::size_t i = 0; i < segs.size(); ++i) {
      if (prev[i] >= 0) continue;
      Trajectory<Dim> t = std::move(segs[i]);
      for (int j = next[i]; j >= 0; j = next[j]) {
        Trajectory<Dim>& u = segs[j];
        if (u.start == t.end() + 2) {
          t.positions.push_back(0.5 * (forward(t) + backward(u)));
          t.extrapolated.push_back(true);
          t.particle.push_back(-1);
        }
        t.positions.insert(t.positions.end(), u.positions.begin(), u.positions.end());
        t.extrapolated.insert(t.extrapolated.end(), u.extrapolated.begin(), u.extrapolated.end());
        t.particle.insert(t.particle.end(), u.particle.begin(), u.particle.end());
      }
      merged.push_back(std::move(t));
    }
    segs = std::move(merged);
  }
  std::stable_sort(segs.begin(), segs.end(), [](const auto& a, const auto& b) {
    return std::tie(a.start, a.particle.front()) < std::tie(b.start, b.particle.front());
  });
  for (std::size_t i = 0; i < segs.size(); ++i) segs[i].id = static_cast<int>(i);
  if (report) *report = rep;
  return segs;
}

template <int Dim>
IncrementalCumulative<Dim> incremental_cumulative(const FrameSet<Dim>& frames,
                                                  const TrackingConfig& cfg,
                                                  std::optional<double> join_tol) {
  TrackingConfig c = cfg;
  c.mode = TrackingConfig::Mode::incremental;
  IncrementalCumulative<Dim> out;
  out.pairs = track_sequence<Dim>(frames.size(), c, make_pair_tracker(frames, c), true);
  MergeOptions opts;
  if (join_tol) opts.join_tol = *join_tol;
  else if (c.eps_d) opts.join_tol = *c.eps_d;
  else {
    const double s = mean_nn_spacing(frames.particles.front().positions);
    opts.join_tol = s > 0.0 ? 0.5 * s : 1.0;
  }
  out.trajectories = merge_segments(chain_segments(frames, out.pairs), opts, &out.merge);
  return out;
}

template <int Dim>
void write_trajectories_csv(std::ostream& os, const std::vector<Trajectory<Dim>>& trajectories) {
  static const char* names[] = {"x", "y", "z"};
  os << "traj_id,frame";
  for (int a = 0; a < Dim; ++a) os << ',' << names[a];
  for (int a = 0; a < Dim; ++a) os << ",u" << names[a] << "_cum";
  os << ",extrapolated\n";
  for (const auto& t : trajectories) {
    for (std::size_t k = 0; k < t.positions.size(); ++k) {
      const Vec<Dim> u = t.positions[k] - t.positions.front();
      os << t.id << ',' << t.start + static_cast<int>(k);
      for (int a = 0; a < Dim; ++a) os << ',' << format_number(t.positions[k][a]);
      for (int a = 0; a < Dim; ++a) os << ',' << format_number(u[a]);
      os << ',' << (t.extrapolated[k] ? 1 : 0) << '\n';
    }
  }
}

#define ST_TRAJ_INSTANTIATE(D)                                                                  \
  template PairTracker<D> make_pair_tracker<D>(const FrameSet<D>&, const TrackingConfig&);      \
  template std::vector<PairOutcome<D>> track_sequence<D>(int, const TrackingConfig&,            \
                                                         const PairTracker<D>&, bool);          \
  template std::vector<PairOutcome<D>> cumulative_track<D>(const FrameSet<D>&,                  \
                                                           const TrackingConfig&);              \
  template std::vector<Trajectory<D>> chain_segments<D>(const FrameSet<D>&,                     \
                                                        const std::vector<PairOutcome<D>>&);    \
  template std::vector<Trajectory<D>> merge_segments<D>(std::vector<Trajectory<D>>,             \
                                                        const MergeOptions&, MergeReport*);     \
  template IncrementalCumulative<D> incremental_cumulative<D>(                                  \
      const FrameSet<D>&, const TrackingConfig&, std::optional<double>);                        \
  template void write_trajectories_csv<D>(std::ostream&, const std::vector<Trajectory<D>>&);

ST_TRAJ_INSTANTIATE(2)
ST_TRAJ_INSTANTIATE(3)

}  // namespace serialtrack
