#include "serialtrack/descriptor.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <numbers>

namespace serialtrack {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

double wrap_angle(double a) {
  a = std::fmod(a, kTwoPi);
  if (a < 0.0) a += kTwoPi;
  if (a >= kTwoPi) a = 0.0;
  return a;
}

// Extra neighbors fetched beyond k so a degenerate 3D frame can fall back.
constexpr int kFrameSlack = 4;

}  // namespace

double circular_distance(double a, double b) {
  const double d = std::abs(a - b);
  return std::min(d, kTwoPi - d);
}

template <int Dim>
Descriptor<Dim> build_descriptor(int particle, const NeighborIndex<Dim>& index, int k,
                                 double search_radius) {
  const int need = Dim == 2 ? 1 : 3;
  const int fetch = std::max(k, need) + (Dim == 3 ? kFrameSlack : 0);
  const Vec<Dim>& p = index.point(particle);
  const auto hits = index.knn(p, fetch, search_radius, particle);
  if (static_cast<int>(hits.size()) < need)
    throw Error(ErrorCode::TooFewNeighbors, "particle has too few neighbors in the search radius");

  Descriptor<Dim> d;
  d.m = std::min<int>(k, static_cast<int>(hits.size()));
  d.r.resize(d.m);
  for (auto& v : d.angles) v.resize(d.m);

  std::vector<Vec<Dim>> rel(hits.size());
  for (std::size_t i = 0; i < hits.size(); ++i) rel[i] = index.point(hits[i].index) - p;
  const double r1 = rel[0].norm();
  if (!(r1 > 0.0)) throw Error(ErrorCode::TooFewNeighbors, "coincident nearest neighbor");

  if constexpr (Dim == 2) {
    const double base = std::atan2(rel[0][1], rel[0][0]);
    for (int i = 0; i < d.m; ++i) {
      d.r[i] = i == 0 ? 1.0 : rel[i].norm() / r1;
      d.angles[0][i] = i == 0 ? 0.0 : wrap_angle(std::atan2(rel[i][1], rel[i][0]) - base);
    }
  } else {
    const Vec<3> e1 = rel[0] / r1;
    int second = -1, third = -1;
    Vec<3> e3;
    for (std::size_t j = 1; j < rel.size() && third < 0; ++j) {
      const Vec<3> c = rel[0].cross(rel[j]);
      if (c.norm() <= 1e-8 * r1 * rel[j].norm()) continue;
      const Vec<3> n = c.normalized();
      for (std::size_t l = 1; l < rel.size(); ++l) {
        if (l == j) continue;
        const double s = n.dot(rel[l]);
        if (std::abs(s) <= 1e-12 * rel[l].norm()) continue;
        second = static_cast<int>(j);
        third = static_cast<int>(l);
        e3 = s > 0.0 ? n : Vec<3>(-n);
        break;
      }
    }
    if (third < 0) throw Error(ErrorCode::TooFewNeighbors, "no non-degenerate local frame");
    const Vec<3> e2 = e3.cross(e1);
    d.frame.col(0) = e1;
    d.frame.col(1) = e2;
    d.frame.col(2) = e3;
    for (int i = 0; i < d.m; ++i) {
      if (i == 0) {
        d.r[0] = 1.0;
        d.angles[0][0] = 0.5 * std::numbers::pi;
        d.angles[1][0] = 0.0;
        continue;
      }
      const Vec<3> local = d.frame.transpose() * rel[i];
      const double len = rel[i].norm();
      d.r[i] = len / r1;
      d.angles[0][i] = std::acos(std::clamp(local[2] / len, -1.0, 1.0));
      d.angles[1][i] = wrap_angle(std::atan2(local[1], local[0]));
    }
  }
  return d;
}

template <int Dim>
std::vector<Descriptor<Dim>> build_descriptors(const NeighborIndex<Dim>& index, int k,
                                               double search_radius) {
  std::vector<Descriptor<Dim>> out(index.size());
  for (std::size_t i = 0; i < index.size(); ++i) {
    try {
      out[i] = build_descriptor<Dim>(static_cast<int>(i), index, k, search_radius);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::TooFewNeighbors) throw;
      out[i] = Descriptor<Dim>{};
    }
  }
  return out;
}

template <int Dim>
std::array<double, Dim> feature_distances(const Descriptor<Dim>& a, const Descriptor<Dim>& b) {
  std::array<double, Dim> out{};
  const int n = std::min(a.m, b.m);
  if (n == 0) {
    out.fill(kInf);
    return out;
  }
  double s = 0.0;
  for (int i = 0; i < n; ++i) s += (a.r[i] - b.r[i]) * (a.r[i] - b.r[i]);
  out[0] = s / n;
  for (int f = 0; f < Dim - 1; ++f) {
    s = 0.0;
    for (int i = 0; i < n; ++i) {
      const double c = circular_distance(a.angles[f][i], b.angles[f][i]);
      s += c * c;
    }
    out[f + 1] = s / n;
  }
  return out;
}

namespace {

// Running argmin with (value, spatial distance, index) ordering.
struct Best {
  double value = kInf;
  double dist2 = kInf;
  int index = -1;

  bool beaten_by(double v, double d2, int idx) const {
    if (index < 0) return true;
    if (v != value) return v < value;
    if (d2 != dist2) return d2 < dist2;
    return idx < index;
  }
};

// Sum of squared entry differences over n entries, divided by n. Returns +inf
// as soon as the partial result strictly exceeds `bound` (cannot win).
template <typename Diff>
double bounded_feature(int n, double bound, Diff&& diff) {
  double s = 0.0;
  for (int i = 0; i < n; ++i) {
    const double c = diff(i);
    s += c * c;
    if (s / n > bound) return kInf;
  }
  return s / n;
}

}  // namespace

template <int Dim>
MatchSet<Dim> match_particles(const FeatureSet<Dim>& a, const FeatureSet<Dim>& b,
                              const std::vector<Vec<Dim>>& a_reference, double search_radius,
                              int max_candidates) {
  MatchSet<Dim> out;
  out.reference_count = a.index.size();
  const auto& bpos = b.positions();
  const bool unbounded = std::isinf(search_radius) && max_candidates <= 0;
  std::vector<int> all;
  if (unbounded) {
    all.resize(bpos.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<int>(i);
  }
  std::vector<int> cand;

  for (std::size_t ia = 0; ia < a.index.size(); ++ia) {
    const Descriptor<Dim>& da = a.descriptors[ia];
    if (!da.valid()) continue;
    const Vec<Dim>& center = a.positions()[ia];
    if (unbounded) {
      cand = all;
    } else {
      cand.clear();
      const auto hits = max_candidates > 0 ? b.index.knn(center, max_candidates, search_radius)
                                           : b.index.within(center, search_radius);
      for (const auto& h : hits) cand.push_back(h.index);
    }
    std::array<Best, Dim> best{};
    for (int ib : cand) {
      const Descriptor<Dim>& db = b.descriptors[ib];
      if (!db.valid()) continue;
      const int n = std::min(da.m, db.m);
      const double d2 = (bpos[ib] - center).squaredNorm();
      for (int f = 0; f < Dim; ++f) {
        double v;
        if (f == 0) {
          v = bounded_feature(n, best[0].value, [&](int i) { return da.r[i] - db.r[i]; });
        } else {
          const auto& fa = da.angles[f - 1];
          const auto& fb = db.angles[f - 1];
          v = bounded_feature(n, best[f].value,
                              [&](int i) { return circular_distance(fa[i], fb[i]); });
        }
        if (std::isfinite(v) && best[f].beaten_by(v, d2, ib)) best[f] = {v, d2, ib};
      }
    }
    bool agree = best[0].index >= 0;
    for (int f = 1; f < Dim; ++f) agree = agree && best[f].index == best[0].index;
    if (!agree) continue;
    Match<Dim> m;
    m.a = static_cast<int>(ia);
    m.b = best[0].index;
    m.u = bpos[m.b] - a_reference[ia];
    out.matches.push_back(m);
  }

  // Links are one-to-one: a particle of B claimed several times goes to the
  // claimant whose warped position lies closest (then the lower index).
  std::vector<int> owner(bpos.size(), -1);
  std::vector<double> owner_d2(bpos.size(), kInf);
  for (std::size_t i = 0; i < out.matches.size(); ++i) {
    const auto& m = out.matches[i];
    const double d2 = (bpos[m.b] - a.positions()[m.a]).squaredNorm();
    if (d2 < owner_d2[m.b]) {
      owner_d2[m.b] = d2;
      owner[m.b] = static_cast<int>(i);
    }
  }
  std::vector<Match<Dim>> unique;
  unique.reserve(out.matches.size());
  for (std::size_t i = 0; i < out.matches.size(); ++i)
    if (owner[out.matches[i].b] == static_cast<int>(i)) unique.push_back(out.matches[i]);
  out.matches = std::move(unique);
  return out;
}

template <int Dim>
MatchSet<Dim> remove_outliers(const MatchSet<Dim>& matches,
                              const std::vector<Vec<Dim>>& a_reference, const OutlierConfig& cfg) {
  const int nbrs = cfg.neighbors > 0 ? cfg.neighbors : (Dim == 2 ? 8 : 26);
  MatchSet<Dim> out = matches;
  std::vector<int> live;
  for (std::size_t i = 0; i < matches.matches.size(); ++i)
    if (matches.matches[i].valid) live.push_back(static_cast<int>(i));
  if (static_cast<int>(live.size()) < nbrs + 1) return out;

  std::vector<Vec<Dim>> pts;
  pts.reserve(live.size());
  for (int i : live) pts.push_back(a_reference[matches.matches[i].a]);
  const NeighborIndex<Dim> index(pts);

  std::vector<double> comp(nbrs), dev(nbrs);
  for (std::size_t j = 0; j < live.size(); ++j) {
    const auto hits = index.knn(pts[j], nbrs, kInf, static_cast<int>(j));
    const int n = static_cast<int>(hits.size());
    Vec<Dim> med;
    for (int a = 0; a < Dim; ++a) {
      for (int h = 0; h < n; ++h) comp[h] = matches.matches[live[hits[h].index]].u[a];
      std::nth_element(comp.begin(), comp.begin() + n / 2, comp.begin() + n);
      double m = comp[n / 2];
      if (n % 2 == 0) m = 0.5 * (m + *std::max_element(comp.begin(), comp.begin() + n / 2));
      med[a] = m;
    }
    for (int h = 0; h < n; ++h) dev[h] = (matches.matches[live[hits[h].index]].u - med).norm();
    std::nth_element(dev.begin(), dev.begin() + n / 2, dev.begin() + n);
    double mdev = dev[n / 2];
    if (n % 2 == 0) mdev = 0.5 * (mdev + *std::max_element(dev.begin(), dev.begin() + n / 2));
    const double resid = (matches.matches[live[j]].u - med).norm() / (mdev + cfg.epsilon);
    if (resid > cfg.threshold) out.matches[live[j]].valid = false;
  }
  return out;
}

template Descriptor<2> build_descriptor<2>(int, const NeighborIndex<2>&, int, double);
template Descriptor<3> build_descriptor<3>(int, const NeighborIndex<3>&, int, double);
template std::vector<Descriptor<2>> build_descriptors<2>(const NeighborIndex<2>&, int, double);
template std::vector<Descriptor<3>> build_descriptors<3>(const NeighborIndex<3>&, int, double);
template std::array<double, 2> feature_distances<2>(const Descriptor<2>&, const Descriptor<2>&);
template std::array<double, 3> feature_distances<3>(const Descriptor<3>&, const Descriptor<3>&);
template MatchSet<2> match_particles<2>(const FeatureSet<2>&, const FeatureSet<2>&,
                                        const std::vector<Vec<2>>&, double, int);
template MatchSet<3> match_particles<3>(const FeatureSet<3>&, const FeatureSet<3>&,
                                        const std::vector<Vec<3>>&, double, int);
template MatchSet<2> remove_outliers<2>(const MatchSet<2>&, const std::vector<Vec<2>>&,
                                        const OutlierConfig&);
template MatchSet<3> remove_outliers<3>(const MatchSet<3>&, const std::vector<Vec<3>>&,
                                        const OutlierConfig&);

}  // namespace serialtrack
