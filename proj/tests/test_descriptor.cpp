#include "oracles.hpp"

#include "serialtrack/descriptor.hpp"

#include <doctest.h>

#include <numbers>
#include <random>
#include <set>

using namespace serialtrack;

namespace {

std::vector<Vec<2>> random_cloud2(std::mt19937_64& rng, int n, double extent) {
  std::uniform_real_distribution<double> u(0, extent);
  std::vector<Vec<2>> pts(n);
  for (auto& p : pts) p = Vec<2>(u(rng), u(rng));
  return pts;
}

template <int Dim>
Descriptor<Dim> describe(const std::vector<Vec<Dim>>& pts, int i, int k) {
  const NeighborIndex<Dim> index(pts);
  return build_descriptor<Dim>(i, index, k, kInf);
}

}  // namespace

TEST_CASE("2D descriptor examples") {
  const std::vector<Vec<2>> one{Vec<2>(0, 0), Vec<2>(2.5, 1.0)};
  const auto d1 = describe<2>(one, 0, 1);
  CHECK(d1.m == 1);
  CHECK(d1.r[0] == 1.0);
  CHECK(d1.angles[0][0] == 0.0);

  const std::vector<Vec<2>> cloud{Vec<2>(0, 0), Vec<2>(1, 0), Vec<2>(0, 2), Vec<2>(-3, 0)};
  const auto d = describe<2>(cloud, 0, 3);
  REQUIRE(d.m == 3);
  CHECK(d.r[0] == 1.0);
  CHECK(d.r[1] == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(d.r[2] == doctest::Approx(3.0).epsilon(1e-15));
  CHECK(d.angles[0][1] == doctest::Approx(std::numbers::pi / 2).epsilon(1e-15));
  CHECK(d.angles[0][2] == doctest::Approx(std::numbers::pi).epsilon(1e-15));
}

TEST_CASE("3D local frame: axis-aligned case and handedness") {
  const std::vector<Vec<3>> cloud{Vec<3>(0, 0, 0), Vec<3>(1, 0, 0), Vec<3>(0, 1.1, 0),
                                  Vec<3>(0, 0, 1.2)};
  const auto d = describe<3>(cloud, 0, 3);
  CHECK((d.frame.col(0) - Vec<3>(1, 0, 0)).norm() < 1e-12);
  CHECK((d.frame.col(1) - Vec<3>(0, 1, 0)).norm() < 1e-12);
  CHECK((d.frame.col(2) - Vec<3>(0, 0, 1)).norm() < 1e-12);

  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(-1, 1);
  for (int t = 0; t < 200; ++t) {
    std::vector<Vec<3>> pts(12);
    for (auto& p : pts) p = Vec<3>(u(rng), u(rng), u(rng));
    const auto e = describe<3>(pts, 0, 8);
    CHECK(e.frame.determinant() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK((e.frame.transpose() * e.frame - Mat<3>::Identity()).norm() < 1e-12);
    for (int i = 1; i < e.m; ++i) CHECK(e.r[i] >= e.r[i - 1]);
  }
}

TEST_CASE("descriptor equals the brute-force definition in 2D") {
  std::mt19937_64 rng(21);
  for (int t = 0; t < 20; ++t) {
    const auto pts = random_cloud2(rng, 60, 100.0);
    const auto ref = oracle::descriptors2(pts, 7, 30.0);
    const NeighborIndex<2> index(pts);
    const auto got = build_descriptors<2>(index, 7, 30.0);
    for (std::size_t i = 0; i < pts.size(); ++i) {
      REQUIRE(got[i].m == static_cast<int>(ref[i].r.size()));
      for (int j = 0; j < got[i].m; ++j) {
        CHECK(got[i].r[j] == doctest::Approx(ref[i].r[j]).epsilon(1e-12));
        CHECK(oracle::circ(got[i].angles[0][j], ref[i].ang[j]) < 1e-12);
      }
    }
  }
}

TEST_CASE("scale invariance is exact up to rounding") {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> us(0.1, 10.0);
  for (int t = 0; t < 100; ++t) {
    auto pts = random_cloud2(rng, 15, 10.0);
    const double s = us(rng);
    auto scaled = pts;
    for (auto& p : scaled) p *= s;
    const auto a = describe<2>(pts, 0, 10), b = describe<2>(scaled, 0, 10);
    for (int j = 0; j < a.m; ++j) {
      CHECK(std::abs(a.r[j] - b.r[j]) <= 1e-12 * a.r[j]);
      CHECK(oracle::circ(a.angles[0][j], b.angles[0][j]) < 1e-12);
    }
  }
}

TEST_CASE("matching: identical sets") {
  std::mt19937_64 rng(1);
  const auto pts = random_cloud2(rng, 150, 100.0);
  const auto fa = FeatureSet<2>::build(pts, 10, kInf);
  const auto m = match_particles<2>(fa, fa, pts, kInf);
  CHECK(m.match_ratio() == 1.0);
  for (const auto& x : m.matches) {
    CHECK(x.a == x.b);
    CHECK(x.u.norm() == 0.0);
  }
}

TEST_CASE("matching: rigid translation, interior particles correct") {
  std::mt19937_64 rng(2);
  const auto a = random_cloud2(rng, 200, 200.0);
  auto b = a;
  const Vec<2> t(3.7, -1.2);
  for (auto& p : b) p += t;
  const auto fa = FeatureSet<2>::build(a, 10, kInf), fb = FeatureSet<2>::build(b, 10, kInf);
  const auto m = match_particles<2>(fa, fb, a, kInf);
  CHECK(m.match_ratio() == 1.0);
  for (const auto& x : m.matches) {
    CHECK(x.a == x.b);
    CHECK((x.u - t).norm() < 1e-12);
  }
}

TEST_CASE("matching: disagreeing argmins leave the particle unmatched") {
  // A has one particle whose descriptor is closest to b1 in distance ratios
  // and to b2 in angles.
  std::vector<Vec<2>> a{Vec<2>(0, 0), Vec<2>(1, 0), Vec<2>(0, 2)};
  std::vector<Vec<2>> b{Vec<2>(0, 0), Vec<2>(1, 0), Vec<2>(-0.5, 2.05),  // r close, angle off
                        Vec<2>(50, 0), Vec<2>(51, 0), Vec<2>(50, 2.6)};  // angle exact, r off
  const auto fa = FeatureSet<2>::build(a, 2, 5.0), fb = FeatureSet<2>::build(b, 2, 5.0);
  const auto da = fa.descriptors[0];
  const auto f1 = feature_distances<2>(da, fb.descriptors[0]);
  const auto f2 = feature_distances<2>(da, fb.descriptors[3]);
  REQUIRE(f1[0] < f2[0]);
  REQUIRE(f2[1] < f1[1]);
  const auto m = match_particles<2>(fa, fb, a, kInf);
  for (const auto& x : m.matches) CHECK(x.a != 0);
}

TEST_CASE("matching equals the all-pairs oracle (n <= 50)") {
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> noise(-0.8, 0.8);
  std::uniform_int_distribution<int> pick_k(1, 8);
  std::uniform_real_distribution<double> pick_r(5.0, 60.0);
  for (int t = 0; t < 300; ++t) {
    const int na = 10 + static_cast<int>(rng() % 41), nb = 10 + static_cast<int>(rng() % 41);
    auto a = random_cloud2(rng, na, 60.0);
    auto b = random_cloud2(rng, nb, 60.0);
    // half the trials: B is a perturbed copy of A, so that many links exist
    if (t % 2 == 0) {
      b.assign(a.begin(), a.begin() + std::min(na, nb));
      for (auto& p : b) p += Vec<2>(noise(rng) + 1.0, noise(rng));
    }
    const int k = pick_k(rng);
    const double radius = t % 3 == 0 ? kInf : pick_r(rng);
    const auto fa = FeatureSet<2>::build(a, k, radius), fb = FeatureSet<2>::build(b, k, radius);
    const auto got = match_particles<2>(fa, fb, a, radius);
    const auto want = oracle::match2(a, b, k, radius);
    std::vector<std::pair<int, int>> pairs;
    for (const auto& x : got.matches) pairs.emplace_back(x.a, x.b);
    REQUIRE(pairs == want);
  }
}

TEST_CASE("matching symmetry on rigid motion") {
  std::mt19937_64 rng(7);
  for (int t = 0; t < 10; ++t) {
    const auto a = random_cloud2(rng, 120, 150.0);
    const double th = 0.3 * t;
    Mat<2> R;
    R << std::cos(th), -std::sin(th), std::sin(th), std::cos(th);
    std::vector<Vec<2>> b;
    for (const auto& p : a) b.push_back(R * p + Vec<2>(5, -2));
    const auto fa = FeatureSet<2>::build(a, 6, kInf), fb = FeatureSet<2>::build(b, 6, kInf);
    const auto ab = match_particles<2>(fa, fb, a, kInf);
    const auto ba = match_particles<2>(fb, fa, b, kInf);
    std::set<std::pair<int, int>> fwd, inv;
    for (const auto& x : ab.matches) fwd.emplace(x.a, x.b);
    for (const auto& x : ba.matches) inv.emplace(x.b, x.a);
    CHECK(fwd == inv);
    CHECK(fwd.size() == a.size());
  }
}

TEST_CASE("matched B particles are unique") {
  std::mt19937_64 rng(5);
  for (int t = 0; t < 30; ++t) {
    const auto a = random_cloud2(rng, 80, 80.0);
    const auto b = random_cloud2(rng, 80, 80.0);
    const auto fa = FeatureSet<2>::build(a, 2, kInf), fb = FeatureSet<2>::build(b, 2, kInf);
    const auto m = match_particles<2>(fa, fb, a, 20.0, 3);
    std::set<int> seen;
    for (const auto& x : m.matches) CHECK(seen.insert(x.b).second);
  }
}

TEST_CASE("outlier test: spike removed, uniform field kept") {
  MatchSet<2> m;
  std::vector<Vec<2>> ref;
  for (int y = 0; y < 10; ++y)
    for (int x = 0; x < 10; ++x) {
      ref.emplace_back(x * 5.0, y * 5.0);
      m.matches.push_back({static_cast<int>(ref.size()) - 1, 0, Vec<2>(1, 0), true});
    }
  ref.emplace_back(22.5, 22.5);
  m.matches.push_back({static_cast<int>(ref.size()) - 1, 0, Vec<2>(25, 0), true});
  m.reference_count = ref.size();
  const auto out = remove_outliers<2>(m, ref);
  for (std::size_t i = 0; i + 1 < out.matches.size(); ++i) CHECK(out.matches[i].valid);
  CHECK_FALSE(out.matches.back().valid);

  // direct evaluation for the spike: median of 8 neighbors is (1,0), MAD 0
  const double r = (Vec<2>(25, 0) - Vec<2>(1, 0)).norm() / (0.0 + 0.1);
  CHECK(r > 4.0);

  MatchSet<2> same = m;
  same.matches.back().u = Vec<2>(1, 0);
  for (const auto& x : remove_outliers<2>(same, ref).matches) CHECK(x.valid);

  MatchSet<2> few;
  for (int i = 0; i < 5; ++i) few.matches.push_back({i, i, Vec<2>(i * 10.0, 0), true});
  const auto kept = remove_outliers<2>(few, ref);
  for (const auto& x : kept.matches) CHECK(x.valid);
}
