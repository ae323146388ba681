#include "oracles.hpp"

#include "serialtrack/postproc.hpp"
#include "serialtrack/synth.hpp"

#include <doctest.h>

#include <numbers>
#include <random>
#include <sstream>

using namespace serialtrack;

namespace {

template <int Dim, class Fn>
GridField<Dim> sampled(const GridSpec<Dim>& g, Fn fn) {
  GridField<Dim> f(g);
  for (std::size_t j = 0; j < g.node_count(); ++j) f.values.col(j) = fn(g.node_position(j));
  return f;
}

GridSpec<2> grid2(int n, double h, Vec<2> origin = Vec<2>::Zero()) {
  GridSpec<2> g;
  g.origin = origin;
  g.spacing = Vec<2>::Constant(h);
  g.dims = {n, n};
  return g;
}

Mat<2> rot2(double deg) {
  const double t = deg * std::numbers::pi / 180.0;
  Mat<2> r;
  r << std::cos(t), -std::sin(t), std::sin(t), std::cos(t);
  return r;
}

}  // namespace

TEST_CASE("deformation gradient of simple shear and stretch") {
  const auto g = grid2(8, 2.0);
  const auto shear = deformation_gradient<2>(sampled<2>(g, [](const Vec<2>& x) { return Vec<2>(0.2 * x[1], 0.0); }));
  Mat<2> want;
  want << 1.0, 0.2, 0.0, 1.0;
  for (std::size_t j = 0; j < shear.F.size(); ++j) CHECK((shear.F[j] - want).norm() < 1e-12);

  const auto st = deformation_gradient<2>(sampled<2>(g, [](const Vec<2>& x) { return Vec<2>(0.3 * (x[0] - 7.0), 0.0); }));
  for (std::size_t j = 0; j < st.F.size(); ++j) {
    CHECK(st.F[j](0, 0) == doctest::Approx(1.3).epsilon(1e-12));
    CHECK(st.green_lagrange[j](0, 0) == doctest::Approx(0.345).epsilon(1e-12));
    CHECK(st.small_strain[j](0, 0) == doctest::Approx(0.3).epsilon(1e-12));
  }
  // faces are flagged, the interior is not
  CHECK_FALSE(st.valid[0]);
  CHECK(st.valid[ravel<2>({3, 4}, g.dims)]);

  GridSpec<2> thin = g;
  thin.dims = {2, 8};
  CHECK_THROWS_AS(deformation_gradient<2>(GridField<2>(thin)), Error);
}

TEST_CASE("central differences converge at second order") {
  auto field = [](const Vec<2>& x) { return Vec<2>(0.5 * std::sin(x[0] / 7.0), 0.3 * std::cos(x[1] / 5.0) * x[0] / 40.0); };
  auto grad = [](const Vec<2>& x) {
    Mat<2> G;
    G << 0.5 / 7.0 * std::cos(x[0] / 7.0), 0.0, 0.3 * std::cos(x[1] / 5.0) / 40.0,
        -0.3 / 5.0 * std::sin(x[1] / 5.0) * x[0] / 40.0;
    return G;
  };
  // Error at a fixed set of interior points for spacing h and h/2.
  auto max_err = [&](double h) {
    const int n = static_cast<int>(std::lround(40.0 / h)) + 1;
    const auto g = grid2(n, h);
    const auto tf = deformation_gradient<2>(sampled<2>(g, field));
    double e = 0.0;
    for (std::size_t j = 0; j < tf.F.size(); ++j) {
      const Vec<2> x = g.node_position(j);
      if (x.minCoeff() < 10.0 || x.maxCoeff() > 30.0) continue;
      e = std::max(e, (tf.F[j] - Mat<2>::Identity() - grad(x)).cwiseAbs().maxCoeff());
    }
    return e;
  };
  const double order = std::log2(max_err(2.0) / max_err(1.0));
  CHECK(order >= 1.9);
}

TEST_CASE("polar decomposition examples") {
  Mat<2> U;
  U << 1.2, 0.0, 0.0, 0.9;
  const auto pd = polar_decompose<2>(rot2(30.0) * U);
  CHECK((pd.R - rot2(30.0)).norm() < 1e-12);
  CHECK((pd.U - U).norm() < 1e-12);

  const auto id = polar_decompose<3>(Mat<3>::Identity());
  CHECK((id.R - Mat<3>::Identity()).norm() < 1e-14);
  CHECK((id.U - Mat<3>::Identity()).norm() < 1e-14);

  Mat<2> flip;
  flip << -1.0, 0.0, 0.0, 1.0;
  CHECK_THROWS_AS(polar_decompose<2>(flip), Error);
  CHECK_THROWS_AS(polar_decompose<2>(Mat<2>::Zero()), Error);
}

TEST_CASE("polar decomposition properties on random F") {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(-0.4, 0.4);
  for (int t = 0; t < 500; ++t) {
    Mat<3> F = Mat<3>::Identity();
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) F(r, c) += u(rng);
    if (F.determinant() <= 0.05) continue;
    const auto pd = polar_decompose<3>(F);
    CHECK((pd.R * pd.U - F).norm() < 1e-10 * F.norm());
    CHECK((pd.R.transpose() * pd.R - Mat<3>::Identity()).norm() < 1e-10);
    CHECK(pd.R.determinant() == doctest::Approx(1.0).epsilon(1e-10));
    CHECK((pd.U - pd.U.transpose()).norm() < 1e-12);
    CHECK(Eigen::SelfAdjointEigenSolver<Mat<3>>(pd.U).eigenvalues().minCoeff() > 0.0);

    // superposed rigid rotation changes R only
    const Mat<3> Q = oracle::random_rotation<3>(rng);
    const auto q = polar_decompose<3>(Q * F);
    CHECK((q.R - Q * pd.R).norm() < 1e-10);
    CHECK((q.U - pd.U).norm() < 1e-10);
  }
}

TEST_CASE("strain measures") {
  Mat<2> F;
  F << 1.1, 0.2, -0.05, 0.95;
  const Mat<2> H = F - Mat<2>::Identity();
  CHECK((strain_of<2>(F, StrainMeasure::small) - 0.5 * (H + H.transpose())).norm() < 1e-15);
  CHECK((strain_of<2>(F, StrainMeasure::green_lagrange) - 0.5 * (F.transpose() * F - Mat<2>::Identity())).norm() < 1e-15);
  // rigid rotation: no Green-Lagrange strain
  CHECK(strain_of<2>(rot2(40.0), StrainMeasure::green_lagrange).norm() < 1e-15);
}

TEST_CASE("tensor CSV layout") {
  const auto tf = deformation_gradient<2>(GridField<2>(grid2(3, 1.0)));
  std::ostringstream os;
  write_tensor_csv<2>(os, tf);
  const std::string s = os.str();
  CHECK(s.substr(0, s.find('\n')) == "x,y,F11,F12,F21,F22,valid");
  CHECK(std::count(s.begin(), s.end(), '\n') == 10);
}

TEST_CASE("metrics of a perfect result") {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(10, 90);
  ParticleSet<2> gt_a, gt_b;
  const auto d = DeformationSpec::make_stretch(0, 1.05, {50, 50, 0});
  for (int i = 0; i < 120; ++i) {
    gt_a.positions.emplace_back(u(rng), u(rng));
    gt_b.positions.push_back(gt_a.positions.back() + displacement_at<2>(d, gt_a.positions.back()));
  }
  TrackResult<2> r;
  r.reference = gt_a;
  r.deformed = gt_b;
  r.matches.reference_count = gt_a.size();
  for (int i = 0; i < 120; ++i)
    r.matches.matches.push_back({i, i, gt_b.positions[i] - gt_a.positions[i], true});
  r.u_hat = sampled<2>(GridSpec<2>::covering(gt_a.positions, 4.0),
                       [&](const Vec<2>& x) { return displacement_at<2>(d, x); });
  const auto truth = associate<2>(gt_a.positions, gt_b.positions, gt_a, gt_b);
  const auto m = evaluate<2>(r, truth, [&](const Vec<2>& x) { return deformation_gradient_at<2>(d, x); });
  CHECK(m.tracking_ratio == 1.0);
  CHECK(m.correct_match_ratio == 1.0);
  CHECK(m.overlap_ratio == 1.0);
  CHECK(m.disp_rms == 0.0);
  CHECK(m.field_rms < 1e-12);
  CHECK(m.strain_rms >= 0.0);
  CHECK(m.strain_rms < 1e-12);

  // a swapped pair is neither correct nor error-free
  std::swap(r.matches.matches[0].b, r.matches.matches[1].b);
  const auto w = evaluate<2>(r, truth);
  CHECK(w.correct == 118);
  CHECK(w.matched == 120);
}
