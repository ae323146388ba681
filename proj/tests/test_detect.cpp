#include "serialtrack/detect.hpp"
#include "serialtrack/neighbor_index.hpp"
#include "serialtrack/synth.hpp"

#include <doctest.h>

using namespace serialtrack;

namespace {

Image<2> blobs(const std::vector<Vec<2>>& at, std::array<int, 3> dims = {64, 64, 1},
               double noise = 0.0, std::uint64_t seed = 1) {
  SynthImageSpec spec;
  spec.dims = dims;
  spec.noise_pct = noise;
  spec.rng_seed = seed;
  ParticleSet<2> p;
  p.positions = at;
  return render_image<2>(p, spec);
}

// Nearest detection to x, or infinity.
double miss(const ParticleSet<2>& found, const Vec<2>& x) {
  double best = kInf;
  for (const auto& p : found.positions) best = std::min(best, (p - x).norm());
  return best;
}

}  // namespace

TEST_CASE("threshold + radial symmetry: single blob") {
  const Vec<2> c(20.3, 41.7);
  const auto det = detect<2>(blobs({c}), DetectionConfig{});
  REQUIRE(det.particles.size() == 1);
  CHECK((det.particles.positions[0] - c).norm() < 0.03);
  CHECK_FALSE(det.no_particles);
}

TEST_CASE("threshold + radial symmetry: two blobs") {
  const std::vector<Vec<2>> at{Vec<2>(10, 10), Vec<2>(30, 30)};
  const auto det = detect<2>(blobs(at), DetectionConfig{});
  REQUIRE(det.particles.size() == 2);
  for (const auto& x : at) CHECK(miss(det.particles, x) < 0.03);
}

TEST_CASE("uniform dim image gives an empty set with a warning") {
  Image<2> img({40, 40}, 0.1);
  const auto det = detect<2>(img, DetectionConfig{});
  CHECK(det.particles.empty());
  CHECK(det.no_particles);
  const auto zero = detect<2>(Image<2>({40, 40}, 0.0), DetectionConfig{});
  CHECK(zero.particles.empty());
}

TEST_CASE("LoG detector: half-pixel blob and integer blob") {
  DetectionConfig cfg;
  cfg.method = DetectionConfig::Method::log_gaussian;
  cfg.particle_radius = 2.0;
  const auto det = detect<2>(blobs({Vec<2>(15.5, 15.5)}, {32, 32, 1}), cfg);
  REQUIRE(det.particles.size() == 1);
  CHECK((det.particles.positions[0] - Vec<2>(15.5, 15.5)).norm() < 0.05);

  CHECK(std::abs(gaussian_peak_offset(0.4, 1.0, 0.4, 1e-12)) < 1e-12);
  const auto zero = detect<2>(Image<2>({32, 32}, 0.0), cfg);
  CHECK(zero.particles.empty());
}

TEST_CASE("gaussian_peak_offset recovers a sampled Gaussian vertex") {
  for (double x0 : {-0.4, -0.1, 0.0, 0.27, 0.49}) {
    auto g = [&](double x) { return 3.0 * std::exp(-(x - x0) * (x - x0) / 2.5); };
    CHECK(gaussian_peak_offset(g(-1), g(0), g(1), 1e-12) == doctest::Approx(x0).epsilon(1e-9));
  }
}

TEST_CASE("3D blob") {
  SynthImageSpec spec;
  spec.dims = {24, 24, 24};
  spec.noise_pct = 0.0;
  ParticleSet<3> p;
  p.positions = {Vec<3>(11.3, 12.6, 10.2)};
  const auto det = detect<3>(render_image<3>(p, spec), DetectionConfig{});
  REQUIRE(det.particles.size() == 1);
  CHECK((det.particles.positions[0] - p.positions[0]).norm() < 0.05);
}

TEST_CASE("translation equivariance under integer shifts") {
  std::vector<Vec<2>> at{Vec<2>(20.2, 18.9), Vec<2>(35.7, 40.1), Vec<2>(50.4, 22.3)};
  const auto base = detect<2>(blobs(at, {96, 96, 1}), DetectionConfig{}).particles;
  for (auto& x : at) x += Vec<2>(7, -3);
  const auto moved = detect<2>(blobs(at, {96, 96, 1}), DetectionConfig{}).particles;
  REQUIRE(base.size() == moved.size());
  for (std::size_t i = 0; i < base.size(); ++i)
    CHECK(miss(moved, Vec<2>(base.positions[i] + Vec<2>(7, -3))) < 1e-9);
}

TEST_CASE("detection ratio and no duplicates on noisy renders") {
  for (double density : {0.003, 0.006, 0.012}) {
    const auto seeds = poisson_disc_sample<2>({256, 256}, 5.0, density, 17);
    SynthImageSpec spec;
    spec.dims = {256, 256, 1};
    spec.noise_pct = 0.05;
    spec.rng_seed = 4;
    const auto found = detect<2>(render_image<2>(seeds, spec), DetectionConfig{}).particles;
    const NeighborIndex<2> index(found.positions);
    std::size_t hit = 0;
    for (const auto& s : seeds.positions) {
      const auto h = index.nearest(s);
      hit += h.index >= 0 && h.dist2 <= 0.25;
    }
    CHECK(static_cast<double>(hit) / seeds.size() >= 0.95);
    for (std::size_t i = 0; i < found.size(); ++i) {
      const auto h = index.nearest(found.positions[i], static_cast<int>(i));
      CHECK(h.dist2 >= 1.0);
    }
  }
}

TEST_CASE("detection config validation") {
  DetectionConfig cfg;
  cfg.intensity_threshold = 1.0;
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg = {};
  cfg.particle_radius = 0.5;
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg = {};
  cfg.min_blob_volume = 0.5;
  CHECK_THROWS_AS(cfg.validate(), Error);
}
