#include "serialtrack/postproc.hpp"

#include "serialtrack/io.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <ostream>

namespace serialtrack {

template <int Dim>
Mat<Dim> strain_of(const Mat<Dim>& F, StrainMeasure m) {
  const Mat<Dim> I = Mat<Dim>::Identity();
  if (m == StrainMeasure::small) {
    const Mat<Dim> g = F - I;
    return 0.5 * (g + g.transpose());
  }
  return 0.5 * (F.transpose() * F - I);
}

template <int Dim>
TensorField<Dim> deformation_gradient(const GridField<Dim>& u) {
  const auto& g = u.grid;
  for (int a = 0; a < Dim; ++a)
    if (g.dims[a] < 3) throw Error(ErrorCode::GridTooSmall, "need >= 3 nodes per axis");
  const std::size_t n = g.node_count();
  TensorField<Dim> out;
  out.grid = g;
  out.F.resize(n);
  out.small_strain.resize(n);
  out.green_lagrange.resize(n);
  out.valid.assign(n, true);

  std::array<std::size_t, Dim> stride{};
  stride[0] = 1;
  for (int a = 1; a < Dim; ++a) stride[a] = stride[a - 1] * g.dims[a - 1];

  for (std::size_t i = 0; i < n; ++i) {
    const auto p = unravel<Dim>(i, g.dims);
    Mat<Dim> grad;  // grad(r, c) = d u_r / d x_c
    bool interior = true;
    for (int c = 0; c < Dim; ++c) {
      const double h = g.spacing[c];
      const std::size_t s = stride[c];
      Vec<Dim> d;
      if (p[c] == 0) {
        d = (-3.0 * u.values.col(i) + 4.0 * u.values.col(i + s) - u.values.col(i + 2 * s)) /
            (2.0 * h);
        interior = false;
      } else if (p[c] == g.dims[c] - 1) {
        d = (3.0 * u.values.col(i) - 4.0 * u.values.col(i - s) + u.values.col(i - 2 * s)) /
            (2.0 * h);
        interior = false;
      } else {
        d = (u.values.col(i + s) - u.values.col(i - s)) / (2.0 * h);
      }
      grad.col(c) = d;
    }
    const Mat<Dim> F = Mat<Dim>::Identity() + grad;
    out.F[i] = F;
    out.small_strain[i] = strain_of<Dim>(F, StrainMeasure::small);
    out.green_lagrange[i] = strain_of<Dim>(F, StrainMeasure::green_lagrange);
    out.valid[i] = interior && F.determinant() > 0.0;
  }
  return out;
}

template <int Dim>
PolarDecomposition<Dim> polar_decompose(const Mat<Dim>& F) {
  if (!(F.determinant() > 1e-12)) throw Error(ErrorCode::SingularF, "det F <= 1e-12");
  const Eigen::SelfAdjointEigenSolver<Mat<Dim>> eig(F.transpose() * F);
  const Vec<Dim> lam = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  const Mat<Dim>& V = eig.eigenvectors();
  PolarDecomposition<Dim> out;
  out.U = V * lam.asDiagonal() * V.transpose();
  out.R = F * (V * lam.cwiseInverse().asDiagonal() * V.transpose());
  return out;
}

template <int Dim>
void write_tensor_csv(std::ostream& os, const TensorField<Dim>& field) {
  static const char* names[] = {"x", "y", "z"};
  for (int a = 0; a < Dim; ++a) os << (a ? "," : "") << names[a];
  for (int r = 0; r < Dim; ++r)
    for (int c = 0; c < Dim; ++c) os << ",F" << r + 1 << c + 1;
  os << ",valid\n";
  for (std::size_t i = 0; i < field.F.size(); ++i) {
    const Vec<Dim> x = field.grid.node_position(i);
    for (int a = 0; a < Dim; ++a) os << (a ? "," : "") << format_number(x[a]);
    for (int r = 0; r < Dim; ++r)
      for (int c = 0; c < Dim; ++c) os << ',' << format_number(field.F[i](r, c));
    os << ',' << (field.valid[i] ? 1 : 0) << '\n';
  }
}

template <int Dim>
GroundTruth<Dim> associate(const std::vector<Vec<Dim>>& reference_detections,
                           const std::vector<Vec<Dim>>& deformed_detections,
                           const ParticleSet<Dim>& gt_reference,
                           const ParticleSet<Dim>& gt_deformed, double tol) {
  if (gt_reference.positions.size() != gt_deformed.positions.size())
    throw Error(ErrorCode::DimMismatch, "ground-truth sets are not index-aligned");
  GroundTruth<Dim> out;
  const NeighborIndex<Dim> ref_index(gt_reference.positions);
  const NeighborIndex<Dim> def_index(gt_deformed.positions);
  auto link = [tol](const NeighborIndex<Dim>& idx, const Vec<Dim>& x) {
    const auto h = idx.nearest(x);
    return h.index >= 0 && h.dist2 <= tol * tol ? h.index : -1;
  };
  const std::size_t na = reference_detections.size();
  out.reference_id.resize(na);
  out.true_u.assign(na, Vec<Dim>::Zero());
  out.trackable.assign(na, false);
  for (std::size_t i = 0; i < na; ++i) {
    const int id = link(ref_index, reference_detections[i]);
    out.reference_id[i] = id;
    if (id < 0) continue;
    out.true_u[i] = gt_deformed.positions[id] - gt_reference.positions[id];
    const bool gone = !gt_deformed.out_of_frame.empty() && gt_deformed.out_of_frame[id];
    out.trackable[i] = !gone;
  }
  out.deformed_id.resize(deformed_detections.size());
  for (std::size_t j = 0; j < deformed_detections.size(); ++j)
    out.deformed_id[j] = link(def_index, deformed_detections[j]);
  return out;
}

template <int Dim>
PairMetrics evaluate(const TrackResult<Dim>& result, const GroundTruth<Dim>& truth,
                     const GradientFn<Dim>& true_gradient, StrainMeasure measure) {
  PairMetrics m;
  const auto& ref = result.reference.positions;
  m.detected = ref.size();
  for (bool t : truth.trackable) m.trackable += t;

  double se = 0.0;
  for (const auto& mt : result.matches.matches) {
    if (!mt.valid) continue;
    ++m.valid;
    if (truth.trackable[mt.a]) ++m.matched;
    const int id = truth.reference_id[mt.a];
    if (id >= 0 && id == truth.deformed_id[mt.b]) {
      ++m.correct;
      se += (mt.u - truth.true_u[mt.a]).squaredNorm();
    }
  }
  auto ratio = [](std::size_t a, std::size_t b) {
    return b == 0 ? 0.0 : static_cast<double>(a) / static_cast<double>(b);
  };
  m.tracking_ratio = ratio(m.matched, m.trackable);
  m.correct_match_ratio = ratio(m.correct, m.valid);
  m.overlap_ratio = ratio(m.correct, m.detected);
  m.disp_rms = m.correct ? std::sqrt(se / (Dim * static_cast<double>(m.correct))) : 0.0;

  double fe = 0.0;
  for (std::size_t i = 0; i < ref.size(); ++i)
    if (truth.trackable[i]) fe += (interpolate(result.u_hat, ref[i]) - truth.true_u[i]).squaredNorm();
  m.field_rms = m.trackable ? std::sqrt(fe / (Dim * static_cast<double>(m.trackable))) : 0.0;

  if (true_gradient) {
    bool ok = true;
    for (int a = 0; a < Dim; ++a) ok = ok && result.u_hat.grid.dims[a] >= 3;
    if (ok) {
      const TensorField<Dim> tf = deformation_gradient(result.u_hat);
      double sse = 0.0;
      std::size_t count = 0;
      for (std::size_t i = 0; i < tf.F.size(); ++i) {
        if (!tf.valid[i]) continue;
        const Mat<Dim> truth_e = strain_of<Dim>(true_gradient(tf.grid.node_position(i)), measure);
        sse += (tf.strain(measure)[i] - truth_e).squaredNorm();
        ++count;
      }
      if (count) m.strain_rms = std::sqrt(sse / (Dim * Dim * static_cast<double>(count)));
    }
  }
  return m;
}

#define ST_POST_INSTANTIATE(D)                                                               \
  template Mat<D> strain_of<D>(const Mat<D>&, StrainMeasure);                                \
  template TensorField<D> deformation_gradient<D>(const GridField<D>&);                      \
  template PolarDecomposition<D> polar_decompose<D>(const Mat<D>&);                          \
  template void write_tensor_csv<D>(std::ostream&, const TensorField<D>&);                   \
  template GroundTruth<D> associate<D>(const std::vector<Vec<D>>&, const std::vector<Vec<D>>&, \
                                       const ParticleSet<D>&, const ParticleSet<D>&, double); \
  template PairMetrics evaluate<D>(const TrackResult<D>&, const GroundTruth<D>&,             \
                                   const GradientFn<D>&, StrainMeasure);

ST_POST_INSTANTIATE(2)
ST_POST_INSTANTIATE(3)

}  // namespace serialtrack
