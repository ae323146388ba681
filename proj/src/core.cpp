#include "serialtrack/core.hpp"

#include <cmath>

namespace serialtrack {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InfeasibleDensity: return "InfeasibleDensity";
    case ErrorCode::DimMismatch: return "DimMismatch";
    case ErrorCode::TooFewNeighbors: return "TooFewNeighbors";
    case ErrorCode::NoSamples: return "NoSamples";
    case ErrorCode::SolverDiverged: return "SolverDiverged";
    case ErrorCode::EmptyAfterRemoval: return "EmptyAfterRemoval";
    case ErrorCode::NoMatches: return "NoMatches";
    case ErrorCode::DetectionCollapse: return "DetectionCollapse";
    case ErrorCode::OddFrameCount: return "OddFrameCount";
    case ErrorCode::GridTooSmall: return "GridTooSmall";
    case ErrorCode::SingularF: return "SingularF";
    case ErrorCode::ConfigInvalid: return "ConfigInvalid";
    case ErrorCode::InputMissing: return "InputMissing";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

template <int Dim>
double sample_linear(const Image<Dim>& img, const Vec<Dim>& x, double outside) {
  std::array<int, Dim> base{};
  std::array<double, Dim> frac{};
  for (int a = 0; a < Dim; ++a) {
    const double v = x[a];
    if (!(v >= 0.0) || v > img.dims[a] - 1) return outside;
    int b = static_cast<int>(std::floor(v));
    if (b >= img.dims[a] - 1) b = std::max(img.dims[a] - 2, 0);
    base[a] = b;
    frac[a] = v - b;
  }
  double acc = 0.0;
  for (int corner = 0; corner < (1 << Dim); ++corner) {
    double w = 1.0;
    std::array<int, Dim> p{};
    for (int a = 0; a < Dim; ++a) {
      const bool hi = (corner >> a) & 1;
      w *= hi ? frac[a] : 1.0 - frac[a];
      p[a] = std::min(base[a] + (hi ? 1 : 0), img.dims[a] - 1);
    }
    if (w != 0.0) acc += w * img.at(p);
  }
  return acc;
}

template double sample_linear<2>(const Image<2>&, const Vec<2>&, double);
template double sample_linear<3>(const Image<3>&, const Vec<3>&, double);

}  // namespace serialtrack
