// Evaluation metrics: bidirectional Chamfer distance (area-uniform
// samples, exact point-to-surface via BVH) and PSNR.

#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>

#include "meshforge/bvh.hpp"
#include "meshforge/image.hpp"
#include "meshforge/psr.hpp"

namespace meshforge {

inline constexpr double kPsnrPerfect = std::numeric_limits<double>::infinity();

// Mean of the two directed mean point-to-surface distances.
inline double chamfer_distance(const TriangleMesh& a, const TriangleMesh& b,
                               size_t n_samples = 100000, uint64_t seed = 0) {
  if (a.empty() || b.empty()) throw std::runtime_error("chamfer_distance: empty mesh");
  TriangleBvh bvh_a(a), bvh_b(b);

  auto directed = [n_samples](const TriangleMesh& src, const TriangleBvh& dst, uint64_t s) {
    OrientedPointCloud samples = resample_mesh(src, n_samples, s);
    double sum = 0;
    for (const Vec3& p : samples.positions) sum += dst.distance(p);
    return sum / double(n_samples);
  };
  // symmetric by construction: both directions use the same seeds
  double ab = directed(a, bvh_b, seed);
  double ba = directed(b, bvh_a, seed + 1);
  return 0.5 * (ab + ba);
}

// 10 log10(1 / MSE) with peak 1.0 over the region mask (all pixels when
// region is null). Identical images report +infinity.
inline double psnr(const Image& img, const Image& ref, const Image* region = nullptr) {
  if (img.width != ref.width || img.height != ref.height || img.channels != ref.channels)
    throw std::runtime_error("psnr: dimension mismatch");
  double mse = 0;
  size_t count = 0;
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      if (region && region->at(x, y, 0) != 1.0) continue;
      for (int c = 0; c < img.channels; ++c) {
        double d = img.at(x, y, c) - ref.at(x, y, c);
        mse += d * d;
        ++count;
      }
    }
  if (count == 0) throw std::runtime_error("psnr: empty region");
  mse /= double(count);
  if (mse == 0) return kPsnrPerfect;
  return 10.0 * std::log10(1.0 / mse);
}

}  // namespace meshforge
