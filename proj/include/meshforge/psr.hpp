// Differentiable Poisson surface reconstruction on a periodic unit-cube
// grid. Forward: trilinear normal scatter -> FFT -> Gaussian-smoothed
// spectral inverse Laplacian -> IFFT -> anchored normalization. Backward
// is the exact reverse-mode of every step, including the normalization's
// mean-subtraction and anchor quotient.

#pragma once

#include <cmath>
#include <random>
#include <stdexcept>
#include <vector>

#include "meshforge/fft.hpp"
#include "meshforge/grid.hpp"
#include "meshforge/mesh.hpp"

namespace meshforge {

struct OrientedPointCloud {
  std::vector<Vec3> positions;  // unit-cube coordinates
  std::vector<Vec3> normals;    // unit length

  size_t size() const { return positions.size(); }

  // Re-establish the invariants after an optimizer update.
  void renormalize(int grid_res) {
    double eps = 1.0 / (2.0 * grid_res);
    for (auto& p : positions) {
      p.x = clampd(p.x, eps, 1.0 - eps);
      p.y = clampd(p.y, eps, 1.0 - eps);
      p.z = clampd(p.z, eps, 1.0 - eps);
    }
    for (auto& n : normals) n = normalized(n);
  }
};

struct PsrConfig {
  double sigma = 2.0;  // Gaussian bandwidth in grid cells
  double m = 0.5;      // iso offset constant
};

// Distributes each normal onto the 8 surrounding grid nodes with trilinear
// weights. Linear in the normals, piecewise-multilinear in the positions.
inline VectorGrid scatter_normals(const OrientedPointCloud& cloud, int r) {
  VectorGrid field(r);
  for (size_t i = 0; i < cloud.size(); ++i) {
    const Vec3& p = cloud.positions[i];
    const Vec3& n = cloud.normals[i];
    trilinear_scatter(field.comp[0], p, n.x);
    trilinear_scatter(field.comp[1], p, n.y);
    trilinear_scatter(field.comp[2], p, n.z);
  }
  return field;
}

namespace detail {

// Spectral transfer: phihat(u) = g(u) * (i u . vhat(u)) / (-2 pi |u|^2),
// with the zero-frequency bin pinned to 0. `gather` applies the adjoint
// (conjugate) map from a scalar spectrum back to the vector spectrum.
struct SpectralFilter {
  int res;
  double sigma;

  std::complex<double> coeff(int d, int fx, int fy, int fz) const {
    double u2 = double(fx) * fx + double(fy) * fy + double(fz) * fz;
    if (u2 == 0) return {0, 0};
    double g = std::exp(-2.0 * sigma * sigma * u2 / (double(res) * res));
    double f = d == 0 ? fx : (d == 1 ? fy : fz);
    // i*f / (-2 pi u2) = -i * f / (2 pi u2)
    return {0.0, -f * g / (2.0 * M_PI * u2)};
  }

  void apply(const ComplexGrid& vhat_x, const ComplexGrid& vhat_y,
             const ComplexGrid& vhat_z, ComplexGrid& phihat) const {
    for (int z = 0; z < res; ++z) {
      int fz = Fft3::freq(z, res);
      for (int y = 0; y < res; ++y) {
        int fy = Fft3::freq(y, res);
        for (int x = 0; x < res; ++x) {
          int fx = Fft3::freq(x, res);
          size_t i = phihat.idx(x, y, z);
          phihat.values[i] = coeff(0, fx, fy, fz) * vhat_x.values[i] +
                             coeff(1, fx, fy, fz) * vhat_y.values[i] +
                             coeff(2, fx, fy, fz) * vhat_z.values[i];
        }
      }
    }
  }

  void apply_adjoint(const ComplexGrid& dphihat, ComplexGrid& dvhat_x,
                     ComplexGrid& dvhat_y, ComplexGrid& dvhat_z) const {
    for (int z = 0; z < res; ++z) {
      int fz = Fft3::freq(z, res);
      for (int y = 0; y < res; ++y) {
        int fy = Fft3::freq(y, res);
        for (int x = 0; x < res; ++x) {
          int fx = Fft3::freq(x, res);
          size_t i = dphihat.idx(x, y, z);
          const std::complex<double>& g = dphihat.values[i];
          dvhat_x.values[i] = std::conj(coeff(0, fx, fy, fz)) * g;
          dvhat_y.values[i] = std::conj(coeff(1, fx, fy, fz)) * g;
          dvhat_z.values[i] = std::conj(coeff(2, fx, fy, fz)) * g;
        }
      }
    }
  }
};

inline ComplexGrid to_complex(const ScalarGrid& g) {
  ComplexGrid c(g.res);
  for (size_t i = 0; i < g.values.size(); ++i) c.values[i] = {g.values[i], 0.0};
  return c;
}

}  // namespace detail

// Unnormalized solve: the linear map from the point cloud to phi' (before
// the anchored normalization). Exposed for the linearity/adjoint tests.
inline ScalarGrid psr_solve_raw(const OrientedPointCloud& cloud, const PsrConfig& cfg, int r) {
  VectorGrid v = scatter_normals(cloud, r);
  ComplexGrid vhat[3] = {detail::to_complex(v.comp[0]), detail::to_complex(v.comp[1]),
                         detail::to_complex(v.comp[2])};
  for (auto& c : vhat) Fft3::forward(c);

  detail::SpectralFilter filter{r, cfg.sigma};
  ComplexGrid phihat(r);
  filter.apply(vhat[0], vhat[1], vhat[2], phihat);

  Fft3::backward(phihat);
  double inv_n = 1.0 / (double(r) * r * r);
  ScalarGrid phi(r);
  for (size_t i = 0; i < phi.values.size(); ++i) phi.values[i] = phihat.values[i].real() * inv_n;
  return phi;
}

// Full solve with the m / |phi'(x0)| anchored normalization; x0 is the grid
// node (0,0,0), assumed exterior.
inline ScalarGrid psr_solve(const OrientedPointCloud& cloud, const PsrConfig& cfg, int r) {
  ScalarGrid phi = psr_solve_raw(cloud, cfg, r);

  double anchor = phi.values[0];
  if (std::abs(anchor) < 1e-12)
    throw std::runtime_error("psr_solve: degenerate normalization (|phi'(x0)| < 1e-12)");

  double mean = 0;
  for (const Vec3& p : cloud.positions) mean += trilinear_sample(phi, p);
  mean /= double(cloud.size());

  double scale = cfg.m / std::abs(anchor);
  for (double& v : phi.values) v = scale * (v - mean);
  return phi;
}

// Reverse-mode of psr_solve. Returns gradients wrt positions and normals.
inline void psr_solve_adjoint(const OrientedPointCloud& cloud, const PsrConfig& cfg, int r,
                              const ScalarGrid& dL_dPhi, std::vector<Vec3>* dL_dpositions,
                              std::vector<Vec3>* dL_dnormals) {
  size_t k = cloud.size();
  dL_dpositions->assign(k, Vec3{});
  dL_dnormals->assign(k, Vec3{});

  // recompute the forward intermediates
  ScalarGrid phi_raw = psr_solve_raw(cloud, cfg, r);
  double anchor = phi_raw.values[0];
  if (std::abs(anchor) < 1e-12)
    throw std::runtime_error("psr_solve_adjoint: degenerate normalization");
  double mean = 0;
  for (const Vec3& p : cloud.positions) mean += trilinear_sample(phi_raw, p);
  mean /= double(k);
  double scale = cfg.m / std::abs(anchor);

  // Phi = scale * (phi' - mean) with scale = m / |anchor|
  double grad_sum = 0;          // sum of dL/dPhi
  double grad_dot_centered = 0; // <dL/dPhi, phi' - mean>
  for (size_t i = 0; i < dL_dPhi.values.size(); ++i) {
    grad_sum += dL_dPhi.values[i];
    grad_dot_centered += dL_dPhi.values[i] * (phi_raw.values[i] - mean);
  }

  ScalarGrid dL_dphi_raw(r);
  for (size_t i = 0; i < dL_dPhi.values.size(); ++i)
    dL_dphi_raw.values[i] = scale * dL_dPhi.values[i];

  // mean depends on phi' through the trilinear samples and on the positions
  double dL_dmean = -scale * grad_sum;
  double per_point = dL_dmean / double(k);
  for (size_t i = 0; i < k; ++i) {
    trilinear_scatter(dL_dphi_raw, cloud.positions[i], per_point);
    (*dL_dpositions)[i] += trilinear_sample_grad(phi_raw, cloud.positions[i]) * per_point;
  }

  // scale depends on the anchor node: d(scale)/d(anchor) = -m sign(a)/a^2
  double sign_a = anchor >= 0 ? 1.0 : -1.0;
  dL_dphi_raw.values[0] += grad_dot_centered * (-cfg.m * sign_a / (anchor * anchor));

  // back through IFFT (adjoint: forward FFT / r^3)
  ComplexGrid dphihat = detail::to_complex(dL_dphi_raw);
  Fft3::forward(dphihat);
  double inv_n = 1.0 / (double(r) * r * r);
  for (auto& c : dphihat.values) c *= inv_n;

  // back through the spectral filter
  detail::SpectralFilter filter{r, cfg.sigma};
  ComplexGrid dvhat[3] = {ComplexGrid(r), ComplexGrid(r), ComplexGrid(r)};
  filter.apply_adjoint(dphihat, dvhat[0], dvhat[1], dvhat[2]);

  // back through the forward FFT (adjoint: unnormalized backward FFT)
  for (auto& c : dvhat) Fft3::backward(c);
  ScalarGrid dv[3] = {ScalarGrid(r), ScalarGrid(r), ScalarGrid(r)};
  for (int d = 0; d < 3; ++d)
    for (size_t i = 0; i < dv[d].values.size(); ++i)
      dv[d].values[i] = dvhat[d].values[i].real();

  // back through the trilinear scatter: gather for normals, weight
  // derivatives for positions
  for (size_t i = 0; i < k; ++i) {
    Vec3 dn{trilinear_sample(dv[0], cloud.positions[i]),
            trilinear_sample(dv[1], cloud.positions[i]),
            trilinear_sample(dv[2], cloud.positions[i])};
    (*dL_dnormals)[i] += dn;
    Vec3 dp = trilinear_sample_grad(dv[0], cloud.positions[i]) * cloud.normals[i].x +
              trilinear_sample_grad(dv[1], cloud.positions[i]) * cloud.normals[i].y +
              trilinear_sample_grad(dv[2], cloud.positions[i]) * cloud.normals[i].z;
    (*dL_dpositions)[i] += dp;
  }
}

// Area-uniform resampling of a mesh into an oriented point cloud.
// Deterministic given the seed; normals are the face normals.
inline OrientedPointCloud resample_mesh(const TriangleMesh& mesh, size_t k, uint64_t seed) {
  if (mesh.empty()) throw std::runtime_error("resample_mesh: empty mesh");
  std::vector<double> cdf(mesh.face_count());
  double total = 0;
  for (size_t f = 0; f < mesh.face_count(); ++f) {
    total += mesh.face_area(f);
    cdf[f] = total;
  }
  if (total <= 0) throw std::runtime_error("resample_mesh: degenerate (zero-area) mesh");

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  OrientedPointCloud cloud;
  cloud.positions.reserve(k);
  cloud.normals.reserve(k);
  for (size_t i = 0; i < k; ++i) {
    double target = uni(rng) * total;
    size_t f = size_t(std::lower_bound(cdf.begin(), cdf.end(), target) - cdf.begin());
    if (f >= mesh.face_count()) f = mesh.face_count() - 1;
    double r1 = std::sqrt(uni(rng)), r2 = uni(rng);
    const auto& t = mesh.faces[f];
    Vec3 p = mesh.vertices[t[0]] * (1.0 - r1) + mesh.vertices[t[1]] * (r1 * (1.0 - r2)) +
             mesh.vertices[t[2]] * (r1 * r2);
    cloud.positions.push_back(p);
    cloud.normals.push_back(mesh.face_normal(f));
  }
  return cloud;
}

}  // namespace meshforge
