// Cook-Torrance shading under a learnable lat-long environment map,
// discretized over the env texels with solid-angle weights. The diffuse
// lobe is plain albedo (no 1/pi); the learnable light scale absorbs the
// energy constant. Adjoints cover reflectance, normals, and light, with
// zero gradient through every step gate and clamp.

#pragma once

#include <array>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "meshforge/image.hpp"
#include "meshforge/math.hpp"
#include "meshforge/texgrid.hpp"

namespace meshforge {

constexpr double kFresnelF0 = 0.04;
constexpr double kBrdfEps = 1e-6;

// Per-view lat-long HDR light. Radiance is stored as softplus-inverse raw
// values so Adam updates keep it nonnegative.
struct EnvironmentMap {
  int height = 4, width = 8;
  std::vector<Vec3> raw;  // row-major, index = h*width + w

  EnvironmentMap(int h = 4, int w = 8, double init_radiance = 0.5)
      : height(h), width(w) {
    double r = softplus_inverse(init_radiance);
    raw.assign(size_t(h) * w, Vec3{r, r, r});
  }

  Vec3 radiance(int h, int w) const {
    const Vec3& r = raw[size_t(h) * width + w];
    return {softplus(r.x), softplus(r.y), softplus(r.z)};
  }
  Vec3 radiance_deriv(int h, int w) const {
    const Vec3& r = raw[size_t(h) * width + w];
    return {sigmoid(r.x), sigmoid(r.y), sigmoid(r.z)};
  }
  void set_radiance(int h, int w, const Vec3& L) {
    raw[size_t(h) * width + w] = {softplus_inverse(std::max(L.x, 1e-9)),
                                  softplus_inverse(std::max(L.y, 1e-9)),
                                  softplus_inverse(std::max(L.z, 1e-9))};
  }
};

struct EnvTexel {
  Vec3 dir;       // unit direction toward the texel
  double domega;  // solid angle in steradians
};

// theta measured from +y (the "up" pole); phi sweeps the x-z plane. The
// solid angle is the exact band integral so the texels tile the sphere:
// sum of domega over the map is 4 pi to machine precision.
inline EnvTexel env_texel_direction(int h, int w, int He, int We) {
  double theta = M_PI * (h + 0.5) / He;
  double phi = 2.0 * M_PI * (w + 0.5) / We;
  EnvTexel t;
  t.dir = {std::sin(theta) * std::cos(phi), std::cos(theta), std::sin(theta) * std::sin(phi)};
  t.domega = (2.0 * M_PI / We) * (std::cos(M_PI * h / He) - std::cos(M_PI * (h + 1) / He));
  return t;
}

struct BrdfParams {
  Vec3 a_d;
  Vec3 a_s;
  double alpha = 0.5;
};

namespace detail {

// Specular scalar S with S = D F G / (4 (wo.n)(wi.n) + eps) and its
// derivatives wrt alpha and n. The step gates (chi) contribute no
// gradient.
struct SpecularEval {
  double S = 0;
  double dS_dalpha = 0;
  Vec3 dS_dn{};
};

inline SpecularEval specular_term(const Vec3& wi, const Vec3& wo, const Vec3& n, double alpha,
                                  bool with_grad) {
  SpecularEval out;
  Vec3 half_raw = wi + wo;
  double hn_raw = norm(half_raw);
  if (hn_raw < 1e-12) return out;
  Vec3 h = half_raw / hn_raw;

  double c = dot(h, n);
  if (c <= 0) return out;  // chi(h.n)

  double ci = dot(wi, n), co = dot(wo, n);
  double woh = dot(wo, h), wih = dot(wi, h);
  if (ci != 0 && wih / ci <= 0) return out;  // chi gate of G_p(wi)
  if (co != 0 && woh / co <= 0) return out;  // chi gate of G_p(wo)
  if (ci == 0 || co == 0) return out;

  double cosF = clampd(woh, 0.0, 1.0);
  double F = kFresnelF0 + (1.0 - kFresnelF0) * std::pow(1.0 - cosF, 5.0);

  double a2 = alpha * alpha;
  double A = c * c * (a2 - 1.0) + 1.0;
  double D = a2 / (M_PI * A * A);

  auto smith = [&](double cw) {
    double Q = 1.0 + a2 * (1.0 - cw * cw) / (c * c);
    double sq = std::sqrt(Q);
    return std::array<double, 2>{2.0 / (1.0 + sq), Q};
  };
  auto [Gi, Qi] = smith(ci);
  auto [Go, Qo] = smith(co);
  double G = Gi * Go;

  double denom = 4.0 * co * ci + kBrdfEps;
  out.S = D * F * G / denom;

  if (!with_grad) return out;

  double dD_dc = -4.0 * a2 * c * (a2 - 1.0) / (M_PI * A * A * A);
  double dD_dalpha = (2.0 * alpha / M_PI) * (A - 2.0 * a2 * c * c) / (A * A * A);

  auto smith_grads = [&](double cw, double Q) {
    double sq = std::sqrt(Q);
    double dG_dQ = -1.0 / (sq * (1.0 + sq) * (1.0 + sq));
    double dQ_dalpha = 2.0 * alpha * (1.0 - cw * cw) / (c * c);
    double dQ_dcw = -2.0 * a2 * cw / (c * c);
    double dQ_dc = -2.0 * a2 * (1.0 - cw * cw) / (c * c * c);
    return std::array<double, 3>{dG_dQ * dQ_dalpha, dG_dQ * dQ_dcw, dG_dQ * dQ_dc};
  };
  auto [dGi_da, dGi_dci, dGi_dc] = smith_grads(ci, Qi);
  auto [dGo_da, dGo_dco, dGo_dc] = smith_grads(co, Qo);

  double dG_dalpha = dGi_da * Go + Gi * dGo_da;
  Vec3 dG_dn = (dGi_dci * Go) * wi + (Gi * dGo_dco) * wo + (dGi_dc * Go + Gi * dGo_dc) * h;

  out.dS_dalpha = F * (dD_dalpha * G + D * dG_dalpha) / denom;
  out.dS_dn = (F / denom) * (dD_dc * G * h + D * dG_dn) -
              (out.S / denom) * 4.0 * (ci * wo + co * wi);
  return out;
}

}  // namespace detail

// f_r = a_d + a_s * S  (per channel).
inline Vec3 brdf(const Vec3& wi, const Vec3& wo, const Vec3& n, const BrdfParams& params) {
  double S = detail::specular_term(wi, wo, n, params.alpha, /*with_grad=*/false).S;
  return params.a_d + params.a_s * S;
}

// Outgoing radiance at one surface point: sum over env texels of
// f_r * L_i * max(n.wi, 0) * dOmega.
inline Vec3 shade_point(const BrdfParams& params, const Vec3& n, const Vec3& wo,
                        const EnvironmentMap& env) {
  Vec3 lo{};
  for (int h = 0; h < env.height; ++h)
    for (int w = 0; w < env.width; ++w) {
      EnvTexel tx = env_texel_direction(h, w, env.height, env.width);
      double cos_i = dot(n, tx.dir);
      if (cos_i <= 0) continue;
      Vec3 fr = brdf(tx.dir, wo, n, params);
      lo += fr.cwise(env.radiance(h, w)) * (cos_i * tx.domega);
    }
  return lo;
}

struct ShadePointGrads {
  Vec3 d_ad{}, d_as{};
  double d_alpha = 0;
  Vec3 d_n{};
};

// Reverse-mode of shade_point. Env gradients accumulate into
// dL_denv_raw (layout matching EnvironmentMap::raw).
inline ShadePointGrads shade_point_adjoint(const BrdfParams& params, const Vec3& n, const Vec3& wo,
                                           const EnvironmentMap& env, const Vec3& upstream,
                                           std::vector<Vec3>* dL_denv_raw) {
  ShadePointGrads g;
  for (int h = 0; h < env.height; ++h)
    for (int w = 0; w < env.width; ++w) {
      EnvTexel tx = env_texel_direction(h, w, env.height, env.width);
      double cos_i = dot(n, tx.dir);
      if (cos_i <= 0) continue;
      Vec3 L = env.radiance(h, w);
      double weight = cos_i * tx.domega;

      detail::SpecularEval spec =
          detail::specular_term(tx.dir, wo, n, params.alpha, /*with_grad=*/true);
      Vec3 fr = params.a_d + params.a_s * spec.S;

      // reflectance paths
      g.d_ad += upstream.cwise(L) * weight;
      g.d_as += upstream.cwise(L) * (spec.S * weight);
      double b = dot(upstream.cwise(L), params.a_s);  // shared dS chain weight
      g.d_alpha += b * weight * spec.dS_dalpha;

      // normal paths: through S and through the cosine clamp
      g.d_n += (b * weight) * spec.dS_dn;
      g.d_n += dot(upstream.cwise(L), fr) * tx.domega * tx.dir;

      // light path, chained through the softplus storage
      if (dL_denv_raw) {
        Vec3 dL = upstream.cwise(fr) * weight;
        Vec3 act = env.radiance_deriv(h, w);
        (*dL_denv_raw)[size_t(h) * env.width + w] += dL.cwise(act);
      }
    }
  return g;
}

inline BrdfParams params_from_texture(const std::array<double, kTexChannels>& p) {
  return {{p[0], p[1], p[2]}, {p[3], p[4], p[5]}, p[6]};
}

// Env maps are saved/loaded as activated radiance in PFM.
inline Image env_to_image(const EnvironmentMap& env) {
  Image img(env.width, env.height, 3);
  for (int h = 0; h < env.height; ++h)
    for (int w = 0; w < env.width; ++w) {
      Vec3 L = env.radiance(h, w);
      img.at(w, h, 0) = L.x;
      img.at(w, h, 1) = L.y;
      img.at(w, h, 2) = L.z;
    }
  return img;
}

inline EnvironmentMap env_from_image(const Image& img) {
  EnvironmentMap env(img.height, img.width);
  for (int h = 0; h < img.height; ++h)
    for (int w = 0; w < img.width; ++w)
      env.set_radiance(h, w, {img.at(w, h, 0), img.at(w, h, 1), img.at(w, h, 2)});
  return env;
}

}  // namespace meshforge
