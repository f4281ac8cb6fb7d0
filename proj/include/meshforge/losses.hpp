// The three supervision losses and the Adam optimizer. Losses are mean
// normalized so the weighting stays meaningful across resolutions; L1
// subgradients are 0 at exact ties.

#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "meshforge/image.hpp"

namespace meshforge {

struct LossWeights {
  double lambda_c = 5.0;
  double lambda_s = 10.0;
  double lambda_d = 30.0;
};

enum class LossNorm { L1, L2 };

struct LossResult {
  double value = 0;
  Image grad;  // dL / d(prediction)
};

// Per-pixel squared (or absolute) silhouette difference, mean over pixels.
inline LossResult silhouette_loss(const Image& gt, const Image& pred,
                                  LossNorm norm = LossNorm::L2) {
  if (gt.width != pred.width || gt.height != pred.height)
    throw std::runtime_error("silhouette_loss: dimension mismatch");
  LossResult r;
  r.grad = Image(pred.width, pred.height, 1);
  double n = double(pred.width) * pred.height;
  for (size_t i = 0; i < pred.data.size(); ++i) {
    double diff = gt.data[i] - pred.data[i];
    if (norm == LossNorm::L2) {
      r.value += diff * diff / n;
      r.grad.data[i] = -2.0 * diff / n;
    } else {
      r.value += std::abs(diff) / n;
      r.grad.data[i] = diff > 0 ? -1.0 / n : (diff < 0 ? 1.0 / n : 0.0);
    }
  }
  return r;
}

// Mean |D - D_hat| over pixels with valid=1 and coverage=1. Zero loss and
// gradient when that set is empty.
inline LossResult depth_loss(const Image& gt, const Image& valid, const Image& pred,
                             const Image& coverage, LossNorm norm = LossNorm::L1) {
  if (gt.width != pred.width || gt.height != pred.height || valid.width != pred.width ||
      coverage.width != pred.width)
    throw std::runtime_error("depth_loss: dimension mismatch");
  LossResult r;
  r.grad = Image(pred.width, pred.height, 1);
  size_t count = 0;
  for (size_t i = 0; i < pred.data.size(); ++i)
    if (valid.data[i] == 1.0 && coverage.data[i] == 1.0) ++count;
  if (count == 0) return r;
  double inv_n = 1.0 / double(count);
  for (size_t i = 0; i < pred.data.size(); ++i) {
    if (valid.data[i] != 1.0 || coverage.data[i] != 1.0) continue;
    double diff = gt.data[i] - pred.data[i];
    if (norm == LossNorm::L1) {
      r.value += std::abs(diff) * inv_n;
      r.grad.data[i] = diff > 0 ? -inv_n : (diff < 0 ? inv_n : 0.0);
    } else {
      r.value += diff * diff * inv_n;
      r.grad.data[i] = -2.0 * diff * inv_n;
    }
  }
  return r;
}

// Mean L1 over the region mask (coverage AND gt-mask), per channel.
inline LossResult photometric_loss(const Image& gt, const Image& pred, const Image& region) {
  if (gt.width != pred.width || gt.height != pred.height || gt.channels != pred.channels ||
      region.width != pred.width)
    throw std::runtime_error("photometric_loss: dimension mismatch");
  LossResult r;
  r.grad = Image(pred.width, pred.height, pred.channels);
  size_t count = 0;
  for (size_t i = 0; i < region.data.size(); ++i)
    if (region.data[i] == 1.0) ++count;
  if (count == 0) return r;  // empty region: zero loss by contract
  double inv_n = 1.0 / double(count * pred.channels);
  for (int y = 0; y < pred.height; ++y)
    for (int x = 0; x < pred.width; ++x) {
      if (region.at(x, y, 0) != 1.0) continue;
      for (int c = 0; c < pred.channels; ++c) {
        double diff = gt.at(x, y, c) - pred.at(x, y, c);
        r.value += std::abs(diff) * inv_n;
        r.grad.at(x, y, c) = diff > 0 ? -inv_n : (diff < 0 ? inv_n : 0.0);
      }
    }
  return r;
}

inline double total_loss(double c, double s, double d, const LossWeights& w) {
  return w.lambda_c * c + w.lambda_s * s + w.lambda_d * d;
}

// ---------------------------------------------------------------------------
// Adam

struct AdamState {
  double lr = 1e-3;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  int64_t step = 0;
  std::vector<double> m, v;

  explicit AdamState(double learning_rate = 1e-3) : lr(learning_rate) {}

  void reset(size_t n) {
    step = 0;
    m.assign(n, 0.0);
    v.assign(n, 0.0);
  }
};

// One Adam update in place. Resizes moment buffers on the first call (or
// after a parameter-block shape change, e.g. a resample).
inline void adam_step(std::vector<double>* params, const std::vector<double>& grad,
                      AdamState* state, const std::string& block_name = "") {
  if (params->size() != grad.size())
    throw std::runtime_error("adam_step: shape mismatch in block '" + block_name + "'");
  for (double g : grad)
    if (!std::isfinite(g))
      throw std::runtime_error("adam_step: non-finite gradient in block '" + block_name + "'");
  if (state->m.size() != params->size()) state->reset(params->size());

  state->step++;
  double bc1 = 1.0 - std::pow(state->beta1, double(state->step));
  double bc2 = 1.0 - std::pow(state->beta2, double(state->step));
  for (size_t i = 0; i < params->size(); ++i) {
    state->m[i] = state->beta1 * state->m[i] + (1.0 - state->beta1) * grad[i];
    state->v[i] = state->beta2 * state->v[i] + (1.0 - state->beta2) * grad[i] * grad[i];
    double mhat = state->m[i] / bc1;
    double vhat = state->v[i] / bc2;
    (*params)[i] -= state->lr * mhat / (std::sqrt(vhat) + state->eps);
  }
}

}  // namespace meshforge
