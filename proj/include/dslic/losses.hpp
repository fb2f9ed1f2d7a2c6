#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "dslic/error.hpp"
#include "dslic/image.hpp"

namespace dslic {

// Scalar loss plus its gradient with respect to the patch.
struct LossValue {
  double value = 0.0;
  Image grad;
};

// Dense grid of detector scores, one anchor per (row, col, anchor) cell.
struct ScoreGrid {
  int height = 0;
  int width = 0;
  int anchors = 1;
  std::vector<double> data;  // height * width * anchors

  ScoreGrid() = default;
  ScoreGrid(int h, int w, int a = 1)
      : height(h), width(w), anchors(a),
        data(static_cast<std::size_t>(h) * w * a, 0.0) {}

  std::size_t size() const { return data.size(); }
};

// Max objectness plus its subgradient in score space (1 at the argmax).
struct ObjectnessLoss {
  double value = 0.0;
  ScoreGrid grad;
  std::size_t argmax = 0;
};

// Anisotropic total variation with forward differences, computed per channel
// and summed. A term is emitted only where both forward neighbors exist.
// eps_tv stabilizes the square root so the gradient is defined on flat
// regions; eps_tv = 0 gives the exact value and the zero subgradient at
// kinks.
inline LossValue tv_loss(const Image& patch, double eps_tv = 1e-12) {
  if (patch.pixels() < 1) throw InvalidArgument("tv_loss: empty image");
  LossValue out;
  out.grad = Image(patch.height, patch.width);
  for (int c = 0; c < 3; ++c) {
    for (int y = 0; y + 1 < patch.height; ++y) {
      for (int x = 0; x + 1 < patch.width; ++x) {
        const double here = patch.at(x, y, c);
        const double dx = here - patch.at(x + 1, y, c);
        const double dy = here - patch.at(x, y + 1, c);
        const double r = std::sqrt(dx * dx + dy * dy + eps_tv);
        out.value += r;
        if (r > 0) {
          out.grad.at(x, y, c) += (dx + dy) / r;
          out.grad.at(x + 1, y, c) -= dx / r;
          out.grad.at(x, y + 1, c) -= dy / r;
        }
      }
    }
  }
  return out;
}

// Maximum score over every anchor cell; flat scan order, first occurrence
// wins ties.
inline ObjectnessLoss objectness_loss(const ScoreGrid& scores) {
  if (scores.data.empty()) throw InvalidArgument("objectness_loss: empty score grid");
  std::size_t best = 0;
  for (std::size_t i = 1; i < scores.data.size(); ++i)
    if (scores.data[i] > scores.data[best]) best = i;
  ObjectnessLoss out;
  out.value = scores.data[best];
  out.argmax = best;
  out.grad = ScoreGrid(scores.height, scores.width, scores.anchors);
  out.grad.data[best] = 1.0;
  return out;
}

// Total loss alpha * L_tv + L_obj. Both inputs must already be gradients in
// patch space; each output element is computed as alpha*tv + obj with no
// reassociation.
inline LossValue total_loss(const Image& patch, const LossValue& tv,
                            const LossValue& obj, double alpha) {
  if (!tv.grad.same_shape(patch) || !obj.grad.same_shape(patch))
    throw InvalidArgument("total_loss: component gradient shape mismatch");
  LossValue out;
  out.value = alpha * tv.value + obj.value;
  out.grad = Image(patch.height, patch.width);
  for (std::size_t i = 0; i < out.grad.data.size(); ++i)
    out.grad.data[i] = alpha * tv.grad.data[i] + obj.grad.data[i];
  return out;
}

// Mean squared error normalized by the pixel count (channels summed):
// value = (1/N) sum (clustered - target)^2, grad = (2/N)(clustered - target).
inline LossValue mse_loss(const Image& clustered, const Image& target) {
  if (!clustered.same_shape(target))
    throw InvalidArgument("mse_loss: shape mismatch");
  const int n = clustered.pixels();
  LossValue out;
  out.grad = Image(clustered.height, clustered.width);
  for (std::size_t i = 0; i < clustered.data.size(); ++i) {
    const double d = clustered.data[i] - target.data[i];
    out.value += d * d;
    out.grad.data[i] = 2.0 / n * d;
  }
  out.value /= n;
  return out;
}

}  // namespace dslic
