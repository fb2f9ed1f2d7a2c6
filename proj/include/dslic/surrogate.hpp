#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "dslic/error.hpp"
#include "dslic/image.hpp"
#include "dslic/losses.hpp"
#include "dslic/rng.hpp"

// A fixed, seeded, differentiable objectness head standing in for a real
// detector at desk scale: two 3x3 stride-2 convolution stages with softplus,
// then a pointwise logistic score per cell. Weights are generated from the
// seed (scaled to unit fan-in variance), never loaded from disk, and
// immutable after construction. No claim of fidelity to any real detector
// is made.

namespace dslic {

namespace detail {

inline double softplus(double x) {
  if (x > 30.0) return x;
  if (x < -30.0) return std::exp(x);
  return std::log1p(std::exp(x));
}

inline double logistic(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// Planar buffer: channels * height * width.
struct Planes {
  int ch = 0, h = 0, w = 0;
  std::vector<double> v;
  Planes() = default;
  Planes(int c, int hh, int ww)
      : ch(c), h(hh), w(ww),
        v(static_cast<std::size_t>(c) * hh * ww, 0.0) {}
  double& at(int c, int y, int x) {
    return v[(static_cast<std::size_t>(c) * h + y) * w + x];
  }
  double at(int c, int y, int x) const {
    return v[(static_cast<std::size_t>(c) * h + y) * w + x];
  }
};

}  // namespace detail

class SurrogateDetector {
 public:
  static constexpr int kStride = 4;  // two stride-2 stages
  static constexpr int kHidden = 8;
  // Draws are scaled 3x above unit fan-in variance and the head bias is
  // shifted down: with unit-variance weights the bias chain dominates every
  // cell and patch content barely moves the maximum, leaving nothing for an
  // attack to suppress.
  static constexpr double kWeightGain = 3.0;
  static constexpr double kHeadBiasShift = 3.0;

  explicit SurrogateDetector(std::uint64_t seed) : seed_(seed) {
    Rng rng(mix_seed(seed));
    init_conv(rng, w1_, b1_, 3, kHidden);
    init_conv(rng, w2_, b2_, kHidden, kHidden);
    const double a = kWeightGain * std::sqrt(3.0 / kHidden);
    head_w_.resize(kHidden);
    for (double& w : head_w_) w = rng.uniform(-a, a);
    head_b_ = rng.uniform(-a, a) - kHeadBiasShift;
  }

  std::uint64_t seed() const { return seed_; }

  // Deterministic grid of (0,1) scores, one cell per 4x4 input block.
  // Inputs whose dimensions are not multiples of the stride are zero-padded
  // on the right/bottom edges.
  ScoreGrid score_map(const Image& img) const {
    detail::Planes in = to_planes(img);
    detail::Planes z1 = conv_stride2(in, w1_, b1_, kHidden);
    detail::Planes a1 = softplus_all(z1);
    detail::Planes z2 = conv_stride2(a1, w2_, b2_, kHidden);
    detail::Planes a2 = softplus_all(z2);
    ScoreGrid out(z2.h, z2.w, 1);
    for (int y = 0; y < z2.h; ++y) {
      for (int x = 0; x < z2.w; ++x) {
        double acc = head_b_;
        for (int c = 0; c < kHidden; ++c) acc += head_w_[c] * a2.at(c, y, x);
        out.data[static_cast<std::size_t>(y) * z2.w + x] =
            detail::logistic(acc);
      }
    }
    return out;
  }

  // Exact adjoint of score_map's linearization at img. The forward pass is
  // recomputed internally to obtain the pre-activations.
  Image backward(const Image& img, const ScoreGrid& upstream) const {
    detail::Planes in = to_planes(img);
    detail::Planes z1 = conv_stride2(in, w1_, b1_, kHidden);
    detail::Planes a1 = softplus_all(z1);
    detail::Planes z2 = conv_stride2(a1, w2_, b2_, kHidden);
    detail::Planes a2 = softplus_all(z2);
    if (upstream.height != z2.h || upstream.width != z2.w ||
        upstream.anchors != 1)
      throw InvalidArgument("surrogate backward: upstream shape mismatch");

    // Head: logistic derivative then broadcast over hidden channels.
    detail::Planes g_a2(kHidden, z2.h, z2.w);
    for (int y = 0; y < z2.h; ++y) {
      for (int x = 0; x < z2.w; ++x) {
        double acc = head_b_;
        for (int c = 0; c < kHidden; ++c) acc += head_w_[c] * a2.at(c, y, x);
        const double sig = detail::logistic(acc);
        const double g =
            upstream.data[static_cast<std::size_t>(y) * z2.w + x] * sig *
            (1.0 - sig);
        for (int c = 0; c < kHidden; ++c) g_a2.at(c, y, x) = g * head_w_[c];
      }
    }
    mul_softplus_grad(g_a2, z2);
    detail::Planes g_a1 = conv_stride2_adjoint(g_a2, w2_, a1.ch, a1.h, a1.w);
    mul_softplus_grad(g_a1, z1);
    detail::Planes g_in = conv_stride2_adjoint(g_a1, w1_, in.ch, in.h, in.w);

    Image out(img.height, img.width);
    for (int y = 0; y < img.height; ++y)
      for (int x = 0; x < img.width; ++x)
        for (int c = 0; c < 3; ++c) out.at(x, y, c) = g_in.at(c, y, x);
    return out;
  }

 private:
  static int padded(int n) { return (n + kStride - 1) / kStride * kStride; }

  detail::Planes to_planes(const Image& img) const {
    if (img.pixels() < 1) throw InvalidArgument("surrogate: empty image");
    detail::Planes p(3, padded(img.height), padded(img.width));
    for (int y = 0; y < img.height; ++y)
      for (int x = 0; x < img.width; ++x)
        for (int c = 0; c < 3; ++c) p.at(c, y, x) = img.at(x, y, c);
    return p;
  }

  static void init_conv(Rng& rng, std::vector<double>& w,
                        std::vector<double>& b, int cin, int cout) {
    const double a = kWeightGain * std::sqrt(3.0 / (cin * 9));
    w.resize(static_cast<std::size_t>(cout) * cin * 9);
    for (double& x : w) x = rng.uniform(-a, a);
    b.resize(static_cast<std::size_t>(cout));
    for (double& x : b) x = rng.uniform(-0.5, 0.5);
  }

  // 3x3, stride 2, zero padding 1: out dim = ceil(in/2).
  static detail::Planes conv_stride2(const detail::Planes& in,
                                     const std::vector<double>& w,
                                     const std::vector<double>& b, int cout) {
    const int oh = (in.h - 1) / 2 + 1, ow = (in.w - 1) / 2 + 1;
    detail::Planes out(cout, oh, ow);
    for (int co = 0; co < cout; ++co) {
      for (int oy = 0; oy < oh; ++oy) {
        for (int ox = 0; ox < ow; ++ox) {
          double acc = b[co];
          for (int ci = 0; ci < in.ch; ++ci) {
            const double* wp =
                &w[((static_cast<std::size_t>(co) * in.ch) + ci) * 9];
            for (int ky = 0; ky < 3; ++ky) {
              const int iy = oy * 2 - 1 + ky;
              if (iy < 0 || iy >= in.h) continue;
              for (int kx = 0; kx < 3; ++kx) {
                const int ix = ox * 2 - 1 + kx;
                if (ix < 0 || ix >= in.w) continue;
                acc += wp[ky * 3 + kx] * in.at(ci, iy, ix);
              }
            }
          }
          out.at(co, oy, ox) = acc;
        }
      }
    }
    return out;
  }

  static detail::Planes conv_stride2_adjoint(const detail::Planes& g_out,
                                             const std::vector<double>& w,
                                             int cin, int in_h, int in_w) {
    detail::Planes g_in(cin, in_h, in_w);
    for (int co = 0; co < g_out.ch; ++co) {
      for (int oy = 0; oy < g_out.h; ++oy) {
        for (int ox = 0; ox < g_out.w; ++ox) {
          const double g = g_out.at(co, oy, ox);
          if (g == 0.0) continue;
          for (int ci = 0; ci < cin; ++ci) {
            const double* wp =
                &w[((static_cast<std::size_t>(co) * cin) + ci) * 9];
            for (int ky = 0; ky < 3; ++ky) {
              const int iy = oy * 2 - 1 + ky;
              if (iy < 0 || iy >= in_h) continue;
              for (int kx = 0; kx < 3; ++kx) {
                const int ix = ox * 2 - 1 + kx;
                if (ix < 0 || ix >= in_w) continue;
                g_in.at(ci, iy, ix) += wp[ky * 3 + kx] * g;
              }
            }
          }
        }
      }
    }
    return g_in;
  }

  static detail::Planes softplus_all(const detail::Planes& z) {
    detail::Planes a = z;
    for (double& x : a.v) x = detail::softplus(x);
    return a;
  }

  // g *= softplus'(z) elementwise; softplus' is the logistic.
  static void mul_softplus_grad(detail::Planes& g, const detail::Planes& z) {
    for (std::size_t i = 0; i < g.v.size(); ++i)
      g.v[i] *= detail::logistic(z.v[i]);
  }

  std::uint64_t seed_;
  std::vector<double> w1_, b1_, w2_, b2_;
  std::vector<double> head_w_;
  double head_b_ = 0.0;
};

}  // namespace dslic
