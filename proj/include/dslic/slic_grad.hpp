#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <ostream>
#include <utility>
#include <vector>

#include "dslic/error.hpp"
#include "dslic/format.hpp"
#include "dslic/image.hpp"
#include "dslic/rng.hpp"
#include "dslic/slic.hpp"

// Exact backward pass through SLIC. For a converged clustering with fixed
// assignments, the Implicit Function Theorem collapses the Jacobian of the
// clustered image with respect to the input image to the cluster-mean
// operator
//
//   P = A diag(1/|S_1|, ..., 1/|S_K|) A^T        (per color channel)
//
// P is symmetric and idempotent, so the vector-Jacobian product is P itself:
// within-cluster mean pooling of the upstream gradient. The N x N matrix is
// never materialized; a cluster-sum pass followed by a broadcast runs in
// O(N) time and memory.

namespace dslic {

struct JacobianFactors {
  std::vector<int> assignment;    // N, dense encoding of A
  std::vector<double> inv_sizes;  // K, diagonal of the inverse-size matrix
};

inline JacobianFactors factors_from(const ClusterState& state) {
  JacobianFactors f;
  f.assignment = state.assignment;
  f.inv_sizes.resize(state.sizes.size());
  for (std::size_t j = 0; j < state.sizes.size(); ++j) {
    if (state.sizes[j] <= 0)
      throw InvalidArgument("factors_from: empty cluster (size 0)");
    f.inv_sizes[j] = 1.0 / state.sizes[j];
  }
  return f;
}

// Applies P channelwise: out(i, d) = mean over cluster(i) of upstream(., d).
// The cluster-sum pass runs in ascending pixel order, so results are
// independent of thread count and identical across runs.
inline Image apply_vjp(const JacobianFactors& f, const Image& upstream) {
  const int n = upstream.pixels();
  if (f.assignment.size() != static_cast<std::size_t>(n))
    throw InvalidArgument("apply_vjp: gradient shape does not match factors");
  const int k = static_cast<int>(f.inv_sizes.size());
  std::vector<double> sums(static_cast<std::size_t>(k) * 3, 0.0);
  for (int i = 0; i < n; ++i) {
    const std::size_t j = static_cast<std::size_t>(f.assignment[i]) * 3;
    const std::size_t p = static_cast<std::size_t>(i) * 3;
    sums[j + 0] += upstream.data[p + 0];
    sums[j + 1] += upstream.data[p + 1];
    sums[j + 2] += upstream.data[p + 2];
  }
  Image out(upstream.height, upstream.width);
  for (int i = 0; i < n; ++i) {
    const int j = f.assignment[i];
    const double inv = f.inv_sizes[static_cast<std::size_t>(j)];
    const std::size_t p = static_cast<std::size_t>(i) * 3;
    out.data[p + 0] = sums[static_cast<std::size_t>(j) * 3 + 0] * inv;
    out.data[p + 1] = sums[static_cast<std::size_t>(j) * 3 + 1] * inv;
    out.data[p + 2] = sums[static_cast<std::size_t>(j) * 3 + 2] * inv;
  }
  return out;
}

// ---- Gradient verification against central finite differences ----

struct GradCheckProbe {
  int pixel = 0;
  int channel = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double abs_err = 0.0;
  double rel_err = 0.0;
  bool excluded = false;
};

struct GradCheckReport {
  std::vector<GradCheckProbe> probes;
  int n_excluded = 0;
  double max_abs_err = 0.0;  // over non-excluded probes
  double max_rel_err = 0.0;

  int non_excluded() const {
    return static_cast<int>(probes.size()) - n_excluded;
  }
};

namespace detail {

// Clustered reconstruction of an arbitrary image under a frozen assignment:
// fresh per-cluster means, naive summation. Kept independent of apply_vjp so
// the finite-difference path shares only the assignment with the analytic one.
inline Image reconstruct_frozen(const Image& img,
                                const std::vector<int>& assignment, int k) {
  std::vector<double> sums(static_cast<std::size_t>(k) * 3, 0.0);
  std::vector<int> counts(static_cast<std::size_t>(k), 0);
  for (int i = 0; i < img.pixels(); ++i) {
    const std::size_t j = static_cast<std::size_t>(assignment[i]) * 3;
    const std::size_t p = static_cast<std::size_t>(i) * 3;
    sums[j + 0] += img.data[p + 0];
    sums[j + 1] += img.data[p + 1];
    sums[j + 2] += img.data[p + 2];
    ++counts[assignment[i]];
  }
  Image out(img.height, img.width);
  for (int i = 0; i < img.pixels(); ++i) {
    const int j = assignment[i];
    const std::size_t p = static_cast<std::size_t>(i) * 3;
    for (int d = 0; d < 3; ++d)
      out.data[p + d] = sums[static_cast<std::size_t>(j) * 3 + d] / counts[j];
  }
  return out;
}

}  // namespace detail

// Compares the analytic gradient of a scalar functional s(clustered image)
// against central finite differences with the assignment frozen from the
// unperturbed clustering. Default functional: s = sum of all clustered
// values; with a target supplied: s = mean squared error against it.
//
// A probe is excluded (not an error) when the +/- eps perturbation would move
// the probed pixel to a different cluster under the frozen centroids; the
// fixed-assignment gradient is not the true derivative across such a flip.
// A report where every probe is excluded signals a degenerate input; callers
// surface that condition themselves.
inline GradCheckReport grad_check(const Image& img, const SlicConfig& cfg,
                                  int probes, double eps,
                                  const Image* target = nullptr,
                                  std::uint64_t probe_seed = 1) {
  if (eps <= 0) throw InvalidArgument("grad_check: eps must be > 0");
  if (probes < 1) throw InvalidArgument("grad_check: need at least one probe");
  if (target && !target->same_shape(img))
    throw InvalidArgument("grad_check: target shape mismatch");

  const ClusterState state = run_slic(img, cfg);
  const JacobianFactors factors = factors_from(state);
  const Image clustered = reconstruct(img, state);
  const FeatureMatrix feats = to_features(img);
  const int n = img.pixels();

  // s(plus) - s(minus) accumulated elementwise; differencing two large
  // scalar sums would lose most of the significand to cancellation.
  const auto functional_diff = [&](const Image& plus, const Image& minus) {
    double acc = 0.0;
    if (!target) {
      for (std::size_t i = 0; i < plus.data.size(); ++i)
        acc += plus.data[i] - minus.data[i];
      return acc;
    }
    for (std::size_t i = 0; i < plus.data.size(); ++i) {
      const double dp = plus.data[i] - target->data[i];
      const double dm = minus.data[i] - target->data[i];
      acc += dp * dp - dm * dm;
    }
    return acc / n;
  };

  // Upstream gradient of the functional with respect to the clustered image.
  Image upstream(img.height, img.width, 1.0);
  if (target) {
    for (std::size_t i = 0; i < upstream.data.size(); ++i)
      upstream.data[i] = 2.0 / n * (clustered.data[i] - target->data[i]);
  }
  const Image analytic = apply_vjp(factors, upstream);

  // Distinct probe coordinates in a seeded shuffle order.
  std::vector<int> coords(static_cast<std::size_t>(n) * 3);
  std::iota(coords.begin(), coords.end(), 0);
  Rng rng(probe_seed);
  for (std::size_t i = coords.size(); i > 1; --i)
    std::swap(coords[i - 1], coords[rng.uniform_int(i)]);
  const int n_probes = std::min<int>(probes, static_cast<int>(coords.size()));

  GradCheckReport report;
  report.probes.reserve(static_cast<std::size_t>(n_probes));
  Image perturbed = img;
  for (int p = 0; p < n_probes; ++p) {
    GradCheckProbe probe;
    probe.pixel = coords[p] / 3;
    probe.channel = coords[p] % 3;
    const std::size_t idx = static_cast<std::size_t>(coords[p]);

    // Would either signed perturbation flip this pixel's nearest centroid?
    double x[5];
    std::copy_n(feats.row(probe.pixel), 5, x);
    const double saved = x[2 + probe.channel];
    for (const double sgn : {+1.0, -1.0}) {
      x[2 + probe.channel] = saved + sgn * eps;
      if (detail::nearest_centroid(x, state) != state.assignment[probe.pixel])
        probe.excluded = true;
    }

    probe.analytic = analytic.data[idx];
    if (!probe.excluded) {
      const double orig = perturbed.data[idx];
      perturbed.data[idx] = orig + eps;
      const Image chat_plus =
          detail::reconstruct_frozen(perturbed, state.assignment, state.k());
      perturbed.data[idx] = orig - eps;
      const Image chat_minus =
          detail::reconstruct_frozen(perturbed, state.assignment, state.k());
      perturbed.data[idx] = orig;
      probe.numeric = functional_diff(chat_plus, chat_minus) / (2.0 * eps);
      probe.abs_err = std::abs(probe.analytic - probe.numeric);
      probe.rel_err = probe.abs_err /
                      std::max({std::abs(probe.analytic),
                                std::abs(probe.numeric), 1e-12});
      report.max_abs_err = std::max(report.max_abs_err, probe.abs_err);
      report.max_rel_err = std::max(report.max_rel_err, probe.rel_err);
    } else {
      ++report.n_excluded;
    }
    report.probes.push_back(probe);
  }
  return report;
}

inline void write_gradcheck_csv(std::ostream& os, const GradCheckReport& r) {
  os << "probe_pixel,channel,analytic,numeric,abs_err,rel_err,excluded\n";
  for (const auto& p : r.probes) {
    os << p.pixel << ',' << p.channel << ',' << detail::fmt_double(p.analytic)
       << ',' << detail::fmt_double(p.numeric) << ','
       << detail::fmt_double(p.abs_err) << ',' << detail::fmt_double(p.rel_err)
       << ',' << (p.excluded ? 1 : 0) << '\n';
  }
}

// ---- Pixel-loss descent through SLIC ----

struct ToyTrace {
  std::vector<double> loss;  // loss.size() == steps, value before each update
};

// Called with (step, raw image, clustered image) before every update and once
// more after the final step.
using ToyFrameCallback =
    std::function<void(int step, const Image& raw, const Image& clustered)>;

// Gradient descent on the raw image so that its clustered reconstruction
// approaches the target: per channel the gradient of the pixel loss is
// (2/N) P (clustered - target). The image is reclustered every step (dynamic
// assignments) and clamped to [0,1] after every update.
inline std::pair<Image, ToyTrace> toy_optimize(
    const Image& start, const Image& target, const SlicConfig& cfg, int steps,
    double lr, const ToyFrameCallback& frame_cb = {}) {
  if (!start.same_shape(target))
    throw InvalidArgument("toy_optimize: start/target shape mismatch");
  if (steps < 1) throw InvalidArgument("toy_optimize: steps must be >= 1");

  const int n = start.pixels();
  Image current = start;
  ToyTrace trace;
  trace.loss.reserve(static_cast<std::size_t>(steps));

  for (int step = 0; step < steps; ++step) {
    const ClusterState state = run_slic(current, cfg);
    const Image clustered = reconstruct(current, state);

    double loss = 0.0;
    Image upstream(current.height, current.width);
    for (std::size_t i = 0; i < current.data.size(); ++i) {
      const double d = clustered.data[i] - target.data[i];
      loss += d * d;
      upstream.data[i] = 2.0 / n * d;
    }
    trace.loss.push_back(loss / n);
    if (frame_cb) frame_cb(step, current, clustered);

    const Image grad = apply_vjp(factors_from(state), upstream);
    for (std::size_t i = 0; i < current.data.size(); ++i)
      current.data[i] =
          std::clamp(current.data[i] - lr * grad.data[i], 0.0, 1.0);
  }
  if (frame_cb) {
    const ClusterState state = run_slic(current, cfg);
    frame_cb(steps, current, reconstruct(current, state));
  }
  return {std::move(current), std::move(trace)};
}

inline void write_toy_trace_csv(std::ostream& os, const ToyTrace& t) {
  os << "step,loss\n";
  for (std::size_t i = 0; i < t.loss.size(); ++i)
    os << i << ',' << detail::fmt_double(t.loss[i]) << '\n';
}

}  // namespace dslic
