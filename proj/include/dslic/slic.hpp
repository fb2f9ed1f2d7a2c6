#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <ostream>
#include <vector>

#include "dslic/error.hpp"
#include "dslic/format.hpp"
#include "dslic/image.hpp"

// Forward SLIC over joint (space, color) features. Assignment and the
// objective use the weighted squared distance
//
//   d2(x, mu) = sum_q (w_q * (x_q - mu_q))^2,   w = [omega, omega, 1, 1, 1]
//
// i.e. the spatial sensitivity is applied before squaring. Centroid update
// is the stationarity condition of that objective: the plain per-cluster
// mean of the assigned feature rows.

namespace dslic {

struct SlicConfig {
  int k = 256;
  double omega = 0.1;    // spatial sensitivity; larger = more compact clusters
  int max_iters = 10;
  double tol = 1e-6;     // stop when the objective decrease falls below this
  std::uint64_t seed = 0;  // reserved for stochastic variants; grid init is deterministic

  void validate(int n_pixels) const {
    if (k < 1) throw InvalidArgument("slic: k must be >= 1");
    if (k > n_pixels) throw InvalidArgument("slic: k exceeds pixel count");
    if (omega < 0) throw InvalidArgument("slic: omega must be >= 0");
    if (max_iters < 1) throw InvalidArgument("slic: max_iters must be >= 1");
    if (tol < 0) throw InvalidArgument("slic: tol must be >= 0");
  }
};

struct ClusterState {
  std::vector<double> centroids;  // K x 5 rows [x, y, r, g, b]
  std::vector<int> assignment;    // N, cluster index per pixel
  std::vector<int> sizes;         // K, pixels per cluster
  double objective = 0.0;         // weighted objective for (X, M, A)
  double omega = 0.0;             // spatial weight this state was built with

  int k() const { return static_cast<int>(sizes.size()); }

  const double* centroid(int j) const {
    return centroids.data() + static_cast<std::size_t>(j) * 5;
  }
  double* centroid(int j) {
    return centroids.data() + static_cast<std::size_t>(j) * 5;
  }
};

namespace detail {

inline double weighted_dist2(const double* x, const double* mu, double omega) {
  const double dx = omega * (x[0] - mu[0]);
  const double dy = omega * (x[1] - mu[1]);
  const double dr = x[2] - mu[2];
  const double dg = x[3] - mu[3];
  const double db = x[4] - mu[4];
  return dx * dx + dy * dy + dr * dr + dg * dg + db * db;
}

inline int nearest_centroid(const double* x, const ClusterState& s) {
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (int j = 0; j < s.k(); ++j) {
    const double d = weighted_dist2(x, s.centroid(j), s.omega);
    if (d < best_d) {  // strict: ties keep the lowest index
      best_d = d;
      best = j;
    }
  }
  return best;
}

inline double objective_of(const FeatureMatrix& f, const ClusterState& s) {
  double o = 0.0;
  for (int i = 0; i < f.count(); ++i)
    o += weighted_dist2(f.row(i), s.centroid(s.assignment[i]), s.omega);
  return o;
}

inline void assign_pass(const FeatureMatrix& f, ClusterState& s) {
  for (int i = 0; i < f.count(); ++i)
    s.assignment[i] = nearest_centroid(f.row(i), s);
  s.sizes.assign(static_cast<std::size_t>(s.k()), 0);
  for (int a : s.assignment) ++s.sizes[a];
}

// Worst-represented pixel among clusters that can spare one. Ties resolve
// to the lowest pixel index.
inline int worst_pixel(const FeatureMatrix& f, const ClusterState& s) {
  int pick = -1;
  double pick_d = -1.0;
  for (int i = 0; i < f.count(); ++i) {
    if (s.sizes[s.assignment[i]] < 2) continue;
    const double d = weighted_dist2(f.row(i), s.centroid(s.assignment[i]), s.omega);
    if (d > pick_d) {
      pick_d = d;
      pick = i;
    }
  }
  return pick;
}

// Empty-cluster repair: reseed each empty cluster at the pixel farthest from
// its current centroid, then rerun the assignment pass. The inverse cluster
// sizes must stay finite, so this never returns with an empty cluster; if
// exact distance ties keep stealing the reseeded pixel back, the final round
// pins the pixel explicitly.
inline void repair_empty_clusters(const FeatureMatrix& f, ClusterState& s) {
  constexpr int kRounds = 8;
  for (int round = 0; round < kRounds; ++round) {
    bool any_empty = false;
    for (int j = 0; j < s.k(); ++j) {
      if (s.sizes[j] != 0) continue;
      any_empty = true;
      const int i = worst_pixel(f, s);
      if (i < 0) throw InvalidArgument("slic: cannot repair empty cluster");
      for (int q = 0; q < 5; ++q) s.centroid(j)[q] = f.row(i)[q];
      --s.sizes[s.assignment[i]];
      s.assignment[i] = j;
      ++s.sizes[j];
    }
    if (!any_empty) return;
    if (round + 1 < kRounds) assign_pass(f, s);
  }
  // Degenerate ties: keep the pinned assignments from the last round.
}

}  // namespace detail

// Places K centroids on a regular grid with spacing ~ sqrt(N/K). The spatial
// part keeps the exact (fractional) grid position; the color part copies the
// nearest pixel. Ends with one assignment pass so the returned state already
// satisfies every ClusterState invariant.
inline ClusterState init_centroids(const FeatureMatrix& f,
                                   const SlicConfig& cfg) {
  const int n = f.count();
  cfg.validate(n);
  const int w = f.width, h = f.height;

  // Grid dimensioned to the image aspect so cells stay near-square; of the
  // two integer candidates the one with the squarer cell wins, wider grid on
  // ties.
  const double ideal = std::sqrt(static_cast<double>(cfg.k) * w / std::max(h, 1));
  int gx = 1, gy = cfg.k;
  double best_score = std::numeric_limits<double>::infinity();
  for (int cand : {static_cast<int>(std::floor(ideal)),
                   static_cast<int>(std::ceil(ideal))}) {
    const int cx = std::clamp(cand, 1, std::min(w, cfg.k));
    int cy = (cfg.k + cx - 1) / cx;
    if (cy > h) continue;
    const double score =
        std::abs(std::log((static_cast<double>(w) / cx) / (static_cast<double>(h) / cy)));
    if (score < best_score || (score == best_score && cx > gx)) {
      best_score = score;
      gx = cx;
      gy = cy;
    }
  }
  if (gy > h) {  // both candidates overflowed vertically; k <= N keeps this solvable
    gy = h;
    gx = std::min((cfg.k + gy - 1) / gy, w);
  }

  ClusterState s;
  s.omega = cfg.omega;
  s.centroids.resize(static_cast<std::size_t>(cfg.k) * 5);
  s.assignment.assign(static_cast<std::size_t>(n), 0);
  s.sizes.assign(static_cast<std::size_t>(cfg.k), 0);

  for (int j = 0; j < cfg.k; ++j) {
    const int gr = j / gx, gc = j % gx;
    const double cx = (gc + 0.5) * w / gx - 0.5;
    const double cy = (gr + 0.5) * h / gy - 0.5;
    const int px = std::clamp(static_cast<int>(std::lround(cx)), 0, w - 1);
    const int py = std::clamp(static_cast<int>(std::lround(cy)), 0, h - 1);
    const double* nearest = f.row(py * w + px);
    double* mu = s.centroid(j);
    mu[0] = cx;
    mu[1] = cy;
    mu[2] = nearest[2];
    mu[3] = nearest[3];
    mu[4] = nearest[4];
  }

  detail::assign_pass(f, s);
  detail::repair_empty_clusters(f, s);
  s.objective = detail::objective_of(f, s);
  return s;
}

// Reassigns every pixel to its nearest centroid under the weighted metric,
// repairs empty clusters, and recomputes sizes and the objective.
inline ClusterState assign(const FeatureMatrix& f, const ClusterState& state,
                           const SlicConfig& cfg) {
  if (state.k() < 1) throw InvalidArgument("slic: state has no centroids");
  ClusterState s = state;
  s.omega = cfg.omega;
  s.assignment.assign(static_cast<std::size_t>(f.count()), 0);
  detail::assign_pass(f, s);
  detail::repair_empty_clusters(f, s);
  s.objective = detail::objective_of(f, s);
  return s;
}

// Moves each centroid to the mean of its assigned feature rows (the
// stationarity condition of the objective) and recomputes the objective for
// the unchanged assignment.
inline ClusterState update_centroids(const FeatureMatrix& f,
                                     const ClusterState& state) {
  ClusterState s = state;
  for (int j = 0; j < s.k(); ++j)
    if (s.sizes[j] == 0)
      throw InvalidArgument("slic: update_centroids requires nonempty clusters");

  std::vector<double> sums(static_cast<std::size_t>(s.k()) * 5, 0.0);
  for (int i = 0; i < f.count(); ++i) {
    const double* x = f.row(i);
    double* acc = sums.data() + static_cast<std::size_t>(s.assignment[i]) * 5;
    for (int q = 0; q < 5; ++q) acc[q] += x[q];
  }
  for (int j = 0; j < s.k(); ++j) {
    double* mu = s.centroid(j);
    const double inv = 1.0 / s.sizes[j];
    for (int q = 0; q < 5; ++q) mu[q] = sums[static_cast<std::size_t>(j) * 5 + q] * inv;
    // Color means of [0,1] data stay in [0,1]; the clamp only strips
    // floating-point dust.
    for (int q = 2; q < 5; ++q) mu[q] = std::clamp(mu[q], 0.0, 1.0);
  }
  s.objective = detail::objective_of(f, s);
  return s;
}

// Alternates update/assign until the objective decrease falls below tol or
// max_iters is reached. The objective sequence never increases. A final
// centroid update leaves the returned state stationary for its assignment
// (centroids are exactly the per-cluster means), which the backward pass and
// the reconstruction identity assume.
inline ClusterState run_slic(const Image& img, const SlicConfig& cfg) {
  const FeatureMatrix f = to_features(img);
  ClusterState s = init_centroids(f, cfg);
  for (int it = 0; it < cfg.max_iters; ++it) {
    const double prev = s.objective;
    s = update_centroids(f, s);
    s = assign(f, s, cfg);
    if (prev - s.objective < cfg.tol) break;
  }
  return update_centroids(f, s);
}

// Continues iterating from an existing state (warm start across optimizer
// steps). The state must have been built for the same image dimensions.
inline ClusterState run_slic_warm(const Image& img, const ClusterState& prev,
                                  const SlicConfig& cfg) {
  const FeatureMatrix f = to_features(img);
  cfg.validate(f.count());
  if (prev.k() != cfg.k ||
      prev.assignment.size() != static_cast<std::size_t>(f.count()))
    throw InvalidArgument("slic: warm-start state does not match config");
  ClusterState s = assign(f, prev, cfg);
  for (int it = 0; it < cfg.max_iters; ++it) {
    const double before = s.objective;
    s = update_centroids(f, s);
    s = assign(f, s, cfg);
    if (before - s.objective < cfg.tol) break;
  }
  return update_centroids(f, s);
}

// Clustered reconstruction: every pixel takes its cluster's mean color.
inline Image reconstruct(const Image& img, const ClusterState& state) {
  if (state.assignment.size() != static_cast<std::size_t>(img.pixels()))
    throw InvalidArgument("slic: state does not match image dimensions");
  Image out(img.height, img.width);
  for (int i = 0; i < img.pixels(); ++i) {
    const double* mu = state.centroid(state.assignment[i]);
    out.data[static_cast<std::size_t>(i) * 3 + 0] = mu[2];
    out.data[static_cast<std::size_t>(i) * 3 + 1] = mu[3];
    out.data[static_cast<std::size_t>(i) * 3 + 2] = mu[4];
  }
  return out;
}

inline void write_assignment_csv(std::ostream& os, const ClusterState& s) {
  os << "pixel_index,cluster_index\n";
  for (std::size_t i = 0; i < s.assignment.size(); ++i)
    os << i << ',' << s.assignment[i] << '\n';
}

inline void write_centroids_csv(std::ostream& os, const ClusterState& s) {
  os << "cluster,px,py,r,g,b\n";
  for (int j = 0; j < s.k(); ++j) {
    const double* mu = s.centroid(j);
    os << j;
    for (int q = 0; q < 5; ++q) os << ',' << detail::fmt_double(mu[q]);
    os << '\n';
  }
}

}  // namespace dslic
