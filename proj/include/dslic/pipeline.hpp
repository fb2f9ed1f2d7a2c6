#pragma once

#include <chrono>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "dslic/error.hpp"
#include "dslic/format.hpp"
#include "dslic/image.hpp"
#include "dslic/losses.hpp"
#include "dslic/optimizer.hpp"
#include "dslic/rng.hpp"
#include "dslic/slic.hpp"
#include "dslic/slic_grad.hpp"
#include "dslic/surrogate.hpp"
#include "dslic/transforms.hpp"

// The patch training loop: random-noise init, per-step dynamic SLIC
// clustering, EOT compositing into scene fixtures, surrogate objectness,
// total loss, backprop through the composite chain and through SLIC to raw
// patch space, AMSGrad update with plateau scheduling. The published
// artifact is the clustered patch, which is piecewise constant over its
// final superpixels.

namespace dslic {

struct TrainConfig {
  SlicConfig slic{256, 0.1, 10, 1e-6, 0};
  double alpha = 2.5;   // TV weight; 0 disables the TV term
  double lr = 0.03;
  int epochs = 200;
  int batch = 0;        // scenes per optimizer step; 0 = all scenes
  EotParams eot;
  SchedulerConfig scheduler;
  int patch_h = 64;
  int patch_w = 64;
  std::uint64_t seed = 0;
  std::uint64_t victim_seed = 17;  // default surrogate weights
  bool warm_start = false;         // reuse previous centroids between steps

  void validate() const {
    if (alpha < 0) throw InvalidArgument("train: alpha must be >= 0");
    if (lr < 0) throw InvalidArgument("train: lr must be >= 0");
    if (epochs < 1) throw InvalidArgument("train: epochs must be >= 1");
    if (batch < 0) throw InvalidArgument("train: batch must be >= 0");
    if (patch_h < 1 || patch_w < 1)
      throw InvalidArgument("train: patch dimensions must be >= 1");
    slic.validate(patch_h * patch_w);
    eot.validate();
    scheduler.validate();
  }
};

struct EpochStats {
  double loss = 0.0;
  double l_obj = 0.0;
  double l_tv = 0.0;
  double lr = 0.0;
};

struct TrainReport {
  std::vector<EpochStats> epochs;
  Image patch_raw;        // raw pixel values C
  Image patch_clustered;  // the deployable artifact, C-hat
  OptimizerState optimizer;
  double wall_seconds = 0.0;
};

inline Image init_random_patch(int h, int w, std::uint64_t seed) {
  Image img(h, w);
  Rng rng(mix_seed(seed));
  for (double& v : img.data) v = rng.uniform();
  return img;
}

namespace detail {

struct StepResult {
  double l_obj = 0.0;
  Image grad_chat;  // objectness gradient w.r.t. the clustered patch
};

// Forward + backward over one batch of scenes: EOT transforms drawn
// sequentially from `rng`, one per (sample, box); returns the mean max
// objectness and its gradient in clustered-patch space.
inline StepResult objectness_pass(const std::vector<SceneSpec>& scenes,
                                  std::size_t first, std::size_t count,
                                  const Image& chat,
                                  const SurrogateDetector& det,
                                  const EotParams& eot, Rng& rng,
                                  bool with_grad) {
  StepResult res;
  res.grad_chat = Image(chat.height, chat.width);
  const int n_total = static_cast<int>(count) * eot.samples_per_scene;
  for (std::size_t s = 0; s < count; ++s) {
    const SceneSpec& scene = scenes[first + s];
    for (int smp = 0; smp < eot.samples_per_scene; ++smp) {
      std::vector<TransformSample> per_box;
      per_box.reserve(scene.boxes.size());
      for (std::size_t b = 0; b < scene.boxes.size(); ++b)
        per_box.push_back(draw_transform(eot, rng));
      const AppliedPatch applied =
          composite_scene(scene, chat, per_box, eot);
      const ScoreGrid scores = det.score_map(applied.composited);
      const ObjectnessLoss obj = objectness_loss(scores);
      res.l_obj += obj.value;
      if (with_grad) {
        const Image g_scene = det.backward(applied.composited, obj.grad);
        const Image g_chat =
            backward_to_patch(applied, g_scene, chat.height, chat.width);
        for (std::size_t i = 0; i < res.grad_chat.data.size(); ++i)
          res.grad_chat.data[i] += g_chat.data[i] / n_total;
      }
    }
  }
  res.l_obj /= n_total;
  return res;
}

}  // namespace detail

// Mean max-objectness of a fixed patch under a frozen set of EOT draws.
// Shares the forward path with training so initial/final comparisons are
// apples-to-apples.
inline double evaluate_objectness(const std::vector<SceneSpec>& scenes,
                                  const Image& patch_clustered,
                                  const EotParams& eot,
                                  const SurrogateDetector& det,
                                  std::uint64_t eval_seed) {
  if (scenes.empty()) throw InvalidArgument("evaluate: no scenes");
  Rng rng(derive_seed(eval_seed, 0x45564131ULL));
  const auto res = detail::objectness_pass(
      scenes, 0, scenes.size(), patch_clustered, det, eot, rng, false);
  return res.l_obj;
}

inline TrainReport train_patch(const std::vector<SceneSpec>& scenes,
                               const TrainConfig& cfg) {
  if (scenes.empty()) throw InvalidArgument("train: no scenes");
  cfg.validate();
  const auto t0 = std::chrono::steady_clock::now();

  const SurrogateDetector det(cfg.victim_seed);
  Image patch = init_random_patch(cfg.patch_h, cfg.patch_w,
                                  derive_seed(cfg.seed, 0x50415443ULL));
  OptimizerState opt =
      make_optimizer(patch.data.size(), cfg.lr, cfg.scheduler);
  const std::uint64_t eot_base =
      derive_seed(cfg.seed, cfg.eot.seed ^ 0x454F5431ULL);
  const std::size_t batch = cfg.batch == 0
                                ? scenes.size()
                                : std::min<std::size_t>(
                                      static_cast<std::size_t>(cfg.batch),
                                      scenes.size());

  TrainReport report;
  report.epochs.reserve(static_cast<std::size_t>(cfg.epochs));
  ClusterState prev_state;
  bool have_prev = false;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng eot_rng(derive_seed(eot_base, static_cast<std::uint64_t>(epoch)));
    EpochStats stats;
    stats.lr = opt.lr;
    int n_steps = 0;

    for (std::size_t first = 0; first < scenes.size(); first += batch) {
      const std::size_t count = std::min(batch, scenes.size() - first);

      // (1) dynamic clustering of the current raw patch
      const ClusterState state =
          cfg.warm_start && have_prev
              ? run_slic_warm(patch, prev_state, cfg.slic)
              : run_slic(patch, cfg.slic);
      if (cfg.warm_start) {
        prev_state = state;
        have_prev = true;
      }
      const Image chat = reconstruct(patch, state);
      const JacobianFactors factors = factors_from(state);

      // (2) EOT + composite + surrogate objectness, with gradients
      const detail::StepResult obj_pass = detail::objectness_pass(
          scenes, first, count, chat, det, cfg.eot, eot_rng, true);
      const LossValue obj{obj_pass.l_obj, obj_pass.grad_chat};

      // (3) TV on the clustered patch, total loss, backprop through SLIC
      const LossValue tv = tv_loss(chat);
      const LossValue total = total_loss(chat, tv, obj, cfg.alpha);
      const Image grad_patch = apply_vjp(factors, total.grad);

      // (4) AMSGrad update on the raw patch, then clamp to [0,1]
      amsgrad_step(opt, grad_patch.data, patch.data);
      clamp01_inplace(patch);

      stats.loss += total.value;
      stats.l_obj += obj.value;
      stats.l_tv += tv.value;
      ++n_steps;
    }

    stats.loss /= n_steps;
    stats.l_obj /= n_steps;
    stats.l_tv /= n_steps;
    scheduler_update(opt, stats.loss);
    report.epochs.push_back(stats);
  }

  const ClusterState final_state = run_slic(patch, cfg.slic);
  report.patch_clustered = reconstruct(patch, final_state);
  report.patch_raw = std::move(patch);
  report.optimizer = std::move(opt);
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  return report;
}

inline void write_train_trace_csv(std::ostream& os, const TrainReport& r) {
  os << "epoch,loss,l_obj,l_tv,lr\n";
  for (std::size_t e = 0; e < r.epochs.size(); ++e) {
    const EpochStats& s = r.epochs[e];
    os << e << ',' << detail::fmt_double(s.loss) << ','
       << detail::fmt_double(s.l_obj) << ',' << detail::fmt_double(s.l_tv)
       << ',' << detail::fmt_double(s.lr) << '\n';
  }
}

// ---- Checkpoints ----
//
// Binary blob, versioned header "DSLIC1": the raw patch at full precision
// plus the optimizer state, native little-endian doubles. The companion
// deployable artifact is written separately as PPM.

namespace detail {

template <typename T>
inline void put_raw(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
inline void get_raw(std::istream& is, T& v) {
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
}

inline void put_vec(std::ostream& os, const std::vector<double>& v) {
  put_raw(os, static_cast<std::uint64_t>(v.size()));
  os.write(reinterpret_cast<const char*>(v.data()),
           static_cast<std::streamsize>(v.size() * sizeof(double)));
}

inline void get_vec(std::istream& is, std::vector<double>& v) {
  std::uint64_t n = 0;
  get_raw(is, n);
  if (n > (1ULL << 32)) throw IoError("checkpoint: implausible vector size");
  v.resize(static_cast<std::size_t>(n));
  is.read(reinterpret_cast<char*>(v.data()),
          static_cast<std::streamsize>(n * sizeof(double)));
}

}  // namespace detail

inline void save_checkpoint(const std::string& path, const Image& patch_raw,
                            const OptimizerState& opt) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open checkpoint for writing: " + path);
  os.write("DSLIC1", 6);
  detail::put_raw(os, static_cast<std::int32_t>(patch_raw.height));
  detail::put_raw(os, static_cast<std::int32_t>(patch_raw.width));
  detail::put_vec(os, patch_raw.data);
  detail::put_raw(os, static_cast<std::int64_t>(opt.step_count));
  detail::put_raw(os, opt.lr);
  detail::put_raw(os, opt.best_loss);
  detail::put_raw(os, static_cast<std::int32_t>(opt.stall));
  detail::put_vec(os, opt.m);
  detail::put_vec(os, opt.v);
  detail::put_vec(os, opt.v_hat);
  if (!os) throw IoError("checkpoint write failed: " + path);
}

inline std::pair<Image, OptimizerState> load_checkpoint(
    const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open checkpoint: " + path);
  char magic[6];
  is.read(magic, 6);
  if (!is || std::memcmp(magic, "DSLIC1", 6) != 0)
    throw IoError("checkpoint: bad magic (want DSLIC1): " + path);
  std::int32_t h = 0, w = 0;
  detail::get_raw(is, h);
  detail::get_raw(is, w);
  if (h < 1 || w < 1) throw IoError("checkpoint: bad dimensions");
  Image patch(h, w);
  detail::get_vec(is, patch.data);
  if (patch.data.size() != static_cast<std::size_t>(h) * w * 3)
    throw IoError("checkpoint: patch size mismatch");
  OptimizerState opt;
  std::int64_t steps = 0;
  detail::get_raw(is, steps);
  opt.step_count = static_cast<long>(steps);
  detail::get_raw(is, opt.lr);
  detail::get_raw(is, opt.best_loss);
  std::int32_t stall = 0;
  detail::get_raw(is, stall);
  opt.stall = stall;
  detail::get_vec(is, opt.m);
  detail::get_vec(is, opt.v);
  detail::get_vec(is, opt.v_hat);
  if (!is) throw IoError("checkpoint: truncated file: " + path);
  return {std::move(patch), std::move(opt)};
}

}  // namespace dslic
