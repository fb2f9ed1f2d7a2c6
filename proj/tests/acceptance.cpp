// Acceptance suite: every primary criterion runs at its pinned tolerance and
// prints one PASS/FAIL line. The process exits nonzero when any criterion
// fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <string>
#include <vector>

#include "dslic/config.hpp"
#include "dslic/losses.hpp"
#include "dslic/optimizer.hpp"
#include "dslic/pipeline.hpp"
#include "dslic/slic.hpp"
#include "dslic/slic_grad.hpp"
#include "dslic/surrogate.hpp"
#include "dslic/sweep.hpp"
#include "dslic/transforms.hpp"

using namespace dslic;

namespace {

int g_failures = 0;

class Timer {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                         start_)
        .count();
  }

 private:
  std::chrono::steady_clock::time_point start_ =
      std::chrono::steady_clock::now();
};

void report(int id, const std::string& name, bool ok,
            const std::string& detail) {
  std::printf("%s %d %s (%s)\n", ok ? "PASS" : "FAIL", id, name.c_str(),
              detail.c_str());
  std::fflush(stdout);
  if (!ok) ++g_failures;
}

Image random_image(int h, int w, std::uint64_t seed) {
  Image img(h, w);
  Rng rng(seed);
  for (double& v : img.data) v = rng.uniform();
  return img;
}

Image random_gradient(int h, int w, std::uint64_t seed) {
  Image g(h, w);
  Rng rng(seed);
  for (double& v : g.data) v = rng.uniform(-1, 1);
  return g;
}

// Procedural photo-like fixture: smooth background plus soft blobs.
Image make_photo(int h, int w, std::uint64_t seed) {
  Image img(h, w);
  Rng rng(seed);
  struct Blob {
    double cx, cy, r, col[3];
  };
  std::vector<Blob> blobs;
  for (int b = 0; b < 6; ++b) {
    Blob bl;
    bl.cx = rng.uniform(0.1, 0.9) * w;
    bl.cy = rng.uniform(0.1, 0.9) * h;
    bl.r = rng.uniform(0.1, 0.35) * std::min(h, w);
    for (double& c : bl.col) c = rng.uniform(0.1, 0.9);
    blobs.push_back(bl);
  }
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double col[3] = {0.5 + 0.3 * x / w, 0.4 + 0.2 * y / h, 0.45};
      for (const auto& bl : blobs) {
        const double d2 =
            (x - bl.cx) * (x - bl.cx) + (y - bl.cy) * (y - bl.cy);
        const double wgt = std::exp(-d2 / (bl.r * bl.r));
        for (int c = 0; c < 3; ++c)
          col[c] = (1 - wgt) * col[c] + wgt * bl.col[c];
      }
      for (int c = 0; c < 3; ++c)
        img.at(x, y, c) = std::clamp(col[c], 0.0, 1.0);
    }
  return img;
}

// ---- criterion 1 ----
void criterion_1() {
  Timer timer;
  double worst_rel = 0.0;
  double worst_excluded_frac = 0.0;
  int min_non_excluded = 1 << 30;
  bool ok = true;
  for (const int k : {4, 9, 25}) {
    const Image img = random_image(16, 16, 1000 + k);
    const Image target = random_image(16, 16, 2000 + k);
    SlicConfig cfg;
    cfg.k = k;
    cfg.omega = 0.5;
    for (const bool with_target : {false, true}) {
      const GradCheckReport r =
          grad_check(img, cfg, 96, 1e-5, with_target ? &target : nullptr,
                     3000 + k + with_target);
      worst_rel = std::max(worst_rel, r.max_rel_err);
      worst_excluded_frac =
          std::max(worst_excluded_frac,
                   static_cast<double>(r.n_excluded) / r.probes.size());
      min_non_excluded = std::min(min_non_excluded, r.non_excluded());
    }
  }
  const double secs = timer.seconds();
  ok = worst_rel <= 1e-4 && min_non_excluded >= 64 &&
       worst_excluded_frac <= 0.25 && secs < 10.0;
  char detail[160];
  std::snprintf(detail, sizeof(detail),
                "K in {4,9,25}, max_rel_err=%.2e, min_non_excluded=%d, "
                "max_excluded=%.1f%%, t=%.1fs",
                worst_rel, min_non_excluded, 100 * worst_excluded_frac, secs);
  report(1, "ift-gradient-correctness", ok, detail);
}

// ---- criterion 2 ----
void criterion_2() {
  Timer timer;
  double worst_idem = 0, worst_sym = 0, worst_ones = 0, worst_dense = 0;
  for (int draw = 0; draw < 100; ++draw) {
    const Image img = random_image(8, 8, 5000 + draw);
    SlicConfig cfg;
    cfg.k = 1 + draw % 16;
    cfg.omega = (draw % 3 == 0) ? 0.1 : (draw % 3 == 1 ? 1.0 : 10.0);
    const ClusterState s = run_slic(img, cfg);
    const JacobianFactors f = factors_from(s);

    const Image g = random_gradient(8, 8, 6000 + draw);
    const Image h = random_gradient(8, 8, 7000 + draw);
    const Image pg = apply_vjp(f, g);

    for (std::size_t i = 0; i < pg.data.size(); ++i)
      worst_idem = std::max(
          worst_idem, std::abs(apply_vjp(f, pg).data[i] - pg.data[i]));

    double pg_h = 0, g_ph = 0;
    const Image ph = apply_vjp(f, h);
    for (std::size_t i = 0; i < pg.data.size(); ++i) {
      pg_h += pg.data[i] * h.data[i];
      g_ph += g.data[i] * ph.data[i];
    }
    worst_sym = std::max(worst_sym, std::abs(pg_h - g_ph));

    const Image ones(8, 8, 1.0);
    const Image pones = apply_vjp(f, ones);
    for (double v : pones.data)
      worst_ones = std::max(worst_ones, std::abs(v - 1.0));

    // dense N x N oracle (N = 64)
    const int n = 64;
    std::vector<double> dense(static_cast<std::size_t>(n) * n, 0.0);
    for (int i = 0; i < n; ++i)
      for (int l = 0; l < n; ++l)
        if (s.assignment[i] == s.assignment[l])
          dense[static_cast<std::size_t>(i) * n + l] =
              1.0 / s.sizes[s.assignment[i]];
    for (int i = 0; i < n; ++i)
      for (int c = 0; c < 3; ++c) {
        double acc = 0;
        for (int l = 0; l < n; ++l)
          acc += dense[static_cast<std::size_t>(i) * n + l] *
                 g.data[static_cast<std::size_t>(l) * 3 + c];
        worst_dense = std::max(
            worst_dense,
            std::abs(acc - pg.data[static_cast<std::size_t>(i) * 3 + c]));
      }
  }
  const double secs = timer.seconds();
  const bool ok = worst_idem <= 1e-12 && worst_sym <= 1e-12 &&
                  worst_ones <= 1e-12 && worst_dense <= 1e-12 && secs < 5.0;
  char detail[200];
  std::snprintf(detail, sizeof(detail),
                "100 draws: idem=%.1e, sym=%.1e, ones=%.1e, dense=%.1e, "
                "t=%.1fs",
                worst_idem, worst_sym, worst_ones, worst_dense, secs);
  report(2, "cluster-mean-operator-identities", ok, detail);
}

// ---- criterion 3 ----
void criterion_3() {
  Timer timer;
  SlicConfig cfg;
  cfg.k = 200;
  cfg.omega = 0.5;
  const Image photo = make_photo(64, 64, 33);
  const Image target = reconstruct(photo, run_slic(photo, cfg));
  const Image start = random_image(64, 64, 44);

  const int steps = 500;
  const double lr = 1.0 * (64 * 64) / 2.0;  // full cluster-mean step
  const auto [trained, trace] = toy_optimize(start, target, cfg, steps, lr);

  const double ratio = trace.loss.back() / trace.loss.front();
  int ma_violations = 0;
  std::vector<double> ma;
  for (int t = 0; t + 50 <= steps; ++t) {
    double m = 0;
    for (int i = t; i < t + 50; ++i) m += trace.loss[i];
    ma.push_back(m / 50);
  }
  for (std::size_t i = 1; i < ma.size(); ++i)
    if (ma[i] > ma[i - 1] + 1e-12) ++ma_violations;

  const double secs = timer.seconds();
  const bool ok = ratio <= 0.05 && ma_violations == 0 && secs < 60.0;
  char detail[160];
  std::snprintf(detail, sizeof(detail),
                "64x64, K=200, 500 steps: final/initial=%.4f, "
                "ma50_violations=%d, t=%.1fs",
                ratio, ma_violations, secs);
  report(3, "pixel-loss-descent-convergence", ok, detail);
}

// ---- criterion 4 ----
void criterion_4() {
  Timer timer;
  double worst_increase = -1e300;
  double worst_rec = 0;
  for (int draw = 0; draw < 50; ++draw) {
    const int h = 8 + draw % 9;
    const int w = 8 + (draw / 2) % 7;
    const Image img = random_image(h, w, 9000 + draw);
    SlicConfig cfg;
    cfg.k = 2 + draw % 14;
    cfg.omega = (draw % 3 == 0) ? 0.1 : (draw % 3 == 1 ? 1.0 : 10.0);
    const FeatureMatrix f = to_features(img);
    ClusterState s = init_centroids(f, cfg);
    double prev = s.objective;
    for (int it = 0; it < 6; ++it) {
      s = update_centroids(f, s);
      worst_increase = std::max(worst_increase, s.objective - prev);
      prev = s.objective;
      s = assign(f, s, cfg);
      worst_increase = std::max(worst_increase, s.objective - prev);
      prev = s.objective;
    }
    // the reconstruction identity holds on the state run_slic returns
    const ClusterState done = run_slic(img, cfg);
    const Image rec = reconstruct(img, done);
    const Image pooled = apply_vjp(factors_from(done), img);
    for (std::size_t i = 0; i < rec.data.size(); ++i)
      worst_rec = std::max(worst_rec, std::abs(rec.data[i] - pooled.data[i]));
  }
  const double secs = timer.seconds();
  const bool ok = worst_increase <= 1e-12 && worst_rec <= 1e-12;
  char detail[160];
  std::snprintf(detail, sizeof(detail),
                "50 images: max objective increase=%.1e, "
                "reconstruct-vs-operator=%.1e, t=%.1fs",
                worst_increase, worst_rec, secs);
  report(4, "slic-monotonicity-and-reconstruction", ok, detail);
}

// ---- criterion 5 ----
void criterion_5() {
  Timer timer;
  double worst_tv = 0, worst_mse = 0;
  Rng rng(11);

  const Image img = random_image(10, 10, 7);
  const LossValue tv = tv_loss(img);
  for (int probe = 0; probe < 100; ++probe) {
    const std::size_t idx = rng.uniform_int(img.data.size());
    Image p = img;
    const double h = 1e-6;
    p.data[idx] = img.data[idx] + h;
    const double plus = tv_loss(p).value;
    p.data[idx] = img.data[idx] - h;
    const double minus = tv_loss(p).value;
    const double numeric = (plus - minus) / (2 * h);
    const double denom =
        std::max({std::abs(tv.grad.data[idx]), std::abs(numeric), 1e-8});
    worst_tv =
        std::max(worst_tv, std::abs(tv.grad.data[idx] - numeric) / denom);
  }

  const Image a = random_image(10, 10, 8);
  const Image b = random_image(10, 10, 9);
  const LossValue mse = mse_loss(a, b);
  for (int probe = 0; probe < 100; ++probe) {
    const std::size_t idx = rng.uniform_int(a.data.size());
    Image p = a;
    const double h = 1e-6;
    p.data[idx] = a.data[idx] + h;
    const double plus = mse_loss(p, b).value;
    p.data[idx] = a.data[idx] - h;
    const double minus = mse_loss(p, b).value;
    const double numeric = (plus - minus) / (2 * h);
    const double denom =
        std::max({std::abs(mse.grad.data[idx]), std::abs(numeric), 1e-8});
    worst_mse =
        std::max(worst_mse, std::abs(mse.grad.data[idx] - numeric) / denom);
  }

  const double tv_const = tv_loss(Image(9, 9, 0.42), 0.0).value;
  const double secs = timer.seconds();
  const bool ok = worst_tv <= 1e-4 && worst_mse <= 1e-4 && tv_const == 0.0;
  char detail[160];
  std::snprintf(detail, sizeof(detail),
                "100 probes each: tv_rel=%.1e, mse_rel=%.1e, "
                "tv(const, exact)=%g, t=%.1fs",
                worst_tv, worst_mse, tv_const, secs);
  report(5, "loss-gradient-finite-differences", ok, detail);
}

// ---- criterion 6 ----
void criterion_6() {
  Timer timer;
  OptimizerState opt = make_optimizer(1, 0.03);
  std::vector<double> x{0.0};
  int steps_used = 2000;
  for (int step = 0; step < 2000; ++step) {
    const std::vector<double> grad{2.0 * (x[0] - 3.0)};
    amsgrad_step(opt, grad, x);
    if (std::abs(x[0] - 3.0) <= 1e-3) {
      steps_used = step + 1;
      break;
    }
  }
  const bool quad_ok = std::abs(x[0] - 3.0) <= 1e-3;

  OptimizerState sched = make_optimizer(1, 0.03);  // patience 50
  int reductions = 0;
  double lr = sched.lr;
  for (int e = 0; e < 52; ++e) {
    scheduler_update(sched, 1.0);
    if (sched.lr != lr) {
      ++reductions;
      lr = sched.lr;
    }
  }
  const bool plateau_ok = reductions == 1;

  OptimizerState improving = make_optimizer(1, 0.03);
  for (int e = 0; e < 300; ++e) scheduler_update(improving, 10.0 - 0.01 * e);
  const bool improving_ok = improving.lr == 0.03;

  const double secs = timer.seconds();
  const bool ok = quad_ok && plateau_ok && improving_ok;
  char detail[200];
  std::snprintf(detail, sizeof(detail),
                "|x-3|=%.2e after %d steps (lr 0.03); plateau reductions in "
                "52 constant epochs=%d; improving-trace lr unchanged=%s, "
                "t=%.1fs",
                std::abs(x[0] - 3.0), steps_used, reductions,
                improving_ok ? "yes" : "no", secs);
  report(6, "amsgrad-and-plateau-scheduler", ok, detail);
}

// ---- criterion 7 ----
void criterion_7() {
  Timer timer;
  std::vector<SceneSpec> scenes;
  for (int s = 0; s < 2; ++s) {
    SceneSpec spec;
    spec.image = Image(96, 96, 0.0);
    spec.boxes.push_back(Box{20.0 + 8 * s, 16.0 + 6 * s, 48, 56});
    spec.name = "scene" + std::to_string(s);
    scenes.push_back(spec);
  }
  TrainConfig cfg;
  cfg.slic.k = 256;
  cfg.slic.omega = 0.1;
  cfg.alpha = 0.0;  // the TV-ablation arm
  cfg.lr = 0.03;
  cfg.epochs = 200;
  cfg.patch_h = cfg.patch_w = 64;
  cfg.eot.patch_scale = 0.6;
  cfg.eot.samples_per_scene = 4;
  cfg.seed = 1;
  cfg.victim_seed = 17;

  const SurrogateDetector det(cfg.victim_seed);
  const Image init = init_random_patch(
      cfg.patch_h, cfg.patch_w, derive_seed(cfg.seed, 0x50415443ULL));
  const Image init_clustered = reconstruct(init, run_slic(init, cfg.slic));
  const std::uint64_t eval_seed = 999;
  const double obj_init =
      evaluate_objectness(scenes, init_clustered, cfg.eot, det, eval_seed);

  const TrainReport rep = train_patch(scenes, cfg);
  const TrainReport rep2 = train_patch(scenes, cfg);

  bool identical = rep.patch_raw.data == rep2.patch_raw.data &&
                   rep.patch_clustered.data == rep2.patch_clustered.data &&
                   rep.epochs.size() == rep2.epochs.size();
  if (identical)
    for (std::size_t e = 0; e < rep.epochs.size(); ++e)
      identical = identical && rep.epochs[e].loss == rep2.epochs[e].loss &&
                  rep.epochs[e].l_obj == rep2.epochs[e].l_obj &&
                  rep.epochs[e].l_tv == rep2.epochs[e].l_tv &&
                  rep.epochs[e].lr == rep2.epochs[e].lr;

  const double obj_final = evaluate_objectness(scenes, rep.patch_clustered,
                                               cfg.eot, det, eval_seed);
  const double trace_ratio =
      rep.epochs.back().l_obj / rep.epochs.front().l_obj;
  const double eval_ratio = obj_final / obj_init;

  const double secs = timer.seconds();
  const bool ok = trace_ratio <= 0.5 && eval_ratio <= 0.5 && identical &&
                  secs < 300.0;
  char detail[240];
  std::snprintf(detail, sizeof(detail),
                "64x64, K=256, 2 scenes, 200 epochs: trace l_obj "
                "final/first=%.3f, frozen-EOT eval final/init=%.3f "
                "(%.4f/%.4f), rerun identical=%s, t=%.0fs",
                trace_ratio, eval_ratio, obj_final, obj_init,
                identical ? "yes" : "no", secs);
  report(7, "end-to-end-desk-training", ok, detail);
}

// ---- criterion 8 ----
void criterion_8() {
  Timer timer;
  // The sweep harness reproduces the experiment's structure: full
  // (K, omega, alpha, seed) grid, fixed seed per point, pinned CSV schema,
  // deterministic reruns. The victim-model results themselves (table AP
  // values, the step rise near K=1000, black-box transfer, physical tests)
  // need the real detector stack and are declared non-reproducible here.
  std::vector<SceneSpec> scenes;
  SceneSpec spec;
  spec.image = Image(32, 32, 0.0);
  spec.boxes.push_back(Box{6, 4, 16, 16});
  spec.name = "s";
  scenes.push_back(spec);

  SweepSpec sweep;
  sweep.k_values = {16, 32};
  sweep.omega_values = {0.1};
  sweep.alpha_values = {0.0, 2.5};
  sweep.seeds = {1};
  sweep.base.patch_h = sweep.base.patch_w = 16;
  sweep.base.epochs = 2;
  sweep.base.eot.samples_per_scene = 1;
  sweep.base.eot.patch_scale = 0.6;

  const auto rows_a = run_sweep(scenes, sweep, 2, false);
  const auto rows_b = run_sweep(scenes, sweep, 1, false);

  std::ostringstream csv_a, csv_b;
  write_sweep_header(csv_a);
  write_sweep_header(csv_b);
  for (const auto& r : rows_a) write_sweep_row(csv_a, r);
  for (const auto& r : rows_b) write_sweep_row(csv_b, r);

  const bool schema_ok =
      csv_a.str().rfind(
          "k,omega,alpha,seed,final_obj,final_tv,final_total,epochs,wall_s\n",
          0) == 0;
  const bool rows_ok = rows_a.size() == 4;
  const bool deterministic = csv_a.str() == csv_b.str();

  const double secs = timer.seconds();
  const bool ok = schema_ok && rows_ok && deterministic;
  char detail[300];
  std::snprintf(
      detail, sizeof(detail),
      "declared out of scope: detector-table AP values, black-box transfer, "
      "the step rise near K=1000, physical-protocol results; sweep structure "
      "verified: grid rows=%zu, schema=%s, rerun-identical=%s, t=%.1fs",
      rows_a.size(), schema_ok ? "ok" : "bad", deterministic ? "yes" : "no",
      secs);
  report(8, "non-reproducible-claims-declared", ok, detail);
}

}  // namespace

int main() {
  std::printf("dslic acceptance suite\n");
  criterion_1();
  criterion_2();
  criterion_3();
  criterion_4();
  criterion_5();
  criterion_6();
  criterion_7();
  criterion_8();
  if (g_failures == 0)
    std::printf("all criteria passed\n");
  else
    std::printf("%d criteria FAILED\n", g_failures);
  return g_failures;
}
