// dslic: clustering, gradient verification, toy optimization, patch
// training, and the digital sweep, from one binary.
//
// Exit codes (stable for scripting):
//   0 success, 1 usage error, 2 IO error, 3 check failed,
//   4 degenerate gradient check (every probe excluded).

#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "dslic/config.hpp"
#include "dslic/image_io.hpp"
#include "dslic/pipeline.hpp"
#include "dslic/slic.hpp"
#include "dslic/slic_grad.hpp"
#include "dslic/sweep.hpp"

namespace fs = std::filesystem;
using namespace dslic;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitIo = 2;
constexpr int kExitCheckFailed = 3;
constexpr int kExitDegenerate = 4;

struct GlobalOpts {
  std::uint64_t seed = 0;
  int jobs = 1;
  std::string out_dir = ".";
};

fs::path out_path(const GlobalOpts& g, const std::string& name) {
  fs::create_directories(g.out_dir);
  return fs::path(g.out_dir) / name;
}

void write_text_file(const fs::path& path, const std::string& content) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open for writing: " + path.string());
  os << content;
  if (!os) throw IoError("short write: " + path.string());
}

// "HxW" -> Image dims
std::pair<int, int> parse_dims(const std::string& s) {
  const auto x = s.find('x');
  if (x == std::string::npos)
    throw InvalidArgument("expected HxW (e.g. 64x64), got: " + s);
  try {
    const int h = std::stoi(s.substr(0, x));
    const int w = std::stoi(s.substr(x + 1));
    if (h < 1 || w < 1) throw std::invalid_argument(s);
    return {h, w};
  } catch (const std::exception&) {
    throw InvalidArgument("expected HxW (e.g. 64x64), got: " + s);
  }
}

template <typename T, typename Parse>
std::vector<T> parse_list(const std::string& csv, Parse parse) {
  std::vector<T> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    out.push_back(parse(item));
  }
  if (out.empty()) throw InvalidArgument("empty list: " + csv);
  return out;
}

Image random_unit_image(int h, int w, std::uint64_t seed) {
  Image img(h, w);
  Rng rng(mix_seed(seed));
  for (double& v : img.data) v = rng.uniform();
  return img;
}

// ---- cluster ----

struct ClusterArgs {
  std::string input;
  std::string out = "clustered.ppm";
  SlicConfig slic;
};

int cmd_cluster(const GlobalOpts& g, const ClusterArgs& a) {
  const Image img = read_image(a.input);
  SlicConfig cfg = a.slic;
  cfg.seed = g.seed;
  const ClusterState state = run_slic(img, cfg);
  write_image(reconstruct(img, state), out_path(g, a.out).string());

  std::ostringstream assign_csv;
  write_assignment_csv(assign_csv, state);
  write_text_file(out_path(g, "assignment.csv"), assign_csv.str());

  std::ostringstream cent_csv;
  write_centroids_csv(cent_csv, state);
  write_text_file(out_path(g, "centroids.csv"), cent_csv.str());

  std::printf("k=%d omega=%s final_objective=%s\n", state.k(),
              detail::fmt_double(cfg.omega).c_str(),
              detail::fmt_double(state.objective).c_str());
  return kExitOk;
}

// ---- gradcheck ----

struct GradcheckArgs {
  std::string input;
  std::string random_dims;
  std::string target;
  std::string report = "gradcheck.csv";
  SlicConfig slic{9, 0.5, 10, 1e-6, 0};
  int probes = 64;
  double eps = 1e-5;
  double tol = 1e-4;
};

int cmd_gradcheck(const GlobalOpts& g, const GradcheckArgs& a) {
  Image img;
  if (!a.input.empty()) {
    img = read_image(a.input);
  } else if (!a.random_dims.empty()) {
    const auto [h, w] = parse_dims(a.random_dims);
    img = random_unit_image(h, w, g.seed);
  } else {
    throw InvalidArgument("gradcheck: need --input or --random HxW");
  }
  std::optional<Image> target;
  if (!a.target.empty()) target = read_image(a.target);

  SlicConfig cfg = a.slic;
  cfg.seed = g.seed;
  const GradCheckReport report =
      grad_check(img, cfg, a.probes, a.eps, target ? &*target : nullptr,
                 derive_seed(g.seed, 0x6772616443ULL));

  std::ostringstream csv;
  write_gradcheck_csv(csv, report);
  write_text_file(out_path(g, a.report), csv.str());

  std::printf("probes=%zu excluded=%d max_rel_err=%s\n", report.probes.size(),
              report.n_excluded, detail::fmt_double(report.max_rel_err).c_str());
  if (report.non_excluded() == 0) return kExitDegenerate;
  return report.max_rel_err <= a.tol ? kExitOk : kExitCheckFailed;
}

// ---- toy ----

struct ToyArgs {
  std::string start;
  std::string random_dims;
  std::string target;
  std::string trace = "toy_trace.csv";
  std::string frames_dir;
  SlicConfig slic{200, 0.5, 10, 1e-6, 0};
  int steps = 500;
  double lr = 1.0;  // in units of N/2; 1.0 steps cluster means fully
  int frame_every = 25;
  bool cluster_target = false;
};

int cmd_toy(const GlobalOpts& g, const ToyArgs& a) {
  Image target = read_image(a.target);
  SlicConfig cfg = a.slic;
  cfg.seed = g.seed;
  if (a.cluster_target)
    target = reconstruct(target, run_slic(target, cfg));

  Image start;
  if (!a.start.empty()) {
    start = read_image(a.start);
  } else if (!a.random_dims.empty()) {
    const auto [h, w] = parse_dims(a.random_dims);
    start = random_unit_image(h, w, g.seed);
  } else {
    start = random_unit_image(target.height, target.width, g.seed);
  }

  const double lr_raw = a.lr * start.pixels() / 2.0;

  int frames_written = 0;
  ToyFrameCallback cb;
  if (!a.frames_dir.empty()) {
    fs::create_directories(fs::path(g.out_dir) / a.frames_dir);
    cb = [&](int step, const Image&, const Image& clustered) {
      if (step != a.steps && step % a.frame_every != 0) return;
      char name[32];
      std::snprintf(name, sizeof(name), "frame_%06d.ppm", step);
      write_ppm(clustered, (fs::path(g.out_dir) / a.frames_dir / name).string());
      ++frames_written;
    };
  }

  const auto [trained, trace] =
      toy_optimize(start, target, cfg, a.steps, lr_raw, cb);

  std::ostringstream csv;
  write_toy_trace_csv(csv, trace);
  write_text_file(out_path(g, a.trace), csv.str());

  // the four panels: original, target, trained, trained-then-clustered
  write_ppm(start, out_path(g, "original.ppm").string());
  write_ppm(target, out_path(g, "target.ppm").string());
  write_ppm(trained, out_path(g, "trained.ppm").string());
  write_ppm(reconstruct(trained, run_slic(trained, cfg)),
            out_path(g, "trained_clustered.ppm").string());

  std::printf("steps=%d loss_initial=%s loss_final=%s frames_written=%d\n",
              a.steps, detail::fmt_double(trace.loss.front()).c_str(),
              detail::fmt_double(trace.loss.back()).c_str(), frames_written);
  return kExitOk;
}

// ---- train ----

struct TrainArgs {
  std::string scenes_dir;
  std::string config;
  std::optional<int> k;
  std::optional<double> omega;
  std::optional<double> alpha;
  std::optional<double> lr;
  std::optional<int> epochs;
  std::optional<std::string> patch_dims;
  std::optional<std::uint64_t> victim_seed;
};

TrainConfig make_train_config(const GlobalOpts& g, const TrainArgs& a) {
  TrainConfig cfg;
  if (!a.config.empty()) cfg = load_train_config(a.config);
  cfg.seed = g.seed;
  if (a.k) cfg.slic.k = *a.k;
  if (a.omega) cfg.slic.omega = *a.omega;
  if (a.alpha) cfg.alpha = *a.alpha;
  if (a.lr) cfg.lr = *a.lr;
  if (a.epochs) cfg.epochs = *a.epochs;
  if (a.patch_dims) {
    const auto [h, w] = parse_dims(*a.patch_dims);
    cfg.patch_h = h;
    cfg.patch_w = w;
  }
  if (a.victim_seed) cfg.victim_seed = *a.victim_seed;
  return cfg;
}

int cmd_train(const GlobalOpts& g, const TrainArgs& a) {
  const auto scenes = load_scene_dir(a.scenes_dir);
  const TrainConfig cfg = make_train_config(g, a);
  const TrainReport rep = train_patch(scenes, cfg);

  std::ostringstream csv;
  write_train_trace_csv(csv, rep);
  write_text_file(out_path(g, "trace.csv"), csv.str());
  write_ppm(rep.patch_clustered, out_path(g, "patch.ppm").string());
  write_ppm(rep.patch_raw, out_path(g, "patch_raw.ppm").string());
  save_checkpoint(out_path(g, "state.bin").string(), rep.patch_raw,
                  rep.optimizer);

  std::printf("epochs=%zu final_loss=%s final_l_obj=%s final_l_tv=%s\n",
              rep.epochs.size(),
              detail::fmt_double(rep.epochs.back().loss).c_str(),
              detail::fmt_double(rep.epochs.back().l_obj).c_str(),
              detail::fmt_double(rep.epochs.back().l_tv).c_str());
  return kExitOk;
}

// ---- sweep ----

struct SweepArgs {
  std::string scenes_dir;
  std::string config;
  std::string k_list;
  std::string omega_list;
  std::string alpha_list;
  std::string seed_list;
  std::string out = "results.csv";
  bool no_timing = false;
  std::optional<int> epochs;
  std::optional<std::string> patch_dims;
};

int cmd_sweep(const GlobalOpts& g, const SweepArgs& a) {
  const auto scenes = load_scene_dir(a.scenes_dir);
  SweepSpec spec;
  if (!a.config.empty()) spec.base = load_train_config(a.config);
  spec.base.seed = g.seed;
  if (a.epochs) spec.base.epochs = *a.epochs;
  if (a.patch_dims) {
    const auto [h, w] = parse_dims(*a.patch_dims);
    spec.base.patch_h = h;
    spec.base.patch_w = w;
  }
  if (!a.k_list.empty())
    spec.k_values = parse_list<int>(
        a.k_list, [](const std::string& s) { return std::stoi(s); });
  if (!a.omega_list.empty())
    spec.omega_values = parse_list<double>(
        a.omega_list, [](const std::string& s) { return std::stod(s); });
  if (!a.alpha_list.empty())
    spec.alpha_values = parse_list<double>(
        a.alpha_list, [](const std::string& s) { return std::stod(s); });
  if (!a.seed_list.empty())
    spec.seeds = parse_list<std::uint64_t>(
        a.seed_list,
        [](const std::string& s) { return std::stoull(s); });
  else
    spec.seeds = {g.seed};

  // rows appended and flushed in grid order, so an interrupted run leaves
  // the completed prefix behind
  const fs::path results = out_path(g, a.out);
  std::ofstream os(results, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open for writing: " + results.string());
  write_sweep_header(os);
  os.flush();
  const auto rows =
      run_sweep(scenes, spec, g.jobs, !a.no_timing, [&](const SweepRow& r) {
        write_sweep_row(os, r);
        os.flush();
      });
  os.close();

  std::ostringstream objk;
  write_obj_vs_k_csv(objk, rows, spec.k_values);
  write_text_file(out_path(g, "obj_vs_k.csv"), objk.str());

  std::printf("grid_points=%zu results=%s\n", rows.size(),
              results.string().c_str());
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "dslic: differentiable SLIC superpixel clustering with an exact "
      "analytic backward pass, plus an adversarial-patch training pipeline "
      "against a seeded surrogate detector"};
  app.require_subcommand(1);

  GlobalOpts g;
  app.add_option("--seed", g.seed, "Base RNG seed")->envname("DSLIC_SEED");
  app.add_option("--jobs", g.jobs, "Worker threads for sweep grid points")
      ->check(CLI::PositiveNumber);
  app.add_option("--out-dir", g.out_dir, "Directory for emitted artifacts");

  ClusterArgs cluster_args;
  CLI::App* cluster = app.add_subcommand(
      "cluster", "Cluster an image into superpixels and export the results");
  cluster->add_option("--input", cluster_args.input, "Input image (PPM/PNG)")
      ->required();
  cluster->add_option("--k", cluster_args.slic.k, "Superpixel count");
  cluster->add_option("--omega", cluster_args.slic.omega, "Spatial sensitivity");
  cluster->add_option("--iters", cluster_args.slic.max_iters, "Max iterations");
  cluster->add_option("--tol", cluster_args.slic.tol, "Convergence tolerance");
  cluster->add_option("--out", cluster_args.out, "Clustered image filename");

  GradcheckArgs gc_args;
  CLI::App* gradcheck = app.add_subcommand(
      "gradcheck", "Verify the analytic SLIC gradients against finite differences");
  gradcheck->add_option("--input", gc_args.input, "Input image");
  gradcheck->add_option("--random", gc_args.random_dims,
                        "Random image dims HxW (alternative to --input)");
  gradcheck->add_option("--target", gc_args.target,
                        "Optional target image; switches the functional to the pixel loss");
  gradcheck->add_option("--k", gc_args.slic.k, "Superpixel count");
  gradcheck->add_option("--omega", gc_args.slic.omega, "Spatial sensitivity");
  gradcheck->add_option("--probes", gc_args.probes, "Probe count");
  gradcheck->add_option("--eps", gc_args.eps, "Finite-difference step");
  gradcheck->add_option("--tol", gc_args.tol, "Max relative error for exit 0");
  gradcheck->add_option("--report", gc_args.report, "Report CSV filename");

  ToyArgs toy_args;
  CLI::App* toy = app.add_subcommand(
      "toy", "Descend the pixel loss through SLIC toward a clustered target");
  toy->add_option("--target", toy_args.target, "Target image")->required();
  toy->add_option("--start", toy_args.start, "Start image (default: seeded noise)");
  toy->add_option("--random", toy_args.random_dims, "Random start dims HxW");
  toy->add_option("--k", toy_args.slic.k, "Superpixel count");
  toy->add_option("--omega", toy_args.slic.omega, "Spatial sensitivity");
  toy->add_option("--steps", toy_args.steps, "Gradient descent steps");
  toy->add_option("--lr", toy_args.lr,
                  "Step size in units of N/2 (1.0 steps cluster means fully)");
  toy->add_option("--trace", toy_args.trace, "Loss trace CSV filename");
  toy->add_option("--frames", toy_args.frames_dir,
                  "Subdirectory for clustered-image frames");
  toy->add_option("--frame-every", toy_args.frame_every, "Frame cadence")
      ->check(CLI::PositiveNumber);
  toy->add_flag("--cluster-target", toy_args.cluster_target,
                "Replace the target with its own clustered reconstruction");

  TrainArgs train_args;
  CLI::App* train = app.add_subcommand(
      "train", "Train an adversarial patch against the surrogate detector");
  train->add_option("--scenes", train_args.scenes_dir, "Scene fixture directory")
      ->required();
  train->add_option("--config", train_args.config, "key=value config file");
  train->add_option("--k", train_args.k, "Superpixel count");
  train->add_option("--omega", train_args.omega, "Spatial sensitivity");
  train->add_option("--alpha", train_args.alpha, "TV weight");
  train->add_option("--lr", train_args.lr, "Initial learning rate");
  train->add_option("--epochs", train_args.epochs, "Training epochs");
  train->add_option("--patch", train_args.patch_dims, "Patch dims HxW");
  train->add_option("--victim-seed", train_args.victim_seed,
                    "Surrogate detector seed");

  SweepArgs sweep_args;
  CLI::App* sweep = app.add_subcommand(
      "sweep", "Run the (K, omega, alpha, seed) grid and emit results CSVs");
  sweep->add_option("--scenes", sweep_args.scenes_dir, "Scene fixture directory")
      ->required();
  sweep->add_option("--config", sweep_args.config, "Base key=value config file");
  sweep->add_option("--k-list", sweep_args.k_list,
                    "Comma-separated K values (default 500..4000 step 100)");
  sweep->add_option("--omega-list", sweep_args.omega_list,
                    "Comma-separated omega values (default 0.1,1,10)");
  sweep->add_option("--alpha-list", sweep_args.alpha_list,
                    "Comma-separated alpha values (default 0,2.5)");
  sweep->add_option("--seed-list", sweep_args.seed_list,
                    "Comma-separated seeds (default: --seed)");
  sweep->add_option("--out", sweep_args.out, "Results CSV filename");
  sweep->add_option("--epochs", sweep_args.epochs, "Epochs per grid point");
  sweep->add_option("--patch", sweep_args.patch_dims, "Patch dims HxW");
  sweep->add_flag("--no-timing", sweep_args.no_timing,
                  "Write wall_s as 0 so reruns are byte-identical");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (cluster->parsed()) return cmd_cluster(g, cluster_args);
    if (gradcheck->parsed()) return cmd_gradcheck(g, gc_args);
    if (toy->parsed()) return cmd_toy(g, toy_args);
    if (train->parsed()) return cmd_train(g, train_args);
    if (sweep->parsed()) return cmd_sweep(g, sweep_args);
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const InvalidArgument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  }
  return kExitUsage;
}
