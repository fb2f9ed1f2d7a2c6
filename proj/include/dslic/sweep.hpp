#pragma once

#include <condition_variable>
#include <cstdint>
#include <functional>
#include <mutex>
#include <optional>
#include <ostream>
#include <thread>
#include <vector>

#include "dslic/error.hpp"
#include "dslic/format.hpp"
#include "dslic/pipeline.hpp"

// The digital sweep: a full grid over (K, omega, alpha, seed), each point an
// independent training run with a fixed seed. Grid points may run in
// parallel; rows are delivered in grid order regardless of completion order,
// so an interrupted sweep leaves a prefix of completed rows.

namespace dslic {

struct SweepSpec {
  std::vector<int> k_values;
  std::vector<double> omega_values{0.1, 1.0, 10.0};
  std::vector<double> alpha_values{0.0, 2.5};
  std::vector<std::uint64_t> seeds{0};
  TrainConfig base;

  SweepSpec() {
    for (int k = 500; k <= 4000; k += 100) k_values.push_back(k);
  }

  void validate() const {
    if (k_values.empty() || omega_values.empty() || alpha_values.empty() ||
        seeds.empty())
      throw InvalidArgument("sweep: all value lists must be nonempty");
    for (int k : k_values)
      if (k < 1 || k > base.patch_h * base.patch_w)
        throw InvalidArgument("sweep: k out of range for patch size");
  }
};

struct SweepRow {
  int k = 0;
  double omega = 0.0;
  double alpha = 0.0;
  std::uint64_t seed = 0;
  double final_obj = 0.0;
  double final_tv = 0.0;
  double final_total = 0.0;
  int epochs = 0;
  double wall_s = 0.0;
};

inline void write_sweep_header(std::ostream& os) {
  os << "k,omega,alpha,seed,final_obj,final_tv,final_total,epochs,wall_s\n";
}

inline void write_sweep_row(std::ostream& os, const SweepRow& r) {
  os << r.k << ',' << detail::fmt_double(r.omega) << ','
     << detail::fmt_double(r.alpha) << ',' << r.seed << ','
     << detail::fmt_double(r.final_obj) << ',' << detail::fmt_double(r.final_tv)
     << ',' << detail::fmt_double(r.final_total) << ',' << r.epochs << ','
     << detail::fmt_double(r.wall_s) << '\n';
}

// Runs every grid point and calls on_row once per point, in grid order
// (k outer, then omega, alpha, seed). `timing` off zeroes wall_s so reruns
// are byte-identical.
inline std::vector<SweepRow> run_sweep(
    const std::vector<SceneSpec>& scenes, const SweepSpec& spec, int jobs,
    bool timing, const std::function<void(const SweepRow&)>& on_row = {}) {
  spec.validate();
  if (scenes.empty()) throw InvalidArgument("sweep: no scenes");
  if (jobs < 1) jobs = 1;

  struct Point {
    int k;
    double omega, alpha;
    std::uint64_t seed;
  };
  std::vector<Point> grid;
  for (int k : spec.k_values)
    for (double omega : spec.omega_values)
      for (double alpha : spec.alpha_values)
        for (std::uint64_t seed : spec.seeds)
          grid.push_back({k, omega, alpha, seed});

  std::vector<std::optional<SweepRow>> results(grid.size());
  std::mutex mu;
  std::condition_variable cv;
  std::size_t next_index = 0;
  std::exception_ptr error;

  const auto worker = [&] {
    for (;;) {
      std::size_t i;
      {
        std::lock_guard lk(mu);
        if (error || next_index >= grid.size()) return;
        i = next_index++;
      }
      try {
        const Point& p = grid[i];
        TrainConfig cfg = spec.base;
        cfg.slic.k = p.k;
        cfg.slic.omega = p.omega;
        cfg.alpha = p.alpha;
        cfg.seed = p.seed;
        const TrainReport rep = train_patch(scenes, cfg);
        SweepRow row{p.k,
                     p.omega,
                     p.alpha,
                     p.seed,
                     rep.epochs.back().l_obj,
                     rep.epochs.back().l_tv,
                     rep.epochs.back().loss,
                     static_cast<int>(rep.epochs.size()),
                     timing ? rep.wall_seconds : 0.0};
        {
          std::lock_guard lk(mu);
          results[i] = row;
        }
        cv.notify_all();
      } catch (...) {
        {
          std::lock_guard lk(mu);
          error = std::current_exception();
        }
        cv.notify_all();
        return;
      }
    }
  };

  std::vector<std::thread> pool;
  const int n_workers = std::min<int>(jobs, static_cast<int>(grid.size()));
  pool.reserve(static_cast<std::size_t>(n_workers));
  for (int t = 0; t < n_workers; ++t) pool.emplace_back(worker);

  // Deliver rows in grid order as the completed prefix grows.
  std::vector<SweepRow> rows;
  rows.reserve(grid.size());
  {
    std::unique_lock lk(mu);
    for (std::size_t emit = 0; emit < grid.size(); ++emit) {
      cv.wait(lk, [&] { return results[emit].has_value() || error; });
      if (error) break;
      rows.push_back(*results[emit]);
      if (on_row) {
        lk.unlock();
        on_row(rows.back());
        lk.lock();
      }
    }
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
  return rows;
}

// Fig. 6(a)-style table: mean final objectness per K, aggregated over the
// omega/alpha/seed axes.
inline void write_obj_vs_k_csv(std::ostream& os,
                               const std::vector<SweepRow>& rows,
                               const std::vector<int>& k_values) {
  os << "k,mean_final_obj\n";
  for (int k : k_values) {
    double sum = 0.0;
    int n = 0;
    for (const SweepRow& r : rows)
      if (r.k == k) {
        sum += r.final_obj;
        ++n;
      }
    if (n > 0) os << k << ',' << detail::fmt_double(sum / n) << '\n';
  }
}

}  // namespace dslic
