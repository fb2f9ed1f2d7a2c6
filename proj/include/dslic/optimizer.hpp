#pragma once

#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "dslic/error.hpp"

namespace dslic {

// Reduce-on-plateau, minimization mode: an epoch improves when its loss
// beats the best seen by more than `threshold`; after more than `patience`
// consecutive non-improving epochs the learning rate is multiplied by
// `factor` (floored at min_lr) and the stall counter resets.
struct SchedulerConfig {
  double factor = 0.5;
  int patience = 50;
  double min_lr = 1e-5;
  double threshold = 1e-4;

  void validate() const {
    if (factor <= 0 || factor >= 1)
      throw InvalidArgument("scheduler: factor must be in (0,1)");
    if (patience < 1) throw InvalidArgument("scheduler: patience must be >= 1");
    if (min_lr < 0) throw InvalidArgument("scheduler: min_lr must be >= 0");
    if (threshold < 0) throw InvalidArgument("scheduler: threshold must be >= 0");
  }
};

// AMSGrad moments plus the plateau-scheduler bookkeeping. v_hat is
// elementwise nondecreasing across steps and lr never increases.
struct OptimizerState {
  std::vector<double> m, v, v_hat;
  long step_count = 0;
  double lr = 0.03;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  SchedulerConfig sched;
  double best_loss = std::numeric_limits<double>::infinity();
  int stall = 0;
};

inline OptimizerState make_optimizer(std::size_t n_params, double lr,
                                     SchedulerConfig sched = {}) {
  if (lr < 0) throw InvalidArgument("optimizer: lr must be >= 0");
  sched.validate();
  OptimizerState st;
  st.m.assign(n_params, 0.0);
  st.v.assign(n_params, 0.0);
  st.v_hat.assign(n_params, 0.0);
  st.lr = lr;
  st.sched = sched;
  return st;
}

// One AMSGrad update:
//   m <- b1 m + (1-b1) g
//   v <- b2 v + (1-b2) g^2
//   v_hat <- max(v_hat, v)
//   p -= lr * (m / (1-b1^t)) / (sqrt(v_hat) + eps)
// Bias correction applies to m only (AMSGrad convention).
inline void amsgrad_step(OptimizerState& st, std::span<const double> grad,
                         std::span<double> params) {
  if (grad.size() != params.size() || grad.size() != st.m.size())
    throw InvalidArgument("amsgrad_step: size mismatch");
  for (std::size_t i = 0; i < grad.size(); ++i)
    if (!std::isfinite(grad[i]))
      throw InvalidArgument("amsgrad_step: non-finite gradient at index " +
                            std::to_string(i));
  ++st.step_count;
  const double corr = 1.0 - std::pow(st.beta1, static_cast<double>(st.step_count));
  for (std::size_t i = 0; i < grad.size(); ++i) {
    const double g = grad[i];
    st.m[i] = st.beta1 * st.m[i] + (1.0 - st.beta1) * g;
    st.v[i] = st.beta2 * st.v[i] + (1.0 - st.beta2) * g * g;
    if (st.v[i] > st.v_hat[i]) st.v_hat[i] = st.v[i];
    params[i] -= st.lr * (st.m[i] / corr) / (std::sqrt(st.v_hat[i]) + st.eps);
  }
}

inline void scheduler_update(OptimizerState& st, double epoch_loss) {
  if (!std::isfinite(epoch_loss))
    throw InvalidArgument("scheduler_update: non-finite loss");
  if (epoch_loss < st.best_loss - st.sched.threshold) {
    st.best_loss = epoch_loss;
    st.stall = 0;
    return;
  }
  ++st.stall;
  if (st.stall > st.sched.patience) {
    st.lr = std::max(st.lr * st.sched.factor, st.sched.min_lr);
    st.stall = 0;
  }
}

}  // namespace dslic
