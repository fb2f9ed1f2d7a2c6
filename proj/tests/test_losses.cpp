#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <functional>

#include "dslic/losses.hpp"
#include "test_util.hpp"

using namespace dslic;

namespace {

// Hand enumeration of the TV sum under the documented rule: a term exists
// only where both forward neighbors exist; per channel, summed.
double tv_oracle(const Image& img, double eps_tv) {
  double acc = 0;
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < img.height - 1; ++y)
      for (int x = 0; x < img.width - 1; ++x) {
        const double dx = img.at(x, y, c) - img.at(x + 1, y, c);
        const double dy = img.at(x, y, c) - img.at(x, y + 1, c);
        acc += std::sqrt(dx * dx + dy * dy + eps_tv);
      }
  return acc;
}

double fd_central(const std::function<double(const Image&)>& f, Image img,
                  std::size_t idx, double h) {
  const double orig = img.data[idx];
  img.data[idx] = orig + h;
  const double p = f(img);
  img.data[idx] = orig - h;
  const double m = f(img);
  return (p - m) / (2 * h);
}

}  // namespace

TEST_CASE("tv: constant image is exactly zero in exact mode, tiny otherwise") {
  Image img(4, 5, 0.37);
  CHECK(tv_loss(img, 0.0).value == 0.0);
  const double with_eps = tv_loss(img).value;
  CHECK(with_eps == doctest::Approx(3 * 3 * 4 * std::sqrt(1e-12)).epsilon(1e-9));
  CHECK(with_eps < 1e-4);
}

TEST_CASE("tv: 1x1 image has no neighbor pairs") {
  Image img(1, 1, 0.9);
  CHECK(tv_loss(img, 0.0).value == 0.0);
  CHECK(tv_loss(img).value == 0.0);
}

TEST_CASE("tv: 2x2 grid [[0,1],[0,1]] under the both-neighbors rule") {
  // single active channel; rows are [0,1] and [0,1]
  Image img(2, 2, 0.0);
  img.at(1, 0, 0) = 1.0;
  img.at(1, 1, 0) = 1.0;
  const double v = tv_loss(img, 0.0).value;
  // only (0,0) has both forward neighbors: one horizontal unit step
  CHECK(v == doctest::Approx(tv_oracle(img, 0.0)).epsilon(1e-15));
  CHECK(v == 1.0);
}

TEST_CASE("tv: value matches the hand-enumeration oracle on random images") {
  for (std::uint64_t seed : {1ULL, 2ULL, 3ULL}) {
    const Image img = testutil::random_image(5, 7, seed);
    CHECK(tv_loss(img, 0.0).value ==
          doctest::Approx(tv_oracle(img, 0.0)).epsilon(1e-12));
    CHECK(tv_loss(img).value ==
          doctest::Approx(tv_oracle(img, 1e-12)).epsilon(1e-12));
  }
}

TEST_CASE("tv: analytic gradient matches central differences") {
  const Image img = testutil::random_image(6, 6, 4);
  const LossValue tv = tv_loss(img);
  Rng rng(5);
  for (int probe = 0; probe < 24; ++probe) {
    const std::size_t idx = rng.uniform_int(img.data.size());
    const double numeric = fd_central(
        [](const Image& x) { return tv_loss(x).value; }, img, idx, 1e-6);
    const double denom =
        std::max({std::abs(tv.grad.data[idx]), std::abs(numeric), 1e-8});
    CHECK(std::abs(tv.grad.data[idx] - numeric) / denom <= 1e-4);
  }
}

TEST_CASE("tv: invariant under per-channel constant shift") {
  const Image img = testutil::random_image(5, 5, 6);
  Image shifted = img;
  for (int i = 0; i < shifted.pixels(); ++i) {
    shifted.data[i * 3 + 0] += 0.125;
    shifted.data[i * 3 + 1] -= 0.0625;
    shifted.data[i * 3 + 2] += 0.25;
  }
  CHECK(tv_loss(shifted).value ==
        doctest::Approx(tv_loss(img).value).epsilon(1e-12));
}

TEST_CASE("objectness: max with first-occurrence tie break") {
  ScoreGrid g(1, 3, 1);
  g.data = {0.1, 0.9, 0.3};
  const ObjectnessLoss a = objectness_loss(g);
  CHECK(a.value == 0.9);
  CHECK(a.argmax == 1);
  CHECK(a.grad.data[1] == 1.0);
  CHECK(a.grad.data[0] == 0.0);
  CHECK(a.grad.data[2] == 0.0);

  ScoreGrid tie(1, 2, 1);
  tie.data = {0.5, 0.5};
  const ObjectnessLoss b = objectness_loss(tie);
  CHECK(b.value == 0.5);
  CHECK(b.argmax == 0);
}

TEST_CASE("objectness: 13x13x5 grid equals a naive full scan") {
  ScoreGrid g(13, 13, 5);
  Rng rng(7);
  for (double& v : g.data) v = rng.uniform();
  const ObjectnessLoss a = objectness_loss(g);
  double best = -1;
  std::size_t best_i = 0;
  for (std::size_t i = 0; i < g.data.size(); ++i)
    if (g.data[i] > best) {
      best = g.data[i];
      best_i = i;
    }
  CHECK(a.value == best);
  CHECK(a.argmax == best_i);
}

TEST_CASE("objectness: empty grid rejected") {
  CHECK_THROWS_AS(objectness_loss(ScoreGrid{}), InvalidArgument);
}

TEST_CASE("total: alpha 2.5 arithmetic and the alpha 0 ablation arm") {
  Image patch(2, 2, 0.5);
  LossValue tv{0.2, Image(2, 2, 0.3)};
  LossValue obj{0.7, Image(2, 2, -0.1)};

  const LossValue t = total_loss(patch, tv, obj, 2.5);
  CHECK(t.value == 2.5 * 0.2 + 0.7);  // bit-level, same expression
  CHECK(t.value == doctest::Approx(1.2).epsilon(1e-12));
  for (double v : t.grad.data) CHECK(v == 2.5 * 0.3 + -0.1);

  const LossValue z = total_loss(patch, tv, obj, 0.0);
  CHECK(z.value == 0.7);  // exactly L_obj
  for (double v : z.grad.data) CHECK(v == -0.1);
}

TEST_CASE("total: gradient linearity") {
  const Image patch = testutil::random_image(3, 3, 8);
  LossValue tv{0.4, testutil::random_image(3, 3, 9)};
  LossValue obj{0.6, testutil::random_image(3, 3, 10)};
  const LossValue t = total_loss(patch, tv, obj, 2.5);
  for (std::size_t i = 0; i < t.grad.data.size(); ++i)
    CHECK(std::abs(t.grad.data[i] - 2.5 * tv.grad.data[i] -
                   obj.grad.data[i]) <= 1e-12);
}

TEST_CASE("total: mismatched gradient shapes rejected") {
  Image patch(2, 2, 0.5);
  LossValue tv{0.2, Image(2, 2)};
  LossValue obj{0.7, Image(3, 3)};
  CHECK_THROWS_AS(total_loss(patch, tv, obj, 2.5), InvalidArgument);
}

TEST_CASE("mse: identical images give zero") {
  const Image img = testutil::random_image(4, 4, 11);
  const LossValue l = mse_loss(img, img);
  CHECK(l.value == 0.0);
  for (double v : l.grad.data) CHECK(v == 0.0);
}

TEST_CASE("mse: one-pixel full-scale difference gives exactly 1") {
  Image a(1, 1, 0.0), b(1, 1, 0.0);
  a.at(0, 0, 1) = 1.0;
  CHECK(mse_loss(a, b).value == 1.0);
}

TEST_CASE("mse: matches the naive double-loop oracle") {
  const Image a = testutil::random_image(8, 8, 12);
  const Image b = testutil::random_image(8, 8, 13);
  const LossValue l = mse_loss(a, b);
  double acc = 0;
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x)
      for (int c = 0; c < 3; ++c) {
        const double d = a.at(x, y, c) - b.at(x, y, c);
        acc += d * d;
      }
  CHECK(l.value == doctest::Approx(acc / 64).epsilon(1e-12));
}

TEST_CASE("mse: analytic gradient matches central differences") {
  const Image a = testutil::random_image(5, 5, 14);
  const Image b = testutil::random_image(5, 5, 15);
  const LossValue l = mse_loss(a, b);
  Rng rng(16);
  for (int probe = 0; probe < 24; ++probe) {
    const std::size_t idx = rng.uniform_int(a.data.size());
    const double numeric = fd_central(
        [&](const Image& x) { return mse_loss(x, b).value; }, a, idx, 1e-6);
    const double denom =
        std::max({std::abs(l.grad.data[idx]), std::abs(numeric), 1e-8});
    CHECK(std::abs(l.grad.data[idx] - numeric) / denom <= 1e-4);
  }
}

TEST_CASE("mse: shape mismatch rejected") {
  CHECK_THROWS_AS(mse_loss(Image(2, 2), Image(2, 3)), InvalidArgument);
}
