#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "mgt/error.hpp"
#include "mgt/grad_check.hpp"
#include "mgt/ops.hpp"
#include "mgt/slfe.hpp"
#include "reference.hpp"

using namespace mgt;

namespace {

Tensor random_features(const Shape& s, std::mt19937_64& rng, double scale = 1.0) {
  return Tensor(s, normal(shape_numel(s), rng, scale), true);
}

ref::Rows patch_rows(const Tensor& t, std::size_t patch) {
  const std::size_t k = t.dim(1), d = t.dim(2);
  ref::Rows rows(k, ref::Vec(d));
  for (std::size_t j = 0; j < k; ++j)
    for (std::size_t c = 0; c < d; ++c) rows[j][c] = t[(patch * k + j) * d + c];
  return rows;
}

SphereMapParams random_sphere(std::size_t d, std::mt19937_64& rng) {
  return {Tensor::parameter({d}, normal(d, rng, 1.0)), Tensor::parameter({d}, normal(d, rng, 1.0)),
          Tensor::parameter({d}, normal(d, rng, 1.0))};
}

}  // namespace

TEST_SUITE("slfe") {

TEST_CASE("sphere map hand example") {
  const SphereMapParams p{Tensor::full({1}, 1.0), Tensor::full({1}, 1.0), Tensor::zeros({1})};
  const Tensor y = sphere_map(Tensor({1, 2, 1}, {-1.0, 1.0}), p);
  CHECK(y[0] == doctest::Approx(-1.0 / (1.0 + kSphereEps)).epsilon(1e-15));
  CHECK(y[1] == doctest::Approx(1.0 / (1.0 + kSphereEps)).epsilon(1e-15));
}

TEST_CASE("sphere map equals the scalar oracle") {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 10; ++trial) {
    const SphereMapParams p = random_sphere(6, rng);
    const Tensor x = random_features({3, 5, 6}, rng);
    const Tensor y = sphere_map(x, p);
    for (std::size_t s = 0; s < 3; ++s) {
      const ref::Rows expect = ref::sphere_map(patch_rows(x, s), p);
      for (std::size_t j = 0; j < 5; ++j)
        for (std::size_t c = 0; c < 6; ++c) CHECK(std::abs(y[(s * 5 + j) * 6 + c] - expect[j][c]) < 1e-12);
    }
  }
}

TEST_CASE("sphere map with unit alpha and zero beta and bias yields unit vectors") {
  std::mt19937_64 rng(2);
  const SphereMapParams p{Tensor::full({64}, 1.0), Tensor::zeros({64}), Tensor::zeros({64})};
  for (double scale : {1e-3, 1.0, 100.0}) {
    const Tensor x = random_features({4, 16, 64}, rng, scale);
    const Tensor y = sphere_map(x, p);
    for (std::size_t r = 0; r < 4 * 16; ++r) {
      const std::size_t patch = r / 16;
      double s = 0, c2 = 0;
      for (std::size_t c = 0; c < 64; ++c) {
        double mean = 0;
        for (std::size_t j = 0; j < 16; ++j) mean += x[(patch * 16 + j) * 64 + c] / 16;
        c2 += (x[r * 64 + c] - mean) * (x[r * 64 + c] - mean);
        s += y[r * 64 + c] * y[r * 64 + c];
      }
      // Norm |c| / (|c| + eps): just below one, approaching it as the patch spreads.
      const double n = std::sqrt(s);
      CHECK(n < 1.0);
      CHECK(n == doctest::Approx(std::sqrt(c2) / (std::sqrt(c2) + kSphereEps)).epsilon(1e-12));
      if (scale >= 1.0) CHECK(n >= 1.0 - 1e-5);
    }
  }
}

TEST_CASE("degenerate patch collapses to the bias") {
  std::mt19937_64 rng(3);
  const SphereMapParams p = random_sphere(4, rng);
  const Tensor y = sphere_map(Tensor({1, 3, 4}, {1, 2, 3, 4, 1, 2, 3, 4, 1, 2, 3, 4}), p);
  for (std::size_t j = 0; j < 3; ++j)
    for (std::size_t c = 0; c < 4; ++c) CHECK(y[j * 4 + c] == doctest::Approx(p.bias[c]).epsilon(1e-12));
}

TEST_CASE("sphere map rejects width mismatches") {
  std::mt19937_64 rng(4);
  CHECK_THROWS_AS(sphere_map(random_features({1, 2, 5}, rng), SphereMapParams::init(4)), ConfigError);
  CHECK_THROWS_AS(sphere_map(random_features({2, 5}, rng), SphereMapParams::init(5)), ConfigError);
}

TEST_CASE("mrc hand examples") {
  const Tensor y = mrc(Tensor({1, 2, 2}, {1, 4, 3, 2}));
  CHECK(std::vector<double>(y.data().begin(), y.data().end()) == std::vector<double>{1, 4, 3, 4, 3, 2, 3, 4});
  const Tensor single = mrc(Tensor({2, 1, 2}, {5, 6, 7, 8}));
  CHECK(std::vector<double>(single.data().begin(), single.data().end()) ==
        std::vector<double>{5, 6, 5, 6, 7, 8, 7, 8});
}

TEST_CASE("mrc pooled half is constant within each patch and permutation equivariant") {
  std::mt19937_64 rng(5);
  const Tensor x = random_features({3, 6, 4}, rng);
  const Tensor y = mrc(x);
  for (std::size_t s = 0; s < 3; ++s)
    for (std::size_t j = 1; j < 6; ++j)
      for (std::size_t c = 4; c < 8; ++c) CHECK(y[(s * 6 + j) * 8 + c] == y[(s * 6) * 8 + c]);

  std::vector<std::size_t> perm(6);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<double> px(x.numel());
  for (std::size_t s = 0; s < 3; ++s)
    for (std::size_t j = 0; j < 6; ++j)
      for (std::size_t c = 0; c < 4; ++c) px[(s * 6 + j) * 4 + c] = x[(s * 6 + perm[j]) * 4 + c];
  const Tensor py = mrc(Tensor(x.shape(), px));
  for (std::size_t s = 0; s < 3; ++s)
    for (std::size_t j = 0; j < 6; ++j)
      for (std::size_t c = 0; c < 8; ++c) CHECK(py[(s * 6 + j) * 8 + c] == y[(s * 6 + perm[j]) * 8 + c]);
}

TEST_CASE("slfe forward equals the scalar oracle for every ablation") {
  std::mt19937_64 rng(6);
  SlfeParams p = SlfeParams::init(3, 16, rng);
  ParamList pl;
  p.collect(pl, "slfe");
  for (const auto& r : pl) *r.tensor = Tensor::parameter(r.tensor->shape(), normal(r.tensor->numel(), rng, 0.3));
  const Tensor patches = random_features({2, 7, 3}, rng);
  for (bool sm : {false, true}) {
    for (bool m : {false, true}) {
      const SlfeAblation ab{sm, m};
      const Tensor y = slfe_forward(patches, p, ab);
      REQUIRE(y.shape() == Shape{2, 16});
      for (std::size_t s = 0; s < 2; ++s) {
        const ref::Vec expect = ref::slfe(patch_rows(patches, s), p, ab);
        for (std::size_t c = 0; c < 16; ++c) CHECK(std::abs(y[s * 16 + c] - expect[c]) < 1e-10);
      }
    }
  }
}

TEST_CASE("slfe is invariant to the order of points in a patch") {
  std::mt19937_64 rng(7);
  const SlfeParams p = SlfeParams::init(3, 32, rng);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t k = std::uniform_int_distribution<std::size_t>(2, 16)(rng);
    const Tensor patch = random_features({1, k, 3}, rng);
    const Tensor base = slfe_forward(patch, p);
    std::vector<std::size_t> perm(k);
    std::iota(perm.begin(), perm.end(), 0);
    for (int r = 0; r < 10; ++r) {
      std::shuffle(perm.begin(), perm.end(), rng);
      std::vector<double> px(k * 3);
      for (std::size_t j = 0; j < k; ++j)
        for (std::size_t c = 0; c < 3; ++c) px[j * 3 + c] = patch[perm[j] * 3 + c];
      const Tensor y = slfe_forward(Tensor({1, k, 3}, px), p);
      double worst = 0;
      for (std::size_t c = 0; c < 32; ++c) worst = std::max(worst, std::abs(y[c] - base[c]));
      REQUIRE(worst < 1e-9);
    }
  }
}

TEST_CASE("sphere map and slfe gradients match finite differences") {
  std::mt19937_64 rng(8);
  SphereMapParams sp = random_sphere(4, rng);
  Tensor x = random_features({2, 4, 4}, rng);
  const Tensor w({2, 4, 4}, normal(32, rng, 1.0));
  auto report = grad_check([&] { return sum_all(mul(sphere_map(x, sp), w)); },
                           {{"alpha", &sp.alpha}, {"beta", &sp.beta}, {"bias", &sp.bias}, {"x", &x}});
  INFO(report.summary());
  CHECK(report.passed);

  SlfeParams p = SlfeParams::init(3, 8, rng);
  ParamList pl;
  p.collect(pl, "slfe");
  std::vector<NamedTensor> named;
  for (const auto& r : pl) {
    *r.tensor = Tensor::parameter(r.tensor->shape(), normal(r.tensor->numel(), rng, 0.3));
    named.push_back({r.name, r.tensor});
  }
  const Tensor patches = random_features({2, 5, 3}, rng);
  const Tensor w2({2, 8}, normal(16, rng, 1.0));
  GradCheckOptions opts;
  opts.max_elements = 12;
  report = grad_check([&] { return sum_all(mul(slfe_forward(patches, p), w2)); }, named, opts);
  INFO(report.summary());
  CHECK(report.passed);
}

}
