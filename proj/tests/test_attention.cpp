#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "mgt/attention.hpp"
#include "mgt/error.hpp"
#include "mgt/grad_check.hpp"
#include "mgt/ops.hpp"
#include "reference.hpp"

using namespace mgt;

namespace {

std::vector<double> unit_vector(std::mt19937_64& rng, std::size_t d) {
  auto v = normal(d, rng, 1.0);
  double n = 0;
  for (double x : v) n += x * x;
  for (double& x : v) x /= std::sqrt(n);
  return v;
}

ref::Rows rows_of(const Tensor& t) {
  ref::Rows r(t.dim(0), ref::Vec(t.dim(1)));
  for (std::size_t i = 0; i < t.dim(0); ++i)
    for (std::size_t c = 0; c < t.dim(1); ++c) r[i][c] = t[i * t.dim(1) + c];
  return r;
}

}  // namespace

TEST_SUITE("attention") {

TEST_CASE("geodesic distance hand values") {
  const std::vector<double> x{1, 0, 0}, y{0, 1, 0}, nx{-1, 0, 0};
  CHECK(geodesic_dist(x, y, 1) == doctest::Approx(std::numbers::pi / 2).epsilon(1e-15));
  CHECK(geodesic_dist(x, nx, 1) == doctest::Approx(std::numbers::pi).epsilon(1e-15));
  CHECK(geodesic_dist(x, x, 1) == 0.0);
  // Two orthogonal blocks: sqrt((pi/2)^2 + (pi/2)^2).
  const std::vector<double> a{1, 0, 0, 1}, b{0, 1, 1, 0};
  CHECK(geodesic_dist(a, b, 2) == doctest::Approx(std::numbers::pi / std::sqrt(2.0)).epsilon(1e-15));
}

TEST_CASE("geodesic metric properties on random unit vectors") {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t d = std::uniform_int_distribution<std::size_t>(2, 16)(rng);
    const auto p = unit_vector(rng, d), q = unit_vector(rng, d), r = unit_vector(rng, d);
    const double pq = geodesic_dist(p, q, 1), qp = geodesic_dist(q, p, 1);
    const double qr = geodesic_dist(q, r, 1), pr = geodesic_dist(p, r, 1);
    CHECK(std::abs(pq - qp) <= 1e-12);
    CHECK(geodesic_dist(p, p, 1) <= 1e-6);
    CHECK(pr <= pq + qr + 1e-12);
    CHECK(pq >= 0.0);
    CHECK(pq <= std::numbers::pi);
  }
}

TEST_CASE("projected copies of one token are within 1e-6 at any scale") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t d = std::uniform_int_distribution<std::size_t>(2, 64)(rng);
    const double scale = std::pow(10.0, std::uniform_real_distribution<double>(-9.0, 6.0)(rng));
    auto v = normal(d, rng, scale);
    std::vector<double> both = v;
    both.insert(both.end(), v.begin(), v.end());
    const Tensor p = project_oblique(Tensor({2, d}, both), 1);
    CHECK(geodesic_dist(p.data().subspan(0, d), p.data().subspan(d, d), 1) <= 1e-6);
    CHECK(geodesic_dist(p.data().subspan(0, d), p.data().subspan(0, d), 1) <= 1e-6);
  }
}

TEST_CASE("distance matrix agrees with the scalar distance and ignores token scale") {
  std::mt19937_64 rng(2);
  for (std::size_t factors : {1, 2, 4}) {
    const Tensor z({7, 8}, normal(56, rng, 1.0));
    const Tensor dm = geodesic_distance_matrix(project_oblique(z, factors), factors);
    const auto rows = rows_of(z);
    for (std::size_t i = 0; i < 7; ++i) {
      CHECK(dm[i * 7 + i] == 0.0);
      for (std::size_t j = 0; j < 7; ++j) {
        if (i != j) CHECK(std::abs(dm[i * 7 + j] - ref::geodesic(rows[i], rows[j], factors)) < 1e-10);
        CHECK(dm[i * 7 + j] == doctest::Approx(dm[j * 7 + i]).epsilon(1e-12));
      }
    }
    std::vector<double> scaled(56);
    for (std::size_t i = 0; i < 7; ++i) {
      const double s = std::uniform_real_distribution<double>(0.01, 100.0)(rng);
      for (std::size_t c = 0; c < 8; ++c) scaled[i * 8 + c] = s * z[i * 8 + c];
    }
    const Tensor ds = geodesic_distance_matrix(project_oblique(Tensor({7, 8}, scaled), factors), factors);
    for (std::size_t k = 0; k < 49; ++k) CHECK(std::abs(ds[k] - dm[k]) < 1e-10);
  }
}

TEST_CASE("projected blocks have unit norm") {
  std::mt19937_64 rng(3);
  const Tensor p = project_oblique(Tensor({5, 12}, normal(60, rng, 3.0)), 3);
  for (std::size_t t = 0; t < 5; ++t)
    for (std::size_t b = 0; b < 3; ++b) {
      double s = 0;
      for (std::size_t c = 0; c < 4; ++c) s += p[t * 12 + b * 4 + c] * p[t * 12 + b * 4 + c];
      CHECK(std::sqrt(s) == doctest::Approx(1.0).epsilon(1e-12));
    }
  CHECK_THROWS_AS(project_oblique(p, 5), ConfigError);
}

TEST_CASE("attention rows are stochastic and outputs match the scalar oracle") {
  std::mt19937_64 rng(4);
  for (AttentionKind kind : {AttentionKind::geodesic, AttentionKind::dot}) {
    AttentionConfig cfg;
    cfg.kind = kind;
    cfg.temperature = 0.7;
    AttentionParams ap = AttentionParams::init(cfg, 8, rng);
    ParamList pl;
    ap.collect(pl, "attn");
    CHECK(pl.size() == (kind == AttentionKind::dot ? 6u : 2u));
    for (const auto& r : pl) *r.tensor = Tensor::parameter(r.tensor->shape(), normal(r.tensor->numel(), rng, 0.5));
    for (int trial = 0; trial < 20; ++trial) {
      const Tensor z({6, 8}, normal(48, rng, 1.0));
      const AttentionResult res = attend(z, ap, cfg);
      for (std::size_t i = 0; i < 6; ++i) {
        double s = 0;
        for (std::size_t j = 0; j < 6; ++j) s += res.weights[i * 6 + j];
        CHECK(std::abs(s - 1.0) < 1e-12);
      }
      const auto expect = ref::attention(rows_of(z), ap, cfg);
      for (std::size_t i = 0; i < 6; ++i)
        for (std::size_t c = 0; c < 8; ++c) CHECK(std::abs(res.output[i * 8 + c] - expect[i][c]) < 1e-10);
    }
  }
}

TEST_CASE("geodesic attention weights favour the nearer token") {
  AttentionConfig cfg;
  std::mt19937_64 rng(5);
  const AttentionParams ap = AttentionParams::init(cfg, 2, rng);
  const Tensor z({3, 2}, {1, 0, 0.9, 0.1, -1, 0.05});
  const AttentionResult res = geodesic_attention(z, ap, cfg);
  CHECK(res.weights[0 * 3 + 1] > res.weights[0 * 3 + 2]);
  CHECK(res.weights[0 * 3 + 0] > res.weights[0 * 3 + 1]);
}

TEST_CASE("attention configuration validation") {
  AttentionConfig cfg;
  cfg.factors = 3;
  CHECK_THROWS_AS(cfg.validate(8), ConfigError);
  cfg.factors = 2;
  cfg.temperature = 0.0;
  CHECK_THROWS_AS(cfg.validate(8), ConfigError);
  CHECK(parse_attention_kind("dot") == AttentionKind::dot);
  CHECK_THROWS_AS(parse_attention_kind("cosine"), ConfigError);
  std::mt19937_64 rng(6);
  const AttentionParams geo = AttentionParams::init(AttentionConfig{}, 4, rng);
  CHECK_THROWS_AS(dot_attention(Tensor({2, 4}, std::vector<double>(8, 1.0)), geo), ConfigError);
}

TEST_CASE("geodesic attention gradient on a random four token input") {
  std::mt19937_64 rng(7);
  AttentionConfig cfg;
  AttentionParams ap = AttentionParams::init(cfg, 8, rng);
  Tensor z({4, 8}, normal(32, rng, 1.0), true);
  const Tensor w({4, 8}, normal(32, rng, 1.0));
  const auto report = grad_check([&] { return sum_all(mul(geodesic_attention(z, ap, cfg).output, w)); },
                                 {{"tokens", &z}, {"value.weight", &ap.value.weight}, {"value.bias", &ap.value.bias}});
  INFO(report.summary());
  CHECK(report.max_error < 1e-4);
}

TEST_CASE("projection hand values") {
  const Tensor a = project_oblique(Tensor({1, 2}, {3, 4}), 1);
  CHECK(a[0] == doctest::Approx(0.6).epsilon(1e-15));
  CHECK(a[1] == doctest::Approx(0.8).epsilon(1e-15));
  const Tensor b = project_oblique(Tensor({1, 4}, {3, 4, 0, 5}), 2);
  const double expect[] = {0.6, 0.8, 0.0, 1.0};
  for (int i = 0; i < 4; ++i) CHECK(b[i] == doctest::Approx(expect[i]).epsilon(1e-15));
  const Tensor again = project_oblique(a, 1);
  CHECK(std::abs(again[0] - a[0]) < 1e-12);
  const Tensor zero = project_oblique(Tensor({1, 2}, {0, 0}), 1);
  CHECK(zero[0] == 0.0);
  // Below the 1e-12 floor the block is divided by the floor itself.
  const Tensor tiny = project_oblique(Tensor({1, 2}, {3e-14, 4e-14}), 1);
  CHECK(tiny[0] == doctest::Approx(0.03).epsilon(1e-12));
}

TEST_CASE("degenerate token sets") {
  std::mt19937_64 rng(8);
  AttentionConfig cfg;
  const AttentionParams ap = AttentionParams::init(cfg, 4, rng);
  const Tensor one({1, 4}, {0.3, -1, 2, 0.5});
  const AttentionResult single = geodesic_attention(one, ap, cfg);
  CHECK(single.weights[0] == 1.0);
  const Tensor v = ap.value(one);
  for (int c = 0; c < 4; ++c) CHECK(single.output[c] == doctest::Approx(v[c]).epsilon(1e-14));

  const Tensor twins({2, 4}, {0.3, -1, 2, 0.5, 0.3, -1, 2, 0.5});
  const AttentionResult pair = geodesic_attention(twins, ap, cfg);
  // Twin distances are only zero up to arccos round-off near 1, bounded by 1e-6;
  // a logit gap of D moves a two-way softmax by at most D / 4.
  for (int k = 0; k < 4; ++k) CHECK(std::abs(pair.weights[k] - 0.5) <= 1e-6 / 4);
}

TEST_CASE("the self logit dominates every row") {
  std::mt19937_64 rng(9);
  AttentionConfig cfg;
  const AttentionParams ap = AttentionParams::init(cfg, 6, rng);
  for (int trial = 0; trial < 50; ++trial) {
    const AttentionResult res = geodesic_attention(Tensor({5, 6}, normal(30, rng, 1.0)), ap, cfg);
    for (std::size_t i = 0; i < 5; ++i)
      for (std::size_t j = 0; j < 5; ++j) CHECK(res.weights[i * 5 + i] >= res.weights[i * 5 + j]);
  }
}

}
