#include <cmath>

#include "doctest.h"
#include "issrnn/rhn.hpp"
#include "oracles.hpp"

using namespace issrnn;

namespace {

RhnLayerParams random_cell(int width, int depth, int embed, bool coupled, uint64_t seed) {
  Rng rng(seed);
  RhnLayerParams p(width, depth, embed, coupled);
  auto fill = [&](Matrix& m) { m = rng_uniform(rng, -0.6f, 0.6f, m.rows, m.cols); };
  fill(p.w_h);
  fill(p.w_t);
  for (auto& r : p.r_h) fill(r);
  for (auto& r : p.r_t) fill(r);
  for (auto& b : p.b_h) fill(b);
  for (auto& b : p.b_t) fill(b);
  if (!coupled) {
    fill(p.w_c);
    for (auto& r : p.r_c) fill(r);
    for (auto& b : p.b_c) fill(b);
  }
  return p;
}

}  // namespace

TEST_CASE("rhn_forward with all-zero parameters stays at zero") {
  for (bool coupled : {false, true}) {
    RhnLayerParams p(3, 2, 2, coupled);
    Matrix x(1, 2);
    Matrix s(1, 3);
    auto [out, cache] = rhn_forward(p, x, s);
    for (float v : out.data) CHECK(v == 0.0f);
  }
}

TEST_CASE("rhn_forward depth-1 width-1 matches the scalar oracle") {
  for (bool coupled : {false, true}) {
    for (uint64_t seed = 1; seed <= 8; ++seed) {
      RhnLayerParams p = random_cell(1, 1, 1, coupled, seed);
      Rng rng(seed + 77);
      const float xv = rng.uniform(-2, 2);
      const float sv = rng.uniform(-1, 1);
      Matrix x(1, 1);
      x(0, 0) = xv;
      Matrix s(1, 1);
      s(0, 0) = sv;
      auto [out, cache] = rhn_forward(p, x, s);

      std::vector<oracle::ScalarRhnDepth> depths(1);
      depths[0].r_h = p.r_h[0](0, 0);
      depths[0].b_h = p.b_h[0](0, 0);
      depths[0].r_t = p.r_t[0](0, 0);
      depths[0].b_t = p.b_t[0](0, 0);
      if (!coupled) {
        depths[0].r_c = p.r_c[0](0, 0);
        depths[0].b_c = p.b_c[0](0, 0);
      }
      const double ref = oracle::scalar_rhn_step(
          xv, p.w_h(0, 0), p.w_t(0, 0), coupled ? 0.0 : p.w_c(0, 0), depths, sv, coupled);
      CHECK(out(0, 0) == doctest::Approx(ref).epsilon(1e-6));
    }
  }
}

TEST_CASE("depth-2 cell equals two chained depth-1 applications") {
  RhnLayerParams p = random_cell(3, 2, 2, false, 42);
  Rng rng(99);
  Matrix x = rng_uniform(rng, -1.0f, 1.0f, 2, 2);
  Matrix s = rng_uniform(rng, -1.0f, 1.0f, 2, 3);
  auto [out, cache] = rhn_forward(p, x, s);

  // First application: depth-1 cell with the real input transforms.
  RhnLayerParams d1(3, 1, 2, false);
  d1.w_h = p.w_h;
  d1.w_t = p.w_t;
  d1.w_c = p.w_c;
  d1.r_h[0] = p.r_h[0];
  d1.r_t[0] = p.r_t[0];
  d1.r_c[0] = p.r_c[0];
  d1.b_h[0] = p.b_h[0];
  d1.b_t[0] = p.b_t[0];
  d1.b_c[0] = p.b_c[0];
  // Second: input transforms see a zero input, recurrences are the depth-2 set.
  RhnLayerParams d2(3, 1, 2, false);
  d2.r_h[0] = p.r_h[1];
  d2.r_t[0] = p.r_t[1];
  d2.r_c[0] = p.r_c[1];
  d2.b_h[0] = p.b_h[1];
  d2.b_t[0] = p.b_t[1];
  d2.b_c[0] = p.b_c[1];

  auto [s1, c1] = rhn_forward(d1, x, s);
  Matrix zero_x(2, 2);
  auto [s2, c2] = rhn_forward(d2, zero_x, s1);
  for (size_t e = 0; e < out.data.size(); ++e)
    CHECK(out.data[e] == doctest::Approx(s2.data[e]).epsilon(1e-6));
}

TEST_CASE("rhn_backward zero grads give zero gradients") {
  RhnLayerParams p = random_cell(3, 2, 2, false, 5);
  Rng rng(6);
  Matrix x = rng_uniform(rng, -1.0f, 1.0f, 1, 2);
  Matrix s = rng_uniform(rng, -1.0f, 1.0f, 1, 3);
  auto [out, cache] = rhn_forward(p, x, s);
  RhnGradients g(p);
  rhn_backward(p, cache, Matrix(1, 3), g);
  for (float v : g.d_w_h.data) CHECK(v == 0.0f);
  for (float v : g.d_r_t[1].data) CHECK(v == 0.0f);
  for (float v : g.d_x.data) CHECK(v == 0.0f);
  for (float v : g.d_s_prev.data) CHECK(v == 0.0f);
}

TEST_CASE("width-1 depth-1 backward matches central differences") {
  for (bool coupled : {false, true}) {
    auto p64 = RhnLayerParamsT<double>(1, 1, 1, coupled);
    Rng rng(coupled ? 301 : 300);
    auto fill = [&](Mat<double>& m) {
      for (auto& v : m.data) v = rng.uniform(-0.8f, 0.8f);
    };
    fill(p64.w_h);
    fill(p64.w_t);
    fill(p64.r_h[0]);
    fill(p64.r_t[0]);
    fill(p64.b_h[0]);
    fill(p64.b_t[0]);
    if (!coupled) {
      fill(p64.w_c);
      fill(p64.r_c[0]);
      fill(p64.b_c[0]);
    }
    Mat<double> x(1, 1);
    x(0, 0) = rng.uniform(-2, 2);
    Mat<double> s(1, 1);
    s(0, 0) = rng.uniform(-1, 1);

    auto loss = [&]() {
      auto [out, cache] = rhn_forward(p64, x, s);
      return out(0, 0);
    };
    auto [out, cache] = rhn_forward(p64, x, s);
    RhnGradientsT<double> g(p64);
    rhn_backward(p64, cache, Mat<double>(1, 1, 1.0), g);

    struct Entry {
      double* w;
      double g;
    };
    std::vector<Entry> entries{{&p64.w_h(0, 0), g.d_w_h(0, 0)},
                               {&p64.w_t(0, 0), g.d_w_t(0, 0)},
                               {&p64.r_h[0](0, 0), g.d_r_h[0](0, 0)},
                               {&p64.r_t[0](0, 0), g.d_r_t[0](0, 0)},
                               {&p64.b_h[0](0, 0), g.d_b_h[0](0, 0)},
                               {&p64.b_t[0](0, 0), g.d_b_t[0](0, 0)},
                               {&x(0, 0), g.d_x(0, 0)},
                               {&s(0, 0), g.d_s_prev(0, 0)}};
    if (!coupled) {
      entries.push_back({&p64.w_c(0, 0), g.d_w_c(0, 0)});
      entries.push_back({&p64.r_c[0](0, 0), g.d_r_c[0](0, 0)});
      entries.push_back({&p64.b_c[0](0, 0), g.d_b_c[0](0, 0)});
    }
    const double eps = 1e-6;
    for (auto& e : entries) {
      const double saved = *e.w;
      *e.w = saved + eps;
      const double lp = loss();
      *e.w = saved - eps;
      const double lm = loss();
      *e.w = saved;
      const double fd = (lp - lm) / (2 * eps);
      CHECK(e.g == doctest::Approx(fd).epsilon(1e-5));
    }
  }
}
