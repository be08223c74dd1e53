#include <cmath>

#include "doctest.h"
#include "issrnn/bench.hpp"

using namespace issrnn;

TEST_CASE("sparsify_random zero counts") {
  Rng rng(1);
  Matrix w = rng_uniform(rng, 0.5f, 1.0f, 10, 10);
  Matrix w0 = sparsify_random(w, 0.0, rng);
  CHECK(w0.data == w.data);

  Matrix w5 = sparsify_random(w, 0.5, rng);
  int zeros = 0;
  for (float v : w5.data) zeros += v == 0.0f;
  CHECK(zeros == 50);

  CHECK_THROWS_AS(sparsify_random(w, 1.0, rng), ParameterError);
  CHECK_THROWS_AS(sparsify_random(w, -0.1, rng), ParameterError);
}

TEST_CASE("sparsify_random positions are row-uniform (chi-square)") {
  // 10^4 draws of a sparsified 20x20 at s=0.25; row totals should not reject
  // uniformity at p = 0.01 (chi2 crit for 19 dof is 36.19).
  Rng rng(777);
  const int rows = 20, cols = 20;
  std::vector<long long> row_counts(rows, 0);
  Matrix w(rows, cols, 1.0f);
  const int trials = 100;
  for (int t = 0; t < trials; ++t) {
    Matrix s = sparsify_random(w, 0.25, rng);
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < cols; ++j) row_counts[size_t(i)] += s(i, j) == 0.0f;
  }
  const double total = 0.25 * rows * cols * trials;
  const double expect = total / rows;
  double chi2 = 0;
  for (long long c : row_counts) chi2 += (c - expect) * (c - expect) / expect;
  CHECK(chi2 < 36.19);
}

TEST_CASE("csr round trip and spmm basics") {
  // empty (all-zero) matrix
  Matrix zero(3, 4);
  CsrMatrix z = csr_from_dense(zero);
  CHECK(z.nnz() == 0);
  Matrix x(4, 2, 1.0f);
  Matrix out = spmm_csr(z, x);
  for (float v : out.data) CHECK(v == 0.0f);

  // identity
  Matrix eye(4, 4);
  for (int i = 0; i < 4; ++i) eye(i, i) = 1.0f;
  Rng rng(3);
  Matrix x2 = rng_uniform(rng, -1.0f, 1.0f, 4, 5);
  Matrix out2 = spmm_csr(csr_from_dense(eye), x2);
  CHECK(out2.data == x2.data);
}

TEST_CASE("spmm matches dense gemm on a random sparse matrix") {
  Rng rng(9);
  Matrix w = rng_uniform(rng, -1.0f, 1.0f, 32, 32);
  Matrix ws = sparsify_random(w, 0.9, rng);
  Matrix x = rng_uniform(rng, -1.0f, 1.0f, 32, 8);
  Matrix dense = gemm(ws, x);
  Matrix sparse = spmm_csr(csr_from_dense(ws), x);
  for (size_t e = 0; e < dense.data.size(); ++e) {
    const double denom = 1.0 + std::fabs(double(dense.data[e]));
    CHECK(std::fabs(double(sparse.data[e]) - double(dense.data[e])) / denom < 1e-5);
  }
}

TEST_CASE("malformed csr structures are rejected") {
  Matrix x(3, 2, 1.0f);
  CsrMatrix bad;
  bad.rows = 2;
  bad.cols = 3;
  bad.row_ptr = {0, 1};  // wrong length
  bad.col_idx = {0};
  bad.values = {1.0f};
  CHECK_THROWS_AS(spmm_csr(bad, x), FormatError);

  bad.row_ptr = {0, 2, 1};  // decreasing
  CHECK_THROWS_AS(spmm_csr(bad, x), FormatError);

  bad.row_ptr = {0, 1, 1};
  bad.col_idx = {7};  // out of range
  CHECK_THROWS_AS(spmm_csr(bad, x), FormatError);

  bad.col_idx = {0};
  bad.values = {1.0f, 2.0f};  // nnz mismatch
  CHECK_THROWS_AS(spmm_csr(bad, x), FormatError);
}

TEST_CASE("structured shrink arithmetic") {
  BenchCase c;
  c.hidden = 1500;
  c.input = 1500;
  c.batch = 10;

  auto s0 = structured_shrink(c, 0.0);
  CHECK(s0.k == 0);
  CHECK(s0.fraction == 0.0);

  // k = 750: shapes 3000 x 1500, fraction 0.75
  CHECK(structured_removal_fraction(1500, 1500, 750) == doctest::Approx(0.75));
  auto s75 = structured_shrink(c, 0.75);
  CHECK(s75.k == 750);
  CHECK(s75.rows == 3000);
  CHECK(s75.cols == 1500);

  // h = in = 4, k = 3: shapes 4 x 2, fraction 1 - 8/128 = 0.9375
  BenchCase small;
  small.hidden = 4;
  small.input = 4;
  small.batch = 2;
  CHECK(structured_removal_fraction(4, 4, 3) == doctest::Approx(1.0 - 8.0 / 128.0));
  auto s3 = structured_shrink(small, 0.9);
  CHECK(s3.k == 3);

  CHECK_THROWS_AS(structured_shrink(small, 0.999), ParameterError);
}

TEST_CASE("fractions are monotone in k") {
  for (int k = 1; k < 60; ++k)
    CHECK(structured_removal_fraction(60, 80, k) >
          structured_removal_fraction(60, 80, k - 1));
}

TEST_CASE("run_bench validates, times and reports") {
  BenchCase c;
  c.hidden = 32;
  c.input = 32;
  c.batch = 4;
  c.sparsity = 0.5;
  c.repetitions = 11;
  c.warmup = 3;
  auto report = run_bench({c}, 5);
  REQUIRE(report.rows.size() == 1);
  const auto& r = report.rows[0];
  CHECK(r.max_check_rel_err <= 1e-5);
  CHECK(r.dense_ms > 0);
  CHECK(r.csr_ms > 0);
  CHECK(r.structured_ms > 0);
  CHECK(r.csr_speedup == doctest::Approx(r.dense_ms / r.csr_ms));

  const std::string csv = bench_report_csv(report, "deadbeef");
  CHECK(csv.find("# config_fingerprint=deadbeef\n") == 0);
  CHECK(csv.find("dense_ms") != std::string::npos);

  BenchCase bad = c;
  bad.repetitions = 5;
  CHECK_THROWS_AS(run_bench({bad}, 5), ParameterError);
  bad = c;
  bad.warmup = 1;
  CHECK_THROWS_AS(run_bench({bad}, 5), ParameterError);
}
