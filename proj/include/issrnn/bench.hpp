#pragma once

#include <string>
#include <vector>

#include "issrnn/matrix.hpp"

namespace issrnn {

struct CsrMatrix {
  int rows = 0;
  int cols = 0;
  std::vector<int> row_ptr;  // rows + 1
  std::vector<int> col_idx;
  std::vector<float> values;

  int nnz() const { return int(values.size()); }
};

CsrMatrix csr_from_dense(const Matrix& dense);
Matrix csr_to_dense(const CsrMatrix& csr);

// W * X for a CSR-encoded W. Validates the CSR structure first.
Matrix spmm_csr(const CsrMatrix& w, const Matrix& x);

// Zero exactly round(s * numel) entries of a copy of w at uniformly-chosen
// positions (sampled without replacement).
Matrix sparsify_random(const Matrix& w, double s, Rng& rng);

// One matched-sparsity measurement point: W is 4h x (in+h), X is (in+h) x batch.
struct BenchCase {
  int hidden = 0;
  int input = 0;
  int batch = 0;
  double sparsity = 0;  // parameter-removal fraction, in [0, 1)
  int repetitions = 15;
  int warmup = 3;
  int threads = 1;
};

// Removing k components deletes 4k rows and 2k columns of W.
struct StructuredShrink {
  int k = 0;
  int rows = 0;
  int cols = 0;
  double fraction = 0;  // achieved parameter-removal fraction
};

// Smallest k whose removal fraction reaches the case's sparsity target.
StructuredShrink structured_shrink(const BenchCase& c, double target);
double structured_removal_fraction(int hidden, int input, int k);

struct BenchRow {
  BenchCase c;
  StructuredShrink shrink;
  double dense_ms = 0;
  double csr_ms = 0;
  double structured_ms = 0;
  double csr_speedup = 0;
  double structured_speedup = 0;
  double max_check_rel_err = 0;  // numeric agreement verified before timing
};

struct BenchReport {
  std::vector<BenchRow> rows;
};

BenchReport run_bench(const std::vector<BenchCase>& cases, uint64_t seed = 1);

std::string bench_report_csv(const BenchReport& report, const std::string& fingerprint);

}  // namespace issrnn
