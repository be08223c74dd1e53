#include "issrnn/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <sstream>

namespace issrnn {

CsrMatrix csr_from_dense(const Matrix& dense) {
  CsrMatrix csr;
  csr.rows = dense.rows;
  csr.cols = dense.cols;
  csr.row_ptr.reserve(size_t(dense.rows) + 1);
  csr.row_ptr.push_back(0);
  for (int i = 0; i < dense.rows; ++i) {
    for (int j = 0; j < dense.cols; ++j) {
      const float v = dense(i, j);
      if (v != 0.0f) {
        csr.col_idx.push_back(j);
        csr.values.push_back(v);
      }
    }
    csr.row_ptr.push_back(int(csr.values.size()));
  }
  return csr;
}

Matrix csr_to_dense(const CsrMatrix& csr) {
  Matrix out(csr.rows, csr.cols);
  for (int i = 0; i < csr.rows; ++i)
    for (int p = csr.row_ptr[size_t(i)]; p < csr.row_ptr[size_t(i) + 1]; ++p)
      out(i, csr.col_idx[size_t(p)]) = csr.values[size_t(p)];
  return out;
}

namespace {

void validate_csr(const CsrMatrix& w) {
  if (w.rows < 1 || w.cols < 1) throw FormatError("CSR: empty shape");
  if (int(w.row_ptr.size()) != w.rows + 1)
    throw FormatError("CSR: row_ptr must have rows+1 entries");
  if (w.row_ptr.front() != 0) throw FormatError("CSR: row_ptr must start at 0");
  for (size_t i = 1; i < w.row_ptr.size(); ++i)
    if (w.row_ptr[i] < w.row_ptr[i - 1]) throw FormatError("CSR: row_ptr not nondecreasing");
  if (w.row_ptr.back() != int(w.values.size()) ||
      w.values.size() != w.col_idx.size())
    throw FormatError("CSR: nnz mismatch between row_ptr, col_idx and values");
  for (int c : w.col_idx)
    if (c < 0 || c >= w.cols) throw FormatError("CSR: column index out of range");
}

}  // namespace

Matrix spmm_csr(const CsrMatrix& w, const Matrix& x) {
  validate_csr(w);
  if (w.cols != x.rows) throw ShapeError("spmm_csr: inner dimensions differ");
  Matrix out(w.rows, x.cols);
  const int n = x.cols;
  for (int i = 0; i < w.rows; ++i) {
    float* crow = &out(i, 0);
    for (int p = w.row_ptr[size_t(i)]; p < w.row_ptr[size_t(i) + 1]; ++p) {
      const float v = w.values[size_t(p)];
      const float* xrow = &x(w.col_idx[size_t(p)], 0);
      for (int j = 0; j < n; ++j) crow[j] += v * xrow[j];
    }
  }
  return out;
}

Matrix sparsify_random(const Matrix& w, double s, Rng& rng) {
  if (s < 0 || s >= 1) throw ParameterError("sparsify_random: s must be in [0, 1)");
  Matrix out = w;
  const size_t n = w.numel();
  const size_t zeros = size_t(std::llround(s * double(n)));
  // Partial Fisher-Yates: the first `zeros` slots end up a uniform sample
  // without replacement.
  std::vector<uint32_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0u);
  for (size_t i = 0; i < zeros; ++i) {
    const size_t j = i + size_t(rng.below(uint64_t(n - i)));
    std::swap(idx[i], idx[j]);
    out.data[idx[i]] = 0.0f;
  }
  return out;
}

double structured_removal_fraction(int hidden, int input, int k) {
  const double before = 4.0 * hidden * (input + hidden);
  const double after = (4.0 * hidden - 4.0 * k) * (input + hidden - 2.0 * k);
  return 1.0 - after / before;
}

StructuredShrink structured_shrink(const BenchCase& c, double target) {
  for (int k = 0; 4 * k < 4 * c.hidden && 2 * k < c.input + c.hidden; ++k) {
    const double frac = structured_removal_fraction(c.hidden, c.input, k);
    if (frac >= target) {
      StructuredShrink s;
      s.k = k;
      s.rows = 4 * c.hidden - 4 * k;
      s.cols = c.input + c.hidden - 2 * k;
      s.fraction = frac;
      return s;
    }
  }
  throw ParameterError("structured_shrink: target removal fraction unreachable");
}

namespace {

double median_ms(std::vector<double>& samples) {
  std::sort(samples.begin(), samples.end());
  const size_t n = samples.size();
  return n % 2 ? samples[n / 2] : 0.5 * (samples[n / 2 - 1] + samples[n / 2]);
}

template <class F>
double time_median_ms(F&& fn, int warmup, int reps) {
  for (int i = 0; i < warmup; ++i) fn();
  std::vector<double> ms;
  ms.reserve(size_t(reps));
  for (int i = 0; i < reps; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    fn();
    const auto t1 = std::chrono::steady_clock::now();
    ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
  }
  return median_ms(ms);
}

// Plain triple loop, same ascending-k accumulation order as the blocked kernel.
Matrix gemm_reference(const Matrix& a, const Matrix& b) {
  Matrix c(a.rows, b.cols);
  for (int i = 0; i < a.rows; ++i)
    for (int p = 0; p < a.cols; ++p) {
      const float av = a(i, p);
      for (int j = 0; j < b.cols; ++j) c(i, j) += av * b(p, j);
    }
  return c;
}

double max_rel_diff(const Matrix& a, const Matrix& b) {
  double worst = 0;
  for (size_t e = 0; e < a.data.size(); ++e) {
    const double d = std::fabs(double(a.data[e]) - double(b.data[e]));
    worst = std::max(worst, d / (1.0 + std::fabs(double(b.data[e]))));
  }
  return worst;
}

}  // namespace

BenchReport run_bench(const std::vector<BenchCase>& cases, uint64_t seed) {
  BenchReport report;
  for (const auto& c : cases) {
    if (c.repetitions < 10) throw ParameterError("run_bench: repetitions must be >= 10");
    if (c.warmup < 3) throw ParameterError("run_bench: warmup must be >= 3");
    Rng rng(seed ^ (uint64_t(c.hidden) << 32) ^ uint64_t(c.batch));

    const int wr = 4 * c.hidden;
    const int wc = c.input + c.hidden;
    Matrix w = rng_uniform(rng, -1.0f, 1.0f, wr, wc);
    Matrix x = rng_uniform(rng, -1.0f, 1.0f, wc, c.batch);
    Matrix w_sparse = sparsify_random(w, c.sparsity, rng);
    CsrMatrix w_csr = csr_from_dense(w_sparse);

    StructuredShrink shrink = structured_shrink(c, c.sparsity);
    Matrix w_struct(std::max(1, shrink.rows), std::max(1, shrink.cols));
    for (int i = 0; i < w_struct.rows; ++i)
      for (int j = 0; j < w_struct.cols; ++j) w_struct(i, j) = w(i, j);
    Matrix x_struct(w_struct.cols, c.batch);
    for (int i = 0; i < x_struct.rows; ++i)
      for (int j = 0; j < c.batch; ++j) x_struct(i, j) = x(i, j);

    BenchRow row;
    row.c = c;
    row.shrink = shrink;

    // All three kernels must agree before any timing happens.
    {
      const Matrix ref = gemm_reference(w_sparse, x);
      row.max_check_rel_err =
          std::max(max_rel_diff(gemm(w_sparse, x, c.threads), ref),
                   max_rel_diff(spmm_csr(w_csr, x), ref));
      const Matrix ref_s = gemm_reference(w_struct, x_struct);
      row.max_check_rel_err = std::max(
          row.max_check_rel_err, max_rel_diff(gemm(w_struct, x_struct, c.threads), ref_s));
      if (row.max_check_rel_err > 1e-5)
        throw NumericError("run_bench: kernel disagreement before timing");
    }

    row.dense_ms =
        time_median_ms([&] { gemm(w_sparse, x, c.threads); }, c.warmup, c.repetitions);
    row.csr_ms = time_median_ms([&] { spmm_csr(w_csr, x); }, c.warmup, c.repetitions);
    row.structured_ms = time_median_ms([&] { gemm(w_struct, x_struct, c.threads); },
                                       c.warmup, c.repetitions);
    row.csr_speedup = row.dense_ms / row.csr_ms;
    row.structured_speedup = row.dense_ms / row.structured_ms;
    report.rows.push_back(row);
  }
  return report;
}

std::string bench_report_csv(const BenchReport& report, const std::string& fingerprint) {
  std::ostringstream out;
  out << "# config_fingerprint=" << fingerprint << "\n";
  out << "case,hidden,input,batch,sparsity,k,struct_rows,struct_cols,achieved_fraction,"
         "threads,dense_ms,csr_ms,structured_ms,csr_speedup,structured_speedup\n";
  int id = 0;
  for (const auto& r : report.rows) {
    out << id++ << "," << r.c.hidden << "," << r.c.input << "," << r.c.batch << ","
        << r.c.sparsity << "," << r.shrink.k << "," << r.shrink.rows << ","
        << r.shrink.cols << "," << r.shrink.fraction << "," << r.c.threads << ","
        << r.dense_ms << "," << r.csr_ms << "," << r.structured_ms << ","
        << r.csr_speedup << "," << r.structured_speedup << "\n";
  }
  return out.str();
}

}  // namespace issrnn
