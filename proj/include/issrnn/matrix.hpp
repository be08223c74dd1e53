#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <thread>
#include <vector>

#include "issrnn/error.hpp"

namespace issrnn {

// Dense row-major matrix. float is the training dtype; the double variant
// exists for finite-difference gradient checks.
template <class T>
struct Mat {
  int rows = 0;
  int cols = 0;
  std::vector<T> data;

  Mat() = default;
  Mat(int r, int c, T fill = T(0)) : rows(r), cols(c), data(size_t(r) * c, fill) {
    if (r < 1 || c < 1) throw ShapeError("Mat: rows and cols must be >= 1");
  }

  T& operator()(int r, int c) { return data[size_t(r) * cols + c]; }
  const T& operator()(int r, int c) const { return data[size_t(r) * cols + c]; }

  size_t numel() const { return data.size(); }

  bool same_shape(const Mat& o) const { return rows == o.rows && cols == o.cols; }
};

using Matrix = Mat<float>;
using MatrixD = Mat<double>;

template <class T, class U>
Mat<U> convert(const Mat<T>& m) {
  Mat<U> out(m.rows, m.cols);
  for (size_t i = 0; i < m.data.size(); ++i) out.data[i] = U(m.data[i]);
  return out;
}

namespace detail {

// Cache block for the tiled GEMM. Overridable at build time.
#ifndef ISSRNN_GEMM_BLOCK
#define ISSRNN_GEMM_BLOCK 64
#endif
constexpr int kGemmBlock = ISSRNN_GEMM_BLOCK;

// C[i][j] (+)= sum_p A[i][p] * B[p][j], with A m x k (leading dim lda) and
// B k x n (leading dim ldb). The p loop always runs ascending, so the
// per-element summation order is fixed regardless of blocking or threads.
template <class T>
void gemm_rows(const T* a, int row_begin, int row_end, int k, int lda, const T* b,
               int n, int ldb, T* c, int ldc, bool accumulate) {
  for (int ib = row_begin; ib < row_end; ib += kGemmBlock) {
    const int ie = std::min(ib + kGemmBlock, row_end);
    if (!accumulate) {
      for (int i = ib; i < ie; ++i)
        for (int j = 0; j < n; ++j) c[size_t(i) * ldc + j] = T(0);
    }
    for (int pb = 0; pb < k; pb += kGemmBlock) {
      const int pe = std::min(pb + kGemmBlock, k);
      for (int i = ib; i < ie; ++i) {
        const T* arow = a + size_t(i) * lda;
        T* crow = c + size_t(i) * ldc;
        for (int p = pb; p < pe; ++p) {
          const T aip = arow[p];
          const T* brow = b + size_t(p) * ldb;
          for (int j = 0; j < n; ++j) crow[j] += aip * brow[j];
        }
      }
    }
  }
}

template <class T>
void gemm_view(const T* a, int m, int k, int lda, const T* b, int n, int ldb, T* c,
               int ldc, bool accumulate, int threads) {
  if (threads <= 1 || m < 2 * kGemmBlock) {
    gemm_rows(a, 0, m, k, lda, b, n, ldb, c, ldc, accumulate);
    return;
  }
  // Partition row blocks across threads; each output element stays owned by
  // exactly one thread, so results match the single-threaded path bit for bit.
  const int nblocks = (m + kGemmBlock - 1) / kGemmBlock;
  const int nthreads = std::min(threads, nblocks);
  std::vector<std::thread> pool;
  pool.reserve(nthreads);
  for (int t = 0; t < nthreads; ++t) {
    const int b0 = nblocks * t / nthreads;
    const int b1 = nblocks * (t + 1) / nthreads;
    const int r0 = std::min(b0 * kGemmBlock, m);
    const int r1 = std::min(b1 * kGemmBlock, m);
    pool.emplace_back([=] { gemm_rows(a, r0, r1, k, lda, b, n, ldb, c, ldc, accumulate); });
  }
  for (auto& th : pool) th.join();
}

}  // namespace detail

template <class T>
Mat<T> gemm(const Mat<T>& a, const Mat<T>& b, int threads = 1) {
  if (a.cols != b.rows)
    throw ShapeError("gemm: inner dimensions differ (" + std::to_string(a.cols) +
                     " vs " + std::to_string(b.rows) + ")");
  Mat<T> c(a.rows, b.cols);
  detail::gemm_view(a.data.data(), a.rows, a.cols, a.cols, b.data.data(), b.cols,
                    b.cols, c.data.data(), c.cols, false, threads);
  return c;
}

// c += rows [row_begin, row_begin+m) of a  *  b, where a is stored with leading
// dimension lda. Used by the RNN cells to multiply x and h against row blocks
// of one combined weight matrix without concatenating.
template <class T>
void gemm_acc_rowblock(Mat<T>& c, const Mat<T>& a, const Mat<T>& w, int w_row_begin,
                       int threads = 1) {
  if (w_row_begin + a.cols > w.rows)
    throw ShapeError("gemm_acc_rowblock: row block exceeds weight rows");
  if (c.rows != a.rows || c.cols != w.cols)
    throw ShapeError("gemm_acc_rowblock: output shape mismatch");
  detail::gemm_view(a.data.data(), a.rows, a.cols, a.cols,
                    w.data.data() + size_t(w_row_begin) * w.cols, w.cols, w.cols,
                    c.data.data(), c.cols, true, threads);
}

// c (+)= a * b^T with a m x k and b n x k. Row-major dot products, so both
// operands stream contiguously.
template <class T>
void gemm_nt_acc(Mat<T>& c, const Mat<T>& a, const Mat<T>& b, bool accumulate) {
  if (a.cols != b.cols) throw ShapeError("gemm_nt: inner dimensions differ");
  if (c.rows != a.rows || c.cols != b.rows) throw ShapeError("gemm_nt: output shape");
  for (int i = 0; i < a.rows; ++i) {
    const T* arow = &a(i, 0);
    T* crow = &c(i, 0);
    for (int j = 0; j < b.rows; ++j) {
      const T* brow = &b(j, 0);
      T acc = T(0);
      for (int p = 0; p < a.cols; ++p) acc += arow[p] * brow[p];
      crow[j] = accumulate ? crow[j] + acc : acc;
    }
  }
}

// c += a^T * b with a m x k and b m x n (sum over rows of both).
template <class T>
void gemm_tn_acc(Mat<T>& c, const Mat<T>& a, const Mat<T>& b) {
  if (a.rows != b.rows) throw ShapeError("gemm_tn: outer dimensions differ");
  if (c.rows != a.cols || c.cols != b.cols) throw ShapeError("gemm_tn: output shape");
  for (int p = 0; p < a.rows; ++p) {
    const T* arow = &a(p, 0);
    const T* brow = &b(p, 0);
    for (int i = 0; i < a.cols; ++i) {
      const T av = arow[i];
      if (av == T(0)) continue;
      T* crow = &c(i, 0);
      for (int j = 0; j < b.cols; ++j) crow[j] += av * brow[j];
    }
  }
}

inline float sigmoid_scalar(float x) { return 1.0f / (1.0f + std::exp(-x)); }
inline double sigmoid_scalar(double x) { return 1.0 / (1.0 + std::exp(-x)); }

template <class T>
Mat<T> sigmoid(const Mat<T>& m) {
  Mat<T> out(m.rows, m.cols);
  for (size_t i = 0; i < m.data.size(); ++i) out.data[i] = sigmoid_scalar(m.data[i]);
  return out;
}

template <class T>
Mat<T> tanh_mat(const Mat<T>& m) {
  Mat<T> out(m.rows, m.cols);
  for (size_t i = 0; i < m.data.size(); ++i) out.data[i] = std::tanh(m.data[i]);
  return out;
}

template <class T>
Mat<T> add(const Mat<T>& a, const Mat<T>& b) {
  if (!a.same_shape(b)) throw ShapeError("add: shape mismatch");
  Mat<T> out(a.rows, a.cols);
  for (size_t i = 0; i < a.data.size(); ++i) out.data[i] = a.data[i] + b.data[i];
  return out;
}

// Hadamard product.
template <class T>
Mat<T> mul(const Mat<T>& a, const Mat<T>& b) {
  if (!a.same_shape(b)) throw ShapeError("mul: shape mismatch");
  Mat<T> out(a.rows, a.cols);
  for (size_t i = 0; i < a.data.size(); ++i) out.data[i] = a.data[i] * b.data[i];
  return out;
}

// Counter-based generator (splitmix64 finalizer over seed + index), so any
// draw is a pure function of (seed, counter) and streams can be replayed
// exactly.
class Rng {
 public:
  explicit Rng(uint64_t seed) : seed_(seed) {}

  uint64_t next_u64() {
    uint64_t z = seed_ + 0x9E3779B97F4A7C15ULL * ++counter_;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  // In [0, 1).
  double next_unit() { return double(next_u64() >> 11) * 0x1.0p-53; }

  float uniform(float lo, float hi) {
    if (!(lo < hi)) throw ParameterError("Rng::uniform: requires lo < hi");
    float v = float(lo + (hi - lo) * next_unit());
    if (v >= hi) v = std::nextafterf(hi, lo);
    if (v < lo) v = lo;
    return v;
  }

  // Uniform integer in [0, n).
  uint64_t below(uint64_t n) { return next_u64() % n; }

  bool bernoulli(double p) { return next_unit() < p; }

  // Derive an independent stream (e.g. one per purpose within a run).
  Rng fork(uint64_t stream) const {
    Rng r(seed_ ^ (0xD1B54A32D192ED03ULL * (stream + 1)));
    return r;
  }

  uint64_t seed() const { return seed_; }
  uint64_t counter() const { return counter_; }

 private:
  uint64_t seed_ = 0;
  uint64_t counter_ = 0;
};

inline Matrix rng_uniform(Rng& rng, float lo, float hi, int rows, int cols) {
  if (!(lo < hi)) throw ParameterError("rng_uniform: requires lo < hi");
  Matrix m(rows, cols);
  for (auto& v : m.data) v = rng.uniform(lo, hi);
  return m;
}

}  // namespace issrnn
