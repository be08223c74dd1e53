#pragma once

#include <vector>

#include "issrnn/matrix.hpp"

namespace issrnn {

// Recurrent highway layer. Per intra-step depth l (1-based in the math,
// 0-based here):
//   h_l = tanh(x*W_h*[l==0] + s_{l-1}*R_h[l] + b_h[l])
//   t_l = sigm(x*W_t*[l==0] + s_{l-1}*R_t[l] + b_t[l])
//   c_l = coupled ? 1 - t_l : sigm(x*W_c*[l==0] + s_{l-1}*R_c[l] + b_c[l])
//   s_l = h_l . t_l + s_{l-1} . c_l
// The input transforms exist at depth 0 only. With coupled_c the C transform
// tensors are absent entirely.
template <class T>
struct RhnLayerParamsT {
  int width = 0;
  int depth = 0;
  int embed_dim = 0;
  bool coupled_c = false;

  Mat<T> w_h, w_t, w_c;               // embed_dim x width
  std::vector<Mat<T>> r_h, r_t, r_c;  // per depth, width x width
  std::vector<Mat<T>> b_h, b_t, b_c;  // per depth, 1 x width

  RhnLayerParamsT() = default;
  RhnLayerParamsT(int w, int d, int embed, bool coupled)
      : width(w), depth(d), embed_dim(embed), coupled_c(coupled) {
    if (d < 1 || w < 1) throw ShapeError("RhnLayerParams: width and depth must be >= 1");
    w_h = Mat<T>(embed, w);
    w_t = Mat<T>(embed, w);
    for (int l = 0; l < d; ++l) {
      r_h.emplace_back(w, w);
      r_t.emplace_back(w, w);
      b_h.emplace_back(1, w);
      b_t.emplace_back(1, w);
    }
    if (!coupled) {
      w_c = Mat<T>(embed, w);
      for (int l = 0; l < d; ++l) {
        r_c.emplace_back(w, w);
        b_c.emplace_back(1, w);
      }
    }
  }
};

using RhnLayerParams = RhnLayerParamsT<float>;

template <class T>
struct RhnStepCacheT {
  Mat<T> x;
  Mat<T> s_prev;
  // Per depth.
  std::vector<Mat<T>> s_in, h, t, c;
};

using RhnStepCache = RhnStepCacheT<float>;

template <class T>
std::pair<Mat<T>, RhnStepCacheT<T>> rhn_forward(const RhnLayerParamsT<T>& p,
                                                const Mat<T>& x, const Mat<T>& s_prev,
                                                int threads = 1) {
  if (x.cols != p.embed_dim) throw ShapeError("rhn_forward: x feature size mismatch");
  if (s_prev.cols != p.width || s_prev.rows != x.rows)
    throw ShapeError("rhn_forward: state shape mismatch");
  const int batch = x.rows;
  const int w = p.width;

  RhnStepCacheT<T> cache;
  cache.x = x;
  cache.s_prev = s_prev;

  Mat<T> s = s_prev;
  for (int l = 0; l < p.depth; ++l) {
    auto preact = [&](const Mat<T>& win, const std::vector<Mat<T>>& r,
                      const std::vector<Mat<T>>& bias) {
      Mat<T> z(batch, w);
      for (int b = 0; b < batch; ++b)
        for (int j = 0; j < w; ++j) z(b, j) = bias[l](0, j);
      if (l == 0) gemm_acc_rowblock(z, x, win, 0, threads);
      gemm_acc_rowblock(z, s, r[l], 0, threads);
      return z;
    };
    Mat<T> hm = tanh_mat(preact(p.w_h, p.r_h, p.b_h));
    Mat<T> tm = sigmoid(preact(p.w_t, p.r_t, p.b_t));
    Mat<T> cm(batch, w);
    if (p.coupled_c) {
      for (size_t e = 0; e < cm.data.size(); ++e) cm.data[e] = T(1) - tm.data[e];
    } else {
      cm = sigmoid(preact(p.w_c, p.r_c, p.b_c));
    }
    cache.s_in.push_back(s);
    Mat<T> s_next(batch, w);
    for (size_t e = 0; e < s.data.size(); ++e)
      s_next.data[e] = hm.data[e] * tm.data[e] + s.data[e] * cm.data[e];
    cache.h.push_back(std::move(hm));
    cache.t.push_back(std::move(tm));
    cache.c.push_back(std::move(cm));
    s = std::move(s_next);
  }
  return {std::move(s), std::move(cache)};
}

template <class T>
struct RhnGradientsT {
  Mat<T> d_w_h, d_w_t, d_w_c;
  std::vector<Mat<T>> d_r_h, d_r_t, d_r_c;
  std::vector<Mat<T>> d_b_h, d_b_t, d_b_c;
  Mat<T> d_x;
  Mat<T> d_s_prev;

  explicit RhnGradientsT(const RhnLayerParamsT<T>& p) {
    d_w_h = Mat<T>(p.w_h.rows, p.w_h.cols);
    d_w_t = Mat<T>(p.w_t.rows, p.w_t.cols);
    for (int l = 0; l < p.depth; ++l) {
      d_r_h.emplace_back(p.width, p.width);
      d_r_t.emplace_back(p.width, p.width);
      d_b_h.emplace_back(1, p.width);
      d_b_t.emplace_back(1, p.width);
    }
    if (!p.coupled_c) {
      d_w_c = Mat<T>(p.w_c.rows, p.w_c.cols);
      for (int l = 0; l < p.depth; ++l) {
        d_r_c.emplace_back(p.width, p.width);
        d_b_c.emplace_back(1, p.width);
      }
    }
  }
};

using RhnGradients = RhnGradientsT<float>;

// Backprop through one time step. ds is dLoss/ds_L. Gradients accumulate into
// grads so callers can reuse one buffer across a sequence.
template <class T>
void rhn_backward(const RhnLayerParamsT<T>& p, const RhnStepCacheT<T>& cache,
                  const Mat<T>& ds_out, RhnGradientsT<T>& grads) {
  if (int(cache.s_in.size()) != p.depth)
    throw ConsistencyError("rhn_backward: cache depth mismatch");
  const int batch = cache.x.rows;
  const int w = p.width;

  if (grads.d_x.rows == 0) grads.d_x = Mat<T>(batch, p.embed_dim);
  if (grads.d_s_prev.rows == 0) grads.d_s_prev = Mat<T>(batch, w);

  Mat<T> ds = ds_out;
  Mat<T> dx(batch, p.embed_dim);
  for (int l = p.depth - 1; l >= 0; --l) {
    const Mat<T>& s_in = cache.s_in[l];
    const Mat<T>& hm = cache.h[l];
    const Mat<T>& tm = cache.t[l];
    const Mat<T>& cm = cache.c[l];

    Mat<T> da(batch, w), dbt(batch, w), dbc(batch, w), ds_in(batch, w);
    for (int b = 0; b < batch; ++b) {
      for (int k = 0; k < w; ++k) {
        const T d = ds(b, k);
        const T dh = d * tm(b, k);
        T dt = d * hm(b, k);
        const T dc = d * s_in(b, k);
        ds_in(b, k) = d * cm(b, k);
        da(b, k) = dh * (T(1) - hm(b, k) * hm(b, k));
        if (p.coupled_c) {
          dt -= dc;  // c = 1 - t
          dbc(b, k) = T(0);
        } else {
          dbc(b, k) = dc * cm(b, k) * (T(1) - cm(b, k));
        }
        dbt(b, k) = dt * tm(b, k) * (T(1) - tm(b, k));
      }
    }

    auto accumulate = [&](const Mat<T>& dpre, Mat<T>& d_win, Mat<T>& d_r,
                          Mat<T>& d_b) {
      // d_r += s_in^T * dpre; d_b += colsum(dpre); ds_in += dpre * R^T (+ dx via W^T).
      for (int b = 0; b < batch; ++b) {
        const T* dprow = &dpre(b, 0);
        const T* srow = &s_in(b, 0);
        for (int r = 0; r < w; ++r) {
          const T sv = srow[r];
          if (sv != T(0)) {
            T* drow = &d_r(r, 0);
            for (int c2 = 0; c2 < w; ++c2) drow[c2] += sv * dprow[c2];
          }
        }
        for (int c2 = 0; c2 < w; ++c2) d_b(0, c2) += dprow[c2];
        if (l == 0) {
          const T* xrow = &cache.x(b, 0);
          for (int r = 0; r < p.embed_dim; ++r) {
            const T xv = xrow[r];
            if (xv != T(0)) {
              T* drow = &d_win(r, 0);
              for (int c2 = 0; c2 < w; ++c2) drow[c2] += xv * dprow[c2];
            }
          }
        }
      }
      return;
    };

    accumulate(da, grads.d_w_h, grads.d_r_h[l], grads.d_b_h[l]);
    accumulate(dbt, grads.d_w_t, grads.d_r_t[l], grads.d_b_t[l]);
    if (!p.coupled_c) accumulate(dbc, grads.d_w_c, grads.d_r_c[l], grads.d_b_c[l]);

    auto backprop_input = [&](const Mat<T>& dpre, const Mat<T>& r, const Mat<T>& win) {
      for (int b = 0; b < batch; ++b) {
        const T* dprow = &dpre(b, 0);
        for (int rr = 0; rr < w; ++rr) {
          const T* rrow = &r(rr, 0);
          T acc = T(0);
          for (int c2 = 0; c2 < w; ++c2) acc += dprow[c2] * rrow[c2];
          ds_in(b, rr) += acc;
        }
        if (l == 0) {
          for (int rr = 0; rr < p.embed_dim; ++rr) {
            const T* wrow = &win(rr, 0);
            T acc = T(0);
            for (int c2 = 0; c2 < w; ++c2) acc += dprow[c2] * wrow[c2];
            dx(b, rr) += acc;
          }
        }
      }
    };
    backprop_input(da, p.r_h[l], p.w_h);
    backprop_input(dbt, p.r_t[l], p.w_t);
    if (!p.coupled_c) backprop_input(dbc, p.r_c[l], p.w_c);

    ds = std::move(ds_in);
  }

  for (size_t e = 0; e < ds.data.size(); ++e) grads.d_s_prev.data[e] += ds.data[e];
  for (size_t e = 0; e < dx.data.size(); ++e) grads.d_x.data[e] += dx.data[e];
}

}  // namespace issrnn
