#pragma once

#include <optional>
#include <vector>

#include "issrnn/matrix.hpp"

namespace issrnn {

// Column-block order of the combined gate weight matrix. Fixed project-wide;
// serialized models record it as "fiuo".
constexpr int kGateF = 0;
constexpr int kGateI = 1;
constexpr int kGateU = 2;
constexpr int kGateO = 3;
constexpr const char* kGateOrder = "fiuo";

// One LSTM layer: a single (input+hidden) x 4*hidden weight matrix whose rows
// split into an input block followed by a recurrent block, and a 1 x 4*hidden
// bias. Column blocks are the f, i, u, o gates in that order.
template <class T>
struct LstmLayerParamsT {
  int input_size = 0;
  int hidden_size = 0;
  Mat<T> weight;
  Mat<T> bias;

  LstmLayerParamsT() = default;
  LstmLayerParamsT(int in, int hidden)
      : input_size(in),
        hidden_size(hidden),
        weight(in + hidden, 4 * hidden),
        bias(1, 4 * hidden) {}

  void check() const {
    if (weight.rows != input_size + hidden_size || weight.cols != 4 * hidden_size)
      throw ShapeError("LstmLayerParams: weight must be (input+hidden) x 4*hidden");
    if (bias.rows != 1 || bias.cols != 4 * hidden_size)
      throw ShapeError("LstmLayerParams: bias must be 1 x 4*hidden");
  }
};

using LstmLayerParams = LstmLayerParamsT<float>;

// Batched state: rows are batch entries.
template <class T>
struct LstmStateT {
  Mat<T> h;
  Mat<T> c;

  LstmStateT() = default;
  LstmStateT(int batch, int hidden) : h(batch, hidden), c(batch, hidden) {}
};

using LstmState = LstmStateT<float>;

template <class T>
struct LstmStepCacheT {
  Mat<T> x;  // layer input after dropout (what the gates actually saw)
  Mat<T> h_prev, c_prev;
  Mat<T> f, i, u, o;
  Mat<T> c, tanh_c;
  std::optional<Mat<T>> dropout_mask;
};

using LstmStepCache = LstmStepCacheT<float>;

// One application of the LSTM recurrence:
//   [f|i|u|o] = act(x*W_x + h_prev*W_h + bias), c = f.c_prev + i.u, h = o.tanh(c)
// dropout_mask, when present, is an inverted-dropout mask applied to x.
template <class T>
std::pair<LstmStateT<T>, LstmStepCacheT<T>> lstm_step(
    const LstmLayerParamsT<T>& p, const Mat<T>& x_t, const LstmStateT<T>& prev,
    const Mat<T>* dropout_mask = nullptr, int threads = 1) {
  p.check();
  if (x_t.cols != p.input_size)
    throw ShapeError("lstm_step: x_t has " + std::to_string(x_t.cols) +
                     " features, layer expects " + std::to_string(p.input_size));
  if (prev.h.cols != p.hidden_size || prev.c.cols != p.hidden_size ||
      prev.h.rows != x_t.rows || prev.c.rows != x_t.rows)
    throw ShapeError("lstm_step: state shape mismatch");

  const int batch = x_t.rows;
  const int h = p.hidden_size;

  LstmStepCacheT<T> cache;
  cache.x = x_t;
  if (dropout_mask) {
    if (!dropout_mask->same_shape(x_t)) throw ShapeError("lstm_step: dropout mask shape");
    cache.x = mul(x_t, *dropout_mask);
    cache.dropout_mask = *dropout_mask;
  }
  cache.h_prev = prev.h;
  cache.c_prev = prev.c;

  // z = x*W[0:in] + h_prev*W[in:in+h] + bias
  Mat<T> z(batch, 4 * h);
  for (int b = 0; b < batch; ++b)
    for (int j = 0; j < 4 * h; ++j) z(b, j) = p.bias(0, j);
  gemm_acc_rowblock(z, cache.x, p.weight, 0, threads);
  gemm_acc_rowblock(z, prev.h, p.weight, p.input_size, threads);

  cache.f = Mat<T>(batch, h);
  cache.i = Mat<T>(batch, h);
  cache.u = Mat<T>(batch, h);
  cache.o = Mat<T>(batch, h);
  cache.c = Mat<T>(batch, h);
  cache.tanh_c = Mat<T>(batch, h);

  LstmStateT<T> next(batch, h);
  for (int b = 0; b < batch; ++b) {
    for (int k = 0; k < h; ++k) {
      const T zf = z(b, kGateF * h + k);
      const T zi = z(b, kGateI * h + k);
      const T zu = z(b, kGateU * h + k);
      const T zo = z(b, kGateO * h + k);
      const T fg = sigmoid_scalar(zf);
      const T ig = sigmoid_scalar(zi);
      const T ug = std::tanh(zu);
      const T og = sigmoid_scalar(zo);
      const T cc = fg * prev.c(b, k) + ig * ug;
      const T tc = std::tanh(cc);
      cache.f(b, k) = fg;
      cache.i(b, k) = ig;
      cache.u(b, k) = ug;
      cache.o(b, k) = og;
      cache.c(b, k) = cc;
      cache.tanh_c(b, k) = tc;
      next.c(b, k) = cc;
      next.h(b, k) = og * tc;
    }
  }
  return {std::move(next), std::move(cache)};
}

template <class T>
struct LstmSequenceCacheT {
  // steps[layer][t]
  std::vector<std::vector<LstmStepCacheT<T>>> steps;
};

template <class T>
struct LstmForwardResultT {
  // h[layer][t]: hidden state of each layer at each step.
  std::vector<std::vector<Mat<T>>> h;
  std::vector<LstmStateT<T>> final_states;
  LstmSequenceCacheT<T> cache;
};

// Unrolled forward over a stacked LSTM. dropout_masks, when non-null, holds one
// mask per layer per step applied to that layer's input.
template <class T>
LstmForwardResultT<T> lstm_sequence_forward(
    const std::vector<LstmLayerParamsT<T>>& layers, const std::vector<Mat<T>>& inputs,
    const std::vector<LstmStateT<T>>& initial,
    const std::vector<std::vector<Mat<T>>>* dropout_masks = nullptr, int threads = 1) {
  const size_t nl = layers.size();
  if (initial.size() != nl)
    throw ShapeError("lstm_sequence_forward: one initial state per layer required");
  for (size_t l = 1; l < nl; ++l)
    if (layers[l].input_size != layers[l - 1].hidden_size)
      throw ShapeError("lstm_sequence_forward: layer " + std::to_string(l) +
                       " input size does not chain with layer " + std::to_string(l - 1));

  LstmForwardResultT<T> res;
  res.h.resize(nl);
  res.cache.steps.resize(nl);
  res.final_states = initial;
  const size_t steps = inputs.size();
  for (size_t l = 0; l < nl; ++l) {
    res.h[l].reserve(steps);
    res.cache.steps[l].reserve(steps);
  }

  for (size_t t = 0; t < steps; ++t) {
    const Mat<T>* in = &inputs[t];
    for (size_t l = 0; l < nl; ++l) {
      const Mat<T>* mask = nullptr;
      if (dropout_masks && !(*dropout_masks)[l].empty()) mask = &(*dropout_masks)[l][t];
      auto [state, cache] = lstm_step(layers[l], *in, res.final_states[l], mask, threads);
      res.final_states[l] = state;
      res.cache.steps[l].push_back(std::move(cache));
      res.h[l].push_back(res.final_states[l].h);
      in = &res.h[l].back();
    }
  }
  return res;
}

template <class T>
struct LstmGradientsT {
  std::vector<Mat<T>> d_weight;
  std::vector<Mat<T>> d_bias;
  // Gradient w.r.t. the pre-dropout input of the bottom layer, per step.
  std::vector<Mat<T>> d_inputs;
};

using LstmGradients = LstmGradientsT<float>;

// Full backpropagation through time. output_grads[t] is dLoss/d(top-layer h_t);
// gradients accumulate over all steps and layers.
template <class T>
LstmGradientsT<T> lstm_backward(const std::vector<LstmLayerParamsT<T>>& layers,
                                const LstmSequenceCacheT<T>& cache,
                                const std::vector<Mat<T>>& output_grads,
                                [[maybe_unused]] int threads = 1) {
  const size_t nl = layers.size();
  if (cache.steps.size() != nl)
    throw ConsistencyError("lstm_backward: cache does not match layer count");
  const size_t steps = cache.steps.empty() ? 0 : cache.steps[0].size();
  for (size_t l = 0; l < nl; ++l)
    if (cache.steps[l].size() != steps)
      throw ConsistencyError("lstm_backward: ragged cache");
  if (output_grads.size() != steps)
    throw ConsistencyError("lstm_backward: one output grad per step required");

  LstmGradientsT<T> g;
  g.d_weight.reserve(nl);
  g.d_bias.reserve(nl);
  for (size_t l = 0; l < nl; ++l) {
    g.d_weight.emplace_back(layers[l].weight.rows, layers[l].weight.cols);
    g.d_bias.emplace_back(1, layers[l].bias.cols);
  }

  // dh arriving at each layer from the layer above (or the loss, for the top).
  std::vector<std::vector<Mat<T>>> dh_from_above(nl);
  dh_from_above[nl - 1] = output_grads;

  for (size_t li = nl; li-- > 0;) {
    const auto& p = layers[li];
    const int h = p.hidden_size;
    const int in = p.input_size;
    if (steps == 0) {
      if (li > 0) dh_from_above[li - 1] = {};
      continue;
    }
    const int batch = cache.steps[li][0].x.rows;
    Mat<T> dh_next(batch, h), dc_next(batch, h);
    std::vector<Mat<T>> dx_below(steps);

    for (size_t t = steps; t-- > 0;) {
      const auto& sc = cache.steps[li][t];
      Mat<T> dh = dh_next;
      if (!dh_from_above[li].empty())
        for (size_t e = 0; e < dh.data.size(); ++e)
          dh.data[e] += dh_from_above[li][t].data[e];

      Mat<T> dz(batch, 4 * h);
      Mat<T> dc_prev(batch, h);
      for (int b = 0; b < batch; ++b) {
        for (int k = 0; k < h; ++k) {
          const T fg = sc.f(b, k), ig = sc.i(b, k), ug = sc.u(b, k), og = sc.o(b, k);
          const T tc = sc.tanh_c(b, k);
          const T dhk = dh(b, k);
          const T dog = dhk * tc;
          T dcc = dhk * og * (T(1) - tc * tc) + dc_next(b, k);
          const T dfg = dcc * sc.c_prev(b, k);
          const T dig = dcc * ug;
          const T dug = dcc * ig;
          dc_prev(b, k) = dcc * fg;
          dz(b, kGateF * h + k) = dfg * fg * (T(1) - fg);
          dz(b, kGateI * h + k) = dig * ig * (T(1) - ig);
          dz(b, kGateU * h + k) = dug * (T(1) - ug * ug);
          dz(b, kGateO * h + k) = dog * og * (T(1) - og);
        }
      }

      // dW += [x; h_prev]^T * dz, done per row block to avoid the concat.
      // A^T*B with A = x (batch x in): dW[r][c] += sum_b x(b,r)*dz(b,c).
      for (int b = 0; b < batch; ++b) {
        const T* xrow = &sc.x(b, 0);
        const T* hrow = &sc.h_prev(b, 0);
        const T* dzrow = &dz(b, 0);
        for (int r = 0; r < in; ++r) {
          const T xv = xrow[r];
          if (xv == T(0)) continue;
          T* wrow = &g.d_weight[li](r, 0);
          for (int c2 = 0; c2 < 4 * h; ++c2) wrow[c2] += xv * dzrow[c2];
        }
        for (int r = 0; r < h; ++r) {
          const T hv = hrow[r];
          if (hv == T(0)) continue;
          T* wrow = &g.d_weight[li](in + r, 0);
          for (int c2 = 0; c2 < 4 * h; ++c2) wrow[c2] += hv * dzrow[c2];
        }
        for (int c2 = 0; c2 < 4 * h; ++c2) g.d_bias[li](0, c2) += dzrow[c2];
      }

      // d[x; h_prev] = dz * W^T, again per row block.
      Mat<T> dx(batch, in);
      Mat<T> dh_prev(batch, h);
      for (int b = 0; b < batch; ++b) {
        const T* dzrow = &dz(b, 0);
        for (int r = 0; r < in; ++r) {
          const T* wrow = &p.weight(r, 0);
          T acc = T(0);
          for (int c2 = 0; c2 < 4 * h; ++c2) acc += dzrow[c2] * wrow[c2];
          dx(b, r) = acc;
        }
        for (int r = 0; r < h; ++r) {
          const T* wrow = &p.weight(in + r, 0);
          T acc = T(0);
          for (int c2 = 0; c2 < 4 * h; ++c2) acc += dzrow[c2] * wrow[c2];
          dh_prev(b, r) = acc;
        }
      }
      if (sc.dropout_mask) dx = mul(dx, *sc.dropout_mask);

      dh_next = std::move(dh_prev);
      dc_next = std::move(dc_prev);
      dx_below[t] = std::move(dx);
    }

    if (li > 0)
      dh_from_above[li - 1] = std::move(dx_below);
    else
      g.d_inputs = std::move(dx_below);
  }
  return g;
}

}  // namespace issrnn
