#pragma once

#include <cmath>
#include <span>
#include <variant>
#include <vector>

#include "issrnn/data.hpp"
#include "issrnn/iss.hpp"
#include "issrnn/lstm.hpp"
#include "issrnn/rhn.hpp"

namespace issrnn {

// Character-level language model built from a stacked LSTM. The embedding and
// biases stay outside the ISS groups; the output weight rows are the top
// layer's receiver.
template <class T>
struct LstmLmModelT {
  int vocab = 0;
  int embed_dim = 0;
  Mat<T> embedding;  // vocab x embed
  std::vector<LstmLayerParamsT<T>> layers;
  Mat<T> output_weight;  // hidden_top x vocab
  Mat<T> output_bias;    // 1 x vocab
};

template <class T>
struct RhnLmModelT {
  int vocab = 0;
  int embed_dim = 0;
  bool tied = false;
  Mat<T> embedding;  // vocab x embed; doubles as the output weight when tied
  RhnLayerParamsT<T> cell;
  Mat<T> output_weight;  // width x vocab; unused when tied
  Mat<T> output_bias;    // 1 x vocab
};

using LstmLmModel = LstmLmModelT<float>;
using RhnLmModel = RhnLmModelT<float>;

template <class T>
using LmModelT = std::variant<LstmLmModelT<T>, RhnLmModelT<T>>;
using Model = LmModelT<float>;

// ---------------------------------------------------------------------------
// Construction and tensor access.

inline Model make_lstm_lm(int vocab, int embed_dim, const std::vector<int>& hidden,
                          uint64_t seed, float init_scale = 0.1f) {
  if (vocab < 2) throw ParameterError("make_lstm_lm: vocab must be >= 2");
  if (hidden.empty()) throw ParameterError("make_lstm_lm: at least one layer");
  LstmLmModel m;
  m.vocab = vocab;
  m.embed_dim = embed_dim;
  Rng rng(seed);
  m.embedding = rng_uniform(rng, -init_scale, init_scale, vocab, embed_dim);
  int in = embed_dim;
  for (int h : hidden) {
    LstmLayerParams p(in, h);
    p.weight = rng_uniform(rng, -init_scale, init_scale, in + h, 4 * h);
    // biases start at zero, including the forget gate
    m.layers.push_back(std::move(p));
    in = h;
  }
  m.output_weight = rng_uniform(rng, -init_scale, init_scale, in, vocab);
  m.output_bias = Matrix(1, vocab);
  return m;
}

inline Model make_rhn_lm(int vocab, int embed_dim, int width, int depth, bool coupled_c,
                         bool tied, uint64_t seed, float init_scale = 0.1f) {
  if (vocab < 2) throw ParameterError("make_rhn_lm: vocab must be >= 2");
  if (tied && embed_dim != width)
    throw ParameterError("make_rhn_lm: tied output requires embed_dim == width");
  RhnLmModel m;
  m.vocab = vocab;
  m.embed_dim = embed_dim;
  m.tied = tied;
  Rng rng(seed);
  m.embedding = rng_uniform(rng, -init_scale, init_scale, vocab, embed_dim);
  m.cell = RhnLayerParams(width, depth, embed_dim, coupled_c);
  auto fill = [&](Matrix& t) { t = rng_uniform(rng, -init_scale, init_scale, t.rows, t.cols); };
  fill(m.cell.w_h);
  fill(m.cell.w_t);
  for (auto& r : m.cell.r_h) fill(r);
  for (auto& r : m.cell.r_t) fill(r);
  if (!coupled_c) {
    fill(m.cell.w_c);
    for (auto& r : m.cell.r_c) fill(r);
  }
  if (!tied) m.output_weight = rng_uniform(rng, -init_scale, init_scale, width, vocab);
  m.output_bias = Matrix(1, vocab);
  return m;
}

// Stable tensor naming shared by serialization, grouping and reports.
template <class T>
std::vector<std::pair<std::string, Mat<T>*>> named_tensors(LmModelT<T>& model) {
  std::vector<std::pair<std::string, Mat<T>*>> out;
  if (auto* m = std::get_if<LstmLmModelT<T>>(&model)) {
    out.emplace_back("embedding", &m->embedding);
    for (size_t n = 0; n < m->layers.size(); ++n) {
      out.emplace_back("lstm" + std::to_string(n) + ".weight", &m->layers[n].weight);
      out.emplace_back("lstm" + std::to_string(n) + ".bias", &m->layers[n].bias);
    }
    out.emplace_back("output.weight", &m->output_weight);
    out.emplace_back("output.bias", &m->output_bias);
  } else {
    auto* m2 = std::get_if<RhnLmModelT<T>>(&model);
    auto& c = m2->cell;
    out.emplace_back("embedding", &m2->embedding);
    out.emplace_back("rhn.w_h", &c.w_h);
    out.emplace_back("rhn.w_t", &c.w_t);
    if (!c.coupled_c) out.emplace_back("rhn.w_c", &c.w_c);
    for (int l = 0; l < c.depth; ++l) {
      const std::string sl = std::to_string(l);
      out.emplace_back("rhn.r_h." + sl, &c.r_h[l]);
      out.emplace_back("rhn.r_t." + sl, &c.r_t[l]);
      if (!c.coupled_c) out.emplace_back("rhn.r_c." + sl, &c.r_c[l]);
      out.emplace_back("rhn.b_h." + sl, &c.b_h[l]);
      out.emplace_back("rhn.b_t." + sl, &c.b_t[l]);
      if (!c.coupled_c) out.emplace_back("rhn.b_c." + sl, &c.b_c[l]);
    }
    if (!m2->tied) out.emplace_back("output.weight", &m2->output_weight);
    out.emplace_back("output.bias", &m2->output_bias);
  }
  return out;
}

template <class T>
std::vector<std::pair<std::string, const Mat<T>*>> named_tensors_const(
    const LmModelT<T>& model) {
  auto mut = named_tensors(const_cast<LmModelT<T>&>(model));
  std::vector<std::pair<std::string, const Mat<T>*>> out;
  out.reserve(mut.size());
  for (auto& [n, p] : mut) out.emplace_back(n, p);
  return out;
}

template <class T>
LmModelT<T> zero_like(const LmModelT<T>& model) {
  LmModelT<T> z = model;
  auto ts = named_tensors(z);
  for (auto& [n, m] : ts) std::fill(m->data.begin(), m->data.end(), T(0));
  return z;
}

template <class T, class U>
LmModelT<U> convert_model(const LmModelT<T>& model) {
  if (auto* m = std::get_if<LstmLmModelT<T>>(&model)) {
    LstmLmModelT<U> out;
    out.vocab = m->vocab;
    out.embed_dim = m->embed_dim;
    out.embedding = convert<T, U>(m->embedding);
    for (const auto& l : m->layers) {
      LstmLayerParamsT<U> p;
      p.input_size = l.input_size;
      p.hidden_size = l.hidden_size;
      p.weight = convert<T, U>(l.weight);
      p.bias = convert<T, U>(l.bias);
      out.layers.push_back(std::move(p));
    }
    out.output_weight = convert<T, U>(m->output_weight);
    out.output_bias = convert<T, U>(m->output_bias);
    return out;
  }
  const auto& m2 = std::get<RhnLmModelT<T>>(model);
  RhnLmModelT<U> out;
  out.vocab = m2.vocab;
  out.embed_dim = m2.embed_dim;
  out.tied = m2.tied;
  out.embedding = convert<T, U>(m2.embedding);
  out.cell.width = m2.cell.width;
  out.cell.depth = m2.cell.depth;
  out.cell.embed_dim = m2.cell.embed_dim;
  out.cell.coupled_c = m2.cell.coupled_c;
  out.cell.w_h = convert<T, U>(m2.cell.w_h);
  out.cell.w_t = convert<T, U>(m2.cell.w_t);
  if (!m2.cell.coupled_c) out.cell.w_c = convert<T, U>(m2.cell.w_c);
  for (int l = 0; l < m2.cell.depth; ++l) {
    out.cell.r_h.push_back(convert<T, U>(m2.cell.r_h[l]));
    out.cell.r_t.push_back(convert<T, U>(m2.cell.r_t[l]));
    out.cell.b_h.push_back(convert<T, U>(m2.cell.b_h[l]));
    out.cell.b_t.push_back(convert<T, U>(m2.cell.b_t[l]));
    if (!m2.cell.coupled_c) {
      out.cell.r_c.push_back(convert<T, U>(m2.cell.r_c[l]));
      out.cell.b_c.push_back(convert<T, U>(m2.cell.b_c[l]));
    }
  }
  if (!m2.tied) out.output_weight = convert<T, U>(m2.output_weight);
  out.output_bias = convert<T, U>(m2.output_bias);
  return out;
}

// ---------------------------------------------------------------------------
// Forward / backward over a token batch.

struct TokenBatch {
  // inputs[t][b] is the token fed at step t in stream b; targets aligned.
  std::vector<std::vector<int>> inputs;
  std::vector<std::vector<int>> targets;
};

template <class T>
struct LmStatesT {
  std::vector<LstmStateT<T>> lstm;  // per layer
  Mat<T> rhn_s;
};

using LmStates = LmStatesT<float>;

template <class T>
LmStatesT<T> zero_states(const LmModelT<T>& model, int batch) {
  LmStatesT<T> s;
  if (auto* m = std::get_if<LstmLmModelT<T>>(&model)) {
    for (const auto& l : m->layers) s.lstm.emplace_back(batch, l.hidden_size);
  } else {
    s.rhn_s = Mat<T>(batch, std::get<RhnLmModelT<T>>(model).cell.width);
  }
  return s;
}

namespace detail {

// Row-wise softmax cross entropy. Returns summed nll; fills dlogits (scaled by
// grad_scale) when requested.
template <class T>
double softmax_nll(const Mat<T>& logits, const std::vector<int>& targets,
                   Mat<T>* dlogits, double grad_scale) {
  double total = 0;
  const int v = logits.cols;
  for (int b = 0; b < logits.rows; ++b) {
    const T* row = &logits(b, 0);
    T mx = row[0];
    for (int j = 1; j < v; ++j) mx = std::max(mx, row[j]);
    double sum = 0;
    for (int j = 0; j < v; ++j) sum += std::exp(double(row[j]) - double(mx));
    const double lse = double(mx) + std::log(sum);
    const int tgt = targets[size_t(b)];
    total += lse - double(row[tgt]);
    if (dlogits) {
      T* drow = &(*dlogits)(b, 0);
      for (int j = 0; j < v; ++j) {
        const double p = std::exp(double(row[j]) - lse);
        drow[j] = T((p - (j == tgt ? 1.0 : 0.0)) * grad_scale);
      }
    }
  }
  return total;
}

template <class T>
Mat<T> embed_rows(const Mat<T>& embedding, const std::vector<int>& tokens) {
  Mat<T> x(int(tokens.size()), embedding.cols);
  for (size_t b = 0; b < tokens.size(); ++b) {
    const int id = tokens[b];
    if (id < 0 || id >= embedding.rows) throw ParameterError("token id out of range");
    for (int j = 0; j < embedding.cols; ++j) x(int(b), j) = embedding(id, j);
  }
  return x;
}

template <class T>
Mat<T> dropout_mask(int rows, int cols, double keep, Rng& rng) {
  Mat<T> m(rows, cols);
  const T inv = T(1.0 / keep);
  for (auto& v : m.data) v = rng.bernoulli(keep) ? inv : T(0);
  return m;
}

}  // namespace detail

// Runs the model over one batch, accumulating gradients into *grads when it
// is non-null. States are advanced in place (batches chain within an epoch).
// Returns the summed token NLL. Gradients correspond to the loss
// grad_loss_scale * (summed NLL); 0 selects the per-token mean 1/(steps*B).
// Training uses 1/B, the usual sum-over-steps cost.
template <class T>
double lm_process_batch(const LmModelT<T>& model, const TokenBatch& batch,
                        LmStatesT<T>& states, double dropout_keep, Rng* drop_rng,
                        LmModelT<T>* grads, int threads = 1,
                        double grad_loss_scale = 0) {
  const size_t steps = batch.inputs.size();
  if (steps == 0) return 0;
  if (batch.targets.size() != steps)
    throw ConsistencyError("lm_process_batch: inputs/targets length mismatch");
  const int B = int(batch.inputs[0].size());
  const bool use_dropout = dropout_keep < 1.0 && drop_rng != nullptr;
  if (grad_loss_scale == 0) grad_loss_scale = 1.0 / (double(steps) * B);

  if (auto* m = std::get_if<LstmLmModelT<T>>(&model)) {
    auto* gm = grads ? std::get_if<LstmLmModelT<T>>(grads) : nullptr;
    if (grads && !gm) throw ConsistencyError("lm_process_batch: grads model kind mismatch");
    const size_t nl = m->layers.size();

    std::vector<Mat<T>> xs(steps);
    for (size_t t = 0; t < steps; ++t) xs[t] = detail::embed_rows(m->embedding, batch.inputs[t]);

    std::vector<std::vector<Mat<T>>> masks(nl);
    std::vector<Mat<T>> out_masks;
    if (use_dropout) {
      for (size_t l = 0; l < nl; ++l)
        for (size_t t = 0; t < steps; ++t)
          masks[l].push_back(detail::dropout_mask<T>(B, m->layers[l].input_size,
                                                     dropout_keep, *drop_rng));
      for (size_t t = 0; t < steps; ++t)
        out_masks.push_back(detail::dropout_mask<T>(B, m->layers.back().hidden_size,
                                                    dropout_keep, *drop_rng));
    }

    auto fwd = lstm_sequence_forward(m->layers, xs, states.lstm,
                                     use_dropout ? &masks : nullptr, threads);
    states.lstm = fwd.final_states;

    const double grad_scale = grad_loss_scale;
    double nll = 0;
    std::vector<Mat<T>> dh_top(steps);
    for (size_t t = 0; t < steps; ++t) {
      Mat<T> h = fwd.h[nl - 1][t];
      if (use_dropout) h = mul(h, out_masks[t]);
      Mat<T> logits(B, m->vocab);
      for (int b = 0; b < B; ++b)
        for (int j = 0; j < m->vocab; ++j) logits(b, j) = m->output_bias(0, j);
      gemm_acc_rowblock(logits, h, m->output_weight, 0, threads);

      if (grads) {
        Mat<T> dlogits(B, m->vocab);
        nll += detail::softmax_nll(logits, batch.targets[t], &dlogits, grad_scale);
        gemm_tn_acc(gm->output_weight, h, dlogits);
        for (int b = 0; b < B; ++b)
          for (int j = 0; j < m->vocab; ++j) gm->output_bias(0, j) += dlogits(b, j);
        Mat<T> dh(B, m->layers.back().hidden_size);
        gemm_nt_acc(dh, dlogits, m->output_weight, false);
        if (use_dropout) dh = mul(dh, out_masks[t]);
        dh_top[t] = std::move(dh);
      } else {
        nll += detail::softmax_nll<T>(logits, batch.targets[t], nullptr, 0);
      }
    }

    if (grads) {
      auto g = lstm_backward(m->layers, fwd.cache, dh_top, threads);
      for (size_t l = 0; l < nl; ++l) {
        for (size_t e = 0; e < g.d_weight[l].data.size(); ++e)
          gm->layers[l].weight.data[e] += g.d_weight[l].data[e];
        for (size_t e = 0; e < g.d_bias[l].data.size(); ++e)
          gm->layers[l].bias.data[e] += g.d_bias[l].data[e];
      }
      for (size_t t = 0; t < steps; ++t)
        for (int b = 0; b < B; ++b) {
          const int id = batch.inputs[t][size_t(b)];
          for (int j = 0; j < m->embed_dim; ++j)
            gm->embedding(id, j) += g.d_inputs[t](b, j);
        }
    }
    return nll;
  }

  const auto& m = std::get<RhnLmModelT<T>>(model);
  auto* gm = grads ? std::get_if<RhnLmModelT<T>>(grads) : nullptr;
  if (grads && !gm) throw ConsistencyError("lm_process_batch: grads model kind mismatch");

  std::vector<Mat<T>> xs(steps), x_raw(steps);
  std::vector<Mat<T>> in_masks, out_masks;
  std::vector<RhnStepCacheT<T>> caches(steps);
  std::vector<Mat<T>> s_seq(steps);
  const int w = m.cell.width;

  Mat<T> s = states.rhn_s;
  const double grad_scale = grad_loss_scale;
  double nll = 0;
  std::vector<Mat<T>> ds_from_loss(steps);
  for (size_t t = 0; t < steps; ++t) {
    x_raw[t] = detail::embed_rows(m.embedding, batch.inputs[t]);
    xs[t] = x_raw[t];
    if (use_dropout) {
      in_masks.push_back(detail::dropout_mask<T>(B, m.embed_dim, dropout_keep, *drop_rng));
      xs[t] = mul(xs[t], in_masks.back());
    }
    auto [s_next, cache] = rhn_forward(m.cell, xs[t], s, threads);
    caches[t] = std::move(cache);
    s = std::move(s_next);
    s_seq[t] = s;

    Mat<T> h = s;
    if (use_dropout) {
      out_masks.push_back(detail::dropout_mask<T>(B, w, dropout_keep, *drop_rng));
      h = mul(h, out_masks.back());
    }
    Mat<T> logits(B, m.vocab);
    for (int b = 0; b < B; ++b)
      for (int j = 0; j < m.vocab; ++j) logits(b, j) = m.output_bias(0, j);
    if (m.tied)
      gemm_nt_acc(logits, h, m.embedding, true);
    else
      gemm_acc_rowblock(logits, h, m.output_weight, 0, threads);

    if (grads) {
      Mat<T> dlogits(B, m.vocab);
      nll += detail::softmax_nll(logits, batch.targets[t], &dlogits, grad_scale);
      Mat<T> dh(B, w);
      if (m.tied) {
        // logits = h * E^T: dE += dlogits^T * h, dh = dlogits * E.
        for (int b = 0; b < B; ++b)
          for (int v = 0; v < m.vocab; ++v) {
            const T dv = dlogits(b, v);
            if (dv == T(0)) continue;
            for (int j = 0; j < w; ++j) gm->embedding(v, j) += dv * h(b, j);
          }
        Mat<T> tmp(B, w);
        detail::gemm_view(dlogits.data.data(), B, m.vocab, m.vocab,
                          m.embedding.data.data(), w, w, tmp.data.data(), w, false,
                          threads);
        dh = std::move(tmp);
      } else {
        gemm_tn_acc(gm->output_weight, h, dlogits);
        gemm_nt_acc(dh, dlogits, m.output_weight, false);
      }
      for (int b = 0; b < B; ++b)
        for (int j = 0; j < m.vocab; ++j) gm->output_bias(0, j) += dlogits(b, j);
      if (use_dropout) dh = mul(dh, out_masks[t]);
      ds_from_loss[t] = std::move(dh);
    } else {
      nll += detail::softmax_nll<T>(logits, batch.targets[t], nullptr, 0);
    }
  }
  states.rhn_s = s;

  if (grads) {
    RhnGradientsT<T> cg(m.cell);
    Mat<T> ds_next(B, w);
    for (size_t t = steps; t-- > 0;) {
      Mat<T> ds = ds_from_loss[t];
      for (size_t e = 0; e < ds.data.size(); ++e) ds.data[e] += ds_next.data[e];
      cg.d_x = Mat<T>();      // fresh per step
      cg.d_s_prev = Mat<T>();
      rhn_backward(m.cell, caches[t], ds, cg);
      Mat<T> dx = cg.d_x;
      if (use_dropout) dx = mul(dx, in_masks[t]);
      for (int b = 0; b < B; ++b) {
        const int id = batch.inputs[t][size_t(b)];
        for (int j = 0; j < m.embed_dim; ++j) gm->embedding(id, j) += dx(b, j);
      }
      ds_next = cg.d_s_prev;
    }
    // fold accumulated cell gradients into the grad model
    auto addm = [](Mat<T>& dst, const Mat<T>& src) {
      for (size_t e = 0; e < src.data.size(); ++e) dst.data[e] += src.data[e];
    };
    addm(gm->cell.w_h, cg.d_w_h);
    addm(gm->cell.w_t, cg.d_w_t);
    if (!m.cell.coupled_c) addm(gm->cell.w_c, cg.d_w_c);
    for (int l = 0; l < m.cell.depth; ++l) {
      addm(gm->cell.r_h[l], cg.d_r_h[l]);
      addm(gm->cell.r_t[l], cg.d_r_t[l]);
      addm(gm->cell.b_h[l], cg.d_b_h[l]);
      addm(gm->cell.b_t[l], cg.d_b_t[l]);
      if (!m.cell.coupled_c) {
        addm(gm->cell.r_c[l], cg.d_r_c[l]);
        addm(gm->cell.b_c[l], cg.d_b_c[l]);
      }
    }
  }
  return nll;
}

// exp(mean token NLL) over a token stream, evaluated with states carried
// through eval_batch parallel substreams. No dropout.
template <class T>
double perplexity(const LmModelT<T>& model, std::span<const int> tokens,
                  int eval_batch = 8, int unroll = 64, int threads = 1) {
  if (tokens.size() < 2) throw ParameterError("perplexity: need at least two tokens");
  int B = std::max(1, std::min<int>(eval_batch, int(tokens.size() / 2)));
  const size_t stream_len = tokens.size() / size_t(B);
  while (B > 1 && stream_len < 2) {
    --B;
  }
  std::vector<std::span<const int>> streams;
  for (int b = 0; b < B; ++b) streams.push_back(tokens.subspan(size_t(b) * stream_len, stream_len));

  LmStatesT<T> states = zero_states(model, B);
  double nll = 0;
  long long count = 0;
  for (size_t pos = 0; pos + 1 < stream_len; pos += size_t(unroll)) {
    const size_t t_end = std::min(stream_len - 1, pos + size_t(unroll));
    TokenBatch batch;
    for (size_t t = pos; t < t_end; ++t) {
      std::vector<int> in(static_cast<size_t>(B)), tgt(static_cast<size_t>(B));
      for (int b = 0; b < B; ++b) {
        in[size_t(b)] = streams[size_t(b)][t];
        tgt[size_t(b)] = streams[size_t(b)][t + 1];
      }
      batch.inputs.push_back(std::move(in));
      batch.targets.push_back(std::move(tgt));
    }
    nll += lm_process_batch<T>(model, batch, states, 1.0, nullptr, nullptr, threads);
    count += (long long)(batch.inputs.size()) * B;
  }
  return std::exp(nll / double(count));
}

long long count_params(const Model& model);

}  // namespace issrnn
