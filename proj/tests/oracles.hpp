#pragma once

// Independent reference implementations used as test oracles. Everything here
// is deliberately written from the definitions, separate from the library's
// computation paths.

#include <cmath>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "issrnn/iss.hpp"
#include "issrnn/lstm.hpp"

namespace oracle {

// Scalar LSTM step (hidden size 1, input size 1), straight from the gate
// recurrence, all in double.
struct ScalarLstmParams {
  // per gate: x weight, h weight, bias
  double wx_f, wh_f, b_f;
  double wx_i, wh_i, b_i;
  double wx_u, wh_u, b_u;
  double wx_o, wh_o, b_o;
};

struct ScalarLstmOut {
  double i, f, o, u, c, h;
};

inline double sigm(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline ScalarLstmOut scalar_lstm_step(const ScalarLstmParams& p, double x, double h_prev,
                                      double c_prev) {
  ScalarLstmOut r;
  r.i = sigm(x * p.wx_i + h_prev * p.wh_i + p.b_i);
  r.f = sigm(x * p.wx_f + h_prev * p.wh_f + p.b_f);
  r.o = sigm(x * p.wx_o + h_prev * p.wh_o + p.b_o);
  r.u = std::tanh(x * p.wx_u + h_prev * p.wh_u + p.b_u);
  r.c = r.f * c_prev + r.i * r.u;
  r.h = r.o * std::tanh(r.c);
  return r;
}

// Hand-derived chain rule for one scalar LSTM step with loss = h.
struct ScalarLstmGrads {
  double d_wx_f, d_wh_f, d_b_f;
  double d_wx_i, d_wh_i, d_b_i;
  double d_wx_u, d_wh_u, d_b_u;
  double d_wx_o, d_wh_o, d_b_o;
};

inline ScalarLstmGrads scalar_lstm_step_grads(const ScalarLstmParams& p, double x,
                                              double h_prev, double c_prev) {
  const ScalarLstmOut r = scalar_lstm_step(p, x, h_prev, c_prev);
  const double tc = std::tanh(r.c);
  const double dh = 1.0;
  const double d_o = dh * tc;
  const double d_c = dh * r.o * (1.0 - tc * tc);
  const double d_f = d_c * c_prev;
  const double d_i = d_c * r.u;
  const double d_u = d_c * r.i;
  const double dz_o = d_o * r.o * (1.0 - r.o);
  const double dz_f = d_f * r.f * (1.0 - r.f);
  const double dz_i = d_i * r.i * (1.0 - r.i);
  const double dz_u = d_u * (1.0 - r.u * r.u);
  ScalarLstmGrads g;
  g.d_wx_f = dz_f * x; g.d_wh_f = dz_f * h_prev; g.d_b_f = dz_f;
  g.d_wx_i = dz_i * x; g.d_wh_i = dz_i * h_prev; g.d_b_i = dz_i;
  g.d_wx_u = dz_u * x; g.d_wh_u = dz_u * h_prev; g.d_b_u = dz_u;
  g.d_wx_o = dz_o * x; g.d_wh_o = dz_o * h_prev; g.d_b_o = dz_o;
  return g;
}

// Scalar RHN (width 1) forward through one step, depth L.
struct ScalarRhnDepth {
  double r_h, b_h, r_t, b_t, r_c, b_c;  // recurrent weights and biases
};

inline double scalar_rhn_step(double x, double w_h, double w_t, double w_c,
                              const std::vector<ScalarRhnDepth>& depths, double s_prev,
                              bool coupled) {
  double s = s_prev;
  for (size_t l = 0; l < depths.size(); ++l) {
    const double xin = l == 0 ? x : 0.0;
    const double h = std::tanh(xin * w_h + s * depths[l].r_h + depths[l].b_h);
    const double t = sigm(xin * w_t + s * depths[l].r_t + depths[l].b_t);
    const double c =
        coupled ? 1.0 - t : sigm(xin * w_c + s * depths[l].r_c + depths[l].b_c);
    s = h * t + s * c;
  }
  return s;
}

// Brute-force ISS weight-group coordinate enumeration from the definition:
// per gate block the component's column, the owner's recurrent row, and every
// receiver row. Returns coordinates *with multiplicity* (the span arithmetic
// the reported sizes use).
struct EnumReceiver {
  std::string tensor;
  int row_offset;
  int width;
};

inline std::vector<issrnn::WeightCoord> enumerate_lstm_group(
    const std::string& owner, int input_size, int hidden_size, int k,
    const std::vector<EnumReceiver>& receivers) {
  std::vector<issrnn::WeightCoord> coords;
  for (int gate = 0; gate < 4; ++gate)
    for (int r = 0; r < input_size + hidden_size; ++r)
      coords.push_back({owner, r, gate * hidden_size + k});
  for (int c = 0; c < 4 * hidden_size; ++c)
    coords.push_back({owner, input_size + k, c});
  for (const auto& recv : receivers)
    for (int c = 0; c < recv.width; ++c) coords.push_back({recv.tensor, recv.row_offset + k, c});
  return coords;
}

inline long long unique_count(std::vector<issrnn::WeightCoord> coords) {
  std::sort(coords.begin(), coords.end());
  coords.erase(std::unique(coords.begin(), coords.end()), coords.end());
  return (long long)coords.size();
}

// RHN group enumeration: rows/columns of each transform matrix, the embedding
// column and the output row.
inline std::vector<issrnn::WeightCoord> enumerate_rhn_group(
    int width, int depth, int embed, int vocab, int k, bool coupled, bool tied,
    bool sparsify_embedding) {
  std::vector<issrnn::WeightCoord> coords;
  std::vector<std::string> transforms = {"h", "t"};
  if (!coupled) transforms.push_back("c");
  for (const auto& tr : transforms) {
    const std::string w = "rhn.w_" + tr;
    for (int r = 0; r < embed; ++r) coords.push_back({w, r, k});
    if (sparsify_embedding)
      for (int c = 0; c < width; ++c) coords.push_back({w, k, c});
    for (int l = 0; l < depth; ++l) {
      const std::string rname = "rhn.r_" + tr + "." + std::to_string(l);
      for (int r = 0; r < width; ++r) coords.push_back({rname, r, k});
      for (int c = 0; c < width; ++c) coords.push_back({rname, k, c});
    }
  }
  if (sparsify_embedding)
    for (int v = 0; v < vocab; ++v) coords.push_back({"embedding", v, k});
  if (!tied)
    for (int v = 0; v < vocab; ++v) coords.push_back({"output.weight", k, v});
  return coords;
}

}  // namespace oracle
