#include "issrnn/regularize.hpp"

#include <cmath>

namespace issrnn {

namespace {

void check_aligned(const NamedTensors& weights, const NamedTensorsConst& grads) {
  if (weights.size() != grads.size())
    throw ConsistencyError("sgd step: weight/gradient tensor lists differ in length");
  for (size_t i = 0; i < weights.size(); ++i) {
    if (weights[i].first != grads[i].first ||
        !weights[i].second->same_shape(*grads[i].second))
      throw ConsistencyError("sgd step: gradient does not match tensor '" +
                             weights[i].first + "'");
  }
}

void check_finite(const NamedTensorsConst& grads) {
  for (auto& [name, g] : grads)
    for (float v : g->data)
      if (!std::isfinite(v))
        throw NumericError("non-finite gradient in tensor '" + name + "'");
}

}  // namespace

double group_lasso_penalty(const NamedTensorsConst& tensors,
                           const ResolvedGroups& resolved, double epsilon) {
  double total = 0;
  for (const auto& g : resolved.groups) {
    double acc = epsilon;
    for (const auto& c : g.coords) {
      const double w = tensors[c.tensor].second->data[size_t(c.offset)];
      acc += w * w;
    }
    total += std::sqrt(acc);
  }
  return total;
}

void sgd_step_plain(const NamedTensors& weights, const NamedTensorsConst& grads,
                    double eta) {
  if (eta <= 0) throw ParameterError("sgd step: eta must be > 0");
  check_aligned(weights, grads);
  check_finite(grads);
  for (size_t i = 0; i < weights.size(); ++i) {
    auto& w = weights[i].second->data;
    const auto& g = grads[i].second->data;
    for (size_t e = 0; e < w.size(); ++e) w[e] = float(double(w[e]) - eta * double(g[e]));
  }
}

void sgd_step_group_lasso(const NamedTensors& weights, const NamedTensorsConst& grads,
                          const ResolvedGroups& resolved, double eta, double lambda,
                          double epsilon) {
  if (eta <= 0) throw ParameterError("sgd_step_group_lasso: eta must be > 0");
  if (lambda < 0) throw ParameterError("sgd_step_group_lasso: lambda must be >= 0");
  check_aligned(weights, grads);
  check_finite(grads);

  // Snapshot per-group weights first so every norm and direction is taken at
  // the pre-step point, then apply both update terms.
  std::vector<std::vector<float>> saved;
  std::vector<double> norms;
  if (lambda > 0) {
    saved.resize(resolved.groups.size());
    norms.resize(resolved.groups.size());
    for (size_t gi = 0; gi < resolved.groups.size(); ++gi) {
      const auto& g = resolved.groups[gi];
      auto& sv = saved[gi];
      sv.reserve(g.coords.size());
      double acc = epsilon;
      for (const auto& c : g.coords) {
        const float w = weights[c.tensor].second->data[size_t(c.offset)];
        sv.push_back(w);
        acc += double(w) * double(w);
      }
      norms[gi] = std::sqrt(acc);
    }
  }

  for (size_t i = 0; i < weights.size(); ++i) {
    auto& w = weights[i].second->data;
    const auto& g = grads[i].second->data;
    for (size_t e = 0; e < w.size(); ++e) w[e] = float(double(w[e]) - eta * double(g[e]));
  }

  if (lambda > 0) {
    for (size_t gi = 0; gi < resolved.groups.size(); ++gi) {
      const auto& g = resolved.groups[gi];
      const double scale = eta * lambda / norms[gi];
      for (size_t j = 0; j < g.coords.size(); ++j) {
        const auto& c = g.coords[j];
        float& w = weights[c.tensor].second->data[size_t(c.offset)];
        w = float(double(w) - scale * double(saved[gi][j]));
      }
    }
  }
}

void sgd_step_l1_dense(std::span<float> weights, std::span<const float> grads,
                       double eta, double decay) {
  if (eta <= 0) throw ParameterError("sgd_step_l1: eta must be > 0");
  if (weights.size() != grads.size()) throw ShapeError("sgd_step_l1: size mismatch");
  for (size_t e = 0; e < weights.size(); ++e) {
    const double w = weights[e];
    const double sign = w > 0 ? 1.0 : (w < 0 ? -1.0 : 0.0);
    weights[e] = float(w - eta * (double(grads[e]) + decay * sign));
  }
}

void sgd_step_l1(const NamedTensors& weights, const NamedTensorsConst& grads,
                 const ResolvedGroups& resolved, double eta, double decay) {
  if (eta <= 0) throw ParameterError("sgd_step_l1: eta must be > 0");
  check_aligned(weights, grads);
  check_finite(grads);
  for (size_t i = 0; i < weights.size(); ++i) {
    auto& w = weights[i].second->data;
    const auto& g = grads[i].second->data;
    const auto& mask = resolved.member_mask[i];
    for (size_t e = 0; e < w.size(); ++e) {
      const double wv = w[e];
      double step = double(g[e]);
      if (mask[e]) step += decay * (wv > 0 ? 1.0 : (wv < 0 ? -1.0 : 0.0));
      w[e] = float(wv - eta * step);
    }
  }
}

long long threshold_weights(const NamedTensors& weights, const ResolvedGroups& resolved,
                            double tau) {
  if (tau < 0) throw ParameterError("threshold_weights: tau must be >= 0");
  if (tau == 0) return 0;
  long long zeroed = 0;
  for (size_t i = 0; i < weights.size(); ++i) {
    auto& w = weights[i].second->data;
    const auto& mask = resolved.member_mask[i];
    for (size_t e = 0; e < w.size(); ++e) {
      if (mask[e] && w[e] != 0.0f && std::fabs(w[e]) < tau) {
        w[e] = 0.0f;
        ++zeroed;
      }
    }
  }
  return zeroed;
}

double clip_gradients_global_norm(const NamedTensors& grads, double clip) {
  double acc = 0;
  for (auto& [name, g] : grads)
    for (float v : g->data) acc += double(v) * double(v);
  const double norm = std::sqrt(acc);
  if (clip > 0 && norm > clip) {
    const double s = clip / norm;
    for (auto& [name, g] : grads)
      for (float& v : g->data) v = float(double(v) * s);
  }
  return norm;
}

}  // namespace issrnn
