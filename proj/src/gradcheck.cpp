#include "issrnn/gradcheck.hpp"

#include <cmath>

namespace issrnn {

// Denominator floor: below this magnitude the central difference is dominated
// by truncation noise, so the comparison switches to an absolute scale.
constexpr double kFdFloor = 1e-6;

double fd_max_rel_error(std::vector<double>& params,
                        const std::function<double()>& loss,
                        const std::vector<double>& analytic, double epsilon) {
  if (params.size() != analytic.size())
    throw ConsistencyError("fd_max_rel_error: gradient size mismatch");
  if (epsilon < 1e-6 || epsilon > 1e-4)
    throw ParameterError("fd_max_rel_error: epsilon must be in [1e-6, 1e-4]");
  double worst = 0;
  for (size_t i = 0; i < params.size(); ++i) {
    const double saved = params[i];
    params[i] = saved + epsilon;
    const double lp = loss();
    params[i] = saved - epsilon;
    const double lm = loss();
    params[i] = saved;
    if (!std::isfinite(lp) || !std::isfinite(lm))
      throw NumericError("fd_max_rel_error: non-finite loss");
    const double fd = (lp - lm) / (2.0 * epsilon);
    const double rel = std::fabs(fd - analytic[i]) /
                       std::max({std::fabs(fd), std::fabs(analytic[i]), kFdFloor});
    worst = std::max(worst, rel);
  }
  return worst;
}

namespace {

TokenBatch random_batch(int vocab, int steps, int batch, Rng& rng) {
  TokenBatch tb;
  for (int t = 0; t < steps; ++t) {
    std::vector<int> in(static_cast<size_t>(batch)), tgt(static_cast<size_t>(batch));
    for (int b = 0; b < batch; ++b) {
      in[size_t(b)] = int(rng.below(uint64_t(vocab)));
      tgt[size_t(b)] = int(rng.below(uint64_t(vocab)));
    }
    tb.inputs.push_back(std::move(in));
    tb.targets.push_back(std::move(tgt));
  }
  return tb;
}

}  // namespace

FdCheckReport finite_difference_check(LmModelT<double>& model, int steps, int batch,
                                      uint64_t seed, double epsilon) {
  if (epsilon < 1e-6 || epsilon > 1e-4)
    throw ParameterError("finite_difference_check: epsilon must be in [1e-6, 1e-4]");
  Rng rng(seed);
  int vocab = std::visit([](const auto& m) { return m.vocab; }, model);
  TokenBatch batch_tokens = random_batch(vocab, steps, batch, rng);
  const double denom = double(steps) * batch;

  auto run_loss = [&]() {
    LmStatesT<double> st = zero_states(model, batch);
    return lm_process_batch<double>(model, batch_tokens, st, 1.0, nullptr, nullptr) / denom;
  };

  LmModelT<double> grads = zero_like(model);
  {
    LmStatesT<double> st = zero_states(model, batch);
    lm_process_batch<double>(model, batch_tokens, st, 1.0, nullptr, &grads);
  }

  FdCheckReport rep;
  auto wt = named_tensors(model);
  auto gt = named_tensors(grads);
  for (size_t ti = 0; ti < wt.size(); ++ti) {
    auto& w = wt[ti].second->data;
    const auto& g = gt[ti].second->data;
    for (size_t e = 0; e < w.size(); ++e) {
      const double saved = w[e];
      w[e] = saved + epsilon;
      const double lp = run_loss();
      w[e] = saved - epsilon;
      const double lm = run_loss();
      w[e] = saved;
      if (!std::isfinite(lp) || !std::isfinite(lm))
        throw NumericError("finite_difference_check: non-finite loss at tensor '" +
                           wt[ti].first + "'");
      const double fd = (lp - lm) / (2.0 * epsilon);
      const double rel =
          std::fabs(fd - g[e]) / std::max({std::fabs(fd), std::fabs(g[e]), kFdFloor});
      if (rel > rep.max_rel_error) {
        rep.max_rel_error = rel;
        rep.worst_tensor = wt[ti].first;
        rep.worst_index = int(e);
      }
      ++rep.params_checked;
    }
  }
  return rep;
}

FdCheckReport fd_check_random_lstm(int vocab, int embed, const std::vector<int>& hidden,
                                   int steps, int batch, uint64_t seed, double epsilon) {
  Model f32 = make_lstm_lm(vocab, embed, hidden, seed);
  LmModelT<double> m = convert_model<float, double>(f32);
  // Nonzero biases exercise every gate path.
  auto ts = named_tensors(m);
  Rng rng(seed ^ 0xB1A5ULL);
  for (auto& [name, t] : ts)
    if (name.find("bias") != std::string::npos)
      for (auto& v : t->data) v = rng.uniform(-0.2f, 0.2f);
  return finite_difference_check(m, steps, batch, seed + 17, epsilon);
}

FdCheckReport fd_check_random_rhn(int vocab, int embed, int width, int depth,
                                  bool coupled_c, bool tied, int steps, int batch,
                                  uint64_t seed, double epsilon) {
  Model f32 = make_rhn_lm(vocab, embed, width, depth, coupled_c, tied, seed);
  LmModelT<double> m = convert_model<float, double>(f32);
  auto ts = named_tensors(m);
  Rng rng(seed ^ 0xB1A5ULL);
  for (auto& [name, t] : ts)
    if (name.find("b_") != std::string::npos || name.find("bias") != std::string::npos)
      for (auto& v : t->data) v = rng.uniform(-0.2f, 0.2f);
  return finite_difference_check(m, steps, batch, seed + 17, epsilon);
}

}  // namespace issrnn
