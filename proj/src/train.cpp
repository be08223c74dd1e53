#include "issrnn/train.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "issrnn/model_groups.hpp"

namespace issrnn {

TrainMetrics train_language_model(Model& model, const LmDataset& data,
                                  const TrainConfig& tc, const RegConfig& rc,
                                  const IssGroupMap& map) {
  tc.validate();
  rc.validate();

  auto tensors = named_tensors(model);
  ResolvedGroups resolved = resolve_groups(map, as_const_tensors(tensors));

  const int B = tc.batch_size;
  const size_t stream_len = data.train.size() / size_t(B);
  if (stream_len < size_t(tc.unroll_steps) + 1)
    throw ParameterError("train: corpus too small for batch_size x unroll_steps");

  Rng dropout_rng = Rng(tc.seed).fork(101);

  TrainMetrics metrics;
  Model snapshot = model;  // last-good checkpoint for divergence rollback

  for (int epoch = 0; epoch < tc.epochs; ++epoch) {
    const double lr = tc.learning_rate *
                      std::pow(tc.lr_decay, std::max(0, epoch - tc.decay_after_epoch));
    LmStates states = zero_states(model, B);
    double nll_sum = 0;
    long long token_count = 0;
    long long zeroed = 0;
    bool diverged = false;

    for (size_t pos = 0; pos + 1 < stream_len; pos += size_t(tc.unroll_steps)) {
      const size_t t_end = std::min(stream_len - 1, pos + size_t(tc.unroll_steps));
      TokenBatch batch;
      for (size_t t = pos; t < t_end; ++t) {
        std::vector<int> in(static_cast<size_t>(B)), tgt(static_cast<size_t>(B));
        for (int b = 0; b < B; ++b) {
          in[size_t(b)] = data.train[size_t(b) * stream_len + t];
          tgt[size_t(b)] = data.train[size_t(b) * stream_len + t + 1];
        }
        batch.inputs.push_back(std::move(in));
        batch.targets.push_back(std::move(tgt));
      }

      Model grads = zero_like(model);
      // Cost convention: summed over unrolled steps, averaged over streams.
      const double nll = lm_process_batch<float>(model, batch, states, tc.dropout_keep,
                                                 &dropout_rng, &grads, tc.threads,
                                                 1.0 / double(B));
      const long long tokens = (long long)batch.inputs.size() * B;
      if (!std::isfinite(nll)) {
        diverged = true;
        break;
      }
      nll_sum += nll;
      token_count += tokens;

      auto grad_tensors = named_tensors(grads);
      clip_gradients_global_norm(grad_tensors, tc.clip_norm);
      const auto cg = as_const_tensors(grad_tensors);

      switch (rc.mode) {
        case RegConfig::Mode::kGroupLasso:
          sgd_step_group_lasso(tensors, cg, resolved, lr, rc.lambda, rc.epsilon);
          break;
        case RegConfig::Mode::kL1:
          sgd_step_l1(tensors, cg, resolved, lr, rc.l1_decay);
          break;
        case RegConfig::Mode::kNone:
          sgd_step_plain(tensors, cg, lr);
          break;
      }
      if (rc.tau > 0) zeroed += threshold_weights(tensors, resolved, rc.tau);
    }

    if (diverged) {
      model = snapshot;
      metrics.aborted = true;
      metrics.abort_reason = "non-finite loss at epoch " + std::to_string(epoch) +
                             "; restored last checkpoint";
      break;
    }

    EpochMetrics em;
    em.epoch = epoch;
    em.lr = lr;
    em.train_nll = token_count > 0 ? nll_sum / double(token_count) : 0;
    em.valid_ppl = data.valid.size() >= 2
                       ? perplexity<float>(model, data.valid, tc.eval_batch,
                                           tc.eval_unroll, tc.threads)
                       : 0;
    em.penalty = group_lasso_penalty(as_const_tensors(tensors), resolved, rc.epsilon);
    em.zeroed = zeroed;
    auto report = detect_zero_groups(as_const_tensors(tensors), resolved, 0.0);
    for (const auto& ls : report.layers) em.zero_groups.push_back(ls.zero);
    metrics.epochs.push_back(std::move(em));
    snapshot = model;
  }
  return metrics;
}

std::string metrics_csv(const TrainMetrics& metrics, const std::string& fingerprint) {
  std::ostringstream out;
  out << "# config_fingerprint=" << fingerprint << "\n";
  const size_t layers =
      metrics.epochs.empty() ? 0 : metrics.epochs.front().zero_groups.size();
  out << "epoch,lr,train_nll,valid_ppl,penalty,zeroed";
  for (size_t n = 0; n < layers; ++n) out << ",zero_groups_l" << n;
  out << "\n";
  char buf[64];
  for (const auto& em : metrics.epochs) {
    out << em.epoch;
    snprintf(buf, sizeof buf, ",%.8g,%.10g,%.10g,%.10g", em.lr, em.train_nll,
             em.valid_ppl, em.penalty);
    out << buf << "," << em.zeroed;
    for (int z : em.zero_groups) out << "," << z;
    out << "\n";
  }
  if (metrics.aborted) out << "# aborted: " << metrics.abort_reason << "\n";
  return out.str();
}

TauCalibration calibrate_tau(const Model& model, const IssGroupMap& map,
                             std::span<const int> valid_tokens,
                             const std::vector<double>& tau_grid, double tolerance,
                             int eval_batch, int eval_unroll) {
  if (tau_grid.empty()) throw ParameterError("calibrate_tau: empty grid");
  if (!std::is_sorted(tau_grid.begin(), tau_grid.end()))
    throw ParameterError("calibrate_tau: grid must be ascending");

  TauCalibration cal;
  cal.baseline_ppl = perplexity<float>(model, valid_tokens, eval_batch, eval_unroll);
  const double limit = cal.baseline_ppl * (1.0 + tolerance);

  double best = tau_grid.front();
  bool found = false;
  for (double tau : tau_grid) {
    Model candidate = model;
    auto tensors = named_tensors(candidate);
    ResolvedGroups resolved = resolve_groups(map, as_const_tensors(tensors));
    threshold_weights(tensors, resolved, tau);
    const double ppl = perplexity<float>(candidate, valid_tokens, eval_batch, eval_unroll);
    cal.evaluated.emplace_back(tau, ppl);
    if (ppl <= limit) {
      best = tau;
      found = true;
    }
  }
  cal.tau = found ? best : tau_grid.front();
  cal.warning = !found;
  return cal;
}

}  // namespace issrnn
