#pragma once

#include "issrnn/config.hpp"
#include "issrnn/data.hpp"
#include "issrnn/lm.hpp"
#include "issrnn/regularize.hpp"

namespace issrnn {

struct EpochMetrics {
  int epoch = 0;
  double lr = 0;
  double train_nll = 0;   // mean per-token nll over the epoch
  double valid_ppl = 0;
  double penalty = 0;     // group-Lasso penalty at epoch end
  long long zeroed = 0;   // weights thresholded to zero during the epoch
  std::vector<int> zero_groups;  // per layer, at epoch end
};

struct TrainMetrics {
  std::vector<EpochMetrics> epochs;
  bool aborted = false;
  std::string abort_reason;

  int total_zero_groups_last_epoch() const {
    if (epochs.empty()) return 0;
    int n = 0;
    for (int z : epochs.back().zero_groups) n += z;
    return n;
  }
};

// Full training loop: forward, BPTT, clip, regularized SGD step, then
// per-mini-batch thresholding. States carry across batches within an epoch.
// On a non-finite loss the model rolls back to the last epoch-end snapshot
// and the metrics are flagged aborted.
TrainMetrics train_language_model(Model& model, const LmDataset& data,
                                  const TrainConfig& tc, const RegConfig& rc,
                                  const IssGroupMap& map);

std::string metrics_csv(const TrainMetrics& metrics, const std::string& fingerprint);

struct TauCalibration {
  double tau = 0;
  bool warning = false;  // no grid point qualified; the minimum was returned
  double baseline_ppl = 0;
  std::vector<std::pair<double, double>> evaluated;  // (tau, ppl) per grid point
};

// Largest tau in the ascending grid whose thresholded model keeps validation
// perplexity within (1 + tolerance) of the dense baseline.
TauCalibration calibrate_tau(const Model& model, const IssGroupMap& map,
                             std::span<const int> valid_tokens,
                             const std::vector<double>& tau_grid, double tolerance,
                             int eval_batch = 8, int eval_unroll = 64);

}  // namespace issrnn
