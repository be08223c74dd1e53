#pragma once

#include "issrnn/lm.hpp"
#include "issrnn/model_groups.hpp"

namespace issrnn {

// Kept component indices per layer, driving structural shrinkage. A component
// may be dropped only when its whole ISS group is zero.
struct CompactionPlan {
  std::string model_kind;
  std::vector<std::vector<int>> kept;     // per layer, strictly increasing
  std::vector<int> new_hidden_sizes;
  bool compacts_embedding = false;        // RHN with the embedding in the groups

  bool is_identity() const {
    for (size_t n = 0; n < kept.size(); ++n)
      if (int(kept[n].size()) != new_hidden_sizes[n]) return false;
    return true;
  }
};

CompactionPlan plan_compaction(const Model& model, const IssGroupMap& map,
                               const SparsityReport& report);

Model apply_compaction(const Model& model, const CompactionPlan& plan);

// Runs both models on `probes` random token sequences of `steps` steps and
// returns the max absolute difference over all per-step logits and all
// surviving hidden components.
double verify_equivalence(const Model& original, const Model& compact,
                          const CompactionPlan& plan, int probes, int steps,
                          uint64_t seed);

std::string plan_to_json(const CompactionPlan& plan);
CompactionPlan plan_from_json(const std::string& text);

}  // namespace issrnn
