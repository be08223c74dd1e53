#include <set>

#include "doctest.h"
#include "issrnn/compact.hpp"

using namespace issrnn;

namespace {

// Zero the full ISS groups for the given per-layer component sets.
void zero_groups(Model& model, const IssGroupMap& map,
                 const std::vector<std::set<int>>& victims) {
  auto tensors = named_tensors(model);
  auto resolved = resolve_groups(map, as_const_tensors(tensors));
  for (const auto& g : resolved.groups) {
    if (!victims[size_t(g.layer)].count(g.component)) continue;
    for (const auto& c : g.coords)
      tensors[size_t(c.tensor)].second->data[size_t(c.offset)] = 0.0f;
  }
}

}  // namespace

TEST_CASE("identity plan on a dense model") {
  Model model = make_lstm_lm(6, 3, {4, 3}, 1);
  auto map = build_groups_for(model);
  auto rep = detect_zero_groups(named_tensors_const(model), map, 0.0);
  auto plan = plan_compaction(model, map, rep);
  CHECK(plan.is_identity());
  Model compacted = apply_compaction(model, plan);
  // byte-identical parameters at the same shapes
  auto a = named_tensors_const(model);
  auto b = named_tensors_const(compacted);
  REQUIRE(a.size() == b.size());
  for (size_t i = 0; i < a.size(); ++i) CHECK(a[i].second->data == b[i].second->data);
  CHECK(verify_equivalence(model, compacted, plan, 5, 10, 3) == 0.0);
}

TEST_CASE("dropping one of four components shrinks the shapes") {
  Model model = make_lstm_lm(6, 5, {4}, 2);
  auto map = build_groups_for(model);
  zero_groups(model, map, {{2}});
  auto rep = detect_zero_groups(named_tensors_const(model), map, 0.0);
  auto plan = plan_compaction(model, map, rep);
  CHECK(plan.kept[0] == std::vector<int>{0, 1, 3});
  Model compacted = apply_compaction(model, plan);
  const auto& m = std::get<LstmLmModel>(compacted);
  CHECK(m.layers[0].weight.rows == 5 + 3);  // (in + 4) x 16 -> (in + 3) x 12
  CHECK(m.layers[0].weight.cols == 12);
  CHECK(m.layers[0].bias.cols == 12);
  CHECK(m.output_weight.rows == 3);
}

TEST_CASE("compaction is exactly output-preserving") {
  for (uint64_t seed = 1; seed <= 10; ++seed) {
    Rng rng(seed);
    Model model = make_lstm_lm(7, 4, {6, 5}, seed);
    auto map = build_groups_for(model);
    std::vector<std::set<int>> victims(2);
    for (int k = 0; k < 6; ++k)
      if (rng.bernoulli(0.4)) victims[0].insert(k);
    for (int k = 0; k < 5; ++k)
      if (rng.bernoulli(0.4)) victims[1].insert(k);
    if (victims[0].size() == 6) victims[0].erase(0);
    if (victims[1].size() == 5) victims[1].erase(0);
    zero_groups(model, map, victims);

    auto rep = detect_zero_groups(named_tensors_const(model), map, 0.0);
    auto plan = plan_compaction(model, map, rep);
    CHECK(plan.kept[0].size() == 6 - victims[0].size());
    CHECK(plan.kept[1].size() == 5 - victims[1].size());
    Model compacted = apply_compaction(model, plan);
    CHECK(verify_equivalence(model, compacted, plan, 10, 20, seed) == 0.0);
  }
}

TEST_CASE("rhn compaction with one zeroed unit is exact") {
  for (bool tied : {false, true}) {
    Model model = make_rhn_lm(6, 5, 5, 3, true, tied, 11);
    auto map = build_groups_for(model);
    zero_groups(model, map, {{3}});
    auto rep = detect_zero_groups(named_tensors_const(model), map, 0.0);
    auto plan = plan_compaction(model, map, rep);
    CHECK(plan.kept[0] == std::vector<int>{0, 1, 2, 4});
    Model compacted = apply_compaction(model, plan);
    const auto& m = std::get<RhnLmModel>(compacted);
    CHECK(m.cell.width == 4);
    CHECK(m.cell.r_h[0].rows == 4);
    CHECK(m.embedding.cols == 4);  // embedding dimension shrinks with the unit
    CHECK(verify_equivalence(model, compacted, plan, 8, 12, 5) == 0.0);
  }
}

TEST_CASE("parameter accounting") {
  // single drop: removed owner coords are the unique group coords, plus the
  // 4 bias entries that ride along
  Model model = make_lstm_lm(6, 5, {4}, 13);
  auto map = build_groups_for(model);
  zero_groups(model, map, {{1}});
  auto rep = detect_zero_groups(named_tensors_const(model), map, 0.0);
  auto plan = plan_compaction(model, map, rep);
  Model compacted = apply_compaction(model, plan);
  const long long removed = count_params(model) - count_params(compacted);
  CHECK(removed == map.layers[0].groups[1].unique_size() + 4);

  // multi-drop: union of the dropped groups' coordinates, by enumeration
  Model model2 = make_lstm_lm(6, 5, {4, 3}, 14);
  auto map2 = build_groups_for(model2);
  std::vector<std::set<int>> victims{{0, 2}, {1}};
  zero_groups(model2, map2, victims);
  auto rep2 = detect_zero_groups(named_tensors_const(model2), map2, 0.0);
  auto plan2 = plan_compaction(model2, map2, rep2);
  Model compacted2 = apply_compaction(model2, plan2);

  std::set<WeightCoord> union_coords;
  long long dropped_bias = 0;
  for (const auto& lg : map2.layers)
    for (const auto& g : lg.groups)
      if (victims[size_t(g.layer)].count(g.component)) {
        for (const auto& c : g.coords()) union_coords.insert(c);
        dropped_bias += 4;
      }
  const long long removed2 = count_params(model2) - count_params(compacted2);
  CHECK(removed2 == (long long)union_coords.size() + dropped_bias);
}

TEST_CASE("round-trip: a compact model plans the identity") {
  Model model = make_lstm_lm(6, 4, {5}, 15);
  auto map = build_groups_for(model);
  zero_groups(model, map, {{0, 4}});
  auto rep = detect_zero_groups(named_tensors_const(model), map, 0.0);
  Model compacted = apply_compaction(model, plan_compaction(model, map, rep));

  auto map2 = build_groups_for(compacted);
  auto rep2 = detect_zero_groups(named_tensors_const(compacted), map2, 0.0);
  auto plan2 = plan_compaction(compacted, map2, rep2);
  CHECK(plan2.is_identity());
}

TEST_CASE("an all-zero layer is a hard error") {
  Model model = make_lstm_lm(6, 3, {2, 3}, 16);
  auto map = build_groups_for(model);
  zero_groups(model, map, {{0, 1}, {}});
  auto rep = detect_zero_groups(named_tensors_const(model), map, 0.0);
  CHECK_THROWS_AS(plan_compaction(model, map, rep), ConsistencyError);
}

TEST_CASE("plan json round-trips and rejects malformed plans") {
  Model model = make_lstm_lm(6, 3, {4}, 17);
  auto map = build_groups_for(model);
  zero_groups(model, map, {{2}});
  auto rep = detect_zero_groups(named_tensors_const(model), map, 0.0);
  auto plan = plan_compaction(model, map, rep);
  auto back = plan_from_json(plan_to_json(plan));
  CHECK(back.kept == plan.kept);
  CHECK(back.model_kind == plan.model_kind);
  CHECK_THROWS_AS(plan_from_json("{"), FormatError);
  CHECK_THROWS_AS(
      plan_from_json(
          R"({"format_version":1,"model_kind":"lstm_stack","kept":[[2,1]],"new_hidden_sizes":[2],"compacts_embedding":false})"),
      FormatError);
}
