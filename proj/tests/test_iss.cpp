#include <set>

#include "doctest.h"
#include "issrnn/iss.hpp"
#include "issrnn/model_groups.hpp"
#include "oracles.hpp"

using namespace issrnn;

TEST_CASE("paper-scale stacked LSTM group sizes") {
  // 2 x 1500 stack with a 10000-word output layer: 24000 and 28000.
  auto topo = lstm_stack_topology(1500, {1500, 1500}, 10000);
  auto map = build_lstm_iss_groups(topo);
  REQUIRE(map.num_layers() == 2);
  for (long long s : map.group_sizes(0)) CHECK(s == 24000);
  for (long long s : map.group_sizes(1)) CHECK(s == 28000);
  CHECK(map.layers[0].groups.size() == 1500);
  CHECK(map.layers[1].groups.size() == 1500);
}

TEST_CASE("toy single-layer group sizes against enumeration") {
  // input 8, hidden 4, receiver LSTM of hidden 4: 4*12 + 16 + 16 = 80
  auto topo = lstm_stack_topology(8, {4, 4}, 5);
  auto map = build_lstm_iss_groups(topo);
  CHECK(map.group_sizes(0)[0] == 80);
  auto coords = oracle::enumerate_lstm_group("lstm0.weight", 8, 4, 0,
                                             {{"lstm1.weight", 0, 16}});
  CHECK((long long)coords.size() == 80);

  // hidden 1, input 1, scalar output: 4*2 + 4 + 1 = 13
  auto topo2 = lstm_stack_topology(1, {1}, 1);
  auto map2 = build_lstm_iss_groups(topo2);
  CHECK(map2.group_sizes(0)[0] == 13);
  auto coords2 = oracle::enumerate_lstm_group("lstm0.weight", 1, 1, 0,
                                              {{"output.weight", 0, 1}});
  CHECK((long long)coords2.size() == 13);
}

TEST_CASE("group membership matches the enumeration oracle coordinate-for-coordinate") {
  auto topo = lstm_stack_topology(3, {4, 2}, 6);
  auto map = build_lstm_iss_groups(topo);
  for (int k = 0; k < 4; ++k) {
    auto expect = oracle::enumerate_lstm_group("lstm0.weight", 3, 4, k,
                                               {{"lstm1.weight", 0, 8}});
    std::sort(expect.begin(), expect.end());
    expect.erase(std::unique(expect.begin(), expect.end()), expect.end());
    CHECK(map.layers[0].groups[size_t(k)].coords() == expect);
  }
}

TEST_CASE("closed-form sizes hold over random topologies") {
  Rng rng(2024);
  for (int trial = 0; trial < 50; ++trial) {
    const int in = 1 + int(rng.below(12));
    const int nl = 1 + int(rng.below(3));
    std::vector<int> hidden;
    for (int n = 0; n < nl; ++n) hidden.push_back(1 + int(rng.below(9)));
    const int vocab = 2 + int(rng.below(50));
    auto map = build_lstm_iss_groups(lstm_stack_topology(in, hidden, vocab));
    int lin = in;
    for (int n = 0; n < nl; ++n) {
      const int h = hidden[size_t(n)];
      const long long receiver = n + 1 < nl ? 4LL * hidden[size_t(n) + 1] : vocab;
      const long long expect = 4LL * (lin + h) + 4LL * h + receiver;
      for (long long s : map.group_sizes(n)) CHECK(s == expect);
      // enumeration oracle agrees with the closed form
      oracle::EnumReceiver recv =
          n + 1 < nl
              ? oracle::EnumReceiver{"lstm" + std::to_string(n + 1) + ".weight", 0,
                                     4 * hidden[size_t(n) + 1]}
              : oracle::EnumReceiver{"output.weight", 0, vocab};
      auto coords = oracle::enumerate_lstm_group("lstm" + std::to_string(n) + ".weight",
                                                 lin, h, 0, {recv});
      CHECK((long long)coords.size() == expect);
      lin = h;
    }
  }
}

TEST_CASE("multi-receiver fan-out joins one group") {
  // One owner whose hidden state feeds two parallel consumers, plus an output.
  LstmStackTopology topo;
  topo.input_size = 3;
  topo.hidden_sizes = {4};
  topo.layer_weight_names = {"owner.weight"};
  topo.tensors["owner.weight"] = {7, 16};
  topo.tensors["fwd2.weight"] = {10, 20};
  topo.tensors["bwd2.weight"] = {10, 20};
  topo.receivers = {{{"fwd2.weight", 0, 20}, {"bwd2.weight", 0, 20}}};
  auto map = build_lstm_iss_groups(topo);
  CHECK(map.group_sizes(0)[0] == 4 * 7 + 16 + 20 + 20);
  // both receiver rows present
  auto coords = map.layers[0].groups[1].coords();
  bool fwd = false, bwd = false;
  for (const auto& c : coords) {
    if (c.tensor == "fwd2.weight" && c.row == 1) fwd = true;
    if (c.tensor == "bwd2.weight" && c.row == 1) bwd = true;
  }
  CHECK(fwd);
  CHECK(bwd);
}

TEST_CASE("receiver row offsets shift the consumed rows") {
  LstmStackTopology topo;
  topo.input_size = 2;
  topo.hidden_sizes = {3};
  topo.layer_weight_names = {"owner.weight"};
  topo.tensors["owner.weight"] = {5, 12};
  topo.tensors["next.weight"] = {9, 8};
  topo.receivers = {{{"next.weight", 4, 8}}};
  auto map = build_lstm_iss_groups(topo);
  auto coords = map.layers[0].groups[2].coords();
  bool found = false;
  for (const auto& c : coords)
    if (c.tensor == "next.weight") {
      CHECK(c.row == 6);  // offset 4 + component 2
      found = true;
    }
  CHECK(found);
}

TEST_CASE("dangling receiver is a topology error") {
  LstmStackTopology topo;
  topo.input_size = 2;
  topo.hidden_sizes = {3};
  topo.layer_weight_names = {"owner.weight"};
  topo.tensors["owner.weight"] = {5, 12};
  topo.receivers = {{{"missing.weight", 0, 4}}};
  CHECK_THROWS_AS(build_lstm_iss_groups(topo), TopologyError);

  // receiver rows out of range
  LstmStackTopology topo2 = topo;
  topo2.tensors["short.weight"] = {2, 4};
  topo2.receivers = {{{"short.weight", 0, 4}}};
  CHECK_THROWS_AS(build_lstm_iss_groups(topo2), TopologyError);
}

TEST_CASE("owner-column coordinates of distinct groups are disjoint") {
  auto map = build_lstm_iss_groups(lstm_stack_topology(5, {6}, 9));
  std::set<std::pair<int, int>> seen;
  for (const auto& g : map.layers[0].groups) {
    for (const auto& s : g.spans) {
      if (s.kind != GroupSpan::kCol || s.tensor != "lstm0.weight") continue;
      for (int r = s.begin; r < s.end; ++r) {
        auto [it, inserted] = seen.insert({r, s.index});
        CHECK(inserted);
      }
    }
  }
}

TEST_CASE("paper RHN configuration reproduces 46520") {
  RhnGroupTopology topo;
  topo.width = 830;
  topo.depth = 10;
  topo.embed_dim = 830;
  topo.vocab = 10000;
  topo.coupled_c = true;  // H and T transforms
  topo.tied_embedding = true;
  topo.sparsify_embedding = true;
  topo.dedup_diagonal = false;
  auto map = build_rhn_iss_groups(topo);
  CHECK(map.layers[0].groups.size() == 830);
  for (long long s : map.group_sizes(0)) CHECK(s == 46520);
  CHECK(map.rhn_transforms == 2);
}

TEST_CASE("toy RHN group sizes verified against enumeration, both dedup policies") {
  RhnGroupTopology topo;
  topo.width = 2;
  topo.depth = 1;
  topo.embed_dim = 2;
  topo.vocab = 3;
  topo.coupled_c = false;  // H, T, C independent
  topo.tied_embedding = false;
  topo.sparsify_embedding = true;
  topo.dedup_diagonal = false;
  auto map = build_rhn_iss_groups(topo);
  auto coords = oracle::enumerate_rhn_group(2, 1, 2, 3, 0, false, false, true);
  CHECK(map.group_sizes(0)[0] == (long long)coords.size());

  topo.dedup_diagonal = true;
  auto map2 = build_rhn_iss_groups(topo);
  CHECK(map2.group_sizes(0)[0] == oracle::unique_count(coords));
  // and the deduped size equals the stored coordinate set
  CHECK(map2.layers[0].groups[0].unique_size() == oracle::unique_count(coords));
}

TEST_CASE("width-1 RHN collapses rows and columns onto one stored coordinate") {
  RhnGroupTopology topo;
  topo.width = 1;
  topo.depth = 2;
  topo.embed_dim = 1;
  topo.vocab = 4;
  topo.coupled_c = true;
  topo.tied_embedding = true;
  topo.sparsify_embedding = true;
  auto map = build_rhn_iss_groups(topo);
  const auto& g = map.layers[0].groups[0];
  auto coords = g.coords();
  // every recurrent transform contributes exactly its (0,0) entry once
  int recurrent_coords = 0;
  for (const auto& c : coords)
    if (c.tensor.find("rhn.r_") == 0) ++recurrent_coords;
  CHECK(recurrent_coords == 2 * 2);  // two transforms, two depths, one entry each
  CHECK(g.unique_size() == (long long)coords.size());
}

TEST_CASE("group_norm examples and properties") {
  Matrix w(2, 2);
  NamedTensorsConst tensors{{"w", &w}};
  IssGroup g;
  g.layer = 0;
  g.component = 0;
  g.spans.push_back({"w", GroupSpan::kRow, 0, 0, 2});
  g.spans.push_back({"w", GroupSpan::kRow, 1, 0, 2});
  g.size = 4;

  // all-zero group, eps 1e-8 -> 1e-4
  CHECK(group_norm(g, tensors, 1e-8) == doctest::Approx(1e-4).epsilon(1e-9));

  // single weight 3.0, eps 0 -> 3.0
  IssGroup single;
  single.spans.push_back({"w", GroupSpan::kRow, 0, 0, 1});
  single.size = 1;
  w(0, 0) = 3.0f;
  CHECK(group_norm(single, tensors, 0.0) == doctest::Approx(3.0));

  // {3, 4} -> 5
  w(0, 1) = 4.0f;
  IssGroup pair;
  pair.spans.push_back({"w", GroupSpan::kRow, 0, 0, 2});
  pair.size = 2;
  CHECK(group_norm(pair, tensors, 0.0) == doctest::Approx(5.0));

  // monotone in eps and in |w|
  CHECK(group_norm(pair, tensors, 0.5) > group_norm(pair, tensors, 0.0));
  w(0, 1) = 5.0f;
  CHECK(group_norm(pair, tensors, 0.0) > 5.0);

  CHECK_THROWS_AS(group_norm(pair, tensors, -1.0), ParameterError);
}

TEST_CASE("detect_zero_groups finds exactly the constructed zeros") {
  Model model = make_lstm_lm(6, 3, {4, 3}, 77);
  auto map = build_groups_for(model);
  auto tensors = named_tensors(model);

  // freshly initialized: nothing is zero
  auto rep0 = detect_zero_groups(as_const_tensors(tensors), map, 0.0);
  for (const auto& l : rep0.layers) CHECK(l.zero == 0);

  // zero out group (layer 1, component 2) by hand
  auto resolved = resolve_groups(map, as_const_tensors(tensors));
  for (int gi : resolved.layer_group_index[1]) {
    if (resolved.groups[size_t(gi)].component != 2) continue;
    for (const auto& c : resolved.groups[size_t(gi)].coords)
      tensors[size_t(c.tensor)].second->data[size_t(c.offset)] = 0.0f;
  }
  auto rep1 = detect_zero_groups(as_const_tensors(tensors), map, 0.0);
  CHECK(rep1.layers[0].zero == 0);
  CHECK(rep1.layers[1].zero == 1);
  REQUIRE(rep1.layers[1].zero_components.size() == 1);
  CHECK(rep1.layers[1].zero_components[0] == 2);
  CHECK(rep1.layers[1].surviving == 2);

  // independent per-coordinate scan agrees
  for (const auto& lg : map.layers) {
    for (const auto& g : lg.groups) {
      bool all_zero = true;
      for (const auto& c : g.coords()) {
        const Matrix* t = nullptr;
        for (auto& [n, m] : tensors)
          if (n == c.tensor) t = m;
        REQUIRE(t != nullptr);
        if ((*t)(c.row, c.col) != 0.0f) all_zero = false;
      }
      const bool reported =
          std::find(rep1.layers[size_t(g.layer)].zero_components.begin(),
                    rep1.layers[size_t(g.layer)].zero_components.end(),
                    g.component) != rep1.layers[size_t(g.layer)].zero_components.end();
      CHECK(all_zero == reported);
    }
  }

  // histogram counts every group exactly once
  long long total = 0;
  for (long long c : rep1.histogram.counts) total += c;
  CHECK(total == 7);
}

TEST_CASE("zeroing a full group silences the component when biases are zero") {
  Model model = make_lstm_lm(6, 3, {4}, 5);
  auto& lm = std::get<LstmLmModel>(model);
  // biases are zero from construction
  auto map = build_groups_for(model);
  auto tensors = named_tensors(model);
  auto resolved = resolve_groups(map, as_const_tensors(tensors));
  const int k = 1;
  for (int gi : resolved.layer_group_index[0]) {
    if (resolved.groups[size_t(gi)].component != k) continue;
    for (const auto& c : resolved.groups[size_t(gi)].coords)
      tensors[size_t(c.tensor)].second->data[size_t(c.offset)] = 0.0f;
  }

  Rng rng(55);
  std::vector<Matrix> xs;
  for (int t = 0; t < 5; ++t) {
    Matrix x(2, 3);
    for (auto& v : x.data) v = rng.uniform(-1, 1);
    xs.push_back(x);
  }
  std::vector<LstmState> init{LstmState(2, 4)};
  auto fwd = lstm_sequence_forward(lm.layers, xs, init);
  for (int t = 0; t < 5; ++t)
    for (int b = 0; b < 2; ++b) CHECK(fwd.h[0][size_t(t)](b, k) == 0.0f);
}

TEST_CASE("export json covers every group and round-trips sizes") {
  Model model = make_lstm_lm(5, 2, {3}, 3);
  auto map = build_groups_for(model);
  const std::string doc = export_group_map_json(map);
  CHECK(doc.find("\"model_kind\": \"lstm_stack\"") != std::string::npos);
  CHECK(doc.find("lstm0.weight") != std::string::npos);
  CHECK(doc.find("output.weight") != std::string::npos);
  // one entry per component
  size_t count = 0, pos = 0;
  while ((pos = doc.find("\"component\"", pos)) != std::string::npos) {
    ++count;
    pos += 10;
  }
  CHECK(count == 3);
}
