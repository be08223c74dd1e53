#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "issrnn/matrix.hpp"

namespace issrnn {

struct TensorShape {
  int rows = 0;
  int cols = 0;
};

struct WeightCoord {
  std::string tensor;
  int row = 0;
  int col = 0;

  friend bool operator<(const WeightCoord& a, const WeightCoord& b) {
    if (a.tensor != b.tensor) return a.tensor < b.tensor;
    if (a.row != b.row) return a.row < b.row;
    return a.col < b.col;
  }
  friend bool operator==(const WeightCoord& a, const WeightCoord& b) {
    return a.tensor == b.tensor && a.row == b.row && a.col == b.col;
  }
};

// A contiguous run of one row or one column of a named tensor. Groups are
// stored as spans so that maps for large models stay small; coordinates are
// enumerated on demand.
struct GroupSpan {
  enum Kind { kRow, kCol };
  std::string tensor;
  Kind kind = kRow;
  int index = 0;  // the row (kRow) or column (kCol)
  int begin = 0;  // range over the orthogonal dimension
  int end = 0;

  long long length() const { return end - begin; }
};

// All weight coordinates tied to one removable component: the owner's gate
// columns, the owner's recurrent row, and every receiver row consuming the
// component's hidden state.
struct IssGroup {
  int layer = 0;
  int component = 0;
  std::vector<GroupSpan> spans;
  // Span arithmetic, i.e. the sum of span lengths. Row/column crossings are
  // counted per span here; coords() below always deduplicates.
  long long size = 0;

  std::vector<WeightCoord> coords() const;  // unique, sorted
  long long unique_size() const;
  void for_each_coord(const std::function<void(const WeightCoord&)>& fn) const;  // with multiplicity
};

struct LayerGroups {
  int hidden_size = 0;
  std::vector<IssGroup> groups;
};

struct IssGroupMap {
  std::string model_kind;  // "lstm_stack", "rhn" or "custom"
  std::vector<LayerGroups> layers;
  std::map<std::string, TensorShape> tensor_shapes;
  // Recorded so reports can attribute RHN size-accounting choices.
  int rhn_transforms = 0;
  bool rhn_dedup_diagonal = false;

  int num_layers() const { return int(layers.size()); }
  std::vector<long long> group_sizes(int layer) const;
};

// Receiver of a layer's hidden state: component k is consumed at row
// row_offset + k of the named tensor, across columns [0, width).
struct ReceiverSpec {
  std::string tensor;
  int row_offset = 0;
  int width = 0;
};

struct LstmStackTopology {
  int input_size = 0;
  std::vector<int> hidden_sizes;
  std::vector<std::string> layer_weight_names;         // owner combined weights
  std::vector<std::vector<ReceiverSpec>> receivers;    // per owner layer
  std::map<std::string, TensorShape> tensors;          // every referenced tensor
};

IssGroupMap build_lstm_iss_groups(const LstmStackTopology& topo);

struct RhnGroupTopology {
  int width = 0;
  int depth = 0;
  int embed_dim = 0;
  int vocab = 0;
  bool coupled_c = true;        // coupled -> H,T transforms; independent -> H,T,C
  bool tied_embedding = true;   // output weight is the embedding, shared
  bool sparsify_embedding = true;  // embedding dim k joins group k (needs embed == width)
  bool dedup_diagonal = false;  // size-accounting policy for row/column crossings
};

IssGroupMap build_rhn_iss_groups(const RhnGroupTopology& topo);

// ---------------------------------------------------------------------------
// Binding a map against concrete tensors.

using NamedTensors = std::vector<std::pair<std::string, Matrix*>>;
using NamedTensorsConst = std::vector<std::pair<std::string, const Matrix*>>;

inline NamedTensorsConst as_const_tensors(const NamedTensors& t) {
  NamedTensorsConst out;
  out.reserve(t.size());
  for (auto& [n, m] : t) out.emplace_back(n, m);
  return out;
}

struct ResolvedCoord {
  int tensor = 0;
  int64_t offset = 0;
};

struct ResolvedGroup {
  int layer = 0;
  int component = 0;
  std::vector<ResolvedCoord> coords;  // unique
};

struct ResolvedGroups {
  std::vector<ResolvedGroup> groups;
  std::vector<std::vector<uint8_t>> member_mask;  // per tensor, numel-sized
  std::vector<std::string> tensor_names;
  std::vector<std::vector<int>> layer_group_index;  // map layer -> indices into groups
};

ResolvedGroups resolve_groups(const IssGroupMap& map, const NamedTensorsConst& tensors);

// sqrt(eps + sum of squares) over the group's unique coordinates.
double group_norm(const IssGroup& group, const NamedTensorsConst& tensors, double epsilon);

// ---------------------------------------------------------------------------
// Sparsity reporting.

struct LayerSparsity {
  int layer = 0;
  int total = 0;
  int zero = 0;
  int surviving = 0;
  std::vector<int> zero_components;
};

struct TensorParamCount {
  std::string tensor;
  long long before = 0;
  long long after = 0;  // parameters left once zero components are excised
};

struct GroupNormHistogram {
  std::vector<double> bin_edges;  // counts.size() + 1 edges
  std::vector<long long> counts;
};

struct SparsityReport {
  double zero_tol = 0;
  std::vector<LayerSparsity> layers;
  std::vector<TensorParamCount> tensors;
  GroupNormHistogram histogram;
};

SparsityReport detect_zero_groups(const NamedTensorsConst& tensors,
                                  const IssGroupMap& map, double zero_tol = 0.0,
                                  int histogram_bins = 30);
SparsityReport detect_zero_groups(const NamedTensorsConst& tensors,
                                  const ResolvedGroups& resolved, double zero_tol = 0.0,
                                  int histogram_bins = 30);

// JSON export of the full group map (schema documented in the README).
std::string export_group_map_json(const IssGroupMap& map);

}  // namespace issrnn
