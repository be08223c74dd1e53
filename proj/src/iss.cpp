#include "issrnn/iss.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "json.hpp"

namespace issrnn {

void IssGroup::for_each_coord(const std::function<void(const WeightCoord&)>& fn) const {
  for (const auto& s : spans) {
    if (s.kind == GroupSpan::kRow) {
      for (int c = s.begin; c < s.end; ++c) fn({s.tensor, s.index, c});
    } else {
      for (int r = s.begin; r < s.end; ++r) fn({s.tensor, r, s.index});
    }
  }
}

std::vector<WeightCoord> IssGroup::coords() const {
  std::vector<WeightCoord> out;
  out.reserve(size_t(size));
  for_each_coord([&](const WeightCoord& c) { out.push_back(c); });
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

long long IssGroup::unique_size() const { return (long long)coords().size(); }

std::vector<long long> IssGroupMap::group_sizes(int layer) const {
  std::vector<long long> out;
  for (const auto& g : layers.at(layer).groups) out.push_back(g.size);
  return out;
}

namespace {

void add_span(IssGroup& g, const std::string& tensor, GroupSpan::Kind kind, int index,
              int begin, int end) {
  g.spans.push_back({tensor, kind, index, begin, end});
  g.size += end - begin;
}

const TensorShape& shape_of(const std::map<std::string, TensorShape>& tensors,
                            const std::string& name) {
  auto it = tensors.find(name);
  if (it == tensors.end())
    throw TopologyError("group topology references unknown tensor '" + name + "'");
  return it->second;
}

}  // namespace

IssGroupMap build_lstm_iss_groups(const LstmStackTopology& topo) {
  const size_t nl = topo.hidden_sizes.size();
  if (nl == 0) throw TopologyError("build_lstm_iss_groups: no layers");
  if (topo.layer_weight_names.size() != nl || topo.receivers.size() != nl)
    throw TopologyError("build_lstm_iss_groups: per-layer lists must match layer count");

  IssGroupMap map;
  map.model_kind = "lstm_stack";
  map.tensor_shapes = topo.tensors;

  int in = topo.input_size;
  for (size_t n = 0; n < nl; ++n) {
    const int h = topo.hidden_sizes[n];
    if (h < 1) throw TopologyError("build_lstm_iss_groups: hidden size must be >= 1");
    const std::string& wname = topo.layer_weight_names[n];
    const TensorShape& ws = shape_of(topo.tensors, wname);
    if (ws.rows != in + h || ws.cols != 4 * h)
      throw TopologyError("build_lstm_iss_groups: tensor '" + wname +
                          "' is not (input+hidden) x 4*hidden for layer " +
                          std::to_string(n));
    for (const auto& r : topo.receivers[n]) {
      const TensorShape& rs = shape_of(topo.tensors, r.tensor);
      if (r.row_offset < 0 || r.row_offset + h > rs.rows)
        throw TopologyError("build_lstm_iss_groups: receiver '" + r.tensor +
                            "' rows out of range for layer " + std::to_string(n));
      if (r.width < 1 || r.width > rs.cols)
        throw TopologyError("build_lstm_iss_groups: receiver '" + r.tensor +
                            "' consumed width out of range");
    }

    LayerGroups lg;
    lg.hidden_size = h;
    for (int k = 0; k < h; ++k) {
      IssGroup g;
      g.layer = int(n);
      g.component = k;
      // One column per gate block, full height.
      for (int gate = 0; gate < 4; ++gate)
        add_span(g, wname, GroupSpan::kCol, gate * h + k, 0, in + h);
      // The recurrent row that consumes hidden component k.
      add_span(g, wname, GroupSpan::kRow, in + k, 0, 4 * h);
      // Receiver rows.
      for (const auto& r : topo.receivers[n])
        add_span(g, r.tensor, GroupSpan::kRow, r.row_offset + k, 0, r.width);
      lg.groups.push_back(std::move(g));
    }
    map.layers.push_back(std::move(lg));
    in = h;
  }
  return map;
}

IssGroupMap build_rhn_iss_groups(const RhnGroupTopology& topo) {
  if (topo.width < 1 || topo.depth < 1)
    throw ShapeError("build_rhn_iss_groups: width and depth must be >= 1");
  if (topo.sparsify_embedding && topo.embed_dim != topo.width)
    throw TopologyError(
        "build_rhn_iss_groups: sparsify_embedding requires embed_dim == width");
  if (topo.tied_embedding && topo.embed_dim != topo.width)
    throw TopologyError("build_rhn_iss_groups: tied output requires embed_dim == width");

  IssGroupMap map;
  map.model_kind = "rhn";
  map.rhn_transforms = topo.coupled_c ? 2 : 3;
  map.rhn_dedup_diagonal = topo.dedup_diagonal;

  std::vector<std::string> transforms = {"h", "t"};
  if (!topo.coupled_c) transforms.push_back("c");

  const int w = topo.width;
  for (const auto& tr : transforms) {
    map.tensor_shapes["rhn.w_" + tr] = {topo.embed_dim, w};
    for (int l = 0; l < topo.depth; ++l)
      map.tensor_shapes["rhn.r_" + tr + "." + std::to_string(l)] = {w, w};
  }
  map.tensor_shapes["embedding"] = {topo.vocab, topo.embed_dim};
  if (!topo.tied_embedding) map.tensor_shapes["output.weight"] = {w, topo.vocab};

  LayerGroups lg;
  lg.hidden_size = w;
  for (int k = 0; k < w; ++k) {
    IssGroup g;
    g.layer = 0;
    g.component = k;
    for (const auto& tr : transforms) {
      const std::string wname = "rhn.w_" + tr;
      // Column k of the input transform produces unit k.
      add_span(g, wname, GroupSpan::kCol, k, 0, topo.embed_dim);
      // Row k consumes embedding dimension k, removed together with the unit
      // when the embedding is sparsified.
      if (topo.sparsify_embedding) {
        add_span(g, wname, GroupSpan::kRow, k, 0, w);
        if (topo.dedup_diagonal) g.size -= 1;  // (k, k) counted once
      }
      for (int l = 0; l < topo.depth; ++l) {
        const std::string rname = "rhn.r_" + tr + "." + std::to_string(l);
        add_span(g, rname, GroupSpan::kCol, k, 0, w);
        add_span(g, rname, GroupSpan::kRow, k, 0, w);
        if (topo.dedup_diagonal) g.size -= 1;
      }
    }
    if (topo.sparsify_embedding)
      add_span(g, "embedding", GroupSpan::kCol, k, 0, topo.vocab);
    if (!topo.tied_embedding)
      add_span(g, "output.weight", GroupSpan::kRow, k, 0, topo.vocab);
    lg.groups.push_back(std::move(g));
  }
  map.layers.push_back(std::move(lg));
  return map;
}

ResolvedGroups resolve_groups(const IssGroupMap& map, const NamedTensorsConst& tensors) {
  ResolvedGroups out;
  std::map<std::string, int> index;
  for (size_t i = 0; i < tensors.size(); ++i) {
    index[tensors[i].first] = int(i);
    out.tensor_names.push_back(tensors[i].first);
    out.member_mask.emplace_back(tensors[i].second->numel(), uint8_t(0));
  }
  out.layer_group_index.resize(map.layers.size());

  for (size_t n = 0; n < map.layers.size(); ++n) {
    for (const auto& g : map.layers[n].groups) {
      ResolvedGroup rg;
      rg.layer = g.layer;
      rg.component = g.component;
      for (const auto& c : g.coords()) {
        auto it = index.find(c.tensor);
        if (it == index.end())
          throw ConsistencyError("resolve_groups: model has no tensor '" + c.tensor + "'");
        const Matrix& m = *tensors[it->second].second;
        if (c.row < 0 || c.row >= m.rows || c.col < 0 || c.col >= m.cols)
          throw ConsistencyError("resolve_groups: coordinate outside tensor '" +
                                 c.tensor + "'");
        const int64_t off = int64_t(c.row) * m.cols + c.col;
        rg.coords.push_back({it->second, off});
        out.member_mask[it->second][size_t(off)] = 1;
      }
      out.layer_group_index[n].push_back(int(out.groups.size()));
      out.groups.push_back(std::move(rg));
    }
  }
  return out;
}

double group_norm(const IssGroup& group, const NamedTensorsConst& tensors,
                  double epsilon) {
  if (epsilon < 0) throw ParameterError("group_norm: epsilon must be >= 0");
  std::map<std::string, const Matrix*> index;
  for (auto& [n, m] : tensors) index[n] = m;
  double acc = epsilon;
  for (const auto& c : group.coords()) {
    auto it = index.find(c.tensor);
    if (it == index.end())
      throw ConsistencyError("group_norm: missing tensor '" + c.tensor + "'");
    const double w = (*it->second)(c.row, c.col);
    acc += w * w;
  }
  return std::sqrt(acc);
}

namespace {

SparsityReport build_report(const NamedTensorsConst& tensors,
                            const ResolvedGroups& resolved, double zero_tol,
                            int histogram_bins) {
  if (zero_tol < 0) throw ParameterError("detect_zero_groups: zero_tol must be >= 0");
  SparsityReport rep;
  rep.zero_tol = zero_tol;

  std::vector<double> norms;
  norms.reserve(resolved.groups.size());
  std::vector<char> group_zero(resolved.groups.size(), 0);
  for (size_t gi = 0; gi < resolved.groups.size(); ++gi) {
    const auto& g = resolved.groups[gi];
    bool all_zero = true;
    double acc = 0;
    for (const auto& c : g.coords) {
      const double w = tensors[c.tensor].second->data[size_t(c.offset)];
      if (std::fabs(w) > zero_tol) all_zero = false;
      acc += w * w;
    }
    group_zero[gi] = all_zero ? 1 : 0;
    norms.push_back(std::sqrt(acc));
  }

  for (size_t n = 0; n < resolved.layer_group_index.size(); ++n) {
    LayerSparsity ls;
    ls.layer = int(n);
    for (int gi : resolved.layer_group_index[n]) {
      ++ls.total;
      if (group_zero[gi]) {
        ++ls.zero;
        ls.zero_components.push_back(resolved.groups[gi].component);
      }
    }
    ls.surviving = ls.total - ls.zero;
    rep.layers.push_back(std::move(ls));
  }

  // Parameters remaining per tensor once every zero component is excised.
  std::vector<std::vector<uint8_t>> removed(tensors.size());
  for (size_t t = 0; t < tensors.size(); ++t)
    removed[t].assign(tensors[t].second->numel(), 0);
  for (size_t gi = 0; gi < resolved.groups.size(); ++gi) {
    if (!group_zero[gi]) continue;
    for (const auto& c : resolved.groups[gi].coords)
      removed[c.tensor][size_t(c.offset)] = 1;
  }
  for (size_t t = 0; t < tensors.size(); ++t) {
    TensorParamCount tc;
    tc.tensor = tensors[t].first;
    tc.before = (long long)tensors[t].second->numel();
    long long gone = 0;
    for (uint8_t r : removed[t]) gone += r;
    tc.after = tc.before - gone;
    rep.tensors.push_back(std::move(tc));
  }

  double max_norm = 0;
  for (double v : norms) max_norm = std::max(max_norm, v);
  const int bins = std::max(1, histogram_bins);
  const double hi = max_norm > 0 ? max_norm * (1.0 + 1e-9) : 1.0;
  rep.histogram.counts.assign(bins, 0);
  for (int b = 0; b <= bins; ++b)
    rep.histogram.bin_edges.push_back(hi * double(b) / bins);
  for (double v : norms) {
    int b = std::min(bins - 1, int(v / hi * bins));
    ++rep.histogram.counts[size_t(b)];
  }
  return rep;
}

}  // namespace

SparsityReport detect_zero_groups(const NamedTensorsConst& tensors,
                                  const ResolvedGroups& resolved, double zero_tol,
                                  int histogram_bins) {
  return build_report(tensors, resolved, zero_tol, histogram_bins);
}

SparsityReport detect_zero_groups(const NamedTensorsConst& tensors,
                                  const IssGroupMap& map, double zero_tol,
                                  int histogram_bins) {
  return build_report(tensors, resolve_groups(map, tensors), zero_tol, histogram_bins);
}

std::string export_group_map_json(const IssGroupMap& map) {
  nlohmann::json doc;
  doc["model_kind"] = map.model_kind;
  if (map.model_kind == "rhn") {
    doc["rhn_transforms"] = map.rhn_transforms;
    doc["rhn_dedup_diagonal"] = map.rhn_dedup_diagonal;
  }
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& lg : map.layers) {
    nlohmann::json jl;
    jl["hidden_size"] = lg.hidden_size;
    nlohmann::json groups = nlohmann::json::array();
    for (const auto& g : lg.groups) {
      nlohmann::json jg;
      jg["layer"] = g.layer;
      jg["component"] = g.component;
      jg["size"] = g.size;
      // Aggregate spans per tensor into row/col index lists.
      std::map<std::string, std::pair<nlohmann::json, nlohmann::json>> members;
      std::map<std::string, std::map<std::string, std::pair<int, int>>> ranges;
      for (const auto& s : g.spans) {
        auto& entry = members[s.tensor];
        if (entry.first.is_null()) {
          entry.first = nlohmann::json::array();
          entry.second = nlohmann::json::array();
        }
        if (s.kind == GroupSpan::kRow) {
          entry.first.push_back(s.index);
          ranges[s.tensor]["row"] = {s.begin, s.end};
        } else {
          entry.second.push_back(s.index);
          ranges[s.tensor]["col"] = {s.begin, s.end};
        }
      }
      nlohmann::json jm = nlohmann::json::array();
      for (auto& [tensor, rc] : members) {
        nlohmann::json m;
        m["tensor"] = tensor;
        m["rows"] = rc.first;
        m["cols"] = rc.second;
        auto sh = map.tensor_shapes.find(tensor);
        // Row spans narrower than the tensor carry their range explicitly.
        auto rit = ranges[tensor].find("row");
        if (rit != ranges[tensor].end() && sh != map.tensor_shapes.end() &&
            rit->second.second - rit->second.first != sh->second.cols)
          m["row_range"] = {rit->second.first, rit->second.second};
        jm.push_back(std::move(m));
      }
      jg["members"] = std::move(jm);
      groups.push_back(std::move(jg));
    }
    jl["groups"] = std::move(groups);
    layers.push_back(std::move(jl));
  }
  doc["layers"] = std::move(layers);
  nlohmann::json shapes;
  for (const auto& [name, sh] : map.tensor_shapes)
    shapes[name] = {sh.rows, sh.cols};
  doc["tensor_shapes"] = std::move(shapes);
  return doc.dump(2);
}

}  // namespace issrnn
