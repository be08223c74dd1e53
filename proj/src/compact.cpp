#include "issrnn/compact.hpp"

#include <algorithm>
#include <cmath>

#include "json.hpp"

namespace issrnn {

namespace {

Matrix take(const Matrix& m, const std::vector<int>* rows, const std::vector<int>* cols) {
  const int nr = rows ? int(rows->size()) : m.rows;
  const int nc = cols ? int(cols->size()) : m.cols;
  Matrix out(nr, nc);
  for (int i = 0; i < nr; ++i) {
    const int r = rows ? (*rows)[size_t(i)] : i;
    for (int j = 0; j < nc; ++j) {
      const int c = cols ? (*cols)[size_t(j)] : j;
      out(i, j) = m(r, c);
    }
  }
  return out;
}

std::vector<int> iota_vec(int n) {
  std::vector<int> v(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) v[size_t(i)] = i;
  return v;
}

}  // namespace

CompactionPlan plan_compaction(const Model& model, const IssGroupMap& map,
                               const SparsityReport& report) {
  if (report.layers.size() != map.layers.size())
    throw ConsistencyError("plan_compaction: report does not match group map");

  CompactionPlan plan;
  plan.model_kind = map.model_kind;
  for (size_t n = 0; n < map.layers.size(); ++n) {
    const int k_total = map.layers[n].hidden_size;
    if (report.layers[n].total != k_total)
      throw ConsistencyError("plan_compaction: report layer size mismatch");
    std::vector<char> zero(size_t(k_total), 0);
    for (int z : report.layers[n].zero_components) zero[size_t(z)] = 1;
    std::vector<int> kept;
    for (int k = 0; k < k_total; ++k)
      if (!zero[size_t(k)]) kept.push_back(k);
    if (kept.empty())
      throw ConsistencyError("plan_compaction: every component of layer " +
                             std::to_string(n) +
                             " is zero; compaction would produce a width-0 layer");
    plan.new_hidden_sizes.push_back(int(kept.size()));
    plan.kept.push_back(std::move(kept));
  }

  if (auto* m = std::get_if<RhnLmModel>(&model)) {
    plan.compacts_embedding = m->tied || m->embed_dim == m->cell.width;
  } else {
    (void)std::get<LstmLmModel>(model);
  }
  return plan;
}

Model apply_compaction(const Model& model, const CompactionPlan& plan) {
  if (auto* m = std::get_if<LstmLmModel>(&model)) {
    if (plan.model_kind != "lstm_stack" || plan.kept.size() != m->layers.size())
      throw ConsistencyError("apply_compaction: plan does not fit this model");
    LstmLmModel out;
    out.vocab = m->vocab;
    out.embed_dim = m->embed_dim;
    out.embedding = m->embedding;

    std::vector<int> prev_kept = iota_vec(m->embed_dim);
    for (size_t n = 0; n < m->layers.size(); ++n) {
      const auto& src = m->layers[n];
      const auto& kept = plan.kept[n];
      if (!kept.empty() && (kept.back() >= src.hidden_size || kept.front() < 0))
        throw ConsistencyError("apply_compaction: kept index outside hidden size");
      const int h_new = int(kept.size());

      // Row selection: kept input rows then kept recurrent rows.
      std::vector<int> rows = prev_kept;
      for (int k : kept) rows.push_back(src.input_size + k);
      // Column selection: kept column per gate block.
      std::vector<int> cols;
      for (int gate = 0; gate < 4; ++gate)
        for (int k : kept) cols.push_back(gate * src.hidden_size + k);

      LstmLayerParams dst(int(prev_kept.size()), h_new);
      dst.weight = take(src.weight, &rows, &cols);
      dst.bias = take(src.bias, nullptr, &cols);
      out.layers.push_back(std::move(dst));
      // Layer n+1 selects its input rows by these original component ids.
      prev_kept = kept;
    }
    out.output_weight = take(m->output_weight, &plan.kept.back(), nullptr);
    out.output_bias = m->output_bias;
    return out;
  }

  const auto& m = std::get<RhnLmModel>(model);
  if (plan.model_kind != "rhn" || plan.kept.size() != 1)
    throw ConsistencyError("apply_compaction: plan does not fit this model");
  const auto& kept = plan.kept[0];
  if (!kept.empty() && kept.back() >= m.cell.width)
    throw ConsistencyError("apply_compaction: kept index outside width");

  RhnLmModel out;
  out.vocab = m.vocab;
  out.tied = m.tied;
  const bool shrink_embed = plan.compacts_embedding;
  out.embed_dim = shrink_embed ? int(kept.size()) : m.embed_dim;
  out.embedding = shrink_embed ? take(m.embedding, nullptr, &kept) : m.embedding;

  out.cell = RhnLayerParams(int(kept.size()), m.cell.depth, out.embed_dim,
                            m.cell.coupled_c);
  const std::vector<int>* wrows = shrink_embed ? &kept : nullptr;
  out.cell.w_h = take(m.cell.w_h, wrows, &kept);
  out.cell.w_t = take(m.cell.w_t, wrows, &kept);
  if (!m.cell.coupled_c) out.cell.w_c = take(m.cell.w_c, wrows, &kept);
  for (int l = 0; l < m.cell.depth; ++l) {
    out.cell.r_h[size_t(l)] = take(m.cell.r_h[size_t(l)], &kept, &kept);
    out.cell.r_t[size_t(l)] = take(m.cell.r_t[size_t(l)], &kept, &kept);
    out.cell.b_h[size_t(l)] = take(m.cell.b_h[size_t(l)], nullptr, &kept);
    out.cell.b_t[size_t(l)] = take(m.cell.b_t[size_t(l)], nullptr, &kept);
    if (!m.cell.coupled_c) {
      out.cell.r_c[size_t(l)] = take(m.cell.r_c[size_t(l)], &kept, &kept);
      out.cell.b_c[size_t(l)] = take(m.cell.b_c[size_t(l)], nullptr, &kept);
    }
  }
  if (!m.tied) out.output_weight = take(m.output_weight, &kept, nullptr);
  out.output_bias = m.output_bias;
  return out;
}

namespace {

// Forward a batch-1 token sequence, collecting per-step logits and per-layer
// hidden states. No dropout.
struct ProbeTrace {
  std::vector<std::vector<Matrix>> h;  // [layer][t], 1 x hidden
  std::vector<Matrix> logits;          // [t], 1 x vocab
};

ProbeTrace probe_forward(const Model& model, const std::vector<int>& tokens) {
  ProbeTrace tr;
  if (auto* m = std::get_if<LstmLmModel>(&model)) {
    std::vector<Matrix> xs;
    for (int id : tokens) {
      Matrix x(1, m->embed_dim);
      for (int j = 0; j < m->embed_dim; ++j) x(0, j) = m->embedding(id, j);
      xs.push_back(std::move(x));
    }
    std::vector<LstmState> init;
    for (const auto& l : m->layers) init.emplace_back(1, l.hidden_size);
    auto fwd = lstm_sequence_forward(m->layers, xs, init);
    tr.h = fwd.h;
    for (size_t t = 0; t < tokens.size(); ++t) {
      Matrix logits(1, m->vocab);
      for (int j = 0; j < m->vocab; ++j) logits(0, j) = m->output_bias(0, j);
      gemm_acc_rowblock(logits, fwd.h[m->layers.size() - 1][t], m->output_weight, 0);
      tr.logits.push_back(std::move(logits));
    }
    return tr;
  }

  const auto& m = std::get<RhnLmModel>(model);
  Matrix s(1, m.cell.width);
  tr.h.resize(1);
  for (int id : tokens) {
    Matrix x(1, m.embed_dim);
    for (int j = 0; j < m.embed_dim; ++j) x(0, j) = m.embedding(id, j);
    auto [s_next, cache] = rhn_forward(m.cell, x, s);
    s = std::move(s_next);
    tr.h[0].push_back(s);
    Matrix logits(1, m.vocab);
    for (int j = 0; j < m.vocab; ++j) logits(0, j) = m.output_bias(0, j);
    if (m.tied)
      gemm_nt_acc(logits, s, m.embedding, true);
    else
      gemm_acc_rowblock(logits, s, m.output_weight, 0);
    tr.logits.push_back(std::move(logits));
  }
  return tr;
}

}  // namespace

double verify_equivalence(const Model& original, const Model& compact,
                          const CompactionPlan& plan, int probes, int steps,
                          uint64_t seed) {
  const int vocab = std::visit([](const auto& m) { return m.vocab; }, original);
  Rng rng(seed);
  double max_diff = 0;
  for (int p = 0; p < probes; ++p) {
    std::vector<int> tokens;
    for (int t = 0; t < steps; ++t) tokens.push_back(int(rng.below(uint64_t(vocab))));
    ProbeTrace a = probe_forward(original, tokens);
    ProbeTrace b = probe_forward(compact, tokens);
    for (size_t t = 0; t < tokens.size(); ++t) {
      for (int v = 0; v < vocab; ++v)
        max_diff = std::max(
            max_diff, std::fabs(double(a.logits[t](0, v)) - double(b.logits[t](0, v))));
      for (size_t n = 0; n < b.h.size(); ++n) {
        const auto& kept = plan.kept[n];
        for (size_t i = 0; i < kept.size(); ++i)
          max_diff = std::max(max_diff, std::fabs(double(a.h[n][t](0, kept[i])) -
                                                  double(b.h[n][t](0, int(i)))));
      }
    }
  }
  return max_diff;
}

std::string plan_to_json(const CompactionPlan& plan) {
  nlohmann::json j;
  j["format_version"] = 1;
  j["model_kind"] = plan.model_kind;
  j["kept"] = plan.kept;
  j["new_hidden_sizes"] = plan.new_hidden_sizes;
  j["compacts_embedding"] = plan.compacts_embedding;
  return j.dump(2);
}

CompactionPlan plan_from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text, nullptr, false);
  if (j.is_discarded()) throw FormatError("compaction plan: invalid JSON");
  CompactionPlan plan;
  try {
    if (j.at("format_version").get<int>() != 1)
      throw FormatError("compaction plan: unsupported format_version");
    plan.model_kind = j.at("model_kind").get<std::string>();
    plan.kept = j.at("kept").get<std::vector<std::vector<int>>>();
    plan.new_hidden_sizes = j.at("new_hidden_sizes").get<std::vector<int>>();
    plan.compacts_embedding = j.at("compacts_embedding").get<bool>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("compaction plan: ") + e.what());
  }
  for (size_t n = 0; n < plan.kept.size(); ++n) {
    if (!std::is_sorted(plan.kept[n].begin(), plan.kept[n].end()) ||
        std::adjacent_find(plan.kept[n].begin(), plan.kept[n].end()) !=
            plan.kept[n].end())
      throw FormatError("compaction plan: kept indices must be strictly increasing");
    if (int(plan.kept[n].size()) != plan.new_hidden_sizes[n])
      throw FormatError("compaction plan: hidden size does not match kept count");
  }
  return plan;
}

}  // namespace issrnn
