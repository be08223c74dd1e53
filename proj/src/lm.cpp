#include "issrnn/lm.hpp"

#include "issrnn/model_groups.hpp"

namespace issrnn {

long long count_params(const Model& model) {
  long long n = 0;
  for (auto& [name, t] : named_tensors_const(model)) n += (long long)t->numel();
  return n;
}

LstmStackTopology lstm_stack_topology(int input_size, const std::vector<int>& hidden,
                                      int vocab) {
  LstmStackTopology topo;
  topo.input_size = input_size;
  topo.hidden_sizes = hidden;
  int in = input_size;
  for (size_t n = 0; n < hidden.size(); ++n) {
    const int h = hidden[n];
    const std::string wname = "lstm" + std::to_string(n) + ".weight";
    topo.layer_weight_names.push_back(wname);
    topo.tensors[wname] = {in + h, 4 * h};
    std::vector<ReceiverSpec> recv;
    if (n + 1 < hidden.size()) {
      recv.push_back({"lstm" + std::to_string(n + 1) + ".weight", 0, 4 * hidden[n + 1]});
    } else {
      recv.push_back({"output.weight", 0, vocab});
    }
    topo.receivers.push_back(std::move(recv));
    in = h;
  }
  topo.tensors["output.weight"] = {hidden.back(), vocab};
  return topo;
}

IssGroupMap build_groups_for(const Model& model, bool rhn_dedup_diagonal) {
  if (auto* m = std::get_if<LstmLmModel>(&model)) {
    std::vector<int> hidden;
    for (const auto& l : m->layers) hidden.push_back(l.hidden_size);
    return build_lstm_iss_groups(lstm_stack_topology(m->embed_dim, hidden, m->vocab));
  }
  const auto& m = std::get<RhnLmModel>(model);
  RhnGroupTopology topo;
  topo.width = m.cell.width;
  topo.depth = m.cell.depth;
  topo.embed_dim = m.embed_dim;
  topo.vocab = m.vocab;
  topo.coupled_c = m.cell.coupled_c;
  topo.tied_embedding = m.tied;
  topo.sparsify_embedding = m.tied || m.embed_dim == m.cell.width;
  topo.dedup_diagonal = rhn_dedup_diagonal;
  return build_rhn_iss_groups(topo);
}

}  // namespace issrnn
