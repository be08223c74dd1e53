#pragma once

#include "issrnn/iss.hpp"
#include "issrnn/lm.hpp"

namespace issrnn {

// Standard stacked-LSTM topology: each layer's hidden state feeds the next
// layer's input rows; the top layer feeds the output weight rows. Matches the
// tensor names of named_tensors().
LstmStackTopology lstm_stack_topology(int input_size, const std::vector<int>& hidden,
                                      int vocab);

// Group map for a model using its own topology. For RHN models the embedding
// joins the groups whenever embed_dim == width (and always when tied).
IssGroupMap build_groups_for(const Model& model, bool rhn_dedup_diagonal = false);

}  // namespace issrnn
