#pragma once

#include <array>
#include <string>
#include <vector>

#include "issrnn/error.hpp"

namespace issrnn {

struct CharVocab {
  std::vector<unsigned char> id_to_char;
  std::array<int, 256> char_to_id{};

  int size() const { return int(id_to_char.size()); }
};

CharVocab build_vocab(const std::string& text);
std::vector<int> encode(const CharVocab& vocab, const std::string& text);

struct LmDataset {
  CharVocab vocab;
  std::vector<int> train;
  std::vector<int> valid;
};

// Contiguous head/tail split; the tail becomes validation.
LmDataset make_dataset(const std::string& text, double valid_fraction);
LmDataset load_corpus(const std::string& path, double valid_fraction);

// Perplexity of the add-one-smoothed unigram model fit on the train split and
// evaluated on the validation split.
double unigram_baseline_perplexity(const LmDataset& data);

}  // namespace issrnn
