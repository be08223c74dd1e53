#include "issrnn/data.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace issrnn {

CharVocab build_vocab(const std::string& text) {
  if (text.empty()) throw ParameterError("build_vocab: empty text");
  std::set<unsigned char> seen(text.begin(), text.end());
  CharVocab v;
  v.char_to_id.fill(-1);
  for (unsigned char c : seen) {
    v.char_to_id[c] = int(v.id_to_char.size());
    v.id_to_char.push_back(c);
  }
  return v;
}

std::vector<int> encode(const CharVocab& vocab, const std::string& text) {
  std::vector<int> ids;
  ids.reserve(text.size());
  for (unsigned char c : text) {
    const int id = vocab.char_to_id[c];
    if (id < 0) throw ParameterError("encode: character outside vocabulary");
    ids.push_back(id);
  }
  return ids;
}

LmDataset make_dataset(const std::string& text, double valid_fraction) {
  if (valid_fraction < 0 || valid_fraction >= 1)
    throw ParameterError("make_dataset: valid_fraction must be in [0, 1)");
  LmDataset d;
  d.vocab = build_vocab(text);
  auto ids = encode(d.vocab, text);
  const size_t n_valid = size_t(double(ids.size()) * valid_fraction);
  const size_t n_train = ids.size() - n_valid;
  if (n_train < 2) throw ParameterError("make_dataset: train split too small");
  d.train.assign(ids.begin(), ids.begin() + n_train);
  d.valid.assign(ids.begin() + n_train, ids.end());
  return d;
}

LmDataset load_corpus(const std::string& path, double valid_fraction) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParameterError("load_corpus: cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return make_dataset(ss.str(), valid_fraction);
}

double unigram_baseline_perplexity(const LmDataset& data) {
  if (data.valid.empty()) throw ParameterError("unigram baseline: empty validation split");
  const int v = data.vocab.size();
  std::vector<long long> counts(v, 0);
  for (int id : data.train) ++counts[size_t(id)];
  const double total = double(data.train.size()) + v;  // add-one smoothing
  double nll = 0;
  for (int id : data.valid) nll += -std::log((double(counts[size_t(id)]) + 1.0) / total);
  return std::exp(nll / double(data.valid.size()));
}

}  // namespace issrnn
