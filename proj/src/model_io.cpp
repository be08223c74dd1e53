#include "issrnn/model_io.hpp"

#include <cstring>
#include <fstream>

#include "json.hpp"

namespace issrnn {

namespace {

nlohmann::json topology_json(const Model& model) {
  nlohmann::json t;
  if (auto* m = std::get_if<LstmLmModel>(&model)) {
    t["vocab"] = m->vocab;
    t["embed_dim"] = m->embed_dim;
    nlohmann::json hs = nlohmann::json::array();
    for (const auto& l : m->layers) hs.push_back(l.hidden_size);
    t["hidden_sizes"] = std::move(hs);
    nlohmann::json recv = nlohmann::json::array();
    for (size_t n = 0; n < m->layers.size(); ++n) {
      nlohmann::json r;
      r["owner_layer"] = n;
      if (n + 1 < m->layers.size()) {
        r["tensor"] = "lstm" + std::to_string(n + 1) + ".weight";
        r["width"] = 4 * m->layers[n + 1].hidden_size;
      } else {
        r["tensor"] = "output.weight";
        r["width"] = m->vocab;
      }
      r["row_offset"] = 0;
      recv.push_back(std::move(r));
    }
    t["receivers"] = std::move(recv);
  } else {
    const auto& r = std::get<RhnLmModel>(model);
    t["vocab"] = r.vocab;
    t["embed_dim"] = r.embed_dim;
    t["width"] = r.cell.width;
    t["depth"] = r.cell.depth;
    t["coupled_c"] = r.cell.coupled_c;
    t["tied"] = r.tied;
  }
  return t;
}

Model model_from_topology(const std::string& kind, const nlohmann::json& t) {
  try {
    if (kind == "lstm_stack") {
      LstmLmModel m;
      m.vocab = t.at("vocab").get<int>();
      m.embed_dim = t.at("embed_dim").get<int>();
      int in = m.embed_dim;
      for (int h : t.at("hidden_sizes").get<std::vector<int>>()) {
        m.layers.emplace_back(in, h);
        in = h;
      }
      if (m.layers.empty()) throw FormatError("model manifest: no layers");
      m.output_weight = Matrix(in, m.vocab);
      m.output_bias = Matrix(1, m.vocab);
      m.embedding = Matrix(m.vocab, m.embed_dim);
      return m;
    }
    if (kind == "rhn") {
      RhnLmModel m;
      m.vocab = t.at("vocab").get<int>();
      m.embed_dim = t.at("embed_dim").get<int>();
      m.tied = t.at("tied").get<bool>();
      m.cell = RhnLayerParams(t.at("width").get<int>(), t.at("depth").get<int>(),
                              m.embed_dim, t.at("coupled_c").get<bool>());
      m.embedding = Matrix(m.vocab, m.embed_dim);
      if (!m.tied) m.output_weight = Matrix(m.cell.width, m.vocab);
      m.output_bias = Matrix(1, m.vocab);
      return m;
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("model manifest: bad topology: ") + e.what());
  }
  throw FormatError("model manifest: unknown model kind '" + kind + "'");
}

}  // namespace

void save_model(const Model& model, const std::string& path) {
  auto tensors = named_tensors_const(model);

  nlohmann::json manifest;
  manifest["format_version"] = kModelFormatVersion;
  manifest["kind"] = std::holds_alternative<LstmLmModel>(model) ? "lstm_stack" : "rhn";
  manifest["gate_order"] = kGateOrder;
  manifest["topology"] = topology_json(model);

  nlohmann::json jt = nlohmann::json::array();
  uint64_t offset = 0;
  for (auto& [name, t] : tensors) {
    nlohmann::json e;
    e["name"] = name;
    e["shape"] = {t->rows, t->cols};
    e["dtype"] = "f32";
    e["byte_offset"] = offset;
    offset += uint64_t(t->numel()) * sizeof(float);
    jt.push_back(std::move(e));
  }
  manifest["tensors"] = std::move(jt);

  const std::string mstr = manifest.dump();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("save_model: cannot open '" + path + "' for writing");
  out.write(kModelMagic, 8);
  const uint64_t mlen = mstr.size();
  out.write(reinterpret_cast<const char*>(&mlen), sizeof(mlen));
  out.write(mstr.data(), std::streamsize(mstr.size()));
  for (auto& [name, t] : tensors)
    out.write(reinterpret_cast<const char*>(t->data.data()),
              std::streamsize(t->numel() * sizeof(float)));
  if (!out) throw FormatError("save_model: write failed for '" + path + "'");
}

Model load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("load_model: cannot open '" + path + "'");

  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kModelMagic, 8) != 0)
    throw FormatError("load_model: bad magic; not a model file");
  uint64_t mlen = 0;
  in.read(reinterpret_cast<char*>(&mlen), sizeof(mlen));
  if (!in) throw FormatError("load_model: truncated header");
  std::string mstr(mlen, '\0');
  in.read(mstr.data(), std::streamsize(mlen));
  if (!in) throw FormatError("load_model: truncated manifest");

  nlohmann::json manifest = nlohmann::json::parse(mstr, nullptr, false);
  if (manifest.is_discarded()) throw FormatError("load_model: manifest is not valid JSON");

  int version = 0;
  std::string kind, gate_order;
  try {
    version = manifest.at("format_version").get<int>();
    kind = manifest.at("kind").get<std::string>();
    gate_order = manifest.at("gate_order").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("load_model: manifest missing field: ") + e.what());
  }
  if (version != kModelFormatVersion)
    throw FormatError("load_model: unsupported format_version " + std::to_string(version));
  if (gate_order != kGateOrder)
    throw FormatError("load_model: gate_order must be '" + std::string(kGateOrder) +
                      "', got '" + gate_order + "'");

  Model model = model_from_topology(kind, manifest.at("topology"));
  auto tensors = named_tensors(model);

  std::string payload((std::istreambuf_iterator<char>(in)),
                      std::istreambuf_iterator<char>());

  const auto& jt = manifest.at("tensors");
  if (jt.size() != tensors.size())
    throw FormatError("load_model: manifest lists " + std::to_string(jt.size()) +
                      " tensors, topology implies " + std::to_string(tensors.size()));

  uint64_t expected_offset = 0;
  uint64_t total = 0;
  for (size_t i = 0; i < tensors.size(); ++i) {
    const auto& e = jt.at(i);
    const std::string name = e.at("name").get<std::string>();
    if (name != tensors[i].first)
      throw FormatError("load_model: tensor '" + name + "' unexpected; wanted '" +
                        tensors[i].first + "'");
    const auto shape = e.at("shape").get<std::vector<int>>();
    Matrix* t = tensors[i].second;
    if (shape.size() != 2 || shape[0] != t->rows || shape[1] != t->cols)
      throw FormatError("load_model: tensor '" + name + "' shape mismatch");
    if (e.at("dtype").get<std::string>() != "f32")
      throw FormatError("load_model: tensor '" + name + "' has unsupported dtype");
    const uint64_t offset = e.at("byte_offset").get<uint64_t>();
    const uint64_t bytes = uint64_t(t->numel()) * sizeof(float);
    if (offset < expected_offset)
      throw FormatError("load_model: tensor '" + name + "' overlaps the previous tensor");
    if (offset > expected_offset)
      throw FormatError("load_model: tensor '" + name + "' leaves a payload gap");
    if (offset + bytes > payload.size())
      throw FormatError("load_model: tensor '" + name + "': payload truncated (need " +
                        std::to_string(offset + bytes) + " bytes, have " +
                        std::to_string(payload.size()) + ")");
    std::memcpy(t->data.data(), payload.data() + offset, bytes);
    expected_offset = offset + bytes;
    total += bytes;
  }
  if (total != payload.size())
    throw FormatError("load_model: payload length " + std::to_string(payload.size()) +
                      " does not equal the summed tensor sizes " + std::to_string(total));
  return model;
}

}  // namespace issrnn
