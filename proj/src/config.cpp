#include "issrnn/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace issrnn {

void TrainConfig::validate() const {
  if (epochs < 0) throw ConfigError("train.epochs must be >= 0");
  if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
  if (unroll_steps < 1) throw ConfigError("train.unroll_steps must be >= 1");
  if (learning_rate <= 0) throw ConfigError("train.learning_rate must be > 0");
  if (lr_decay <= 0 || lr_decay > 1) throw ConfigError("train.lr_decay must be in (0, 1]");
  if (dropout_keep <= 0 || dropout_keep > 1)
    throw ConfigError("train.dropout_keep must be in (0, 1]");
  if (threads < 1) throw ConfigError("train.threads must be >= 1");
}

void RegConfig::validate() const {
  if (lambda < 0) throw ConfigError("reg.lambda must be >= 0");
  if (tau < 0) throw ConfigError("reg.tau must be >= 0");
  if (l1_decay < 0) throw ConfigError("reg.l1_decay must be >= 0");
  if (mode == Mode::kGroupLasso && epsilon <= 0)
    throw ConfigError("reg.epsilon must be > 0 in group_lasso mode");
}

void ModelSpec::validate() const {
  if (kind != "lstm_stack" && kind != "rhn")
    throw ConfigError("model.kind must be 'lstm_stack' or 'rhn'");
  if (embed_dim < 1) throw ConfigError("model.embed_dim must be >= 1");
  if (kind == "lstm_stack") {
    if (hidden_sizes.empty()) throw ConfigError("model.hidden_sizes must be nonempty");
    for (int h : hidden_sizes)
      if (h < 1) throw ConfigError("model.hidden_sizes entries must be >= 1");
  } else {
    if (width < 1 || depth < 1) throw ConfigError("model.width and model.depth must be >= 1");
    if (tied && embed_dim != width)
      throw ConfigError("model.tied requires embed_dim == width");
  }
}

const char* reg_mode_name(RegConfig::Mode mode) {
  switch (mode) {
    case RegConfig::Mode::kGroupLasso: return "group_lasso";
    case RegConfig::Mode::kL1: return "l1";
    default: return "none";
  }
}

RegConfig::Mode reg_mode_from_name(const std::string& name) {
  if (name == "group_lasso") return RegConfig::Mode::kGroupLasso;
  if (name == "l1") return RegConfig::Mode::kL1;
  if (name == "none") return RegConfig::Mode::kNone;
  throw ConfigError("reg.mode must be one of none, group_lasso, l1");
}

namespace {

void reject_unknown(const nlohmann::json& j, const std::set<std::string>& known,
                    const std::string& section) {
  if (!j.is_object()) throw ConfigError("config section '" + section + "' must be an object");
  for (auto& [key, value] : j.items())
    if (!known.count(key))
      throw ConfigError("unknown config key '" + section + "." + key + "'");
}

template <class T>
void read_if(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) {
    try {
      out = j.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
      throw ConfigError(std::string("config key '") + key + "' has the wrong type");
    }
  }
}

}  // namespace

RunConfig parse_run_config(const std::string& json_text) {
  nlohmann::json j = nlohmann::json::parse(json_text, nullptr, false);
  if (j.is_discarded()) throw ConfigError("config is not valid JSON");
  reject_unknown(j, {"model", "train", "reg", "data"}, "<root>");

  RunConfig cfg;
  if (j.contains("model")) {
    const auto& m = j.at("model");
    reject_unknown(m, {"kind", "embed_dim", "hidden_sizes", "width", "depth",
                       "coupled_c", "tied"},
                   "model");
    read_if(m, "kind", cfg.model.kind);
    read_if(m, "embed_dim", cfg.model.embed_dim);
    read_if(m, "hidden_sizes", cfg.model.hidden_sizes);
    read_if(m, "width", cfg.model.width);
    read_if(m, "depth", cfg.model.depth);
    read_if(m, "coupled_c", cfg.model.coupled_c);
    read_if(m, "tied", cfg.model.tied);
  }
  if (j.contains("train")) {
    const auto& t = j.at("train");
    reject_unknown(t,
                   {"epochs", "batch_size", "unroll_steps", "learning_rate", "lr_decay",
                    "decay_after_epoch", "dropout_keep", "seed", "clip_norm", "threads",
                    "eval_batch", "eval_unroll"},
                   "train");
    read_if(t, "epochs", cfg.train.epochs);
    read_if(t, "batch_size", cfg.train.batch_size);
    read_if(t, "unroll_steps", cfg.train.unroll_steps);
    read_if(t, "learning_rate", cfg.train.learning_rate);
    read_if(t, "lr_decay", cfg.train.lr_decay);
    read_if(t, "decay_after_epoch", cfg.train.decay_after_epoch);
    read_if(t, "dropout_keep", cfg.train.dropout_keep);
    read_if(t, "seed", cfg.train.seed);
    read_if(t, "clip_norm", cfg.train.clip_norm);
    read_if(t, "threads", cfg.train.threads);
    read_if(t, "eval_batch", cfg.train.eval_batch);
    read_if(t, "eval_unroll", cfg.train.eval_unroll);
  }
  if (j.contains("reg")) {
    const auto& r = j.at("reg");
    reject_unknown(r, {"mode", "lambda", "epsilon", "tau", "l1_decay"}, "reg");
    std::string mode = reg_mode_name(cfg.reg.mode);
    read_if(r, "mode", mode);
    cfg.reg.mode = reg_mode_from_name(mode);
    read_if(r, "lambda", cfg.reg.lambda);
    read_if(r, "epsilon", cfg.reg.epsilon);
    read_if(r, "tau", cfg.reg.tau);
    read_if(r, "l1_decay", cfg.reg.l1_decay);
  }
  if (j.contains("data")) {
    const auto& d = j.at("data");
    reject_unknown(d, {"corpus", "valid_fraction"}, "data");
    read_if(d, "corpus", cfg.data.corpus);
    read_if(d, "valid_fraction", cfg.data.valid_fraction);
  }

  cfg.model.validate();
  cfg.train.validate();
  cfg.reg.validate();
  cfg.fingerprint = config_fingerprint(run_config_to_json(cfg));
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str());
}

std::string run_config_to_json(const RunConfig& cfg) {
  nlohmann::json j;
  j["model"]["kind"] = cfg.model.kind;
  j["model"]["embed_dim"] = cfg.model.embed_dim;
  if (cfg.model.kind == "lstm_stack") {
    j["model"]["hidden_sizes"] = cfg.model.hidden_sizes;
  } else {
    j["model"]["width"] = cfg.model.width;
    j["model"]["depth"] = cfg.model.depth;
    j["model"]["coupled_c"] = cfg.model.coupled_c;
    j["model"]["tied"] = cfg.model.tied;
  }
  j["train"]["epochs"] = cfg.train.epochs;
  j["train"]["batch_size"] = cfg.train.batch_size;
  j["train"]["unroll_steps"] = cfg.train.unroll_steps;
  j["train"]["learning_rate"] = cfg.train.learning_rate;
  j["train"]["lr_decay"] = cfg.train.lr_decay;
  j["train"]["decay_after_epoch"] = cfg.train.decay_after_epoch;
  j["train"]["dropout_keep"] = cfg.train.dropout_keep;
  j["train"]["seed"] = cfg.train.seed;
  j["train"]["clip_norm"] = cfg.train.clip_norm;
  j["train"]["threads"] = cfg.train.threads;
  j["train"]["eval_batch"] = cfg.train.eval_batch;
  j["train"]["eval_unroll"] = cfg.train.eval_unroll;
  j["reg"]["mode"] = reg_mode_name(cfg.reg.mode);
  j["reg"]["lambda"] = cfg.reg.lambda;
  j["reg"]["epsilon"] = cfg.reg.epsilon;
  j["reg"]["tau"] = cfg.reg.tau;
  j["reg"]["l1_decay"] = cfg.reg.l1_decay;
  j["data"]["corpus"] = cfg.data.corpus;
  j["data"]["valid_fraction"] = cfg.data.valid_fraction;
  return j.dump(2);
}

std::string config_fingerprint(const std::string& json_text) {
  nlohmann::json j = nlohmann::json::parse(json_text, nullptr, false);
  const std::string canon = j.is_discarded() ? json_text : j.dump();
  uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : canon) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  char buf[17];
  snprintf(buf, sizeof buf, "%016llx", (unsigned long long)h);
  return buf;
}

}  // namespace issrnn
