#include "biden/config.hpp"

#include <fstream>
#include <sstream>

#include "json.hpp"

namespace biden {

using nlohmann::json;

namespace {

template <typename T>
void maybe(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

Config config_from_json_text(const std::string& text) {
  const json j = json::parse(text);
  Config c;
  maybe(j, "d", c.d);
  maybe(j, "heads", c.heads);
  maybe(j, "layers", c.layers);
  maybe(j, "ffn_mult", c.ffn_mult);
  if (j.contains("d_g")) c.d_g = j.at("d_g").get<int>(); else c.d_g = c.d / 2;
  maybe(j, "decoder_layers", c.decoder_layers);
  maybe(j, "decoder_heads", c.decoder_heads);
  maybe(j, "max_len", c.max_len);
  maybe(j, "max_span", c.max_span);
  maybe(j, "layer_norm_eps", c.layer_norm_eps);
  maybe(j, "dropout", c.dropout);
  maybe(j, "lr", c.lr);
  maybe(j, "warmup_frac", c.warmup_frac);
  maybe(j, "epochs", c.epochs);
  maybe(j, "batch_size", c.batch_size);
  maybe(j, "seed", c.seed);
  maybe(j, "weight_decay", c.weight_decay);
  maybe(j, "adam_beta1", c.adam_beta1);
  maybe(j, "adam_beta2", c.adam_beta2);
  maybe(j, "adam_eps", c.adam_eps);
  maybe(j, "log_every", c.log_every);
  if (j.contains("precision")) {
    const std::string p = j.at("precision").get<std::string>();
    if (p == "f32") c.precision = Precision::f32;
    else if (p == "f64") c.precision = Precision::f64;
    else throw std::invalid_argument("precision must be f32 or f64");
  }
  if (j.contains("task")) c.task = task_from_name(j.at("task").get<std::string>());
  maybe(j, "train_path", c.train_path);
  maybe(j, "dev_path", c.dev_path);
  if (j.contains("synth")) {
    const json& js = j.at("synth");
    maybe(js, "min_utts", c.synth.min_utts);
    maybe(js, "max_utts", c.synth.max_utts);
    maybe(js, "min_fillers", c.synth.min_fillers);
    maybe(js, "max_fillers", c.synth.max_fillers);
    maybe(js, "n_candidates", c.synth.n_candidates);
    maybe(js, "filler_vocab", c.synth.filler_vocab);
    maybe(js, "keyword_vocab", c.synth.keyword_vocab);
  }
  maybe(j, "no_bidm", c.no_bidm);
  maybe(j, "zero_masks", c.zero_masks);
  if (j.contains("fusion")) {
    const std::string f = j.at("fusion").get<std::string>();
    if (f == "moe") c.fusion = FusionMode::moe;
    else if (f == "mean_pool") c.fusion = FusionMode::mean_pool;
    else throw std::invalid_argument("fusion must be moe or mean_pool");
  }
  maybe(j, "no_bigru", c.no_bigru);
  if (j.contains("bi_rnn_baseline")) {
    const std::string b = j.at("bi_rnn_baseline").get<std::string>();
    if (b == "none") c.bi_rnn_baseline = BiRnnVariant::none;
    else if (b == "gru") c.bi_rnn_baseline = BiRnnVariant::gru;
    else if (b == "lstm") c.bi_rnn_baseline = BiRnnVariant::lstm;
    else throw std::invalid_argument("bi_rnn_baseline must be none, gru or lstm");
  }
  if (j.contains("selection_readout")) {
    const std::string r = j.at("selection_readout").get<std::string>();
    if (r == "final_states") c.selection_readout = SelectionReadout::final_states;
    else if (r == "mean_states") c.selection_readout = SelectionReadout::mean_states;
    else throw std::invalid_argument("selection_readout must be final_states or mean_states");
  }
  if (j.contains("init")) {
    const std::string m = j.at("init").get<std::string>();
    if (m == "random") c.init = InitMode::random;
    else if (m == "copy_last_encoder_layer") c.init = InitMode::copy_last_encoder_layer;
    else throw std::invalid_argument("init must be random or copy_last_encoder_layer");
  }
  if (c.d % c.heads != 0) throw std::invalid_argument("d must be divisible by heads");
  return c;
}

Config load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return config_from_json_text(ss.str());
}

std::string config_to_json_text(const Config& c) {
  json j;
  j["d"] = c.d;
  j["heads"] = c.heads;
  j["layers"] = c.layers;
  j["ffn_mult"] = c.ffn_mult;
  j["d_g"] = c.d_g;
  j["decoder_layers"] = c.decoder_layers;
  j["decoder_heads"] = c.decoder_heads;
  j["max_len"] = c.max_len;
  j["max_span"] = c.max_span;
  j["layer_norm_eps"] = c.layer_norm_eps;
  j["dropout"] = c.dropout;
  j["lr"] = c.lr;
  j["warmup_frac"] = c.warmup_frac;
  j["epochs"] = c.epochs;
  j["batch_size"] = c.batch_size;
  j["seed"] = c.seed;
  j["weight_decay"] = c.weight_decay;
  j["adam_beta1"] = c.adam_beta1;
  j["adam_beta2"] = c.adam_beta2;
  j["adam_eps"] = c.adam_eps;
  j["log_every"] = c.log_every;
  j["precision"] = c.precision == Precision::f32 ? "f32" : "f64";
  j["task"] = task_name(c.task);
  j["train_path"] = c.train_path;
  j["dev_path"] = c.dev_path;
  j["synth"] = {{"min_utts", c.synth.min_utts},       {"max_utts", c.synth.max_utts},
                {"min_fillers", c.synth.min_fillers}, {"max_fillers", c.synth.max_fillers},
                {"n_candidates", c.synth.n_candidates},
                {"filler_vocab", c.synth.filler_vocab},
                {"keyword_vocab", c.synth.keyword_vocab}};
  j["no_bidm"] = c.no_bidm;
  j["zero_masks"] = c.zero_masks;
  j["fusion"] = c.fusion == FusionMode::moe ? "moe" : "mean_pool";
  j["no_bigru"] = c.no_bigru;
  j["bi_rnn_baseline"] = c.bi_rnn_baseline == BiRnnVariant::none  ? "none"
                         : c.bi_rnn_baseline == BiRnnVariant::gru ? "gru"
                                                                  : "lstm";
  j["selection_readout"] =
      c.selection_readout == SelectionReadout::final_states ? "final_states" : "mean_states";
  j["init"] = c.init == InitMode::random ? "random" : "copy_last_encoder_layer";
  return j.dump(2);
}

std::uint64_t config_hash(const Config& cfg) {
  // FNV-1a over the canonical JSON text
  const std::string text = config_to_json_text(cfg);
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace biden
