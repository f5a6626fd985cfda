#pragma once

#include <cstdint>
#include <string>

#include "biden/data.hpp"

namespace biden {

enum class InitMode { random, copy_last_encoder_layer };
enum class Precision { f32, f64 };
enum class FusionMode { moe, mean_pool };
enum class SelectionReadout { final_states, mean_states };
enum class BiRnnVariant { none, gru, lstm };

struct Config {
  // model dims
  int d = 64;
  int heads = 4;
  int layers = 2;
  int ffn_mult = 4;
  int d_g = 32;  // Bi-GRU hidden per direction (d/2 keeps the concat at d)
  int decoder_layers = 2;
  int decoder_heads = 2;
  int max_len = 128;
  int max_span = 20;
  double layer_norm_eps = 1e-5;
  double dropout = 0.0;

  // training
  double lr = 3e-4;
  double warmup_frac = 0.01;
  int epochs = 2;
  int batch_size = 16;
  std::uint64_t seed = 1;
  Precision precision = Precision::f32;
  double weight_decay = 0.01;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  int log_every = 50;

  // task + data
  TaskType task = TaskType::response_selection;
  std::string train_path;
  std::string dev_path;
  SynthConfig synth;

  // ablations
  bool no_bidm = false;
  bool zero_masks = false;
  FusionMode fusion = FusionMode::moe;
  bool no_bigru = false;
  BiRnnVariant bi_rnn_baseline = BiRnnVariant::none;
  SelectionReadout selection_readout = SelectionReadout::final_states;

  InitMode init = InitMode::random;
};

Config config_from_json_text(const std::string& text);
Config load_config(const std::string& path);
std::string config_to_json_text(const Config& cfg);
std::uint64_t config_hash(const Config& cfg);

}  // namespace biden
