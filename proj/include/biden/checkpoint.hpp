#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "biden/config.hpp"
#include "biden/data.hpp"
#include "biden/params.hpp"

namespace biden {

// Binary checkpoint: "BIDN" magic, format version, config hash, a JSON header
// (config, vocab, named-parameter manifest with shapes), then the flat
// little-endian f32 payload in manifest order.
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct RawCheckpoint {
  Config config;
  Vocab vocab;
  std::vector<std::string> names;
  std::vector<numkit::Shape> shapes;
  std::vector<std::vector<float>> payload;
};

void save_checkpoint_raw(const std::string& path, const RawCheckpoint& ckpt);
RawCheckpoint load_checkpoint_raw(const std::string& path);

template <typename T>
void save_checkpoint(const std::string& path, const Config& cfg, const Vocab& vocab,
                     const ParamStore<T>& store) {
  RawCheckpoint raw;
  raw.config = cfg;
  raw.vocab = vocab;
  for (std::size_t i = 0; i < store.count(); ++i) {
    const auto& t = store.at(i);
    raw.names.push_back(store.names()[i]);
    raw.shapes.push_back(t.shape);
    std::vector<float> buf(t.data.size());
    for (std::size_t k = 0; k < buf.size(); ++k) buf[k] = static_cast<float>(t.data[k]);
    raw.payload.push_back(std::move(buf));
  }
  save_checkpoint_raw(path, raw);
}

template <typename T>
void load_into_store(const RawCheckpoint& raw, ParamStore<T>& store) {
  if (store.count() != raw.names.size())
    throw std::runtime_error("checkpoint manifest has " + std::to_string(raw.names.size()) +
                             " tensors, model expects " + std::to_string(store.count()));
  for (std::size_t i = 0; i < raw.names.size(); ++i) {
    if (store.names()[i] != raw.names[i])
      throw std::runtime_error("checkpoint tensor order mismatch at " + raw.names[i]);
    auto& t = store.get(raw.names[i]);
    if (t.shape != raw.shapes[i])
      throw std::runtime_error("checkpoint shape mismatch for " + raw.names[i]);
    for (std::size_t k = 0; k < t.data.size(); ++k)
      t.data[k] = static_cast<T>(raw.payload[i][k]);
  }
}

}  // namespace biden
