#include "biden/masking.hpp"

#include <mutex>
#include <shared_mutex>
#include <string>
#include <unordered_map>

namespace biden {

using numkit::kNegInf;
using numkit::Tensor;

DecouplingMasks build_decoupling_masks(const std::vector<int>& utt_of_token) {
  const int n = static_cast<int>(utt_of_token.size());
  DecouplingMasks m;
  m.n = n;
  m.m_f2c = Tensor<double>({n, n}, kNegInf);
  m.m_c2c = Tensor<double>({n, n}, kNegInf);
  m.m_p2c = Tensor<double>({n, n}, kNegInf);
  for (int i = 0; i < n; ++i) {
    const int ui = utt_of_token[static_cast<std::size_t>(i)];
    for (int j = 0; j < n; ++j) {
      const int uj = utt_of_token[static_cast<std::size_t>(j)];
      if (ui < uj)
        m.m_f2c.at(i, j) = 0.0;
      else if (ui == uj)
        m.m_c2c.at(i, j) = 0.0;
      else
        m.m_p2c.at(i, j) = 0.0;
    }
  }
  m.valid_f2c.resize(static_cast<std::size_t>(n));
  m.valid_c2c.resize(static_cast<std::size_t>(n));
  m.valid_p2c.resize(static_cast<std::size_t>(n));
  m.m_g = Tensor<double>({n, 3}, kNegInf);
  const int last_utt = n ? utt_of_token[static_cast<std::size_t>(n - 1)] : 0;
  for (int i = 0; i < n; ++i) {
    const int ui = utt_of_token[static_cast<std::size_t>(i)];
    const bool f = ui < last_utt;  // some later utterance exists
    const bool c = true;           // own utterance always visible
    const bool p = ui > utt_of_token[0];
    m.valid_f2c[static_cast<std::size_t>(i)] = f;
    m.valid_c2c[static_cast<std::size_t>(i)] = c;
    m.valid_p2c[static_cast<std::size_t>(i)] = p;
    if (f) m.m_g.at(i, 0) = 0.0;
    if (c) m.m_g.at(i, 1) = 0.0;
    if (p) m.m_g.at(i, 2) = 0.0;
  }
  return m;
}

DecouplingMasks zero_masks(int n) {
  DecouplingMasks m;
  m.n = n;
  m.m_f2c = Tensor<double>({n, n}, 0.0);
  m.m_c2c = Tensor<double>({n, n}, 0.0);
  m.m_p2c = Tensor<double>({n, n}, 0.0);
  m.m_g = Tensor<double>({n, 3}, 0.0);
  m.valid_f2c.assign(static_cast<std::size_t>(n), true);
  m.valid_c2c.assign(static_cast<std::size_t>(n), true);
  m.valid_p2c.assign(static_cast<std::size_t>(n), true);
  m.zero_mask_ablation = true;
  return m;
}

numkit::Tensor<double> build_causal_mask(int m) {
  Tensor<double> mask({m, m}, 0.0);
  for (int i = 0; i < m; ++i)
    for (int j = i + 1; j < m; ++j) mask.at(i, j) = kNegInf;
  return mask;
}

void apply_padding(DecouplingMasks& masks, const std::vector<bool>& is_pad) {
  const int n = masks.n;
  for (int j = 0; j < n; ++j) {
    if (!is_pad[static_cast<std::size_t>(j)]) continue;
    for (int i = 0; i < n; ++i) {
      masks.m_f2c.at(i, j) = kNegInf;
      masks.m_c2c.at(i, j) = kNegInf;
      masks.m_p2c.at(i, j) = kNegInf;
    }
  }
  for (int i = 0; i < n; ++i) {
    if (!is_pad[static_cast<std::size_t>(i)]) continue;
    masks.m_g.at(i, 0) = kNegInf;
    masks.m_g.at(i, 1) = kNegInf;
    masks.m_g.at(i, 2) = kNegInf;
    masks.valid_f2c[static_cast<std::size_t>(i)] = false;
    masks.valid_c2c[static_cast<std::size_t>(i)] = false;
    masks.valid_p2c[static_cast<std::size_t>(i)] = false;
  }
  // A real token may have lost its only neighbors to padding; recompute row
  // validity from the combined masks.
  auto recompute = [&](const Tensor<double>& m, std::vector<bool>& valid, int col) {
    for (int i = 0; i < n; ++i) {
      if (is_pad[static_cast<std::size_t>(i)]) continue;
      bool any = false;
      for (int j = 0; j < n; ++j)
        if (m.at(i, j) > kNegInf / 2) { any = true; break; }
      valid[static_cast<std::size_t>(i)] = any;
      masks.m_g.at(i, col) = any ? 0.0 : kNegInf;
    }
  };
  recompute(masks.m_f2c, masks.valid_f2c, 0);
  recompute(masks.m_c2c, masks.valid_c2c, 1);
  recompute(masks.m_p2c, masks.valid_p2c, 2);
}

struct MaskCache::Impl {
  std::shared_mutex mu;
  std::unordered_map<std::string, std::shared_ptr<const DecouplingMasks>> map;
};

std::shared_ptr<MaskCache::Impl> MaskCache::make_impl() { return std::make_shared<Impl>(); }

std::shared_ptr<const DecouplingMasks> MaskCache::get_or_build(
    const std::vector<int>& utt_of_token, const std::vector<bool>& is_pad) {
  std::string key;
  key.reserve(utt_of_token.size() * 3 + 2);
  for (std::size_t i = 0; i < utt_of_token.size(); ++i) {
    key += std::to_string(utt_of_token[i]);
    key += is_pad[i] ? 'P' : ',';
  }
  {
    std::shared_lock lk(impl_->mu);
    auto it = impl_->map.find(key);
    if (it != impl_->map.end()) return it->second;
  }
  auto built = std::make_shared<DecouplingMasks>(build_decoupling_masks(utt_of_token));
  bool any_pad = false;
  for (bool p : is_pad) any_pad = any_pad || p;
  if (any_pad) apply_padding(*built, is_pad);
  std::unique_lock lk(impl_->mu);
  auto [it, inserted] = impl_->map.emplace(key, built);
  return it->second;  // first inserter wins
}

std::size_t MaskCache::size() const {
  std::shared_lock lk(impl_->mu);
  return impl_->map.size();
}

}  // namespace biden
