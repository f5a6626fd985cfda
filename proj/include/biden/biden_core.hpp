#pragma once

#include <string>
#include <vector>

#include "biden/encoder.hpp"
#include "biden/masking.hpp"

namespace biden {

struct ChannelOutputs {
  numkit::Value f2c, c2c, p2c;
};

inline const char* kChannelNames[3] = {"f2c", "c2c", "p2c"};

// 0/1 row selector broadcast across features, for zeroing invalid rows.
template <typename T>
numkit::Value validity_rows_const(numkit::Tape<T>& tp, const std::vector<bool>& valid, int d) {
  const int n = static_cast<int>(valid.size());
  numkit::Tensor<T> v({n, d});
  for (int i = 0; i < n; ++i)
    if (valid[static_cast<std::size_t>(i)])
      for (int j = 0; j < d; ++j) v.at(i, j) = T(1);
  return tp.constant(v);
}

// Three parameter-independent masked transformer layers over H. Rows that are
// invalid in a channel come out exactly zero.
template <typename T>
ChannelOutputs decouple(const Bound<T>& bound, const Config& cfg, numkit::Value h,
                        const DecouplingMasks& masks, AttnCapture* capture = nullptr) {
  numkit::Tape<T>& tp = *bound.tape;
  const int d = tp.cols(h);
  auto channel = [&](const char* name, const numkit::Tensor<double>& mask,
                     const std::vector<bool>& valid) {
    AttnChannelCapture* cap = capture ? &capture->channels[name] : nullptr;
    numkit::Value out =
        transformer_layer(bound, TransformerLayerNames::make(std::string("bidm.") + name), h,
                          const_tensor(tp, mask), cfg.heads, cfg.layer_norm_eps, cap);
    return tp.mul(out, validity_rows_const(tp, valid, d));
  };
  ChannelOutputs out;
  out.f2c = channel("f2c", masks.m_f2c, masks.valid_f2c);
  out.c2c = channel("c2c", masks.m_c2c, masks.valid_c2c);
  out.p2c = channel("p2c", masks.m_p2c, masks.valid_p2c);
  return out;
}

// [X; Y; X-Y; X.Y] along features.
template <typename T>
numkit::Value heuristic_match(numkit::Tape<T>& tp, numkit::Value x, numkit::Value y) {
  return tp.concat_cols({x, y, tp.sub(x, y), tp.mul(x, y)});
}

// Expert-axis softmax gate guided by heuristic matching against H, then the
// convex combination of the three channels. The n x d x 3 gate is realized as
// an (n*d) x 3 matrix so masked_softmax's invalid-row semantics carry over to
// all-invalid (pad) tokens.
template <typename T>
numkit::Value moe_fuse(const Bound<T>& bound, numkit::Value h, const ChannelOutputs& ch,
                       const DecouplingMasks& masks, AttnCapture* capture = nullptr) {
  numkit::Tape<T>& tp = *bound.tape;
  const int n = tp.rows(h), d = tp.cols(h);
  auto score = [&](const char* k, numkit::Value hk) {
    const std::string key = std::string("moe.w") + k, bias = std::string("moe.b") + k;
    return tp.relu(tp.add_rowvec(tp.matmul(heuristic_match(tp, h, hk), bound(key)), bound(bias)));
  };
  numkit::Value sf = score("f", ch.f2c);
  numkit::Value sc = score("c", ch.c2c);
  numkit::Value sp = score("p", ch.p2c);
  numkit::Value cat = tp.concat_cols({sf, sc, sp});  // n x 3d
  auto gate_logits = [&](const char* k) {
    return tp.reshape(tp.matmul(cat, bound(std::string("moe.wg.") + k)), {n * d, 1});
  };
  numkit::Value logits =
      tp.concat_cols({gate_logits("f"), gate_logits("c"), gate_logits("p")});  // (n*d) x 3
  numkit::Tensor<double> gate_mask({n * d, 3});
  for (int i = 0; i < n; ++i)
    for (int f = 0; f < d; ++f)
      for (int k = 0; k < 3; ++k)
        gate_mask.at(i * d + f, k) = masks.m_g.at(i, k);
  numkit::Value gates = tp.masked_softmax(logits, const_tensor(tp, gate_mask));
  auto gate_plane = [&](int k) { return tp.reshape(tp.slice_cols(gates, k, 1), {n, d}); };
  numkit::Value gf = gate_plane(0), gc = gate_plane(1), gp = gate_plane(2);
  if (capture) {
    capture->gates.assign(static_cast<std::size_t>(n), {0.0, 0.0, 0.0});
    const auto& g = tp.data(gates);
    for (int i = 0; i < n; ++i)
      for (int f = 0; f < d; ++f)
        for (int k = 0; k < 3; ++k)
          capture->gates[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)] +=
              static_cast<double>(g[(static_cast<std::size_t>(i) * d + f) * 3 +
                                    static_cast<std::size_t>(k)]) / d;
  }
  return tp.add(tp.add(tp.mul(gf, ch.f2c), tp.mul(gc, ch.c2c)), tp.mul(gp, ch.p2c));
}

// Ablation stand-in for MoE: per-token mean over the channels valid there.
template <typename T>
numkit::Value mean_pool_fuse(numkit::Tape<T>& tp, const ChannelOutputs& ch,
                             const DecouplingMasks& masks, int d) {
  const int n = masks.n;
  numkit::Tensor<T> inv({n, d});
  for (int i = 0; i < n; ++i) {
    int cnt = 0;
    if (masks.valid_f2c[static_cast<std::size_t>(i)]) ++cnt;
    if (masks.valid_c2c[static_cast<std::size_t>(i)]) ++cnt;
    if (masks.valid_p2c[static_cast<std::size_t>(i)]) ++cnt;
    const T w = cnt ? static_cast<T>(1.0 / cnt) : T(0);
    for (int j = 0; j < d; ++j) inv.at(i, j) = w;
  }
  numkit::Value sum = tp.add(tp.add(ch.f2c, ch.c2c), ch.p2c);  // invalid rows are zero
  return tp.mul(sum, tp.constant(inv));
}

}  // namespace biden
