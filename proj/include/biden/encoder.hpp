#pragma once

#include <array>
#include <cmath>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "biden/config.hpp"
#include "biden/data.hpp"
#include "biden/params.hpp"
#include "numkit/rng.hpp"
#include "numkit/tape.hpp"

namespace biden {

// Parameters of a model bound onto one tape for one forward pass.
template <typename T>
struct Bound {
  numkit::Tape<T>* tape = nullptr;
  std::unordered_map<std::string, numkit::Value> vals;
  bool trainable = false;
  numkit::Rng* dropout_rng = nullptr;
  double dropout = 0.0;

  numkit::Value operator()(const std::string& name) const {
    auto it = vals.find(name);
    if (it == vals.end()) throw std::out_of_range("unbound parameter: " + name);
    return it->second;
  }
};

// Post-softmax attention rows captured for the export CLI.
struct AttnChannelCapture {
  int n = 0;
  std::vector<std::vector<double>> heads;  // one n*n row-major matrix per head
};

struct AttnCapture {
  std::map<std::string, AttnChannelCapture> channels;
  std::vector<std::array<double, 3>> gates;  // per token (f2c, c2c, p2c), feature-averaged
};

struct AttnNames {
  std::string wq, wk, wv, wo;
  static AttnNames make(const std::string& p) {
    return {p + ".wq", p + ".wk", p + ".wv", p + ".wo"};
  }
  std::vector<std::string> all() const { return {wq, wk, wv, wo}; }
};

struct TransformerLayerNames {
  AttnNames attn;
  std::string w1, b1, w2, b2, ln1g, ln1b, ln2g, ln2b;
  static TransformerLayerNames make(const std::string& p) {
    return {AttnNames::make(p + ".attn"),
            p + ".ffn.w1", p + ".ffn.b1", p + ".ffn.w2", p + ".ffn.b2",
            p + ".ln1.g",  p + ".ln1.b",  p + ".ln2.g",  p + ".ln2.b"};
  }
  std::vector<std::string> all() const {
    std::vector<std::string> v = attn.all();
    for (const auto& s : {w1, b1, w2, b2, ln1g, ln1b, ln2g, ln2b}) v.push_back(s);
    return v;
  }
};

template <typename T>
numkit::Value const_tensor(numkit::Tape<T>& tape, const numkit::Tensor<double>& t) {
  return tape.constant(t.template cast<T>());
}

template <typename T>
numkit::Value zeros_const(numkit::Tape<T>& tape, numkit::Shape s) {
  return tape.constant(numkit::Tensor<T>(std::move(s)));
}

// Key-side padding mask: [m x n], column j invalid when token j is pad; rows
// of pad queries fully invalid.
inline numkit::Tensor<double> pad_attention_mask(const std::vector<bool>& q_pad,
                                                 const std::vector<bool>& k_pad) {
  const int m = static_cast<int>(q_pad.size());
  const int n = static_cast<int>(k_pad.size());
  numkit::Tensor<double> mask({m, n}, 0.0);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j)
      if (q_pad[static_cast<std::size_t>(i)] || k_pad[static_cast<std::size_t>(j)])
        mask.at(i, j) = numkit::kNegInf;
  return mask;
}

// min-combine two additive masks
inline numkit::Tensor<double> combine_masks(const numkit::Tensor<double>& a,
                                            const numkit::Tensor<double>& b) {
  numkit::Tensor<double> out = a;
  for (std::size_t i = 0; i < out.data.size(); ++i)
    out.data[i] = std::min(out.data[i], b.data[i]);
  return out;
}

template <typename T>
numkit::Value apply_dropout(const Bound<T>& bound, numkit::Value x) {
  if (!bound.trainable || bound.dropout <= 0.0 || !bound.dropout_rng) return x;
  numkit::Tape<T>& tp = *bound.tape;
  const auto& shape = tp.shape(x);
  numkit::Tensor<T> keep(shape);
  const T scale = static_cast<T>(1.0 / (1.0 - bound.dropout));
  for (T& v : keep.data)
    v = bound.dropout_rng->uniform() < bound.dropout ? T(0) : scale;
  return tp.mul(x, tp.constant(keep));
}

// E = E_T + E_P + E_S, one row per token.
template <typename T>
numkit::Value embed(const Bound<T>& bound, const TokenizedContext& ctx) {
  numkit::Tape<T>& tp = *bound.tape;
  numkit::Value tok = tp.gather_rows(bound("embed.token"), ctx.token_ids);
  numkit::Value pos = tp.gather_rows(bound("embed.pos"), ctx.position_ids);
  numkit::Value seg = tp.gather_rows(bound("embed.seg"), ctx.segment_ids);
  return tp.add(tp.add(tok, pos), seg);
}

// Multi-head attention; xq [m x d], xkv [n x d], additive mask [m x n] with
// entries in {0, kNegInf}. Fully-masked query rows yield zero rows.
template <typename T>
numkit::Value multi_head_attention(const Bound<T>& bound, const AttnNames& L,
                                   numkit::Value xq, numkit::Value xkv, numkit::Value mask,
                                   int heads, AttnChannelCapture* capture = nullptr) {
  numkit::Tape<T>& tp = *bound.tape;
  const int d = tp.cols(xq);
  const int dk = d / heads;
  numkit::Value q = tp.matmul(xq, bound(L.wq));
  numkit::Value k = tp.matmul(xkv, bound(L.wk));
  numkit::Value v = tp.matmul(xkv, bound(L.wv));
  const T inv_sqrt_dk = static_cast<T>(1.0 / std::sqrt(static_cast<double>(dk)));
  std::vector<numkit::Value> head_outs;
  if (capture) {
    capture->n = tp.rows(xq);
    capture->heads.clear();
  }
  for (int h = 0; h < heads; ++h) {
    numkit::Value qh = tp.slice_cols(q, h * dk, dk);
    numkit::Value kh = tp.slice_cols(k, h * dk, dk);
    numkit::Value vh = tp.slice_cols(v, h * dk, dk);
    numkit::Value logits = tp.scale(tp.matmul_nt(qh, kh), inv_sqrt_dk);
    numkit::Value attn = tp.masked_softmax(logits, mask);
    if (capture) {
      const auto& a = tp.data(attn);
      capture->heads.emplace_back(a.begin(), a.end());
    }
    head_outs.push_back(tp.matmul(attn, vh));
  }
  numkit::Value cat = heads == 1 ? head_outs[0] : tp.concat_cols(head_outs);
  return tp.matmul(cat, bound(L.wo));
}

// Post-norm residual wiring: LN(MHSA + x), then LN(FFN + .).
template <typename T>
numkit::Value transformer_layer(const Bound<T>& bound, const TransformerLayerNames& L,
                                numkit::Value x, numkit::Value mask, int heads, double eps,
                                AttnChannelCapture* capture = nullptr) {
  numkit::Tape<T>& tp = *bound.tape;
  numkit::Value attn =
      apply_dropout(bound, multi_head_attention(bound, L.attn, x, x, mask, heads, capture));
  numkit::Value tmp =
      tp.layer_norm(tp.add(attn, x), bound(L.ln1g), bound(L.ln1b), static_cast<T>(eps));
  numkit::Value h1 = tp.relu(tp.add_rowvec(tp.matmul(tmp, bound(L.w1)), bound(L.b1)));
  numkit::Value ffn =
      apply_dropout(bound, tp.add_rowvec(tp.matmul(h1, bound(L.w2)), bound(L.b2)));
  return tp.layer_norm(tp.add(ffn, tmp), bound(L.ln2g), bound(L.ln2b), static_cast<T>(eps));
}

// The base encoder: L stacked layers over the given mask (all-zero plus pad
// masking for the fully-connected PrLM stand-in).
template <typename T>
numkit::Value encode(const Bound<T>& bound, const Config& cfg, numkit::Value e,
                     numkit::Value mask, AttnCapture* capture = nullptr) {
  numkit::Value h = e;
  for (int l = 0; l < cfg.layers; ++l) {
    AttnChannelCapture* cap = nullptr;
    if (capture) cap = &capture->channels["encoder." + std::to_string(l)];
    h = transformer_layer(bound, TransformerLayerNames::make("enc." + std::to_string(l)), h,
                          mask, cfg.heads, cfg.layer_norm_eps, cap);
  }
  return h;
}

}  // namespace biden
