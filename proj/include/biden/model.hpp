#pragma once

#include <memory>
#include <string>
#include <vector>

#include "biden/biden_core.hpp"
#include "biden/config.hpp"
#include "biden/data.hpp"
#include "biden/encoder.hpp"
#include "biden/masking.hpp"
#include "biden/params.hpp"
#include "biden/task_heads.hpp"

namespace biden {

// Parameter store plus the forward pipelines for the three tasks, honoring
// the ablation flags in Config.
template <typename T>
class BidenModel {
 public:
  BidenModel(Config cfg, int vocab_size) : cfg_(std::move(cfg)), vocab_size_(vocab_size) {
    allocate();
  }

  const Config& config() const { return cfg_; }
  int vocab_size() const { return vocab_size_; }
  ParamStore<T>& store() { return store_; }
  const ParamStore<T>& store() const { return store_; }

  bool has_bidm() const {
    return !cfg_.no_bidm && cfg_.bi_rnn_baseline == BiRnnVariant::none;
  }

  void init(numkit::Rng rng) {
    for (std::size_t i = 0; i < store_.count(); ++i) {
      auto& t = store_.at(i);
      const std::string& name = store_.names()[i];
      const bool is_ln_gamma = name.ends_with(".g") && name.find(".ln") != std::string::npos;
      const bool is_ln_beta = name.ends_with(".b") && name.find(".ln") != std::string::npos;
      const bool is_bias = !is_ln_gamma && !is_ln_beta &&
                           (name.find(".b") != std::string::npos && t.rows() == 1 &&
                            name.find(".w") == std::string::npos);
      const bool is_table = name.starts_with("embed.");
      if (is_ln_gamma) {
        for (T& v : t.data) v = T(1);
      } else if (is_ln_beta || is_bias) {
        for (T& v : t.data) v = T(0);
      } else if (is_table) {
        init_uniform_scale(t, rng, 0.1);
      } else {
        init_uniform_fan(t, rng);
      }
    }
    if (cfg_.init == InitMode::copy_last_encoder_layer && has_bidm())
      copy_last_encoder_layer_into_bidm();
  }

  // Copy-and-reuse: all three decoupling layers start bit-equal to the last
  // encoder layer; they train independently afterwards.
  void copy_last_encoder_layer_into_bidm() {
    if (!has_bidm()) throw std::logic_error("copy init needs the decoupling layers");
    const auto src = TransformerLayerNames::make("enc." + std::to_string(cfg_.layers - 1)).all();
    for (const char* ch : kChannelNames) {
      const auto dst = TransformerLayerNames::make(std::string("bidm.") + ch).all();
      for (std::size_t i = 0; i < src.size(); ++i) {
        const auto& s = store_.get(src[i]);
        auto& d = store_.get(dst[i]);
        if (s.shape != d.shape) throw std::logic_error("copy init: layer shape mismatch");
        d.data = s.data;
      }
    }
  }

  Bound<T> bind(numkit::Tape<T>& tape, bool trainable,
                numkit::Rng* dropout_rng = nullptr) const {
    Bound<T> b;
    b.tape = &tape;
    b.trainable = trainable;
    b.dropout_rng = dropout_rng;
    b.dropout = cfg_.dropout;
    for (std::size_t i = 0; i < store_.count(); ++i) {
      const auto& t = store_.at(i);
      b.vals[store_.names()[i]] = trainable ? tape.leaf(t) : tape.constant(t);
    }
    return b;
  }

  // Embeds, runs the base encoder, then the decoupling/fusion pipeline (or
  // the configured replacement). Returns H_e.
  numkit::Value represent(const Bound<T>& bound, const TokenizedContext& ctx,
                          const DecouplingMasks& masks, AttnCapture* capture = nullptr) const {
    numkit::Tape<T>& tp = *bound.tape;
    numkit::Value e = embed(bound, ctx);
    const std::vector<bool> pads = ctx.pad_flags();
    numkit::Value base_mask = const_tensor(tp, pad_attention_mask(pads, pads));
    numkit::Value h = encode(bound, cfg_, e, base_mask, capture);
    if (cfg_.bi_rnn_baseline != BiRnnVariant::none) {
      BiRnnOut rnn = cfg_.bi_rnn_baseline == BiRnnVariant::gru
                         ? bi_gru(bound, "rnnbase", h, cfg_.d / 2)
                         : bi_lstm(bound, "rnnbase", h, cfg_.d / 2);
      return rnn.per_step;
    }
    if (cfg_.no_bidm) return h;
    ChannelOutputs ch;
    if (cfg_.zero_masks) {
      DecouplingMasks zm = zero_masks(ctx.n());
      bool any_pad = false;
      for (bool p : pads) any_pad = any_pad || p;
      if (any_pad) apply_padding(zm, pads);
      ch = decouple(bound, cfg_, h, zm, capture);
      return cfg_.fusion == FusionMode::moe ? moe_fuse(bound, h, ch, zm, capture)
                                            : mean_pool_fuse<T>(tp, ch, zm, cfg_.d);
    }
    ch = decouple(bound, cfg_, h, masks, capture);
    return cfg_.fusion == FusionMode::moe ? moe_fuse(bound, h, ch, masks, capture)
                                          : mean_pool_fuse<T>(tp, ch, masks, cfg_.d);
  }

  SelectionForward<T> selection_forward(const Bound<T>& bound,
                                        const std::vector<TokenizedContext>& ctxs,
                                        const std::vector<std::shared_ptr<const DecouplingMasks>>& masks,
                                        int label) const {
    std::vector<numkit::Value> h_es;
    std::vector<const TokenizedContext*> ptrs;
    for (std::size_t c = 0; c < ctxs.size(); ++c) {
      h_es.push_back(represent(bound, ctxs[c], *masks[c]));
      ptrs.push_back(&ctxs[c]);
    }
    return selection_head(bound, cfg_, h_es, ptrs, label);
  }

  QaForward<T> qa_forward(const Bound<T>& bound, const QaContext& q,
                          const DecouplingMasks& masks) const {
    numkit::Value h_e = represent(bound, q.ctx, masks);
    return qa_head(bound, h_e, q.ctx, q.span_start, q.span_end);
  }

  SummForward<T> summarization_forward(const Bound<T>& bound, const TokenizedContext& ctx,
                                       const DecouplingMasks& masks,
                                       const std::vector<int>& target_ids) const {
    numkit::Value h_e = represent(bound, ctx, masks);
    return summarization_head(bound, cfg_, target_ids, h_e, ctx.pad_flags());
  }

  // Greedy decode until [EOS] or max_len tokens. Returns generated ids
  // without BOS/EOS.
  std::vector<int> greedy_decode(const TokenizedContext& ctx, const DecouplingMasks& masks,
                                 int max_len) const {
    numkit::Tape<T> tape;
    Bound<T> bound = bind(tape, false);
    numkit::Value h_e = represent(bound, ctx, masks);
    const std::vector<bool> pads = ctx.pad_flags();
    std::vector<int> seq = {Vocab::kBos};
    std::vector<int> out;
    for (int step = 0; step < max_len; ++step) {
      numkit::Value d = decoder_states(bound, cfg_, seq, h_e, pads);
      numkit::Value last = tape.slice_rows(d, static_cast<int>(seq.size()) - 1, 1);
      numkit::Value logits = tape.matmul_nt(last, bound("embed.token"));
      const auto& row = tape.data(logits);
      int argmax = 0;
      for (std::size_t j = 1; j < row.size(); ++j)
        if (row[j] > row[static_cast<std::size_t>(argmax)]) argmax = static_cast<int>(j);
      if (argmax == Vocab::kEos) break;
      out.push_back(argmax);
      seq.push_back(argmax);
    }
    return out;
  }

 private:
  Config cfg_;
  int vocab_size_;
  ParamStore<T> store_;

  void add_attn(const AttnNames& n, int d) {
    store_.add(n.wq, {d, d});
    store_.add(n.wk, {d, d});
    store_.add(n.wv, {d, d});
    store_.add(n.wo, {d, d});
  }

  void add_transformer_layer(const TransformerLayerNames& n, int d, int ff) {
    add_attn(n.attn, d);
    store_.add(n.w1, {d, ff});
    store_.add(n.b1, {1, ff});
    store_.add(n.w2, {ff, d});
    store_.add(n.b2, {1, d});
    store_.add(n.ln1g, {1, d});
    store_.add(n.ln1b, {1, d});
    store_.add(n.ln2g, {1, d});
    store_.add(n.ln2b, {1, d});
  }

  void add_gru(const GruNames& n, int in, int hidden) {
    for (const auto& w : {n.wz, n.wr, n.wh}) store_.add(w, {in, hidden});
    for (const auto& u : {n.uz, n.ur, n.uh}) store_.add(u, {hidden, hidden});
    for (const auto& b : {n.bz, n.br, n.bh}) store_.add(b, {1, hidden});
  }

  void add_lstm(const LstmNames& n, int in, int hidden) {
    for (const auto& w : {n.wi, n.wf, n.wo, n.wg}) store_.add(w, {in, hidden});
    for (const auto& u : {n.ui, n.uf, n.uo, n.ug}) store_.add(u, {hidden, hidden});
    for (const auto& b : {n.bi, n.bf, n.bo, n.bg}) store_.add(b, {1, hidden});
  }

  void allocate() {
    const int d = cfg_.d, ff = cfg_.d * cfg_.ffn_mult;
    store_.add("embed.token", {vocab_size_, d});
    store_.add("embed.pos", {cfg_.max_len, d});
    store_.add("embed.seg", {2, d});
    for (int l = 0; l < cfg_.layers; ++l)
      add_transformer_layer(TransformerLayerNames::make("enc." + std::to_string(l)), d, ff);
    if (has_bidm()) {
      for (const char* ch : kChannelNames)
        add_transformer_layer(TransformerLayerNames::make(std::string("bidm.") + ch), d, ff);
      if (cfg_.fusion == FusionMode::moe) {
        for (const char* k : {"f", "c", "p"}) {
          store_.add(std::string("moe.w") + k, {4 * d, d});
          store_.add(std::string("moe.b") + k, {1, d});
          store_.add(std::string("moe.wg.") + k, {3 * d, d});
        }
      }
    }
    if (cfg_.bi_rnn_baseline == BiRnnVariant::gru) {
      add_gru(GruNames::make("rnnbase.fwd"), d, d / 2);
      add_gru(GruNames::make("rnnbase.bwd"), d, d / 2);
    } else if (cfg_.bi_rnn_baseline == BiRnnVariant::lstm) {
      add_lstm(LstmNames::make("rnnbase.fwd"), d, d / 2);
      add_lstm(LstmNames::make("rnnbase.bwd"), d, d / 2);
    }
    switch (cfg_.task) {
      case TaskType::response_selection:
        if (!cfg_.no_bigru) {
          add_gru(GruNames::make("sel.gru.fwd"), d, cfg_.d_g);
          add_gru(GruNames::make("sel.gru.bwd"), d, cfg_.d_g);
          store_.add("sel.proj", {2 * cfg_.d_g, d});
        }
        store_.add("sel.wd", {1, d});
        break;
      case TaskType::extractive_qa:
        store_.add("qa.ws", {d, 1});
        store_.add("qa.we", {d, 1});
        break;
      case TaskType::summarization:
        for (int l = 0; l < cfg_.decoder_layers; ++l) {
          const DecoderLayerNames n = DecoderLayerNames::make("dec." + std::to_string(l));
          add_attn(n.self_attn, d);
          add_attn(n.cross_attn, d);
          store_.add(n.w1, {d, ff});
          store_.add(n.b1, {1, ff});
          store_.add(n.w2, {ff, d});
          store_.add(n.b2, {1, d});
          for (const auto& lnp : {n.ln1g, n.ln1b, n.ln2g, n.ln2b, n.ln3g, n.ln3b})
            store_.add(lnp, {1, d});
        }
        break;
    }
  }
};

}  // namespace biden
