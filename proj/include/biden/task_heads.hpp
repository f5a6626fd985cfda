#pragma once

#include <string>
#include <vector>

#include "biden/biden_core.hpp"
#include "biden/encoder.hpp"
#include "biden/masking.hpp"

namespace biden {

// --- recurrent cells -----------------------------------------------------------

struct GruNames {
  std::string wz, uz, bz, wr, ur, br, wh, uh, bh;
  static GruNames make(const std::string& p) {
    return {p + ".wz", p + ".uz", p + ".bz", p + ".wr", p + ".ur",
            p + ".br", p + ".wh", p + ".uh", p + ".bh"};
  }
  std::vector<std::string> all() const { return {wz, uz, bz, wr, ur, br, wh, uh, bh}; }
};

struct LstmNames {
  std::string wi, ui, bi, wf, uf, bf, wo, uo, bo, wg, ug, bg;
  static LstmNames make(const std::string& p) {
    return {p + ".wi", p + ".ui", p + ".bi", p + ".wf", p + ".uf", p + ".bf",
            p + ".wo", p + ".uo", p + ".bo", p + ".wg", p + ".ug", p + ".bg"};
  }
  std::vector<std::string> all() const {
    return {wi, ui, bi, wf, uf, bf, wo, uo, bo, wg, ug, bg};
  }
};

// h' = (1-z).h + z.h~ with h~ = tanh(x Wh + (r.h) Uh + bh)
template <typename T>
numkit::Value gru_step(const Bound<T>& bound, const GruNames& g, numkit::Value x,
                       numkit::Value h, numkit::Value ones) {
  numkit::Tape<T>& tp = *bound.tape;
  numkit::Value z =
      tp.sigmoid(tp.add(tp.add(tp.matmul(x, bound(g.wz)), tp.matmul(h, bound(g.uz))), bound(g.bz)));
  numkit::Value r =
      tp.sigmoid(tp.add(tp.add(tp.matmul(x, bound(g.wr)), tp.matmul(h, bound(g.ur))), bound(g.br)));
  numkit::Value cand = tp.tanh_(
      tp.add(tp.add(tp.matmul(x, bound(g.wh)), tp.matmul(tp.mul(r, h), bound(g.uh))), bound(g.bh)));
  return tp.add(tp.mul(tp.sub(ones, z), h), tp.mul(z, cand));
}

template <typename T>
struct LstmState {
  numkit::Value h, c;
};

template <typename T>
LstmState<T> lstm_step(const Bound<T>& bound, const LstmNames& l, numkit::Value x,
                       LstmState<T> s) {
  numkit::Tape<T>& tp = *bound.tape;
  auto gate = [&](const std::string& w, const std::string& u, const std::string& b) {
    return tp.add(tp.add(tp.matmul(x, bound(w)), tp.matmul(s.h, bound(u))), bound(b));
  };
  numkit::Value i = tp.sigmoid(gate(l.wi, l.ui, l.bi));
  numkit::Value f = tp.sigmoid(gate(l.wf, l.uf, l.bf));
  numkit::Value o = tp.sigmoid(gate(l.wo, l.uo, l.bo));
  numkit::Value g = tp.tanh_(gate(l.wg, l.ug, l.bg));
  numkit::Value c = tp.add(tp.mul(f, s.c), tp.mul(i, g));
  return {tp.mul(o, tp.tanh_(c)), c};
}

// Bidirectional recurrence over the rows of x [m x in]. The backward pass is
// the forward recurrence run over reversed rows with its own weights.
struct BiRnnOut {
  numkit::Value per_step;  // [m x 2*hidden], forward || backward per row
  numkit::Value finals;    // [1 x 2*hidden], last fwd state || last bwd state
};

template <typename T>
BiRnnOut bi_gru(const Bound<T>& bound, const std::string& prefix, numkit::Value x, int hidden) {
  numkit::Tape<T>& tp = *bound.tape;
  const int m = tp.rows(x);
  const GruNames fwd = GruNames::make(prefix + ".fwd");
  const GruNames bwd = GruNames::make(prefix + ".bwd");
  numkit::Value ones = tp.constant(numkit::Tensor<T>({1, hidden}, T(1)));
  numkit::Value h = zeros_const(tp, {1, hidden});
  std::vector<numkit::Value> fsteps, bsteps(static_cast<std::size_t>(m));
  for (int t = 0; t < m; ++t) {
    h = gru_step(bound, fwd, tp.slice_rows(x, t, 1), h, ones);
    fsteps.push_back(h);
  }
  numkit::Value hf = h;
  h = zeros_const(tp, {1, hidden});
  for (int t = m - 1; t >= 0; --t) {
    h = gru_step(bound, bwd, tp.slice_rows(x, t, 1), h, ones);
    bsteps[static_cast<std::size_t>(t)] = h;
  }
  numkit::Value hb = h;
  BiRnnOut out;
  out.per_step = tp.concat_cols({tp.concat_rows(fsteps), tp.concat_rows(bsteps)});
  out.finals = tp.concat_cols({hf, hb});
  return out;
}

template <typename T>
BiRnnOut bi_lstm(const Bound<T>& bound, const std::string& prefix, numkit::Value x, int hidden) {
  numkit::Tape<T>& tp = *bound.tape;
  const int m = tp.rows(x);
  const LstmNames fwd = LstmNames::make(prefix + ".fwd");
  const LstmNames bwd = LstmNames::make(prefix + ".bwd");
  LstmState<T> s{zeros_const(tp, {1, hidden}), zeros_const(tp, {1, hidden})};
  std::vector<numkit::Value> fsteps, bsteps(static_cast<std::size_t>(m));
  for (int t = 0; t < m; ++t) {
    s = lstm_step(bound, fwd, tp.slice_rows(x, t, 1), s);
    fsteps.push_back(s.h);
  }
  numkit::Value hf = s.h;
  s = {zeros_const(tp, {1, hidden}), zeros_const(tp, {1, hidden})};
  for (int t = m - 1; t >= 0; --t) {
    s = lstm_step(bound, bwd, tp.slice_rows(x, t, 1), s);
    bsteps[static_cast<std::size_t>(t)] = s.h;
  }
  numkit::Value hb = s.h;
  BiRnnOut out;
  out.per_step = tp.concat_cols({tp.concat_rows(fsteps), tp.concat_rows(bsteps)});
  out.finals = tp.concat_cols({hf, hb});
  return out;
}

// --- response selection ----------------------------------------------------------

// Per-utterance max-pool over content tokens (specials and pads excluded),
// then the dialogue readout.
template <typename T>
numkit::Value dialogue_vector(const Bound<T>& bound, const Config& cfg, numkit::Value h_e,
                              const TokenizedContext& ctx) {
  numkit::Tape<T>& tp = *bound.tape;
  std::vector<numkit::Value> utt_vecs;
  for (int u = 0; u < ctx.n_utts; ++u) {
    const std::vector<int> idx = ctx.content_indices(u);
    if (idx.empty()) throw std::logic_error("utterance without content tokens");
    utt_vecs.push_back(tp.max_rows(h_e, idx));
  }
  numkit::Value utt_mat = tp.concat_rows(utt_vecs);
  const int u_count = ctx.n_utts;
  if (cfg.no_bigru)
    return tp.scale(tp.sum_rows(utt_mat), static_cast<T>(1.0 / u_count));
  BiRnnOut rnn = bi_gru(bound, "sel.gru", utt_mat, cfg.d_g);
  numkit::Value summary = cfg.selection_readout == SelectionReadout::final_states
                              ? rnn.finals
                              : tp.scale(tp.sum_rows(rnn.per_step), static_cast<T>(1.0 / u_count));
  return tp.matmul(summary, bound("sel.proj"));
}

template <typename T>
struct SelectionForward {
  numkit::Value loss;
  std::vector<double> probs;  // P_D over candidates
};

template <typename T>
SelectionForward<T> selection_head(const Bound<T>& bound, const Config& cfg,
                                   const std::vector<numkit::Value>& h_es,
                                   const std::vector<const TokenizedContext*>& ctxs,
                                   int label) {
  numkit::Tape<T>& tp = *bound.tape;
  const int n_cand = static_cast<int>(h_es.size());
  if (label < 0 || label >= n_cand) throw std::out_of_range("selection label out of range");
  std::vector<numkit::Value> scores;
  for (int c = 0; c < n_cand; ++c) {
    numkit::Value hd = dialogue_vector(bound, cfg, h_es[static_cast<std::size_t>(c)],
                                       *ctxs[static_cast<std::size_t>(c)]);
    scores.push_back(tp.matmul_nt(hd, bound("sel.wd")));  // 1x1
  }
  numkit::Value logits = tp.concat_cols(scores);  // 1 x n_cand
  numkit::Value logp = tp.masked_log_softmax(logits, zeros_const(tp, {1, n_cand}));
  SelectionForward<T> out;
  out.loss = tp.scale(tp.pick(logp, label), T(-1));
  out.probs.resize(static_cast<std::size_t>(n_cand));
  const auto& lp = tp.data(logp);
  for (int c = 0; c < n_cand; ++c)
    out.probs[static_cast<std::size_t>(c)] = std::exp(static_cast<double>(lp[static_cast<std::size_t>(c)]));
  return out;
}

// --- extractive QA ------------------------------------------------------------------

template <typename T>
struct QaForward {
  numkit::Value loss;
  std::vector<double> log_start, log_end;  // over all tokens; invalid -> -inf
  std::vector<bool> valid;                 // positions eligible for spans
};

inline std::vector<bool> qa_valid_positions(const TokenizedContext& ctx) {
  std::vector<bool> valid(static_cast<std::size_t>(ctx.n()), false);
  for (int i = 0; i < ctx.n(); ++i)
    valid[static_cast<std::size_t>(i)] = ctx.is_content(i) &&
                                         !ctx.flag_question[static_cast<std::size_t>(i)] &&
                                         ctx.utt_of_token[static_cast<std::size_t>(i)] <
                                             ctx.n_history_utts;
  return valid;
}

template <typename T>
QaForward<T> qa_head(const Bound<T>& bound, numkit::Value h_e, const TokenizedContext& ctx,
                     int a_s, int a_e) {
  numkit::Tape<T>& tp = *bound.tape;
  const int n = ctx.n();
  const std::vector<bool> valid = qa_valid_positions(ctx);
  numkit::Tensor<double> mask({1, n}, 0.0);
  for (int i = 0; i < n; ++i)
    if (!valid[static_cast<std::size_t>(i)]) mask.at(0, i) = numkit::kNegInf;
  numkit::Value mask_v = const_tensor(tp, mask);
  numkit::Value ls = tp.masked_log_softmax(tp.reshape(tp.matmul(h_e, bound("qa.ws")), {1, n}), mask_v);
  numkit::Value le = tp.masked_log_softmax(tp.reshape(tp.matmul(h_e, bound("qa.we")), {1, n}), mask_v);
  QaForward<T> out;
  out.loss = tp.scale(tp.add(tp.pick(ls, a_s), tp.pick(le, a_e)), T(-1));
  out.valid = valid;
  const auto& lsd = tp.data(ls);
  const auto& led = tp.data(le);
  out.log_start.resize(static_cast<std::size_t>(n));
  out.log_end.resize(static_cast<std::size_t>(n));
  const double ninf = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < n; ++i) {
    const bool v = valid[static_cast<std::size_t>(i)];
    out.log_start[static_cast<std::size_t>(i)] = v ? static_cast<double>(lsd[static_cast<std::size_t>(i)]) : ninf;
    out.log_end[static_cast<std::size_t>(i)] = v ? static_cast<double>(led[static_cast<std::size_t>(i)]) : ninf;
  }
  return out;
}

// Highest log P_start[s] + log P_end[e] over valid pairs s <= e <= s+max_span;
// ties break to the lowest start, then the lowest end.
struct SpanPrediction {
  int start = -1, end = -1;
};

inline SpanPrediction predict_span(const std::vector<double>& log_start,
                                   const std::vector<double>& log_end,
                                   const std::vector<bool>& valid, int max_span) {
  SpanPrediction best;
  double best_score = -std::numeric_limits<double>::infinity();
  const int n = static_cast<int>(log_start.size());
  for (int s = 0; s < n; ++s) {
    if (!valid[static_cast<std::size_t>(s)]) continue;
    for (int e = s; e < n && e <= s + max_span; ++e) {
      if (!valid[static_cast<std::size_t>(e)]) continue;
      const double score = log_start[static_cast<std::size_t>(s)] + log_end[static_cast<std::size_t>(e)];
      if (score > best_score) {
        best_score = score;
        best = {s, e};
      }
    }
  }
  return best;
}

// --- generative head ------------------------------------------------------------------

struct DecoderLayerNames {
  AttnNames self_attn, cross_attn;
  std::string w1, b1, w2, b2, ln1g, ln1b, ln2g, ln2b, ln3g, ln3b;
  static DecoderLayerNames make(const std::string& p) {
    return {AttnNames::make(p + ".self"), AttnNames::make(p + ".cross"),
            p + ".ffn.w1", p + ".ffn.b1", p + ".ffn.w2", p + ".ffn.b2",
            p + ".ln1.g",  p + ".ln1.b",  p + ".ln2.g",  p + ".ln2.b",
            p + ".ln3.g",  p + ".ln3.b"};
  }
  std::vector<std::string> all() const {
    std::vector<std::string> v = self_attn.all();
    for (const auto& s : cross_attn.all()) v.push_back(s);
    for (const auto& s : {w1, b1, w2, b2, ln1g, ln1b, ln2g, ln2b, ln3g, ln3b}) v.push_back(s);
    return v;
  }
};

// Teacher-forced decoder stack over H_e. input_ids feed the decoder; output
// states project onto the tied token table outside.
template <typename T>
numkit::Value decoder_states(const Bound<T>& bound, const Config& cfg,
                             const std::vector<int>& input_ids, numkit::Value h_e,
                             const std::vector<bool>& he_pads) {
  numkit::Tape<T>& tp = *bound.tape;
  const int m = static_cast<int>(input_ids.size());
  std::vector<int> positions(static_cast<std::size_t>(m));
  for (int i = 0; i < m; ++i) positions[static_cast<std::size_t>(i)] = i;
  numkit::Value x = tp.add(tp.gather_rows(bound("embed.token"), input_ids),
                           tp.gather_rows(bound("embed.pos"), positions));
  numkit::Value causal = const_tensor(tp, build_causal_mask(m));
  numkit::Value cross_mask =
      const_tensor(tp, pad_attention_mask(std::vector<bool>(static_cast<std::size_t>(m), false), he_pads));
  const T eps = static_cast<T>(cfg.layer_norm_eps);
  for (int l = 0; l < cfg.decoder_layers; ++l) {
    const DecoderLayerNames N = DecoderLayerNames::make("dec." + std::to_string(l));
    numkit::Value a = multi_head_attention(bound, N.self_attn, x, x, causal, cfg.decoder_heads);
    numkit::Value x1 = tp.layer_norm(tp.add(a, x), bound(N.ln1g), bound(N.ln1b), eps);
    numkit::Value c = multi_head_attention(bound, N.cross_attn, x1, h_e, cross_mask, cfg.decoder_heads);
    numkit::Value x2 = tp.layer_norm(tp.add(c, x1), bound(N.ln2g), bound(N.ln2b), eps);
    numkit::Value h1 = tp.relu(tp.add_rowvec(tp.matmul(x2, bound(N.w1)), bound(N.b1)));
    numkit::Value f = tp.add_rowvec(tp.matmul(h1, bound(N.w2)), bound(N.b2));
    x = tp.layer_norm(tp.add(f, x2), bound(N.ln3g), bound(N.ln3b), eps);
  }
  return x;
}

template <typename T>
struct SummForward {
  numkit::Value loss;           // mean NLL per target token
  int correct_tokens = 0;       // teacher-forced argmax hits
  int total_tokens = 0;
};

// target_ids = [BOS] w1..wm [EOS]; the decoder consumes target_ids[0..m] and
// predicts target_ids[1..m+1].
template <typename T>
SummForward<T> summarization_head(const Bound<T>& bound, const Config& cfg,
                                  const std::vector<int>& target_ids, numkit::Value h_e,
                                  const std::vector<bool>& he_pads) {
  if (target_ids.size() < 2) throw std::invalid_argument("empty decoder target");
  numkit::Tape<T>& tp = *bound.tape;
  const int steps = static_cast<int>(target_ids.size()) - 1;
  std::vector<int> input(target_ids.begin(), target_ids.end() - 1);
  numkit::Value d = decoder_states(bound, cfg, input, h_e, he_pads);
  numkit::Value logits = tp.matmul_nt(d, bound("embed.token"));  // tied projection
  const int v = tp.cols(logits);
  numkit::Value logp = tp.masked_log_softmax(logits, zeros_const(tp, {steps, v}));
  numkit::Value nll;
  SummForward<T> out;
  const auto& logit_data = tp.data(logits);
  for (int t = 0; t < steps; ++t) {
    const int gold = target_ids[static_cast<std::size_t>(t) + 1];
    numkit::Value term = tp.pick(logp, static_cast<std::int64_t>(t) * v + gold);
    nll = t == 0 ? term : tp.add(nll, term);
    int argmax = 0;
    for (int j = 1; j < v; ++j)
      if (logit_data[static_cast<std::size_t>(t) * v + j] >
          logit_data[static_cast<std::size_t>(t) * v + argmax])
        argmax = j;
    out.total_tokens += 1;
    if (argmax == gold) out.correct_tokens += 1;
  }
  out.loss = tp.scale(nll, static_cast<T>(-1.0 / steps));
  return out;
}

}  // namespace biden
