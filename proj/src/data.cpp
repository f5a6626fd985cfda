#include "biden/data.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "numkit/rng.hpp"

namespace biden {

using nlohmann::json;

const char* task_name(TaskType t) {
  switch (t) {
    case TaskType::response_selection: return "response_selection";
    case TaskType::extractive_qa: return "extractive_qa";
    case TaskType::summarization: return "summarization";
  }
  return "?";
}

TaskType task_from_name(const std::string& name) {
  if (name == "response_selection") return TaskType::response_selection;
  if (name == "extractive_qa") return TaskType::extractive_qa;
  if (name == "summarization") return TaskType::summarization;
  throw std::invalid_argument("unknown task type: " + name);
}

// --- tokenizer ---------------------------------------------------------------

static bool word_char(unsigned char c) {
  return std::isalnum(c) || c == '_' || c == '\'';
}

std::vector<std::string> split_words(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (unsigned char c : text) {
    const char lc = static_cast<char>(std::tolower(c));
    if (word_char(c)) {
      cur.push_back(lc);
    } else {
      if (!cur.empty()) { out.push_back(cur); cur.clear(); }
      if (!std::isspace(c)) out.push_back(std::string(1, lc));
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

static bool is_punct_token(const std::string& w) {
  return w.size() == 1 && !word_char(static_cast<unsigned char>(w[0]));
}

std::string join_words(const std::vector<std::string>& words) {
  std::string out;
  for (const auto& w : words) {
    if (!out.empty() && !is_punct_token(w)) out.push_back(' ');
    out += w;
  }
  return out;
}

// --- vocab --------------------------------------------------------------------

static std::string speaker_token(const std::string& name) { return "<spk:" + name + ">"; }

int Vocab::lookup(const std::string& token) const {
  auto it = std::lower_bound(sorted_index_.begin(), sorted_index_.end(), token,
                             [](const auto& p, const std::string& t) { return p.first < t; });
  if (it != sorted_index_.end() && it->first == token) return it->second;
  return kUnk;
}

int Vocab::id(const std::string& token) const { return lookup(token); }

int Vocab::speaker_id(const std::string& speaker) const { return lookup(speaker_token(speaker)); }

const std::string& Vocab::token(int id) const { return entries_.at(static_cast<std::size_t>(id)); }

bool Vocab::is_speaker(int id) const {
  return id >= kNumSpecials && id < kNumSpecials + n_speakers_;
}

Vocab Vocab::from_entries(std::vector<std::string> entries, int n_speakers) {
  Vocab v;
  v.entries_ = std::move(entries);
  v.n_speakers_ = n_speakers;
  v.sorted_index_.reserve(v.entries_.size());
  for (std::size_t i = 0; i < v.entries_.size(); ++i)
    v.sorted_index_.emplace_back(v.entries_[i], static_cast<int>(i));
  std::sort(v.sorted_index_.begin(), v.sorted_index_.end());
  return v;
}

Vocab Vocab::build(const std::vector<TaskSample>& corpus) {
  std::set<std::string> speakers, content;
  auto add_text = [&](const std::string& t) {
    for (auto& w : split_words(t)) content.insert(w);
  };
  for (const auto& s : corpus) {
    for (const auto& u : s.dialogue.utterances) {
      speakers.insert(u.speaker);
      add_text(u.text);
    }
    for (const auto& c : s.selection.candidates) add_text(c);
    if (!s.qa.question.empty()) add_text(s.qa.question);
    for (const auto& r : s.summ.references) add_text(r);
  }
  std::vector<std::string> entries = {"[PAD]", "[UNK]", "[CLS]", "[SEP]", "[BOS]", "[EOS]"};
  for (const auto& sp : speakers) entries.push_back(speaker_token(sp));
  for (const auto& w : content) entries.push_back(w);
  return from_entries(std::move(entries), static_cast<int>(speakers.size()));
}

// --- layout -------------------------------------------------------------------

namespace {

// Vocab-free token layout of a context. Utterance u occupies
// [utt_token_start[u], utt_token_start[u+1]); content words start at
// content_start[u]. CLS belongs to utterance 0.
struct LayoutPlan {
  std::vector<std::vector<std::string>> words;  // per utterance
  std::vector<std::string> speakers;            // empty string = no prefix
  std::vector<int> utt_token_start;
  std::vector<int> content_start;
  int n_tokens = 0;
  int question_utt = -1;
};

LayoutPlan plan_layout(const Dialogue& d, int drop_front, const std::string* appended_text,
                       const std::string* appended_speaker, bool appended_is_question) {
  LayoutPlan p;
  const int u_hist = static_cast<int>(d.utterances.size());
  for (int u = drop_front; u < u_hist; ++u) {
    p.words.push_back(split_words(d.utterances[static_cast<std::size_t>(u)].text));
    p.speakers.push_back(d.utterances[static_cast<std::size_t>(u)].speaker);
  }
  if (appended_text) {
    p.words.push_back(split_words(*appended_text));
    p.speakers.push_back(appended_speaker ? *appended_speaker : std::string());
    if (appended_is_question) p.question_utt = static_cast<int>(p.words.size()) - 1;
  }
  int t = 1;  // CLS
  for (std::size_t u = 0; u < p.words.size(); ++u) {
    p.utt_token_start.push_back(u == 0 ? 0 : t);
    if (!p.speakers[u].empty()) ++t;  // speaker prefix
    p.content_start.push_back(t);
    t += static_cast<int>(p.words[u].size());
    ++t;  // SEP
  }
  p.n_tokens = t;
  return p;
}

TokenizedContext realize(const LayoutPlan& p, const Vocab& vocab, int n_history_utts,
                         int pad_to) {
  TokenizedContext c;
  const int n_utts = static_cast<int>(p.words.size());
  c.n_utts = n_utts;
  c.n_history_utts = n_history_utts;
  const int n = std::max(p.n_tokens, pad_to);
  auto push = [&](int id, int utt, bool cls, bool sep, bool spk, bool q, bool pad) {
    c.token_ids.push_back(id);
    c.utt_of_token.push_back(utt);
    c.segment_ids.push_back(utt % 2);
    c.flag_cls.push_back(cls);
    c.flag_sep.push_back(sep);
    c.flag_speaker.push_back(spk);
    c.flag_question.push_back(q);
    c.flag_pad.push_back(pad);
  };
  push(Vocab::kCls, 0, true, false, false, p.question_utt == 0, false);
  for (int u = 0; u < n_utts; ++u) {
    const bool q = u == p.question_utt;
    if (!p.speakers[static_cast<std::size_t>(u)].empty())
      push(vocab.speaker_id(p.speakers[static_cast<std::size_t>(u)]), u, false, false, true, q, false);
    for (const auto& w : p.words[static_cast<std::size_t>(u)])
      push(vocab.id(w), u, false, false, false, q, false);
    push(Vocab::kSep, u, false, true, false, q, false);
  }
  const int last_utt = n_utts - 1;
  while (c.n() < n) push(Vocab::kPad, last_utt, false, false, false, false, true);
  c.position_ids.resize(static_cast<std::size_t>(c.n()));
  for (int i = 0; i < c.n(); ++i) c.position_ids[static_cast<std::size_t>(i)] = i;
  return c;
}

}  // namespace

std::vector<bool> TokenizedContext::pad_flags() const {
  std::vector<bool> out(flag_pad.size());
  for (std::size_t i = 0; i < flag_pad.size(); ++i) out[i] = flag_pad[i] != 0;
  return out;
}

std::vector<int> TokenizedContext::content_indices(int utt) const {
  std::vector<int> out;
  for (int i = 0; i < n(); ++i)
    if (utt_of_token[static_cast<std::size_t>(i)] == utt && is_content(i)) out.push_back(i);
  return out;
}

TokenizedContext tokenize_dialogue(const Dialogue& d, const Vocab& vocab,
                                   const TokenizerConfig& cfg, const std::string* appended_text,
                                   const std::string* appended_speaker,
                                   bool appended_is_question) {
  if (d.utterances.empty()) throw TokenizeError("dialogue has no utterances");
  for (const auto& u : d.utterances)
    if (split_words(u.text).empty()) throw TokenizeError("empty utterance text");
  const int u_hist = static_cast<int>(d.utterances.size());
  for (int drop = 0; drop <= u_hist; ++drop) {
    if (drop == u_hist && !appended_text)
      throw TokenizeError("context cannot fit max_len even after dropping all history");
    LayoutPlan p = plan_layout(d, drop, appended_text, appended_speaker, appended_is_question);
    if (p.n_tokens <= cfg.max_len)
      return realize(p, vocab, u_hist - drop, cfg.pad_to);
  }
  throw TokenizeError("appended utterance alone exceeds max_len");
}

std::vector<TokenizedContext> tokenize_selection(const TaskSample& s, const Vocab& vocab,
                                                 const TokenizerConfig& cfg) {
  if (s.selection.candidates.size() < 2)
    throw TokenizeError("response_selection needs >= 2 candidates");
  if (s.selection.label < 0 ||
      s.selection.label >= static_cast<int>(s.selection.candidates.size()))
    throw TokenizeError("label out of range");
  // The candidate takes the next turn: its speaker is the previous distinct
  // speaker when one exists.
  const auto& utts = s.dialogue.utterances;
  std::string spk = utts.size() >= 2 ? utts[utts.size() - 2].speaker : "responder";
  std::vector<TokenizedContext> out;
  for (const auto& cand : s.selection.candidates)
    out.push_back(tokenize_dialogue(s.dialogue, vocab, cfg, &cand, &spk, false));
  return out;
}

QaContext tokenize_qa(const TaskSample& s, const Vocab& vocab, const TokenizerConfig& cfg) {
  if (s.qa.span_start < 0 || s.qa.span_end < s.qa.span_start)
    throw TokenizeError("qa sample has no valid answer span");
  QaContext q;
  q.ctx = tokenize_dialogue(s.dialogue, vocab, cfg, &s.qa.question, nullptr, true);
  const int kept = q.ctx.n_history_utts;
  const int dropped = static_cast<int>(s.dialogue.utterances.size()) - kept;
  int shift = 0;
  if (dropped > 0) {
    LayoutPlan full = plan_layout(s.dialogue, 0, &s.qa.question, nullptr, true);
    shift = full.utt_token_start[static_cast<std::size_t>(dropped)] - 1;
  }
  q.span_start = s.qa.span_start - shift;
  q.span_end = s.qa.span_end - shift;
  if (q.span_start < 1)
    throw TokenizeError("answer span destroyed by truncation (sample " + s.dialogue.id + ")");
  for (int t = q.span_start; t <= q.span_end; ++t) {
    if (t >= q.ctx.n() || !q.ctx.is_content(t) || q.ctx.flag_question[static_cast<std::size_t>(t)] ||
        q.ctx.utt_of_token[static_cast<std::size_t>(t)] >= q.ctx.n_history_utts)
      throw TokenizeError("answer span outside dialogue-history tokens (sample " +
                          s.dialogue.id + ")");
  }
  return q;
}

TokenizedContext tokenize_summarization(const TaskSample& s, const Vocab& vocab,
                                        const TokenizerConfig& cfg) {
  return tokenize_dialogue(s.dialogue, vocab, cfg);
}

std::vector<int> target_token_ids(const std::string& text, const Vocab& vocab) {
  std::vector<int> ids = {Vocab::kBos};
  for (const auto& w : split_words(text)) ids.push_back(vocab.id(w));
  ids.push_back(Vocab::kEos);
  return ids;
}

std::string detokenize(const std::vector<int>& token_ids, const Vocab& vocab) {
  std::vector<std::string> words;
  for (int id : token_ids) {
    if (id < Vocab::kNumSpecials || vocab.is_speaker(id)) continue;
    words.push_back(vocab.token(id));
  }
  return join_words(words);
}

// --- jsonl ----------------------------------------------------------------------

namespace {

// Computes the answer span (untruncated layout) from answer_text within
// answer_utterance. Returns false with a message on failure.
bool compute_span_from_text(TaskSample& s, std::string& err) {
  const int u = s.qa.answer_utterance;
  if (u < 0 || u >= static_cast<int>(s.dialogue.utterances.size())) {
    err = "answer_utterance out of range";
    return false;
  }
  const auto answer = split_words(s.qa.answer_text);
  if (answer.empty()) {
    err = "empty answer_text";
    return false;
  }
  LayoutPlan p = plan_layout(s.dialogue, 0, &s.qa.question, nullptr, true);
  const auto& words = p.words[static_cast<std::size_t>(u)];
  for (std::size_t start = 0; start + answer.size() <= words.size(); ++start) {
    bool match = true;
    for (std::size_t k = 0; k < answer.size(); ++k)
      if (words[start + k] != answer[k]) { match = false; break; }
    if (match) {
      s.qa.span_start = p.content_start[static_cast<std::size_t>(u)] + static_cast<int>(start);
      s.qa.span_end = s.qa.span_start + static_cast<int>(answer.size()) - 1;
      return true;
    }
  }
  err = "answer_text not found in answer_utterance";
  return false;
}

bool validate_explicit_span(TaskSample& s, std::string& err) {
  LayoutPlan p = plan_layout(s.dialogue, 0, &s.qa.question, nullptr, true);
  const int a_s = s.qa.span_start, a_e = s.qa.span_end;
  if (a_s < 0 || a_e < a_s || a_e >= p.n_tokens) {
    err = "answer_span out of range";
    return false;
  }
  const int n_hist = static_cast<int>(s.dialogue.utterances.size());
  for (int t = a_s; t <= a_e; ++t) {
    bool inside_content = false;
    for (int u = 0; u < n_hist; ++u) {
      const int cs = p.content_start[static_cast<std::size_t>(u)];
      const int ce = cs + static_cast<int>(p.words[static_cast<std::size_t>(u)].size());
      if (t >= cs && t < ce) { inside_content = true; break; }
    }
    if (!inside_content) {
      err = "answer_span covers question or special tokens";
      return false;
    }
  }
  return true;
}

TaskSample parse_sample(const json& j) {
  TaskSample s;
  s.dialogue.id = j.at("id").get<std::string>();
  for (const auto& ju : j.at("utterances")) {
    Utterance u;
    u.speaker = ju.at("speaker").get<std::string>();
    u.text = ju.at("text").get<std::string>();
    if (split_words(u.text).empty()) throw std::invalid_argument("empty utterance text");
    s.dialogue.utterances.push_back(std::move(u));
  }
  if (s.dialogue.utterances.empty()) throw std::invalid_argument("dialogue has no utterances");
  const json& jt = j.at("task");
  s.task = task_from_name(jt.at("type").get<std::string>());
  std::string err;
  switch (s.task) {
    case TaskType::response_selection: {
      s.selection.candidates = jt.at("candidates").get<std::vector<std::string>>();
      s.selection.label = jt.at("label").get<int>();
      if (s.selection.candidates.size() < 2)
        throw std::invalid_argument("response_selection needs >= 2 candidates");
      if (s.selection.label < 0 ||
          s.selection.label >= static_cast<int>(s.selection.candidates.size()))
        throw std::invalid_argument("label " + std::to_string(s.selection.label) +
                                    " >= candidate count");
      break;
    }
    case TaskType::extractive_qa: {
      s.qa.question = jt.at("question").get<std::string>();
      if (jt.contains("answer_span")) {
        const auto span = jt.at("answer_span").get<std::vector<int>>();
        if (span.size() != 2) throw std::invalid_argument("answer_span must be [start, end]");
        s.qa.span_start = span[0];
        s.qa.span_end = span[1];
        if (jt.contains("answer_text")) s.qa.answer_text = jt.at("answer_text").get<std::string>();
        if (!validate_explicit_span(s, err)) throw std::invalid_argument(err);
      } else {
        s.qa.answer_text = jt.at("answer_text").get<std::string>();
        s.qa.answer_utterance = jt.at("answer_utterance").get<int>();
        if (!compute_span_from_text(s, err)) throw std::invalid_argument(err);
      }
      break;
    }
    case TaskType::summarization: {
      s.summ.references = jt.at("references").get<std::vector<std::string>>();
      if (s.summ.references.empty())
        throw std::invalid_argument("summarization needs >= 1 reference");
      break;
    }
  }
  return s;
}

json sample_to_json(const TaskSample& s) {
  json j;
  j["id"] = s.dialogue.id;
  j["utterances"] = json::array();
  for (const auto& u : s.dialogue.utterances)
    j["utterances"].push_back({{"speaker", u.speaker}, {"text", u.text}});
  json jt;
  jt["type"] = task_name(s.task);
  switch (s.task) {
    case TaskType::response_selection:
      jt["candidates"] = s.selection.candidates;
      jt["label"] = s.selection.label;
      break;
    case TaskType::extractive_qa:
      jt["question"] = s.qa.question;
      jt["answer_span"] = {s.qa.span_start, s.qa.span_end};
      if (!s.qa.answer_text.empty()) jt["answer_text"] = s.qa.answer_text;
      break;
    case TaskType::summarization:
      jt["references"] = s.summ.references;
      break;
  }
  j["task"] = std::move(jt);
  return j;
}

}  // namespace

LoadResult load_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  LoadResult res;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      res.samples.push_back(parse_sample(json::parse(line)));
    } catch (const std::exception& e) {
      res.errors.push_back({lineno, e.what()});
    }
  }
  return res;
}

void save_jsonl(const std::vector<TaskSample>& samples, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  for (const auto& s : samples) out << sample_to_json(s).dump() << '\n';
}

// --- synthetic corpus --------------------------------------------------------------

SynthTask synth_task_from_name(const std::string& name) {
  if (name == "a" || name == "selection") return SynthTask::temporal_selection;
  if (name == "b" || name == "qa") return SynthTask::span_qa;
  if (name == "c" || name == "summarization") return SynthTask::copy_summarization;
  throw std::invalid_argument("unknown synthetic task: " + name + " (use a|b|c)");
}

namespace {

std::string num_name(const char* prefix, int i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%s%03d", prefix, i);
  return buf;
}

std::string make_utterance_text(numkit::Rng& rng, const SynthConfig& cfg, int keyword,
                                int* kw_pos_out = nullptr) {
  const int n_fill = rng.uniform_int(cfg.min_fillers, cfg.max_fillers);
  std::vector<std::string> words;
  for (int i = 0; i < n_fill; ++i)
    words.push_back(num_name("w", rng.uniform_int(0, cfg.filler_vocab - 1)));
  const int pos = rng.uniform_int(0, n_fill);
  words.insert(words.begin() + pos, num_name("key", keyword));
  if (kw_pos_out) *kw_pos_out = pos;
  std::string text;
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (i) text.push_back(' ');
    text += words[i];
  }
  return text;
}

}  // namespace

std::vector<TaskSample> synth_gen(SynthTask task, int size, std::uint64_t seed,
                                  const SynthConfig& cfg) {
  if (size <= 0) throw std::invalid_argument("synth_gen: size must be positive");
  const std::uint64_t task_stream = task == SynthTask::temporal_selection ? 101
                                    : task == SynthTask::span_qa          ? 202
                                                                          : 303;
  std::vector<TaskSample> out;
  out.reserve(static_cast<std::size_t>(size));
  for (int si = 0; si < size; ++si) {
    numkit::Rng rng = numkit::Rng::split(seed, task_stream * 1000003ULL +
                                                   static_cast<std::uint64_t>(si));
    TaskSample s;
    s.dialogue.id = "synth-" + std::string(1, "abc"[static_cast<int>(task)]) + "-" +
                    std::to_string(si);
    const int n_utts = rng.uniform_int(cfg.min_utts, cfg.max_utts);
    // distinct keyword per utterance
    std::vector<int> pool(static_cast<std::size_t>(cfg.keyword_vocab));
    for (int i = 0; i < cfg.keyword_vocab; ++i) pool[static_cast<std::size_t>(i)] = i;
    rng.shuffle(pool);
    std::vector<int> keywords(pool.begin(), pool.begin() + n_utts);
    std::vector<int> kw_pos(static_cast<std::size_t>(n_utts));
    const char* speakers[2] = {"ann", "bob"};
    for (int u = 0; u < n_utts; ++u) {
      Utterance ut;
      ut.speaker = speakers[u % 2];
      ut.text = make_utterance_text(rng, cfg, keywords[static_cast<std::size_t>(u)],
                                    &kw_pos[static_cast<std::size_t>(u)]);
      s.dialogue.utterances.push_back(std::move(ut));
    }
    switch (task) {
      case SynthTask::temporal_selection: {
        s.task = TaskType::response_selection;
        s.selection.label = rng.uniform_int(0, cfg.n_candidates - 1);
        for (int c = 0; c < cfg.n_candidates; ++c) {
          int kw;
          if (c == s.selection.label) {
            kw = keywords[static_cast<std::size_t>(n_utts - 1)];  // echo the final utterance
          } else {
            do {
              kw = rng.uniform_int(0, cfg.keyword_vocab - 1);
            } while (std::find(keywords.begin(), keywords.end(), kw) != keywords.end());
          }
          s.selection.candidates.push_back(make_utterance_text(rng, cfg, kw));
        }
        break;
      }
      case SynthTask::span_qa: {
        s.task = TaskType::extractive_qa;
        const int target = rng.uniform_int(0, n_utts - 1);
        const std::string kw = num_name("key", keywords[static_cast<std::size_t>(target)]);
        s.qa.question = num_name("w", rng.uniform_int(0, cfg.filler_vocab - 1)) + " " + kw;
        s.qa.answer_text = kw;
        s.qa.answer_utterance = target;
        std::string err;
        if (!compute_span_from_text(s, err))
          throw std::logic_error("synth_gen: span construction failed: " + err);
        break;
      }
      case SynthTask::copy_summarization: {
        s.task = TaskType::summarization;
        std::string ref;
        for (int u = 0; u < n_utts; ++u) {
          if (u) ref.push_back(' ');
          ref += num_name("key", keywords[static_cast<std::size_t>(u)]);
        }
        s.summ.references = {ref};
        break;
      }
    }
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace biden
