#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace biden {

struct Utterance {
  std::string speaker;
  std::string text;
};

struct Dialogue {
  std::string id;
  std::vector<Utterance> utterances;
};

enum class TaskType { response_selection, extractive_qa, summarization };

const char* task_name(TaskType t);
TaskType task_from_name(const std::string& name);

struct ResponseSelectionPayload {
  std::vector<std::string> candidates;
  int label = -1;
};

struct ExtractiveQaPayload {
  std::string question;
  // Token indices into the untruncated tokenized context (question appended
  // as the final utterance). Recomputed from answer_text/answer_utterance at
  // load time when given.
  int span_start = -1;
  int span_end = -1;
  std::string answer_text;
  int answer_utterance = -1;
};

struct SummarizationPayload {
  std::vector<std::string> references;
};

struct TaskSample {
  Dialogue dialogue;
  TaskType task = TaskType::response_selection;
  ResponseSelectionPayload selection;
  ExtractiveQaPayload qa;
  SummarizationPayload summ;
};

// ---------------------------------------------------------------------------

// Lowercases and splits into word tokens; punctuation characters become
// single-char tokens.
std::vector<std::string> split_words(const std::string& text);

// Joins tokens with spaces, attaching punctuation tokens to the previous word.
std::string join_words(const std::vector<std::string>& words);

// ---------------------------------------------------------------------------

class Vocab {
 public:
  static constexpr int kPad = 0, kUnk = 1, kCls = 2, kSep = 3, kBos = 4, kEos = 5;
  static constexpr int kNumSpecials = 6;

  int id(const std::string& token) const;          // kUnk when absent
  int speaker_id(const std::string& speaker) const;  // kUnk when absent
  const std::string& token(int id) const;
  int size() const { return static_cast<int>(entries_.size()); }
  bool is_speaker(int id) const;
  bool is_special(int id) const { return id < kNumSpecials || is_speaker(id); }

  // Specials, then speaker tokens, then content tokens; both groups sorted so
  // the mapping is stable for a given corpus.
  static Vocab build(const std::vector<TaskSample>& corpus);

  const std::vector<std::string>& entries() const { return entries_; }
  int speaker_count() const { return n_speakers_; }
  static Vocab from_entries(std::vector<std::string> entries, int n_speakers);

 private:
  std::vector<std::string> entries_;
  int n_speakers_ = 0;
  // token -> id, built lazily in from_entries/build
  std::vector<std::pair<std::string, int>> sorted_index_;
  int lookup(const std::string& token) const;
};

// ---------------------------------------------------------------------------

struct TokenizerConfig {
  int max_len = 128;
  int pad_to = 0;  // 0 = no padding
};

struct TokenizedContext {
  std::vector<int> token_ids;
  std::vector<int> utt_of_token;  // I: non-decreasing, contiguous from 0
  std::vector<int> segment_ids;   // utterance parity
  std::vector<int> position_ids;  // fresh 0..n-1 after truncation
  std::vector<std::uint8_t> flag_pad, flag_cls, flag_sep, flag_question, flag_speaker;
  int n_utts = 0;          // total utterances incl. appended question/candidate
  int n_history_utts = 0;  // utterances that came from the dialogue

  int n() const { return static_cast<int>(token_ids.size()); }
  bool is_special(int i) const {
    return flag_pad[i] || flag_cls[i] || flag_sep[i] || flag_speaker[i];
  }
  bool is_content(int i) const { return !is_special(i); }
  std::vector<bool> pad_flags() const;
  // Content token indices of one utterance (no cls/sep/speaker/pad).
  std::vector<int> content_indices(int utt) const;
};

struct TokenizeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Core layout: [CLS] spk tok... [SEP] | spk tok... [SEP] | ... with an
// optional appended utterance (candidate or question; the question carries no
// speaker prefix). Truncation drops whole leading history utterances.
TokenizedContext tokenize_dialogue(const Dialogue& d, const Vocab& vocab,
                                   const TokenizerConfig& cfg,
                                   const std::string* appended_text = nullptr,
                                   const std::string* appended_speaker = nullptr,
                                   bool appended_is_question = false);

// One context per candidate, candidate appended as the final utterance.
std::vector<TokenizedContext> tokenize_selection(const TaskSample& s, const Vocab& vocab,
                                                 const TokenizerConfig& cfg);

// Question appended as the final utterance. Returns the context and the
// answer span remapped to it; throws TokenizeError if truncation destroyed
// the span.
struct QaContext {
  TokenizedContext ctx;
  int span_start = -1;
  int span_end = -1;
};
QaContext tokenize_qa(const TaskSample& s, const Vocab& vocab, const TokenizerConfig& cfg);

// Plain dialogue context (summarization input).
TokenizedContext tokenize_summarization(const TaskSample& s, const Vocab& vocab,
                                        const TokenizerConfig& cfg);

// Target token ids [BOS] w1..wm [EOS] for the given reference text.
std::vector<int> target_token_ids(const std::string& text, const Vocab& vocab);

// Content tokens back to text (skips specials).
std::string detokenize(const std::vector<int>& token_ids, const Vocab& vocab);

// ---------------------------------------------------------------------------

struct JsonlError {
  int line = 0;
  std::string message;
};

struct LoadResult {
  std::vector<TaskSample> samples;
  std::vector<JsonlError> errors;
};

// One JSON object per line; invalid lines are reported, valid ones kept.
LoadResult load_jsonl(const std::string& path);
void save_jsonl(const std::vector<TaskSample>& samples, const std::string& path);

// ---------------------------------------------------------------------------

enum class SynthTask { temporal_selection, span_qa, copy_summarization };
SynthTask synth_task_from_name(const std::string& name);  // "a" | "b" | "c"

struct SynthConfig {
  int min_utts = 4;
  int max_utts = 6;
  int min_fillers = 2;
  int max_fillers = 3;
  int n_candidates = 4;
  int filler_vocab = 120;
  int keyword_vocab = 60;
};

// Deterministic per (task, size, seed, cfg).
std::vector<TaskSample> synth_gen(SynthTask task, int size, std::uint64_t seed,
                                  const SynthConfig& cfg = {});

}  // namespace biden
