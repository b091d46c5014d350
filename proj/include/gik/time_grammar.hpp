#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <tuple>
#include <unordered_map>
#include <vector>

#include "gik/error.hpp"
#include "gik/intention.hpp"
#include "gik/labels.hpp"
#include "gik/rng.hpp"
#include "gik/text.hpp"

namespace gik {

// Joint text + time vocabulary. Ids [0, v) are words (the four specials
// first), ids [v, v + n) are time bins.
class Vocab {
 public:
  static constexpr int kPad = 0, kBos = 1, kEos = 2, kUnk = 3;
  static constexpr std::size_t kSpecialCount = 4;

  Vocab() : Vocab({"<pad>", "<bos>", "<eos>", "<unk>"}, 2) {}

  Vocab(std::vector<std::string> words, std::size_t n_time_tokens)
      : words_(std::move(words)), n_time_(n_time_tokens) {
    if (words_.size() < kSpecialCount || words_[0] != "<pad>" || words_[1] != "<bos>" ||
        words_[2] != "<eos>" || words_[3] != "<unk>")
      throw InvariantError("vocab must start with <pad> <bos> <eos> <unk>");
    if (n_time_ < 2) throw InvariantError("vocab needs at least two time tokens");
    for (std::size_t i = 0; i < words_.size(); ++i)
      if (!index_.emplace(words_[i], static_cast<int>(i)).second)
        throw InvariantError("duplicate vocab word '" + words_[i] + "'");
  }

  std::size_t text_size() const { return words_.size(); }
  std::size_t time_size() const { return n_time_; }
  std::size_t size() const { return words_.size() + n_time_; }

  const std::vector<std::string>& words() const { return words_; }

  std::optional<int> find(std::string_view word) const {
    auto it = index_.find(std::string(word));
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }
  int id(std::string_view word) const { return find(word).value_or(kUnk); }

  bool is_time(int id) const {
    return id >= static_cast<int>(words_.size()) && id < static_cast<int>(size());
  }
  int time_id(std::size_t bin) const {
    if (bin >= n_time_) throw InvariantError("time bin out of range");
    return static_cast<int>(words_.size() + bin);
  }
  std::size_t time_bin(int id) const { return static_cast<std::size_t>(id) - words_.size(); }

  // "<t_k>" for time ids, the word otherwise.
  std::string token(int id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= size()) throw InvariantError("token id out of range");
    if (is_time(id)) return "<t_" + std::to_string(time_bin(id)) + ">";
    return words_[static_cast<std::size_t>(id)];
  }

  // Stable identifier of the vocabulary contents.
  std::string fingerprint() const {
    std::uint64_t h = derive_seed(n_time_, "vocab");
    for (const auto& w : words_) h = derive_seed(h, w);
    char buf[40];
    std::snprintf(buf, sizeof buf, "v%zu-n%zu-%016llx", words_.size(), n_time_,
                  static_cast<unsigned long long>(h));
    return buf;
  }

  bool operator==(const Vocab& o) const { return words_ == o.words_ && n_time_ == o.n_time_; }

 private:
  std::vector<std::string> words_;
  std::size_t n_time_;
  std::unordered_map<std::string, int> index_;
};

// Verdict and label words, the words every intention serialization needs.
inline std::vector<std::string> grammar_words() {
  std::vector<std::string> out;
  for (Verdict v : kAllVerdicts) out.push_back(verdict_word(v));
  for (Label l : kAllLabels) out.push_back(label_word(l));
  return out;
}

struct VocabOptions {
  std::size_t n_time_tokens = 100;
  // Placed right after the specials, before any corpus word.
  std::vector<std::string> reserved;
};

// Word-level vocabulary: specials, reserved words, then corpus words by
// descending frequency with ties broken lexicographically, truncated to
// target_size text entries.
inline Vocab build_vocab(const std::vector<std::string>& corpus, std::size_t target_size,
                         const VocabOptions& opts = {}) {
  if (corpus.empty()) throw InvariantError("vocab corpus is empty");
  std::vector<std::string> words = {"<pad>", "<bos>", "<eos>", "<unk>"};
  for (const auto& r : opts.reserved)
    if (std::find(words.begin(), words.end(), r) == words.end()) words.push_back(r);
  if (target_size < words.size())
    throw InvariantError("vocab size " + std::to_string(target_size) + " cannot hold " +
                         std::to_string(words.size()) + " special and reserved words");

  std::map<std::string, std::size_t> freq;
  for (const auto& doc : corpus)
    for (auto& w : text::words(doc)) ++freq[w];
  std::vector<std::pair<std::string, std::size_t>> ranked(freq.begin(), freq.end());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  for (const auto& [w, c] : ranked) {
    if (words.size() >= target_size) break;
    if (std::find(words.begin(), words.end(), w) == words.end()) words.push_back(w);
  }
  return Vocab(std::move(words), opts.n_time_tokens);
}

// The vocabulary used when only intention sequences need encoding.
inline Vocab grammar_vocab(std::size_t target_size = 4096, std::size_t n_time_tokens = 100) {
  return build_vocab({"intention"}, target_size, {n_time_tokens, grammar_words()});
}

// Vocab file: "# gik-vocab v=<v> n=<n>" then one word per line; the line
// index after the header is the id.
inline void write_vocab(std::ostream& out, const Vocab& vocab) {
  out << "# gik-vocab v=" << vocab.text_size() << " n=" << vocab.time_size() << '\n';
  for (const auto& w : vocab.words()) out << w << '\n';
}

inline Vocab read_vocab(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || !line.starts_with("# gik-vocab "))
    throw ParseError("missing vocab header", 1);
  std::size_t v = 0, n = 0;
  if (std::sscanf(line.c_str(), "# gik-vocab v=%zu n=%zu", &v, &n) != 2)
    throw ParseError("bad vocab header", 1);
  std::vector<std::string> words;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) throw ParseError("empty vocab entry", lineno);
    words.push_back(line);
  }
  if (words.size() != v) throw ParseError("vocab header declares v=" + std::to_string(v) +
                                          " but lists " + std::to_string(words.size()) + " words");
  return Vocab(std::move(words), n);
}

// ---- time quantization -------------------------------------------------------
//
// Relative quantization onto n evenly spaced instants 0, d/(n-1), ..., d with
// round-to-nearest, so the reconstruction error is at most d / (2(n-1)).

struct TimeToken {
  std::size_t bin_index = 0;

  bool operator==(const TimeToken&) const = default;
};

inline TimeToken encode_time(double t, double duration, std::size_t n) {
  if (!(duration > 0.0)) throw InvariantError("encode_time needs a positive duration");
  if (!(t >= 0.0)) throw InvariantError("encode_time needs a nonnegative time");
  if (n < 2) throw InvariantError("encode_time needs at least two bins");
  const double rel = std::min(t, duration) / duration;
  return {static_cast<std::size_t>(std::lround(rel * static_cast<double>(n - 1)))};
}

inline double decode_time(TimeToken token, double duration, std::size_t n) {
  if (token.bin_index + 1 >= n) return duration;
  return std::min(duration, static_cast<double>(token.bin_index) * duration / static_cast<double>(n - 1));
}

// ---- sequence grammar ----------------------------------------------------------
//
//   sequence := BOS span* EOS PAD*
//   span     := TIME TIME verdict? label

struct TokenSequence {
  std::vector<int> ids;
  std::string vocab_ref;

  bool operator==(const TokenSequence&) const = default;
};

enum class ParseMode { Strict, Lenient };

inline TokenSequence serialize_sequence(const IntentionSequence& seq, const Vocab& vocab) {
  const std::size_t n = vocab.time_size();
  auto word_id = [&](const std::string& w) {
    auto id = vocab.find(w);
    if (!id) throw InvariantError("vocab lacks grammar word '" + w + "'");
    return *id;
  };
  // Spans are ordered by their quantized times so that re-serializing a
  // parsed sequence reproduces the same ids.
  struct Quantized {
    std::size_t start, end;
    Label label;
    Verdict verdict;
  };
  std::vector<Quantized> spans;
  for (const auto& s : seq.spans) {
    if (s.t_start < 0.0 || s.t_end < s.t_start) throw InvariantError("span with invalid times");
    if (s.t_end > seq.duration) throw InvariantError("span ends after the sequence duration");
    if (seq.duration > 0.0)
      spans.push_back({encode_time(s.t_start, seq.duration, n).bin_index,
                       encode_time(s.t_end, seq.duration, n).bin_index, s.label, s.verdict});
    else
      spans.push_back({0, 0, s.label, s.verdict});
  }
  std::stable_sort(spans.begin(), spans.end(), [](const Quantized& a, const Quantized& b) {
    return std::tie(a.start, a.end, a.label, a.verdict) < std::tie(b.start, b.end, b.label, b.verdict);
  });

  TokenSequence out{{Vocab::kBos}, vocab.fingerprint()};
  for (const auto& s : spans) {
    out.ids.push_back(vocab.time_id(s.start));
    out.ids.push_back(vocab.time_id(s.end));
    out.ids.push_back(word_id(verdict_word(s.verdict)));
    out.ids.push_back(word_id(label_word(s.label)));
  }
  out.ids.push_back(Vocab::kEos);
  return out;
}

inline IntentionSequence parse_sequence(const TokenSequence& tokens, double duration, const Vocab& vocab,
                                        ParseMode mode = ParseMode::Strict) {
  const bool strict = mode == ParseMode::Strict;
  const auto& ids = tokens.ids;
  const std::size_t n = vocab.time_size();
  auto fail = [](const std::string& what, std::size_t offset) {
    throw ParseError(what + " at offset " + std::to_string(offset), 0, offset);
  };
  for (std::size_t i = 0; i < ids.size(); ++i)
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= vocab.size()) {
      if (strict) fail("token id out of range", i);
    }
  auto valid = [&](std::size_t i) {
    return ids[i] >= 0 && static_cast<std::size_t>(ids[i]) < vocab.size();
  };
  auto seconds = [&](std::size_t bin) { return duration > 0.0 ? decode_time({bin}, duration, n) : 0.0; };

  IntentionSequence seq{{}, duration, {}};
  std::size_t i = 0;
  if (!ids.empty() && ids[0] == Vocab::kBos) {
    i = 1;
  } else if (strict) {
    fail("missing bos", 0);
  }

  bool closed = false;
  while (i < ids.size()) {
    if (!valid(i)) {
      ++i;
      continue;
    }
    const int id = ids[i];
    if (id == Vocab::kEos) {
      closed = true;
      ++i;
      break;
    }
    if (!vocab.is_time(id)) {
      if (strict) fail("expected time token", i);
      ++i;
      continue;
    }
    std::size_t start_bin = vocab.time_bin(id);
    ++i;
    if (i >= ids.size() || !valid(i) || !vocab.is_time(ids[i])) {
      if (strict) fail(i >= ids.size() ? "missing eos" : "expected time token", i);
      continue;  // lone time token
    }
    std::size_t end_bin = vocab.time_bin(ids[i]);
    if (end_bin < start_bin) {
      if (strict) fail("end before start", i);
      std::swap(start_bin, end_bin);
    }
    const std::size_t pair_end = ++i;

    Verdict verdict = Verdict::Positive;
    bool verdict_seen = false;
    std::size_t labels_found = 0;
    while (i < ids.size() && !(valid(i) && (vocab.is_time(ids[i]) || ids[i] == Vocab::kEos))) {
      if (!valid(i)) {
        ++i;
        continue;
      }
      const std::string word = vocab.token(ids[i]);
      if (auto v = verdict_from_word(word)) {
        if (strict && (verdict_seen || labels_found > 0)) fail("misplaced verdict", i);
        verdict = *v;
        verdict_seen = true;
      } else if (auto l = label_from_word(word)) {
        if (strict && labels_found > 0) fail("second label in one span", i);
        ++labels_found;
        seq.spans.push_back({*l, seconds(start_bin), seconds(end_bin), verdict});
      } else if (strict) {
        fail("word '" + word + "' maps to no label", i);
      }
      ++i;
    }
    if (labels_found == 0 && strict) fail("span without a label", pair_end);
  }
  if (!closed) {
    if (strict) fail("missing eos", ids.size());
  } else if (strict) {
    for (; i < ids.size(); ++i)
      if (ids[i] != Vocab::kPad) fail("trailing tokens after eos", i);
  }
  sort_spans(seq);
  return seq;
}

// ---- token text interchange ------------------------------------------------------

inline std::string format_ids(const TokenSequence& ts) {
  std::string out;
  for (std::size_t i = 0; i < ts.ids.size(); ++i) {
    if (i) out += ' ';
    out += std::to_string(ts.ids[i]);
  }
  return out;
}

inline std::string format_readable(const TokenSequence& ts, const Vocab& vocab) {
  std::string out;
  for (std::size_t i = 0; i < ts.ids.size(); ++i) {
    if (i) out += ' ';
    out += vocab.token(ts.ids[i]);
  }
  return out;
}

// Accepts either form, and mixtures of the two.
inline TokenSequence parse_token_text(std::string_view line, const Vocab& vocab) {
  TokenSequence ts{{}, vocab.fingerprint()};
  std::istringstream in{std::string(line)};
  std::string tok;
  std::size_t offset = 0;
  while (in >> tok) {
    if (auto id = text::to_int<int>(tok)) {
      if (*id < 0 || static_cast<std::size_t>(*id) >= vocab.size())
        throw ParseError("token id " + tok + " out of range", 0, offset);
      ts.ids.push_back(*id);
    } else if (tok.starts_with("<t_") && tok.ends_with(">")) {
      auto bin = text::to_int<std::size_t>(std::string_view(tok).substr(3, tok.size() - 4));
      if (!bin || *bin >= vocab.time_size()) throw ParseError("bad time token " + tok, 0, offset);
      ts.ids.push_back(vocab.time_id(*bin));
    } else {
      ts.ids.push_back(vocab.id(tok));
    }
    ++offset;
  }
  return ts;
}

}  // namespace gik
