#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "gik/error.hpp"
#include "gik/intention.hpp"
#include "gik/labels.hpp"
#include "gik/predictor.hpp"
#include "gik/text.hpp"
#include "gik/time_grammar.hpp"

namespace gik {

// ---- span matching ---------------------------------------------------------------

struct MatchedPair {
  Label label;
  Verdict verdict;
  IntentionSpan gt_span;
  IntentionSpan pred_span;
  double start_delta;  // gt - pred
  double end_delta;
};

struct SpanMatching {
  std::vector<MatchedPair> pairs;
  std::vector<IntentionSpan> unmatched_pred;
  std::vector<IntentionSpan> unmatched_gt;
};

// Pairs the i-th predicted span with the i-th ground-truth span of the same
// (label, verdict), both taken in start order.
inline SpanMatching match_spans(const IntentionSequence& pred, const IntentionSequence& gt) {
  if (pred.case_id != gt.case_id)
    throw InvariantError("matching spans of different cases: " + pred.case_id + " vs " + gt.case_id);
  using Key = std::pair<Label, Verdict>;
  std::map<Key, std::pair<std::vector<IntentionSpan>, std::vector<IntentionSpan>>> groups;
  for (const auto& s : pred.spans) groups[{s.label, s.verdict}].first.push_back(s);
  for (const auto& s : gt.spans) groups[{s.label, s.verdict}].second.push_back(s);

  SpanMatching out;
  for (auto& [key, g] : groups) {
    auto& [p, t] = g;
    std::stable_sort(p.begin(), p.end(), span_less);
    std::stable_sort(t.begin(), t.end(), span_less);
    const std::size_t n = std::min(p.size(), t.size());
    for (std::size_t i = 0; i < n; ++i)
      out.pairs.push_back({key.first, key.second, t[i], p[i], t[i].t_start - p[i].t_start, t[i].t_end - p[i].t_end});
    out.unmatched_pred.insert(out.unmatched_pred.end(), p.begin() + static_cast<std::ptrdiff_t>(n), p.end());
    out.unmatched_gt.insert(out.unmatched_gt.end(), t.begin() + static_cast<std::ptrdiff_t>(n), t.end());
  }
  return out;
}

// Median time delay error: signed median of gt start - predicted start over
// the label's pairs (lower-middle element for even counts). nullopt when the
// label has no pairs.
inline std::optional<double> mtde(const std::vector<MatchedPair>& pairs, Label label) {
  std::vector<double> deltas;
  for (const auto& p : pairs)
    if (p.label == label) deltas.push_back(p.start_delta);
  if (deltas.empty()) return std::nullopt;
  return lower_median(std::move(deltas));
}

// ---- n-gram metrics ------------------------------------------------------------------

using Tokens = std::vector<std::string>;
using NgramCounts = std::map<std::vector<std::string>, std::size_t>;

inline NgramCounts ngram_counts(const Tokens& toks, std::size_t n) {
  NgramCounts out;
  if (toks.size() < n) return out;
  for (std::size_t i = 0; i + n <= toks.size(); ++i)
    ++out[Tokens(toks.begin() + static_cast<std::ptrdiff_t>(i), toks.begin() + static_cast<std::ptrdiff_t>(i + n))];
  return out;
}

// Corpus-level BLEU-1..max_n with clipped precisions and brevity penalty;
// entries past max_n are zero.
inline std::array<double, 4> bleu_n(const std::vector<Tokens>& candidates, const std::vector<Tokens>& references,
                                    std::size_t max_n = 4) {
  if (candidates.empty()) throw InvariantError("BLEU of an empty corpus");
  if (candidates.size() != references.size()) throw InvariantError("BLEU corpora differ in length");
  if (max_n < 1 || max_n > 4) throw InvariantError("BLEU order must be 1..4");

  std::array<double, 4> matched{}, total{};
  double cand_len = 0.0, ref_len = 0.0;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    cand_len += static_cast<double>(candidates[i].size());
    ref_len += static_cast<double>(references[i].size());
    for (std::size_t n = 1; n <= max_n; ++n) {
      const auto c = ngram_counts(candidates[i], n);
      const auto r = ngram_counts(references[i], n);
      for (const auto& [g, cnt] : c) {
        total[n - 1] += static_cast<double>(cnt);
        if (auto it = r.find(g); it != r.end()) matched[n - 1] += static_cast<double>(std::min(cnt, it->second));
      }
    }
  }
  std::array<double, 4> scores{};
  if (cand_len == 0.0) return scores;
  const double bp = std::exp(std::min(0.0, 1.0 - ref_len / cand_len));
  double log_sum = 0.0;
  for (std::size_t n = 1; n <= max_n; ++n) {
    if (total[n - 1] == 0.0 || matched[n - 1] == 0.0) break;  // this order and above stay 0
    log_sum += std::log(matched[n - 1] / total[n - 1]);
    scores[n - 1] = bp * std::exp(log_sum / static_cast<double>(n));
  }
  return scores;
}

// CIDEr with one reference per candidate: per order n = 1..4, TF-IDF vectors
// with idf = log(N / df) (df counted over references), cosine similarity per
// case, averaged over orders and cases, times 10. N-grams no reference
// contains have no idf and carry no weight.
inline double cider(const std::vector<Tokens>& candidates, const std::vector<Tokens>& references) {
  if (candidates.size() != references.size()) throw InvariantError("CIDEr corpora differ in length");
  if (candidates.size() < 2)
    throw InvariantError("CIDEr needs at least 2 cases: document frequency is degenerate with one");
  const double n_docs = static_cast<double>(references.size());
  double total = 0.0;
  for (std::size_t n = 1; n <= 4; ++n) {
    std::vector<NgramCounts> ref_counts, cand_counts;
    std::map<std::vector<std::string>, std::size_t> df;
    for (std::size_t i = 0; i < references.size(); ++i) {
      ref_counts.push_back(ngram_counts(references[i], n));
      cand_counts.push_back(ngram_counts(candidates[i], n));
      for (const auto& [g, c] : ref_counts.back()) ++df[g];
    }
    auto idf = [&](const std::vector<std::string>& g) {
      auto it = df.find(g);
      return it == df.end() ? 0.0 : std::log(n_docs / static_cast<double>(it->second));
    };
    for (std::size_t i = 0; i < references.size(); ++i) {
      double dot = 0.0, nc = 0.0, nr = 0.0;
      for (const auto& [g, c] : cand_counts[i]) {
        const double wc = static_cast<double>(c) * idf(g);
        nc += wc * wc;
        if (auto it = ref_counts[i].find(g); it != ref_counts[i].end())
          dot += wc * static_cast<double>(it->second) * idf(g);
      }
      for (const auto& [g, c] : ref_counts[i]) {
        const double wr = static_cast<double>(c) * idf(g);
        nr += wr * wr;
      }
      if (nc > 0.0 && nr > 0.0) total += dot / (std::sqrt(nc) * std::sqrt(nr));
    }
  }
  return 10.0 * total / (4.0 * n_docs);
}

// ---- delta histograms ------------------------------------------------------------------

struct Histogram {
  double bin_width = 0.1;
  double origin = 0.0;
  std::map<long long, std::size_t> counts;  // bin index -> count

  std::size_t total() const {
    std::size_t t = 0;
    for (const auto& [b, c] : counts) t += c;
    return t;
  }
  bool operator==(const Histogram&) const = default;
};

enum class DeltaKind { Start, End };

inline Histogram delta_histogram(const std::vector<MatchedPair>& pairs, DeltaKind which, double bin_width,
                                 double origin = 0.0) {
  if (!(bin_width > 0.0)) throw InvariantError("bin_width must be positive");
  Histogram h{bin_width, origin, {}};
  for (const auto& p : pairs) {
    const double d = which == DeltaKind::Start ? p.start_delta : p.end_delta;
    ++h.counts[static_cast<long long>(std::floor((d - origin) / bin_width))];
  }
  return h;
}

// Two columns: bin_left_edge,count.
inline void write_histogram_csv(std::ostream& out, const Histogram& h) {
  out << "bin_left_edge,count\n";
  char buf[64];
  for (const auto& [b, c] : h.counts) {
    std::snprintf(buf, sizeof buf, "%.6f,%zu\n", h.origin + static_cast<double>(b) * h.bin_width, c);
    out << buf;
  }
}

// ---- dataset evaluation -----------------------------------------------------------------

struct EvalOptions {
  bool text_only = false;  // drop time tokens before BLEU/CIDEr
  double bin_width = 0.1;
};

struct EvaluationReport {
  std::array<double, 4> bleu{};
  std::optional<double> cider;  // absent with fewer than two cases
  std::map<Label, double> mtde_per_label;
  Histogram start_hist, end_hist;
  double precision = 0.0;
  double recall = 0.0;
  std::size_t n_cases = 0;
  std::size_t n_pred_spans = 0;
  std::size_t n_gt_spans = 0;
  std::size_t n_matched = 0;
  bool text_only = false;
};

// Metric tokens of a sequence: its serialization without specials, and
// without time tokens in text-only mode.
inline Tokens metric_tokens(const IntentionSequence& seq, const Vocab& vocab, bool text_only) {
  Tokens out;
  for (int id : serialize_sequence(seq, vocab).ids) {
    if (id < static_cast<int>(Vocab::kSpecialCount)) continue;
    if (text_only && vocab.is_time(id)) continue;
    out.push_back(vocab.token(id));
  }
  return out;
}

// Scores every ground-truth case; cases without a prediction count as empty
// predictions.
inline EvaluationReport evaluate_dataset(const std::map<std::string, IntentionSequence>& preds,
                                         const std::map<std::string, IntentionSequence>& gts, const Vocab& vocab,
                                         const EvalOptions& opts = {}) {
  std::vector<std::string> unknown;
  for (const auto& [id, p] : preds)
    if (!gts.count(id)) unknown.push_back(id);
  if (!unknown.empty()) {
    std::string ids;
    for (const auto& id : unknown) ids += (ids.empty() ? "" : ", ") + id;
    throw InvariantError("predictions for unknown cases: " + ids);
  }

  EvaluationReport rep;
  rep.text_only = opts.text_only;
  rep.n_cases = gts.size();
  std::vector<Tokens> cands, refs;
  std::vector<MatchedPair> pairs;
  for (const auto& [id, gt] : gts) {
    auto it = preds.find(id);
    const IntentionSequence pred = it != preds.end() ? it->second : IntentionSequence{id, gt.duration, {}};
    cands.push_back(metric_tokens(pred, vocab, opts.text_only));
    refs.push_back(metric_tokens(gt, vocab, opts.text_only));
    auto m = match_spans(pred, gt);
    rep.n_pred_spans += pred.spans.size();
    rep.n_gt_spans += gt.spans.size();
    rep.n_matched += m.pairs.size();
    pairs.insert(pairs.end(), m.pairs.begin(), m.pairs.end());
  }
  if (!gts.empty()) rep.bleu = bleu_n(cands, refs, 4);
  if (gts.size() >= 2) rep.cider = cider(cands, refs);
  for (Label l : kAllLabels)
    if (auto v = mtde(pairs, l)) rep.mtde_per_label[l] = *v;
  rep.start_hist = delta_histogram(pairs, DeltaKind::Start, opts.bin_width);
  rep.end_hist = delta_histogram(pairs, DeltaKind::End, opts.bin_width);
  rep.precision = rep.n_pred_spans ? static_cast<double>(rep.n_matched) / rep.n_pred_spans : 0.0;
  rep.recall = rep.n_gt_spans ? static_cast<double>(rep.n_matched) / rep.n_gt_spans : 0.0;
  return rep;
}

inline nlohmann::json to_json(const Histogram& h) {
  nlohmann::json counts = nlohmann::json::object();
  for (const auto& [b, c] : h.counts) counts[std::to_string(b)] = c;
  return {{"bin_width", h.bin_width}, {"origin", h.origin}, {"counts", counts}};
}

// Report schema:
//   bleu: [b1, b2, b3, b4]; cider: number|null; mtde_per_label: {label: s};
//   start_hist / end_hist: {bin_width, origin, counts: {bin index: count}};
//   precision, recall; n_cases, n_pred_spans, n_gt_spans, n_matched; text_only
inline nlohmann::json to_json(const EvaluationReport& r) {
  nlohmann::json mt = nlohmann::json::object();
  for (const auto& [l, v] : r.mtde_per_label) mt[std::string(label_name(l))] = v;
  return {{"bleu", r.bleu},
          {"cider", r.cider ? nlohmann::json(*r.cider) : nlohmann::json(nullptr)},
          {"mtde_per_label", mt},
          {"start_hist", to_json(r.start_hist)},
          {"end_hist", to_json(r.end_hist)},
          {"precision", r.precision},
          {"recall", r.recall},
          {"n_cases", r.n_cases},
          {"n_pred_spans", r.n_pred_spans},
          {"n_gt_spans", r.n_gt_spans},
          {"n_matched", r.n_matched},
          {"text_only", r.text_only}};
}

}  // namespace gik
