#pragma once

#include <algorithm>
#include <array>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "gik/error.hpp"
#include "gik/gaze.hpp"
#include "gik/intention.hpp"
#include "gik/labels.hpp"
#include "gik/text.hpp"

namespace gik {

// Rule-based condensation of report sentences into the 14 observation labels.
//
// Mentions are found by longest phrase match over the lowercased word
// sequence. A mention is Negative when a pre-negation cue ends, or a
// post-negation cue starts, within `window` words of it; otherwise Uncertain
// when an uncertainty cue lies within the window on either side; otherwise
// Positive. A cue's scope stops at a terminator word ("but", "however").
// Phrases may carry a fixed verdict ("heart size is normal" is a negative
// cardiomegaly finding) which bypasses cue analysis.

using Phrase = std::vector<std::string>;

struct MentionRule {
  Label label;
  Phrase phrase;
  std::optional<Verdict> fixed_verdict;
};

struct RuleTable {
  std::vector<MentionRule> mentions;
  std::vector<Phrase> pre_negation;
  std::vector<Phrase> post_negation;
  std::vector<Phrase> uncertainty;
  std::set<std::string> terminators;
  std::size_t window = 6;
};

inline constexpr std::string_view kDefaultRuleTable = R"(# Mention phrases: label<TAB>phrase[<TAB>fixed verdict]
[mentions]
NoFinding	no acute findings
NoFinding	no acute finding
NoFinding	no acute cardiopulmonary process
NoFinding	no acute cardiopulmonary abnormality
NoFinding	no acute abnormality
NoFinding	normal chest
NoFinding	normal study
NoFinding	unremarkable chest
EnlargedCardiomediastinum	widened mediastinum
EnlargedCardiomediastinum	mediastinal widening
EnlargedCardiomediastinum	mediastinal enlargement
EnlargedCardiomediastinum	enlarged cardiomediastinum
EnlargedCardiomediastinum	enlarged cardiomediastinal silhouette
Cardiomegaly	cardiomegaly
Cardiomegaly	heart size is enlarged
Cardiomegaly	heart is enlarged
Cardiomegaly	enlarged heart
Cardiomegaly	enlarged cardiac silhouette
Cardiomegaly	cardiac enlargement
Cardiomegaly	heart size is normal	Negative
Cardiomegaly	normal heart size	Negative
Cardiomegaly	normal heart	Negative
LungOpacity	airspace opacity
LungOpacity	opacity
LungOpacity	opacities
LungOpacity	haziness
LungOpacity	infiltrate
LungOpacity	infiltrates
LungOpacity	airspace disease
LungLesion	pulmonary nodule
LungLesion	nodule
LungLesion	nodules
LungLesion	mass
LungLesion	lesion
LungLesion	lung lesion
Edema	pulmonary edema
Edema	edema
Edema	interstitial edema
Edema	vascular congestion
Consolidation	consolidation
Consolidation	consolidations
Pneumonia	pneumonia
Pneumonia	infection
Atelectasis	atelectasis
Atelectasis	atelectatic
Atelectasis	collapse
Pneumothorax	pneumothorax
Pneumothorax	pneumothoraces
PleuralEffusion	pleural effusion
PleuralEffusion	pleural effusions
PleuralEffusion	effusion
PleuralEffusion	effusions
PleuralEffusion	blunting of the costophrenic angle
PleuralOther	pleural thickening
PleuralOther	pleural plaque
PleuralOther	pleural plaques
PleuralOther	fibrothorax
Fracture	rib fracture
Fracture	rib fractures
Fracture	fracture
Fracture	fractures
SupportDevices	endotracheal tube
SupportDevices	et tube
SupportDevices	central line
SupportDevices	picc line
SupportDevices	pacemaker
SupportDevices	nasogastric tube
SupportDevices	chest tube
SupportDevices	support devices
SupportDevices	catheter

[pre_negation]
no
not
without
clear of
free of
negative for
no evidence of
no signs of
absence of
resolution of

[post_negation]
is absent
are absent
is not seen
are not seen
not seen
is not present
not present
is not identified
not identified
has resolved
have resolved
resolved
ruled out

[uncertainty]
possible
possibly
probable
probably
likely
may
may be
may represent
could be
could represent
suspicious for
suggestive of
concern for
questionable
equivocal
cannot be excluded
cannot exclude
can not be excluded
not excluded
not be excluded
rule out
versus
perhaps

[terminators]
but
however
although
though
except
aside

[settings]
window	6
)";

inline RuleTable parse_rule_table(std::string_view content) {
  RuleTable rules;
  std::string section;
  std::size_t lineno = 0;
  std::map<Phrase, Label> owner;
  auto phrase_of = [&](std::string_view s) {
    Phrase p = text::words(s);
    if (p.empty()) throw ParseError("empty phrase", lineno);
    return p;
  };
  for (auto raw : text::split(content, '\n')) {
    ++lineno;
    if (!raw.empty() && raw.back() == '\r') raw.remove_suffix(1);
    const auto line = text::trim(raw);
    if (line.empty() || line.front() == '#') continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ParseError("unterminated section header", lineno);
      section = std::string(line.substr(1, line.size() - 2));
      continue;
    }
    if (section == "mentions") {
      const auto f = text::split(line, '\t');
      if (f.size() < 2 || f.size() > 3) throw ParseError("expected label<TAB>phrase[<TAB>verdict]", lineno);
      const auto label = label_from_word(text::lowercase(text::trim(f[0])));
      if (!label) throw ParseError("unknown label '" + std::string(f[0]) + "'", lineno);
      if (text::lowercase(f[1]) != f[1]) throw ParseError("phrases must be lowercase", lineno);
      MentionRule rule{*label, phrase_of(f[1]), std::nullopt};
      if (f.size() == 3) {
        rule.fixed_verdict = resolve_verdict_name(text::trim(f[2]));
        if (!rule.fixed_verdict) throw ParseError("unknown verdict '" + std::string(f[2]) + "'", lineno);
      }
      auto [it, inserted] = owner.emplace(rule.phrase, rule.label);
      if (!inserted && it->second != rule.label)
        throw ParseError("phrase '" + std::string(text::trim(f[1])) + "' maps to two labels", lineno);
      if (inserted) rules.mentions.push_back(std::move(rule));
    } else if (section == "pre_negation") {
      rules.pre_negation.push_back(phrase_of(line));
    } else if (section == "post_negation") {
      rules.post_negation.push_back(phrase_of(line));
    } else if (section == "uncertainty") {
      rules.uncertainty.push_back(phrase_of(line));
    } else if (section == "terminators") {
      for (auto& w : text::words(line)) rules.terminators.insert(w);
    } else if (section == "settings") {
      const auto f = text::split(line, '\t');
      if (f.size() != 2 || text::trim(f[0]) != "window") throw ParseError("unknown setting", lineno);
      const auto w = text::to_int<std::size_t>(f[1]);
      if (!w || *w == 0) throw ParseError("window must be a positive integer", lineno);
      rules.window = *w;
    } else {
      throw ParseError("line outside a known section", lineno);
    }
  }
  for (Label l : kAllLabels)
    if (std::none_of(rules.mentions.begin(), rules.mentions.end(),
                     [&](const MentionRule& r) { return r.label == l; }))
      throw ParseError("rule table has no phrase for " + std::string(label_name(l)));
  return rules;
}

inline const RuleTable& default_rule_table() {
  static const RuleTable rules = parse_rule_table(kDefaultRuleTable);
  return rules;
}

struct Mention {
  Label label;
  Verdict verdict;

  bool operator==(const Mention&) const = default;
};

namespace detail {

struct Match {
  std::size_t begin, end;  // word range [begin, end)
  std::size_t rule;        // index into the candidate list
};

inline bool matches_at(const std::vector<std::string>& words, std::size_t pos, const Phrase& p) {
  if (pos + p.size() > words.size()) return false;
  return std::equal(p.begin(), p.end(), words.begin() + static_cast<std::ptrdiff_t>(pos));
}

// Leftmost-longest, non-overlapping. Ties on length go to the earlier rule.
template <typename Get>
std::vector<Match> scan(const std::vector<std::string>& words, std::size_t n_rules, Get phrase,
                        const std::vector<bool>* blocked = nullptr) {
  std::vector<Match> out;
  std::size_t pos = 0;
  while (pos < words.size()) {
    std::size_t best_len = 0, best_rule = 0;
    for (std::size_t r = 0; r < n_rules; ++r) {
      const Phrase& p = phrase(r);
      if (p.size() > best_len && matches_at(words, pos, p)) {
        bool free = true;
        if (blocked)
          for (std::size_t k = pos; k < pos + p.size() && free; ++k) free = !(*blocked)[k];
        if (free) {
          best_len = p.size();
          best_rule = r;
        }
      }
    }
    if (best_len == 0) {
      ++pos;
      continue;
    }
    out.push_back({pos, pos + best_len, best_rule});
    pos += best_len;
  }
  return out;
}

enum class CueKind { PreNegation, PostNegation, Uncertainty };

inline int verdict_rank(Verdict v) {
  switch (v) {
    case Verdict::Positive: return 3;
    case Verdict::Uncertain: return 2;
    case Verdict::Negative: return 1;
    default: return 0;
  }
}

}  // namespace detail

// Label verdicts mentioned in one sentence, ordered by label. At most one
// verdict per label; Positive beats Uncertain beats Negative.
inline std::vector<Mention> extract_mentions(std::string_view sentence,
                                             const RuleTable& rules = default_rule_table()) {
  const auto words = text::words(sentence);
  if (words.empty()) return {};

  const auto mentions = detail::scan(words, rules.mentions.size(),
                                     [&](std::size_t r) -> const Phrase& { return rules.mentions[r].phrase; });
  if (mentions.empty()) return {};

  std::vector<bool> in_mention(words.size(), false);
  for (const auto& m : mentions)
    for (std::size_t k = m.begin; k < m.end; ++k) in_mention[k] = true;

  // One cue list, so overlapping cues of different kinds resolve by length
  // ("cannot be excluded" wins over "not").
  std::vector<const Phrase*> cue_phrases;
  std::vector<detail::CueKind> cue_kinds;
  auto add = [&](const std::vector<Phrase>& v, detail::CueKind k) {
    for (const auto& p : v) {
      cue_phrases.push_back(&p);
      cue_kinds.push_back(k);
    }
  };
  add(rules.uncertainty, detail::CueKind::Uncertainty);
  add(rules.pre_negation, detail::CueKind::PreNegation);
  add(rules.post_negation, detail::CueKind::PostNegation);
  const auto cues = detail::scan(words, cue_phrases.size(),
                                 [&](std::size_t r) -> const Phrase& { return *cue_phrases[r]; }, &in_mention);

  auto terminated = [&](std::size_t from, std::size_t to) {
    for (std::size_t k = from; k < to; ++k)
      if (rules.terminators.count(words[k])) return true;
    return false;
  };
  // Cue ending before the mention: words strictly between them.
  auto before = [&](const detail::Match& cue, const detail::Match& m) {
    return cue.end <= m.begin && m.begin - cue.end < rules.window && !terminated(cue.end, m.begin);
  };
  auto after = [&](const detail::Match& cue, const detail::Match& m) {
    return cue.begin >= m.end && cue.begin - m.end < rules.window && !terminated(m.end, cue.begin);
  };

  std::array<int, kLabelCount> best{};  // verdict rank per label, 0 = none
  for (const auto& m : mentions) {
    const MentionRule& rule = rules.mentions[m.rule];
    Verdict v = Verdict::Positive;
    if (rule.fixed_verdict) {
      v = *rule.fixed_verdict;
    } else {
      bool negated = false, uncertain = false;
      for (const auto& c : cues) {
        switch (cue_kinds[c.rule]) {
          case detail::CueKind::PreNegation: negated |= before(c, m); break;
          case detail::CueKind::PostNegation: negated |= after(c, m); break;
          case detail::CueKind::Uncertainty: uncertain |= before(c, m) || after(c, m); break;
        }
      }
      v = negated ? Verdict::Negative : (uncertain ? Verdict::Uncertain : Verdict::Positive);
    }
    auto& slot = best[static_cast<int>(rule.label)];
    slot = std::max(slot, detail::verdict_rank(v));
  }

  std::vector<Mention> out;
  for (Label l : kAllLabels) {
    switch (best[static_cast<int>(l)]) {
      case 3: out.push_back({l, Verdict::Positive}); break;
      case 2: out.push_back({l, Verdict::Uncertain}); break;
      case 1: out.push_back({l, Verdict::Negative}); break;
      default: break;
    }
  }
  return out;
}

inline std::vector<std::string_view> split_sentences(std::string_view report) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= report.size(); ++i) {
    if (i == report.size() || report[i] == '.' || report[i] == '\n') {
      const auto s = text::trim(report.substr(start, i - start));
      if (!s.empty()) out.push_back(s);
      start = i + 1;
    }
  }
  return out;
}

using LabelVerdicts = std::array<Verdict, kLabelCount>;

// Report-level verdict per label. NoFinding is Positive exactly when no
// other label is Positive or Uncertain, and Absent otherwise.
inline LabelVerdicts label_report(std::string_view report, const RuleTable& rules = default_rule_table()) {
  std::array<int, kLabelCount> best{};
  for (auto sentence : split_sentences(report))
    for (const auto& m : extract_mentions(sentence, rules)) {
      auto& slot = best[static_cast<int>(m.label)];
      slot = std::max(slot, detail::verdict_rank(m.verdict));
    }
  LabelVerdicts out;
  bool abnormal = false;
  for (Label l : kAllLabels) {
    const int r = best[static_cast<int>(l)];
    const Verdict v = r == 3 ? Verdict::Positive
                      : r == 2 ? Verdict::Uncertain
                      : r == 1 ? Verdict::Negative
                               : Verdict::Absent;
    out[static_cast<int>(l)] = v;
    if (l != Label::NoFinding && (v == Verdict::Positive || v == Verdict::Uncertain)) abnormal = true;
  }
  out[static_cast<int>(Label::NoFinding)] = abnormal ? Verdict::Absent : Verdict::Positive;
  return out;
}

inline std::string join_sentences(const std::vector<TimedSentence>& sentences) {
  std::string report;
  for (const auto& s : sentences) {
    if (!report.empty()) report += '\n';
    report += s.text;
  }
  return report;
}

// Start assumed for findings that have no timing of their own: readers
// begin speaking about 1.1 s into a recording.
inline constexpr double kDefaultSpeechOnset = 1.1;

struct GroundTruthOptions {
  double merge_gap = 0.5;
};

// One span per (sentence, mention); untimed sentences cover
// [min(1.1, duration), duration]. Same-label, same-verdict spans separated by
// less than merge_gap seconds are joined.
inline IntentionSequence build_ground_truth(const std::vector<TimedSentence>& sentences, double duration,
                                            const RuleTable& rules = default_rule_table(),
                                            GroundTruthOptions opts = {}, std::string case_id = {}) {
  if (!(duration > 0.0)) throw InvariantError("ground truth needs a positive duration");
  std::vector<IntentionSpan> raw;
  for (const auto& s : sentences) {
    double ts = std::min(kDefaultSpeechOnset, duration), te = duration;
    if (s.timed) {
      ts = std::clamp(s.t_start, 0.0, duration);
      te = std::clamp(s.t_end, 0.0, duration);
    }
    for (const auto& m : extract_mentions(s.text, rules)) raw.push_back({m.label, ts, te, m.verdict});
  }
  std::stable_sort(raw.begin(), raw.end(), span_less);

  IntentionSequence seq{std::move(case_id), duration, {}};
  std::map<std::pair<Label, Verdict>, std::size_t> open;  // group -> index of its last span
  for (const auto& s : raw) {
    const auto key = std::make_pair(s.label, s.verdict);
    auto it = open.find(key);
    if (it != open.end()) {
      auto& last = seq.spans[it->second];
      if (s.t_start - last.t_end < opts.merge_gap) {
        last.t_end = std::max(last.t_end, s.t_end);
        continue;
      }
    }
    open[key] = seq.spans.size();
    seq.spans.push_back(s);
  }
  sort_spans(seq);
  return seq;
}

}  // namespace gik
