#pragma once

#include <algorithm>
#include <istream>
#include <map>
#include <ostream>
#include <string>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "gik/error.hpp"
#include "gik/labels.hpp"
#include "gik/text.hpp"

namespace gik {

// What the radiologist was diagnosing during [t_start, t_end].
struct IntentionSpan {
  Label label = Label::NoFinding;
  double t_start = 0.0;
  double t_end = 0.0;
  Verdict verdict = Verdict::Positive;

  bool operator==(const IntentionSpan&) const = default;
};

struct IntentionSequence {
  std::string case_id;
  double duration = 0.0;
  std::vector<IntentionSpan> spans;  // sorted by t_start

  bool operator==(const IntentionSequence&) const = default;
};

// Canonical span order: start, then end, then label and verdict so that
// sorting is total and reproducible.
inline bool span_less(const IntentionSpan& a, const IntentionSpan& b) {
  return std::tie(a.t_start, a.t_end, a.label, a.verdict) <
         std::tie(b.t_start, b.t_end, b.label, b.verdict);
}

inline void sort_spans(IntentionSequence& seq) {
  std::stable_sort(seq.spans.begin(), seq.spans.end(), span_less);
}

// Throws InvariantError describing the first violated invariant.
inline void validate(const IntentionSequence& seq) {
  if (!(seq.duration >= 0.0)) throw InvariantError("sequence " + seq.case_id + ": negative duration");
  for (std::size_t i = 0; i < seq.spans.size(); ++i) {
    const auto& s = seq.spans[i];
    if (!(s.t_start >= 0.0) || !(s.t_end >= s.t_start))
      throw InvariantError("sequence " + seq.case_id + ": span " + std::to_string(i) +
                           " has invalid times");
    if (s.t_end > seq.duration)
      throw InvariantError("sequence " + seq.case_id + ": span " + std::to_string(i) +
                           " ends after the duration");
    if (i > 0 && seq.spans[i - 1].t_start > s.t_start)
      throw InvariantError("sequence " + seq.case_id + ": spans not sorted by start");
  }
}

// ---- prediction line format ----------------------------------------------
//
// One JSON object per line:
//   {"case_id": "c1", "duration": 12.5,
//    "spans": [{"label": "Cardiomegaly", "verdict": "Positive",
//               "t_start": 2.0, "t_end": 4.0}, ...]}
// Ground truth and predictions share this format.

inline nlohmann::json to_json(const IntentionSequence& seq) {
  nlohmann::json spans = nlohmann::json::array();
  for (const auto& s : seq.spans)
    spans.push_back({{"label", label_name(s.label)},
                     {"verdict", verdict_name(s.verdict)},
                     {"t_start", s.t_start},
                     {"t_end", s.t_end}});
  return {{"case_id", seq.case_id}, {"duration", seq.duration}, {"spans", std::move(spans)}};
}

inline void write_sequences(std::ostream& out, const std::map<std::string, IntentionSequence>& seqs) {
  for (const auto& [id, seq] : seqs) out << to_json(seq).dump() << '\n';
}

struct SequenceReadOptions {
  // Clamp span times into [0, duration] instead of rejecting them.
  bool clamp_times = true;
};

// Reads the prediction line format. Lines for a repeated case_id are merged
// (spans concatenated, then re-sorted). Blank lines are skipped.
inline std::map<std::string, IntentionSequence> read_sequences(std::istream& in,
                                                               SequenceReadOptions opts = {}) {
  std::map<std::string, IntentionSequence> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (text::trim(line).empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(std::string("invalid JSON: ") + e.what(), lineno);
    }
    if (!j.is_object() || !j.contains("case_id") || !j["case_id"].is_string() ||
        !j.contains("duration") || !j["duration"].is_number() ||
        (j.contains("spans") && !j["spans"].is_array()))
      throw ParseError("expected {case_id, duration, spans}", lineno);

    IntentionSequence seq;
    seq.case_id = j["case_id"].get<std::string>();
    seq.duration = j["duration"].get<double>();
    if (!(seq.duration >= 0.0)) throw RangeError("negative duration", lineno);

    for (const auto& js : j.value("spans", nlohmann::json::array())) {
      if (!js.is_object() || !js.contains("label") || !js["label"].is_string() ||
          !js.contains("t_start") || !js["t_start"].is_number() || !js.contains("t_end") ||
          !js["t_end"].is_number())
        throw ParseError("span needs label, t_start, t_end", lineno);
      const auto alias = resolve_label_name(js["label"].get<std::string>());
      if (!alias) throw ParseError("unknown label '" + js["label"].get<std::string>() + "'", lineno);
      IntentionSpan s;
      s.label = alias->label;
      s.verdict = alias->implied_verdict.value_or(Verdict::Positive);
      if (js.contains("verdict")) {
        if (!js["verdict"].is_string()) throw ParseError("verdict must be a string", lineno);
        const auto v = resolve_verdict_name(js["verdict"].get<std::string>());
        if (!v) throw ParseError("unknown verdict '" + js["verdict"].get<std::string>() + "'", lineno);
        if (!alias->implied_verdict) s.verdict = *v;
      }
      s.t_start = js["t_start"].get<double>();
      s.t_end = js["t_end"].get<double>();
      if (opts.clamp_times) {
        s.t_start = std::clamp(s.t_start, 0.0, seq.duration);
        s.t_end = std::clamp(s.t_end, 0.0, seq.duration);
      } else if (s.t_start < 0.0 || s.t_end > seq.duration) {
        throw RangeError("span outside [0, duration]", lineno);
      }
      if (s.t_end < s.t_start) throw RangeError("span ends before it starts", lineno);
      seq.spans.push_back(s);
    }

    auto [it, inserted] = out.try_emplace(seq.case_id, seq);
    if (!inserted) {
      auto& prev = it->second;
      if (prev.duration != seq.duration)
        throw ParseError("case " + seq.case_id + " repeated with a different duration", lineno);
      prev.spans.insert(prev.spans.end(), seq.spans.begin(), seq.spans.end());
    }
    sort_spans(it->second);
  }
  return out;
}

}  // namespace gik
