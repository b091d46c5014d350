#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <optional>
#include <string>
#include <string_view>

namespace gik {

// The 14 CheXpert observation categories, in canonical order.
enum class Label : int {
  NoFinding = 0,
  EnlargedCardiomediastinum,
  Cardiomegaly,
  LungOpacity,
  LungLesion,
  Edema,
  Consolidation,
  Pneumonia,
  Atelectasis,
  Pneumothorax,
  PleuralEffusion,
  PleuralOther,
  Fracture,
  SupportDevices,
};

inline constexpr std::size_t kLabelCount = 14;

// Absent means "not mentioned"; it never appears in an IntentionSpan produced
// by the labeler but is a legal map value in report-level verdicts.
enum class Verdict : int { Positive = 0, Negative, Uncertain, Absent };

inline constexpr std::size_t kVerdictCount = 4;

inline constexpr std::array<Label, kLabelCount> kAllLabels = {
    Label::NoFinding,     Label::EnlargedCardiomediastinum,
    Label::Cardiomegaly,  Label::LungOpacity,
    Label::LungLesion,    Label::Edema,
    Label::Consolidation, Label::Pneumonia,
    Label::Atelectasis,   Label::Pneumothorax,
    Label::PleuralEffusion, Label::PleuralOther,
    Label::Fracture,      Label::SupportDevices,
};

inline constexpr std::array<Verdict, kVerdictCount> kAllVerdicts = {
    Verdict::Positive, Verdict::Negative, Verdict::Uncertain, Verdict::Absent};

namespace detail {
inline constexpr std::array<std::string_view, kLabelCount> kLabelNames = {
    "NoFinding",     "EnlargedCardiomediastinum",
    "Cardiomegaly",  "LungOpacity",
    "LungLesion",    "Edema",
    "Consolidation", "Pneumonia",
    "Atelectasis",   "Pneumothorax",
    "PleuralEffusion", "PleuralOther",
    "Fracture",      "SupportDevices",
};

inline constexpr std::array<std::string_view, kVerdictCount> kVerdictNames = {
    "Positive", "Negative", "Uncertain", "Absent"};

inline std::string lowercase(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}
}  // namespace detail

inline std::string_view label_name(Label l) { return detail::kLabelNames[static_cast<int>(l)]; }
inline std::string_view verdict_name(Verdict v) {
  return detail::kVerdictNames[static_cast<int>(v)];
}

// Single lowercase vocabulary word for a label ("pleuraleffusion").
inline std::string label_word(Label l) { return detail::lowercase(label_name(l)); }
inline std::string verdict_word(Verdict v) { return detail::lowercase(verdict_name(v)); }

inline std::optional<Label> label_from_word(std::string_view word) {
  for (Label l : kAllLabels)
    if (label_word(l) == word) return l;
  return std::nullopt;
}

inline std::optional<Verdict> verdict_from_word(std::string_view word) {
  for (Verdict v : kAllVerdicts)
    if (verdict_word(v) == word) return v;
  return std::nullopt;
}

// A label name as written by a person or an external model. Besides the
// canonical identifiers this accepts the disease names used in result
// tables; some of those imply a verdict ("Normal Heart" is a negative
// cardiomegaly finding).
struct LabelAlias {
  Label label;
  std::optional<Verdict> implied_verdict;
};

inline std::optional<LabelAlias> resolve_label_name(std::string_view name) {
  std::string key;
  for (char c : name)
    if (std::isalnum(static_cast<unsigned char>(c)))
      key.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  if (auto l = label_from_word(key)) return LabelAlias{*l, std::nullopt};

  struct Entry {
    std::string_view key;
    Label label;
    std::optional<Verdict> verdict;
  };
  static constexpr std::array<Entry, 8> kAliases = {{
      {"effusion", Label::PleuralEffusion, std::nullopt},
      {"normalheart", Label::Cardiomegaly, Verdict::Negative},
      {"normal", Label::NoFinding, std::nullopt},
      {"opacity", Label::LungOpacity, std::nullopt},
      {"lesion", Label::LungLesion, std::nullopt},
      {"supportdevice", Label::SupportDevices, std::nullopt},
      {"enlargedheart", Label::Cardiomegaly, std::nullopt},
      {"nofindings", Label::NoFinding, std::nullopt},
  }};
  for (const auto& e : kAliases)
    if (e.key == key) return LabelAlias{e.label, e.verdict};
  return std::nullopt;
}

inline std::optional<Verdict> resolve_verdict_name(std::string_view name) {
  return verdict_from_word(detail::lowercase(name));
}

}  // namespace gik
