#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "gik/report_labeler.hpp"
#include "support.hpp"

using namespace gik;

namespace {

struct TraceCase {
  std::string sentence;
  std::vector<Mention> expected;
};

std::vector<TraceCase> load_trace() {
  std::vector<TraceCase> out;
  std::istringstream in(text::read_file(GIK_SOURCE_DIR "/tests/fixtures/labeler_trace.tsv"));
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto tab = line.find('\t');
    TraceCase c{line.substr(0, tab), {}};
    const std::string exp = line.substr(tab + 1);
    if (exp != "-")
      for (auto item : text::split(exp, ',')) {
        const auto colon = item.find(':');
        c.expected.push_back({resolve_label_name(item.substr(0, colon))->label,
                              *resolve_verdict_name(item.substr(colon + 1))});
      }
    std::sort(c.expected.begin(), c.expected.end(),
              [](const Mention& a, const Mention& b) { return a.label < b.label; });
    out.push_back(std::move(c));
  }
  return out;
}

std::string upper(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return s;
}

Verdict at(const LabelVerdicts& v, Label l) { return v[static_cast<int>(l)]; }

}  // namespace

TEST(Labeler, RuleTraceFixture) {
  const auto cases = load_trace();
  ASSERT_EQ(cases.size(), 20u);
  for (const auto& c : cases) EXPECT_EQ(extract_mentions(c.sentence), c.expected) << c.sentence;
}

TEST(Labeler, BasicMentions) {
  EXPECT_EQ(extract_mentions("heart size is enlarged"), (std::vector<Mention>{{Label::Cardiomegaly, Verdict::Positive}}));
  EXPECT_EQ(extract_mentions("no pleural effusion"),
            (std::vector<Mention>{{Label::PleuralEffusion, Verdict::Negative}}));
  EXPECT_TRUE(extract_mentions("").empty());
}

TEST(Labeler, CaseInsensitive) {
  for (const auto& c : load_trace()) EXPECT_EQ(extract_mentions(upper(c.sentence)), extract_mentions(c.sentence));
}

TEST(Labeler, NegationWindowAndTerminator) {
  // six words between cue and mention falls outside the window
  EXPECT_EQ(extract_mentions("no a b c d e f edema"), (std::vector<Mention>{{Label::Edema, Verdict::Positive}}));
  EXPECT_EQ(extract_mentions("no a b c d e edema"), (std::vector<Mention>{{Label::Edema, Verdict::Negative}}));
  EXPECT_EQ(extract_mentions("no change but edema"), (std::vector<Mention>{{Label::Edema, Verdict::Positive}}));
}

TEST(Labeler, SentencePrecedence) {
  // negated and affirmed in one sentence: Positive wins
  EXPECT_EQ(extract_mentions("no left effusion but a right effusion is seen"),
            (std::vector<Mention>{{Label::PleuralEffusion, Verdict::Positive}}));
  EXPECT_EQ(extract_mentions("no effusion, however possible effusion"),
            (std::vector<Mention>{{Label::PleuralEffusion, Verdict::Uncertain}}));
}

TEST(LabelReport, NoAcuteFindings) {
  const auto v = label_report("no acute findings");
  EXPECT_EQ(at(v, Label::NoFinding), Verdict::Positive);
  for (Label l : kAllLabels)
    if (l != Label::NoFinding) EXPECT_TRUE(at(v, l) == Verdict::Negative || at(v, l) == Verdict::Absent);
}

TEST(LabelReport, EmptyReport) {
  const auto v = label_report("");
  for (Label l : kAllLabels) EXPECT_EQ(at(v, l), l == Label::NoFinding ? Verdict::Positive : Verdict::Absent);
}

TEST(LabelReport, NegatedThenAffirmed) {
  const auto v = label_report("No pleural effusion. There is a small right effusion.");
  EXPECT_EQ(at(v, Label::PleuralEffusion), Verdict::Positive);
  EXPECT_EQ(at(v, Label::NoFinding), Verdict::Absent);
}

TEST(LabelReport, NoFindingOnlyWithoutPositiveOrUncertain) {
  EXPECT_EQ(at(label_report("no pneumothorax. no effusion"), Label::NoFinding), Verdict::Positive);
  EXPECT_EQ(at(label_report("possible pneumonia"), Label::NoFinding), Verdict::Absent);
}

TEST(LabelReport, IrrelevantSentenceChangesNothing) {
  const std::vector<std::string> filler = {"the patient is rotated", "comparison made with prior study",
                                           "lungs are well inflated", "bony structures appear intact"};
  for (const auto& c : load_trace())
    for (const auto& f : filler) EXPECT_EQ(label_report(c.sentence + ".\n" + f), label_report(c.sentence));
}

TEST(RuleTable, DataFileMatchesDefault) {
  const std::string file = text::read_file(GIK_SOURCE_DIR "/data/rules.tsv");
  EXPECT_EQ(file, std::string(kDefaultRuleTable));
  const RuleTable r = parse_rule_table(file);
  EXPECT_EQ(r.window, 6u);
  EXPECT_EQ(r.mentions.size(), default_rule_table().mentions.size());
}

TEST(RuleTable, Rejections) {
  const std::string base = std::string(kDefaultRuleTable);
  EXPECT_THROW(parse_rule_table(base + "\n[mentions]\nEdema\tcardiomegaly\n"), ParseError);
  EXPECT_THROW(parse_rule_table(base + "\n[mentions]\nEdema\tBig Heart\n"), ParseError);
  EXPECT_THROW(parse_rule_table("[mentions]\nEdema\tedema\n"), ParseError);  // labels without phrases
  EXPECT_THROW(parse_rule_table(base + "\n[bogus]\nx\n"), ParseError);
}

TEST(Aliases, TableNames) {
  EXPECT_EQ(resolve_label_name("Effusion")->label, Label::PleuralEffusion);
  const auto nh = resolve_label_name("Normal Heart");
  EXPECT_EQ(nh->label, Label::Cardiomegaly);
  EXPECT_EQ(nh->implied_verdict, Verdict::Negative);
  EXPECT_EQ(resolve_label_name("Support Devices")->label, Label::SupportDevices);
  EXPECT_EQ(resolve_label_name("Pleural Effusion")->label, Label::PleuralEffusion);
  EXPECT_FALSE(resolve_label_name("Spleen").has_value());
}

TEST(GroundTruth, TimedSentence) {
  const auto g = build_ground_truth({{"cardiomegaly", 2.0, 4.0, true}}, 10.0);
  ASSERT_EQ(g.spans.size(), 1u);
  EXPECT_EQ(g.spans[0], (IntentionSpan{Label::Cardiomegaly, 2.0, 4.0, Verdict::Positive}));
}

TEST(GroundTruth, UntimedDefaultsToSpeechOnset) {
  auto g = build_ground_truth({{"no pleural effusion", 0, 0, false}}, 30.0);
  ASSERT_EQ(g.spans.size(), 1u);
  EXPECT_EQ(g.spans[0], (IntentionSpan{Label::PleuralEffusion, 1.1, 30.0, Verdict::Negative}));
  g = build_ground_truth({{"edema", 0, 0, false}}, 0.8);
  EXPECT_EQ(g.spans[0].t_start, 0.8);
  EXPECT_EQ(g.spans[0].t_end, 0.8);
}

TEST(GroundTruth, ClampsAndRejects) {
  const auto g = build_ground_truth({{"edema", 3.0, 12.0, true}}, 10.0);
  EXPECT_EQ(g.spans[0].t_end, 10.0);
  EXPECT_THROW(build_ground_truth({}, 0.0), InvariantError);
}

TEST(GroundTruth, MergesCloseSameLabelSpans) {
  const auto g = build_ground_truth(
      {{"there is edema", 1.0, 2.0, true}, {"edema again", 2.3, 3.0, true}, {"edema later", 4.0, 5.0, true}}, 10.0);
  ASSERT_EQ(g.spans.size(), 2u);
  EXPECT_EQ(g.spans[0], (IntentionSpan{Label::Edema, 1.0, 3.0, Verdict::Positive}));
  EXPECT_EQ(g.spans[1].t_start, 4.0);
  // different verdicts never merge
  const auto h = build_ground_truth({{"edema", 1.0, 2.0, true}, {"no edema", 2.1, 3.0, true}}, 10.0);
  EXPECT_EQ(h.spans.size(), 2u);
}

TEST(GroundTruth, RandomTranscriptsYieldValidSequences) {
  std::mt19937_64 rng(8);
  const auto trace = load_trace();
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    const double duration = 0.2 + 30.0 * u(rng);
    std::vector<TimedSentence> ss;
    const int m = static_cast<int>(rng() % 6);
    for (int i = 0; i < m; ++i) {
      TimedSentence s{trace[rng() % trace.size()].sentence, 0, 0, u(rng) < 0.8};
      s.t_start = 40.0 * u(rng);
      s.t_end = s.t_start + 5.0 * u(rng);
      ss.push_back(s);
    }
    const auto g = build_ground_truth(ss, duration);
    EXPECT_NO_THROW(validate(g));
  }
}
