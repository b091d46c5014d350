#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <sstream>

#include "gik/gaze.hpp"
#include "gik/synth.hpp"
#include "support.hpp"

using namespace gik;

namespace {

std::vector<GazeSession> parse_csv(const std::string& s) {
  std::istringstream in(s);
  return parse_gaze_csv(in);
}

std::map<std::string, std::vector<TimedSentence>> parse_tr(const std::string& s) {
  std::istringstream in(s);
  return parse_transcript_jsonl(in);
}

template <typename E>
std::size_t error_line(const std::string& csv) {
  try {
    parse_csv(csv);
  } catch (const E& e) {
    return e.line();
  }
  ADD_FAILURE() << "no error raised";
  return 0;
}

}  // namespace

TEST(GazeCsv, SingleRowMapsFields) {
  const auto s = parse_csv("case_id,x,y,t_start,t_end\nc1,0.5,0.5,0.0,1.0\n");
  ASSERT_EQ(s.size(), 1u);
  EXPECT_EQ(s[0].case_id, "c1");
  ASSERT_EQ(s[0].fixations.size(), 1u);
  EXPECT_EQ(s[0].fixations[0], (FixationRecord{0.5, 0.5, 0.0, 1.0}));
  EXPECT_DOUBLE_EQ(s[0].duration, 1.0);
}

TEST(GazeCsv, HeaderOnlyIsEmpty) {
  EXPECT_TRUE(parse_csv("case_id,x,y,t_start,t_end\n").empty());
  EXPECT_TRUE(parse_csv("").empty());
}

TEST(GazeCsv, RowsResortedByStart) {
  const auto s = parse_csv("case_id,x,y,t_start,t_end\nc1,0.1,0.1,2.0,3.0\nc1,0.2,0.2,1.0,1.5\n");
  ASSERT_EQ(s[0].fixations.size(), 2u);
  EXPECT_EQ(s[0].fixations[0].t_start, 1.0);
  EXPECT_EQ(s[0].fixations[1].t_start, 2.0);
}

TEST(GazeCsv, ShuffledInputsMatchSortOracle) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<FixationRecord> fx;
    for (int i = 0; i < 25; ++i) {
      const double t = std::round(u(rng) * 100.0) / 10.0;  // repeats exercise the tie order
      fx.push_back({u(rng), u(rng), t, t + 0.1 + u(rng)});
    }
    std::string csv = "case_id,x,y,t_start,t_end\n";
    for (const auto& f : fx)
      csv += "c," + text::format_double(f.x) + "," + text::format_double(f.y) + "," +
             text::format_double(f.t_start) + "," + text::format_double(f.t_end) + "\n";
    // insertion sort on (t_start, t_end), stable
    auto expect = fx;
    for (std::size_t i = 1; i < expect.size(); ++i)
      for (std::size_t j = i; j > 0; --j) {
        const auto& a = expect[j - 1];
        const auto& b = expect[j];
        if (a.t_start > b.t_start || (a.t_start == b.t_start && a.t_end > b.t_end)) std::swap(expect[j - 1], expect[j]);
        else break;
      }
    EXPECT_EQ(parse_csv(csv)[0].fixations, expect);
  }
}

TEST(GazeCsv, SessionsInFirstAppearanceOrder) {
  const auto s = parse_csv("case_id,x,y,t_start,t_end\nb,0,0,0,1\na,0,0,0,1\nb,1,1,1,2\n");
  ASSERT_EQ(s.size(), 2u);
  EXPECT_EQ(s[0].case_id, "b");
  EXPECT_EQ(s[1].case_id, "a");
  EXPECT_EQ(s[0].fixations.size(), 2u);
}

TEST(GazeCsv, ErrorsCarryLineNumbers) {
  const std::string h = "case_id,x,y,t_start,t_end\nc1,0.5,0.5,0,1\n";
  EXPECT_EQ(error_line<ParseError>(h + "c1,0.5,0.5,0\n"), 3u);
  EXPECT_EQ(error_line<ParseError>(h + "c1,abc,0.5,0,1\n"), 3u);
  EXPECT_EQ(error_line<RangeError>(h + "c1,1.2,0.5,0,1\n"), 3u);
  EXPECT_EQ(error_line<RangeError>(h + "c1,0.5,-0.1,0,1\n"), 3u);
  EXPECT_EQ(error_line<RangeError>(h + "c1,0.5,0.5,2,2\n"), 3u);
  EXPECT_EQ(error_line<RangeError>(h + "c1,0.5,0.5,3,2\n"), 3u);
}

TEST(GazeCsv, PixelCoordinatesAreNormalized) {
  const auto s = parse_csv("case_id,x,y,t_start,t_end,image_w,image_h\nc1,100,50,0,1,200,100\n");
  EXPECT_DOUBLE_EQ(s[0].fixations[0].x, 0.5);
  EXPECT_DOUBLE_EQ(s[0].fixations[0].y, 0.5);
  EXPECT_THROW(parse_csv("case_id,x,y,t_start,t_end,image_w,image_h\nc1,300,50,0,1,200,100\n"), RangeError);
}

TEST(GazeCsv, DurationColumnAndDefault) {
  auto s = parse_csv("case_id,x,y,t_start,t_end,duration\nc1,0.5,0.5,0,1,7.5\n");
  EXPECT_DOUBLE_EQ(s[0].duration, 7.5);
  s = parse_csv("case_id,x,y,t_start,t_end\nc1,0.5,0.5,0,1\nc1,0.5,0.5,2,4.25\n");
  EXPECT_DOUBLE_EQ(s[0].duration, 4.25);
  EXPECT_THROW(parse_csv("case_id,x,y,t_start,t_end,duration\nc1,0.5,0.5,0,3,2\n"), RangeError);
}

TEST(GazeCsv, WriteParseRoundTrip) {
  SynthConfig cfg;
  cfg.n_cases = 5;
  cfg.seed = 3;
  const Dataset ds = generate_synthetic_dataset(cfg);
  std::ostringstream out;
  write_gaze_csv(out, ds.sessions);
  const auto back = parse_csv(out.str());
  ASSERT_EQ(back.size(), ds.sessions.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    EXPECT_EQ(back[i].case_id, ds.sessions[i].case_id);
    EXPECT_EQ(back[i].fixations, ds.sessions[i].fixations);
    EXPECT_EQ(back[i].duration, ds.sessions[i].duration);
  }
  std::ostringstream again;
  write_gaze_csv(again, back);
  EXPECT_EQ(again.str(), out.str());
}

TEST(Transcript, OneLine) {
  const auto m = parse_tr(R"({"case_id":"c1","text":"heart is enlarged","t_start":1.2,"t_end":3.4})" "\n");
  ASSERT_EQ(m.size(), 1u);
  ASSERT_EQ(m.at("c1").size(), 1u);
  EXPECT_EQ(m.at("c1")[0], (TimedSentence{"heart is enlarged", 1.2, 3.4, true}));
}

TEST(Transcript, BlankLinesSkipped) {
  const auto m = parse_tr("\n\n" R"({"case_id":"c1","text":"a","t_start":0,"t_end":1})" "\n   \n");
  EXPECT_EQ(m.at("c1").size(), 1u);
}

TEST(Transcript, OutOfOrderSorted) {
  std::mt19937_64 rng(5);
  std::vector<double> starts = {4.0, 0.5, 9.0, 2.0, 7.5, 3.0};
  std::shuffle(starts.begin(), starts.end(), rng);
  std::string in;
  for (double t : starts)
    in += R"({"case_id":"c1","text":"s","t_start":)" + text::format_double(t) + R"(,"t_end":)" +
          text::format_double(t + 1) + "}\n";
  auto expect = starts;
  std::sort(expect.begin(), expect.end());
  std::vector<double> got;
  for (const auto& s : parse_tr(in).at("c1")) got.push_back(s.t_start);
  EXPECT_EQ(got, expect);
}

TEST(Transcript, UntimedSentence) {
  const auto m = parse_tr(R"({"case_id":"c1","text":"no effusion"})" "\n");
  EXPECT_FALSE(m.at("c1")[0].timed);
}

TEST(Transcript, Errors) {
  try {
    parse_tr(R"({"case_id":"c1","text":"a","t_start":0,"t_end":1})" "\n{oops\n");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
  EXPECT_THROW(parse_tr(R"({"case_id":"c1","text":"a","t_start":2,"t_end":1})" "\n"), RangeError);
  EXPECT_THROW(parse_tr(R"({"case_id":"c1","text":"   ","t_start":0,"t_end":1})" "\n"), ParseError);
}

TEST(Synthetic, DeterministicForSeed) {
  SynthConfig cfg;
  cfg.seed = 7;
  EXPECT_EQ(generate_synthetic_dataset(cfg), generate_synthetic_dataset(cfg));
  EXPECT_EQ(synthetic_base_image(cfg, 3), synthetic_base_image(cfg, 3));
  SynthConfig other = cfg;
  other.seed = 8;
  EXPECT_NE(generate_synthetic_dataset(cfg), generate_synthetic_dataset(other));
}

TEST(Synthetic, FiftyUniqueCases) {
  SynthConfig cfg;
  cfg.n_cases = 50;
  const Dataset ds = generate_synthetic_dataset(cfg);
  ASSERT_EQ(ds.sessions.size(), 50u);
  std::set<std::string> ids;
  for (const auto& s : ds.sessions) ids.insert(s.case_id);
  EXPECT_EQ(ids.size(), 50u);
}

TEST(Synthetic, CaseStructure) {
  SynthConfig cfg;
  cfg.n_cases = 40;
  cfg.seed = 21;
  const auto& anchors = default_anchor_table();
  for (std::size_t i = 0; i < cfg.n_cases; ++i) {
    const SynthCase c = generate_synthetic_case(cfg, i);
    ASSERT_GE(c.spans.size(), 1u);
    ASSERT_LE(c.spans.size(), 4u);
    ASSERT_EQ(c.session.sentences.size(), c.spans.size());
    for (std::size_t k = 0; k < c.spans.size(); ++k) {
      const auto& phrase = anchors[static_cast<int>(c.spans[k].label)].phrase;
      EXPECT_NE(c.session.sentences[k].text.find(phrase), std::string::npos);
      EXPECT_LE(c.spans[k].t_end, c.session.duration);
    }
    EXPECT_GE(c.session.duration, max_event_end(c.session));
    EXPECT_TRUE(std::is_sorted(c.session.fixations.begin(), c.session.fixations.end(),
                               [](const auto& a, const auto& b) { return a.t_start < b.t_start; }));
  }
}

TEST(Synthetic, SpanFixationsClusterInAnchorDisc) {
  SynthConfig cfg;
  cfg.n_cases = 60;
  cfg.seed = 7;
  const auto& anchors = default_anchor_table();
  std::size_t spans_checked = 0;
  for (std::size_t i = 0; i < cfg.n_cases; ++i) {
    const SynthCase c = generate_synthetic_case(cfg, i);
    for (const auto& sp : c.spans) {
      const Anchor& a = anchors[static_cast<int>(sp.label)];
      std::size_t in = 0, all = 0;
      for (const auto& f : c.session.fixations) {
        if (f.t_start < sp.t_start || f.t_end > sp.t_end) continue;
        ++all;
        if (std::hypot(f.x - a.cx, f.y - a.cy) <= a.radius) ++in;
      }
      ASSERT_GT(all, 0u);
      EXPECT_GE(static_cast<double>(in), 0.8 * static_cast<double>(all)) << label_name(sp.label);
      ++spans_checked;
    }
  }
  EXPECT_GT(spans_checked, 60u);
}

TEST(Synthetic, AnchorDataFileMatchesEmbeddedTable) {
  EXPECT_EQ(text::read_file(GIK_SOURCE_DIR "/data/anchors.tsv"), std::string(kDefaultAnchorTable));
  const auto t = parse_anchor_table(text::read_file(GIK_SOURCE_DIR "/data/anchors.tsv"));
  for (Label l : kAllLabels) EXPECT_DOUBLE_EQ(t[static_cast<int>(l)].radius, 0.12);
}

TEST(Split, FullCohortSizes) {
  Dataset ds;
  for (int i = 0; i < 4115; ++i) ds.sessions.push_back(GazeSession{.case_id = "c" + std::to_string(i)});
  const auto s = split_dataset(ds, 1, {0.514, 0.243, 0.243});
  EXPECT_EQ(s.train.sessions.size(), 2115u);
  EXPECT_EQ(s.val.sessions.size(), 1000u);
  EXPECT_EQ(s.test.sessions.size(), 1000u);
}

TEST(Split, AllTrain) {
  Dataset ds;
  for (int i = 0; i < 17; ++i) ds.sessions.push_back(GazeSession{.case_id = "c" + std::to_string(i)});
  const auto s = split_dataset(ds, 9, {1.0, 0.0, 0.0});
  EXPECT_EQ(s.train.sessions.size(), 17u);
  EXPECT_TRUE(s.val.sessions.empty());
  EXPECT_TRUE(s.test.sessions.empty());
  EXPECT_EQ(s.train.split_tag, SplitTag::Train);
}

TEST(Split, DeterministicAndOrderIndependent) {
  Dataset ds;
  for (int i = 0; i < 30; ++i) ds.sessions.push_back(GazeSession{.case_id = "c" + std::to_string(i)});
  const auto a = split_dataset(ds, 4, {0.6, 0.2, 0.2});
  const auto b = split_dataset(ds, 4, {0.6, 0.2, 0.2});
  EXPECT_EQ(a.train, b.train);
  EXPECT_EQ(a.test, b.test);
  std::reverse(ds.sessions.begin(), ds.sessions.end());
  const auto c = split_dataset(ds, 4, {0.6, 0.2, 0.2});
  EXPECT_EQ(a.test, c.test);
}

TEST(Split, PartitionProperty) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 1 + static_cast<int>(rng() % 200);
    Dataset ds;
    for (int i = 0; i < n; ++i) ds.sessions.push_back(GazeSession{.case_id = "id" + std::to_string(rng())});
    std::uniform_real_distribution<double> u(0.0, 1.0);
    double a = u(rng), b = u(rng) * (1 - a);
    const auto s = split_dataset(ds, rng(), {1 - a - b, a, b});
    std::multiset<std::string> all;
    for (const auto* part : {&s.train, &s.val, &s.test})
      for (const auto& x : part->sessions) all.insert(x.case_id);
    std::multiset<std::string> expect;
    for (const auto& x : ds.sessions) expect.insert(x.case_id);
    EXPECT_EQ(all, expect);
  }
}

TEST(Split, Errors) {
  EXPECT_THROW(split_dataset(Dataset{}, 1, {1, 0, 0}), InvariantError);
  Dataset ds;
  ds.sessions.push_back(GazeSession{.case_id = "a"});
  EXPECT_THROW(split_dataset(ds, 1, {0.5, 0.1, 0.1}), InvariantError);
  EXPECT_THROW(split_dataset(ds, 1, {1.2, -0.2, 0.0}), InvariantError);
}

TEST(Manifest, LoadsDatasetWithRelativePaths) {
  gik::testing::TempDir dir;
  text::write_file(dir.str("g.csv"), "case_id,x,y,t_start,t_end\nc1,0.5,0.5,0,1\nc2,0.2,0.3,0,2\n");
  text::write_file(dir.str("t.jsonl"), R"({"case_id":"c1","text":"cardiomegaly","t_start":0.2,"t_end":0.9})" "\n");
  text::write_file(dir.str("m.csv"),
                   "case_id,image_path,gaze_path,transcript_path,duration\n"
                   "c1,img1.pgm,g.csv,t.jsonl,5\n"
                   "c2,img2.pgm,g.csv,,\n");
  const Dataset ds = load_dataset(dir.str("m.csv"));
  ASSERT_EQ(ds.sessions.size(), 2u);
  EXPECT_DOUBLE_EQ(ds.sessions[0].duration, 5.0);
  EXPECT_DOUBLE_EQ(ds.sessions[1].duration, 2.0);
  EXPECT_EQ(ds.sessions[0].sentences.size(), 1u);
  EXPECT_EQ(std::filesystem::path(ds.sessions[0].image_ref), dir.path() / "img1.pgm");

  text::write_file(dir.str("bad.csv"),
                   "case_id,image_path,gaze_path,transcript_path,duration\nc2,img2.pgm,g.csv,,1\n");
  EXPECT_THROW(load_dataset(dir.str("bad.csv")), RangeError);
  text::write_file(dir.str("dup.csv"),
                   "case_id,image_path,gaze_path,transcript_path,duration\nc1,a,g.csv,,\nc1,a,g.csv,,\n");
  EXPECT_THROW(load_dataset(dir.str("dup.csv")), InvariantError);
}
