#include <gtest/gtest.h>

#include <numeric>
#include <random>
#include <sstream>
#include <tuple>

#include "gik/evaluation.hpp"
#include "support.hpp"

using namespace gik;
using gik::testing::Toks;

namespace {

IntentionSequence seq(std::string id, double d, std::vector<IntentionSpan> spans) {
  IntentionSequence s{std::move(id), d, std::move(spans)};
  sort_spans(s);
  return s;
}

std::vector<MatchedPair> pairs_with_starts(Label l, std::vector<double> deltas) {
  std::vector<MatchedPair> out;
  for (double d : deltas) out.push_back({l, Verdict::Positive, {l, 5.0, 6.0}, {l, 5.0 - d, 6.0}, d, 0.0});
  return out;
}

// Metric tokens rebuilt from the grammar: spans in quantized order, each as
// two time tokens, verdict, label.
Toks oracle_tokens(const IntentionSequence& s, std::size_t n, bool text_only) {
  auto bin = [&](double t) { return static_cast<long>(std::round(t / s.duration * (n - 1))); };
  std::vector<std::tuple<long, long, Label, Verdict>> spans;
  for (const auto& sp : s.spans) spans.emplace_back(bin(sp.t_start), bin(sp.t_end), sp.label, sp.verdict);
  std::sort(spans.begin(), spans.end());
  Toks out;
  for (const auto& [a, b, label, verdict] : spans) {
    if (!text_only) {
      out.push_back("<t_" + std::to_string(a) + ">");
      out.push_back("<t_" + std::to_string(b) + ">");
    }
    out.push_back(verdict_word(verdict));
    out.push_back(label_word(label));
  }
  return out;
}

}  // namespace

TEST(MatchSpans, PairsInStartOrderPerKey) {
  const auto p = seq("c", 20, {{Label::Edema, 1, 2}, {Label::Edema, 8, 9}, {Label::Fracture, 3, 4}});
  const auto g = seq("c", 20, {{Label::Edema, 1.5, 2.5}, {Label::Edema, 7, 10}, {Label::Edema, 12, 13},
                              {Label::Fracture, 3, 4, Verdict::Negative}});
  const auto m = match_spans(p, g);
  ASSERT_EQ(m.pairs.size(), 2u);
  EXPECT_DOUBLE_EQ(m.pairs[0].start_delta, 0.5);
  EXPECT_DOUBLE_EQ(m.pairs[1].start_delta, -1.0);
  EXPECT_DOUBLE_EQ(m.pairs[1].end_delta, 1.0);
  EXPECT_EQ(m.unmatched_pred.size(), 1u);
  EXPECT_EQ(m.unmatched_gt.size(), 2u);
  EXPECT_THROW(match_spans(p, seq("other", 20, {})), InvariantError);
}

TEST(MatchSpans, CountsAreConserved) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    const auto p = gik::testing::random_sequence(rng, "c", 8), g = gik::testing::random_sequence(rng, "c", 8);
    const auto m = match_spans(p, g);
    EXPECT_EQ(m.pairs.size() + m.unmatched_pred.size(), p.spans.size());
    EXPECT_EQ(m.pairs.size() + m.unmatched_gt.size(), g.spans.size());
    for (const auto& pr : m.pairs) {
      EXPECT_EQ(pr.gt_span.label, pr.pred_span.label);
      EXPECT_EQ(pr.gt_span.verdict, pr.pred_span.verdict);
    }
  }
}

TEST(Mtde, Examples) {
  EXPECT_DOUBLE_EQ(*mtde(pairs_with_starts(Label::Edema, {0.5, 1.0, 2.0}), Label::Edema), 1.0);
  EXPECT_DOUBLE_EQ(*mtde(pairs_with_starts(Label::Edema, {-0.3}), Label::Edema), -0.3);
  EXPECT_DOUBLE_EQ(*mtde(pairs_with_starts(Label::Edema, {4, 1, 3, 2}), Label::Edema), 2.0);
  EXPECT_FALSE(mtde(pairs_with_starts(Label::Edema, {1.0}), Label::Fracture).has_value());
}

TEST(Mtde, SelfMatchIsZeroAndMatchesOracle) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 100; ++trial) {
    const auto g = gik::testing::random_sequence(rng, "c", 10);
    const auto m = match_spans(g, g);
    for (Label l : kAllLabels)
      if (auto v = mtde(m.pairs, l)) EXPECT_EQ(*v, 0.0);
    std::vector<double> d;
    std::uniform_real_distribution<double> u(-5, 5);
    for (int i = 0; i < 1 + trial % 9; ++i) d.push_back(u(rng));
    EXPECT_EQ(*mtde(pairs_with_starts(Label::Atelectasis, d), Label::Atelectasis), gik::testing::median_oracle(d));
  }
}

TEST(Bleu, Examples) {
  const auto b = bleu_n({{"a", "b", "c"}}, {{"a", "b", "d"}});
  EXPECT_NEAR(b[0], 2.0 / 3.0, 1e-12);
  EXPECT_NEAR(b[1], std::sqrt(2.0 / 3.0 * 0.5), 1e-12);
  EXPECT_EQ(b[2], 0.0);
  const auto same = bleu_n({{"x", "y", "z", "w"}}, {{"x", "y", "z", "w"}});
  for (double v : same) EXPECT_DOUBLE_EQ(v, 1.0);
  const auto empty = bleu_n({{}}, {{"a"}});
  for (double v : empty) EXPECT_EQ(v, 0.0);
  EXPECT_THROW(bleu_n({}, {}), InvariantError);
  EXPECT_THROW(bleu_n({{"a"}}, {}), InvariantError);
}

TEST(Bleu, BrevityPenalty) {
  const auto b = bleu_n({{"a", "b"}}, {{"a", "b", "c", "d"}});
  EXPECT_NEAR(b[0], std::exp(1.0 - 2.0), 1e-12);
}

TEST(Cider, Examples) {
  EXPECT_NEAR(cider({{"a", "b", "c", "d"}, {"e", "f", "g", "h"}}, {{"a", "b", "c", "d"}, {"e", "f", "g", "h"}}), 10.0, 1e-9);
  EXPECT_NEAR(cider({{"a", "b"}, {"c", "d"}}, {{"a", "b"}, {"c", "d"}}), 5.0, 1e-9);  // no 3- or 4-grams
  EXPECT_EQ(cider({{"x"}, {"y"}}, {{"a"}, {"b"}}), 0.0);
  EXPECT_THROW(cider({{"a"}}, {{"a"}}), InvariantError);
  EXPECT_THROW(cider({{"a"}, {"b"}}, {{"a"}}), InvariantError);
}

TEST(Cider, DuplicatingTheCorpusKeepsTheScore) {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<Toks> c, r;
    for (int i = 0; i < 6; ++i) {
      c.push_back(gik::testing::random_tokens(rng, 8, 4));
      r.push_back(gik::testing::random_tokens(rng, 8, 4));
    }
    auto c2 = c, r2 = r;
    c2.insert(c2.end(), c.begin(), c.end());
    r2.insert(r2.end(), r.begin(), r.end());
    EXPECT_NEAR(cider(c2, r2), cider(c, r), 1e-9);
  }
}

TEST(Metrics, MatchOraclesOnRandomCorpora) {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 2 + static_cast<int>(rng() % 10);
    std::vector<Toks> c, r;
    for (int i = 0; i < n; ++i) {
      c.push_back(gik::testing::random_tokens(rng, 12, 3 + trial % 4));
      r.push_back(gik::testing::random_tokens(rng, 12, 3 + trial % 4));
    }
    const auto b = bleu_n(c, r);
    const auto bo = gik::testing::bleu_oracle(c, r);
    for (int k = 0; k < 4; ++k) EXPECT_NEAR(b[k], bo[k], 1e-9) << "trial " << trial << " order " << k + 1;
    EXPECT_NEAR(cider(c, r), gik::testing::cider_oracle(c, r), 1e-9) << "trial " << trial;
  }
}

TEST(Metrics, CorpusOrderDoesNotMatter) {
  std::mt19937_64 rng(9);
  std::vector<Toks> c, r;
  for (int i = 0; i < 8; ++i) {
    c.push_back(gik::testing::random_tokens(rng, 10, 3));
    r.push_back(gik::testing::random_tokens(rng, 10, 3));
  }
  std::vector<std::size_t> perm(c.size());
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<Toks> c2, r2;
  for (auto i : perm) {
    c2.push_back(c[i]);
    r2.push_back(r[i]);
  }
  const auto a = bleu_n(c, r), b = bleu_n(c2, r2);
  for (int k = 0; k < 4; ++k) EXPECT_NEAR(a[k], b[k], 1e-12);
  EXPECT_NEAR(cider(c, r), cider(c2, r2), 1e-9);
}

TEST(Metrics, FixingAMismatchDoesNotLowerBleu1) {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 50; ++trial) {
    Toks ref = gik::testing::random_tokens(rng, 10, 4);
    if (ref.empty()) ref = {"a"};
    Toks cand = ref;
    for (auto& t : cand)
      if (rng() % 2) t = "z";
    const double before = bleu_n({cand}, {ref})[0];
    for (std::size_t i = 0; i < cand.size(); ++i)
      if (cand[i] == "z") {
        cand[i] = ref[i];
        break;
      }
    EXPECT_GE(bleu_n({cand}, {ref})[0] + 1e-12, before);
  }
}

TEST(Histogram, FloorBins) {
  std::vector<MatchedPair> ps;
  for (double d : {0.55, 0.62, 0.58}) ps.push_back({Label::Edema, Verdict::Positive, {}, {}, d, -d});
  const auto h = delta_histogram(ps, DeltaKind::Start, 0.1);
  EXPECT_EQ(h.counts, (std::map<long long, std::size_t>{{5, 2}, {6, 1}}));
  const auto e = delta_histogram(ps, DeltaKind::End, 0.1);
  EXPECT_EQ(e.counts, (std::map<long long, std::size_t>{{-7, 1}, {-6, 2}}));
  EXPECT_EQ(e.total(), 3u);
  EXPECT_THROW(delta_histogram(ps, DeltaKind::Start, 0.0), InvariantError);

  std::ostringstream out;
  write_histogram_csv(out, h);
  EXPECT_EQ(out.str(), "bin_left_edge,count\n0.500000,2\n0.600000,1\n");
}

TEST(EvaluateDataset, SelfEvaluationIsPerfect) {
  std::mt19937_64 rng(40);
  std::map<std::string, IntentionSequence> g;
  for (int i = 0; i < 6; ++i) {
    auto s = gik::testing::random_sequence(rng, "c" + std::to_string(i));
    if (s.spans.empty()) s.spans.push_back({Label::Edema, 0.0, 0.5});
    g[s.case_id] = s;
  }
  const auto rep = evaluate_dataset(g, g, grammar_vocab());
  for (double b : rep.bleu) EXPECT_NEAR(b, 1.0, 1e-12);
  ASSERT_TRUE(rep.cider.has_value());
  EXPECT_GT(*rep.cider, 0.0);
  for (const auto& [l, v] : rep.mtde_per_label) EXPECT_EQ(v, 0.0);
  EXPECT_EQ(rep.precision, 1.0);
  EXPECT_EQ(rep.recall, 1.0);
}

TEST(EvaluateDataset, MissingPredictionsScoreAsEmpty) {
  std::map<std::string, IntentionSequence> g{{"a", seq("a", 10, {{Label::Edema, 1, 2}})},
                                             {"b", seq("b", 10, {{Label::Fracture, 1, 2}})}};
  const auto rep = evaluate_dataset({}, g, grammar_vocab());
  for (double b : rep.bleu) EXPECT_EQ(b, 0.0);
  EXPECT_EQ(rep.n_matched, 0u);
  EXPECT_EQ(rep.recall, 0.0);
  EXPECT_TRUE(rep.mtde_per_label.empty());
  EXPECT_THROW(evaluate_dataset({{"zzz", seq("zzz", 1, {})}}, g, grammar_vocab()), InvariantError);
}

TEST(EvaluateDataset, AgreesWithIndependentRecomputation) {
  std::mt19937_64 rng(55);
  const Vocab vocab = grammar_vocab();
  for (bool text_only : {false, true}) {
    std::map<std::string, IntentionSequence> g, p;
    for (int i = 0; i < 10; ++i) {
      const std::string id = "case" + std::to_string(i);
      g[id] = gik::testing::random_sequence(rng, id);
      auto pr = gik::testing::random_sequence(rng, id);
      pr.duration = g[id].duration;
      for (auto& s : pr.spans) {
        s.t_start = std::min(s.t_start, pr.duration);
        s.t_end = std::min(s.t_end, pr.duration);
      }
      sort_spans(pr);
      if (i % 3) p[id] = pr;
    }
    std::vector<Toks> c, r;
    std::vector<double> edema;
    for (const auto& [id, gt] : g) {
      const IntentionSequence pr = p.count(id) ? p[id] : IntentionSequence{id, gt.duration, {}};
      c.push_back(oracle_tokens(pr, vocab.time_size(), text_only));
      r.push_back(oracle_tokens(gt, vocab.time_size(), text_only));
      for (const auto& m : match_spans(pr, gt).pairs)
        if (m.label == Label::Edema) edema.push_back(m.start_delta);
    }
    const auto rep = evaluate_dataset(p, g, vocab, {text_only, 0.1});
    const auto bo = gik::testing::bleu_oracle(c, r);
    for (int k = 0; k < 4; ++k) EXPECT_NEAR(rep.bleu[k], bo[k], 1e-9);
    EXPECT_NEAR(*rep.cider, gik::testing::cider_oracle(c, r), 1e-9);
    if (!edema.empty()) EXPECT_EQ(rep.mtde_per_label.at(Label::Edema), gik::testing::median_oracle(edema));
    EXPECT_EQ(rep.n_cases, 10u);
  }
}

TEST(EvaluateDataset, ReportJsonKeys) {
  std::map<std::string, IntentionSequence> g{{"a", seq("a", 10, {{Label::Edema, 1, 2}})},
                                             {"b", seq("b", 10, {{Label::Fracture, 1, 2}})}};
  const auto j = to_json(evaluate_dataset(g, g, grammar_vocab()));
  for (const char* k : {"bleu", "cider", "mtde_per_label", "start_hist", "end_hist", "precision", "recall"})
    EXPECT_TRUE(j.contains(k)) << k;
  EXPECT_EQ(j["bleu"].size(), 4u);
  EXPECT_TRUE(j["mtde_per_label"].contains("Edema"));
}
