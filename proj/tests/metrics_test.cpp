#include <gtest/gtest.h>

#include "lareqa/metrics.hpp"
#include "support/fixtures.hpp"
#include "support/oracles.hpp"

namespace lareqa {
namespace {

// Ranking of n items "c1".."cn" in order.
Ranking ranking(std::size_t n) {
  Ranking r{"q", {}};
  for (std::size_t j = 1; j <= n; ++j) r.ordered.push_back({"c" + std::to_string(j), 1.0 / j});
  return r;
}

TEST(PrecisionAtJ, Basics) {
  const auto r = ranking(4);
  EXPECT_EQ(precision_at_j(r, {"c1"}, 1), 1.0);
  EXPECT_EQ(precision_at_j(r, {"c4"}, 3), 0.0);
  EXPECT_DOUBLE_EQ(precision_at_j(r, {"c1", "c3"}, 3), 2.0 / 3.0);
  EXPECT_THROW(precision_at_j(r, {"c1"}, 0), ValidationError);
  EXPECT_THROW(precision_at_j(r, {"c1"}, 5), ValidationError);
}

TEST(AveragePrecision, HandExpansions) {
  const auto r = ranking(4);
  EXPECT_NEAR(average_precision(r, {"c1", "c3"}), (1.0 + 2.0 / 3.0) / 2.0, 1e-15);
  EXPECT_NEAR(average_precision(r, {"c1", "c3"}), 0.833333, 1e-6);
  EXPECT_DOUBLE_EQ(average_precision(r, {"c2", "c4"}), 0.5);
}

TEST(AveragePrecision, AllRelevantOnTopInAnyOrderIsPerfect) {
  const auto r = ranking(6);
  EXPECT_EQ(average_precision(r, {"c1", "c2", "c3"}), 1.0);
  EXPECT_EQ(average_precision(r, {"c2", "c1"}), 1.0);
}

TEST(AveragePrecision, EmptyRelevantSetIsRejected) {
  EXPECT_THROW(average_precision(ranking(3), {}), ValidationError);
}

TEST(AveragePrecision, IncompleteRankingIsRejected) {
  EXPECT_THROW(average_precision(ranking(3), {"c1", "c9"}), ValidationError);
  EXPECT_NEAR(truncated_average_precision(ranking(3), {"c1", "c9"}, 3), 0.5, 1e-15);
}

TEST(AveragePrecision, InvariantUnderIrrelevantPermutationBelowLastHit) {
  auto r = ranking(8);
  const double before = average_precision(r, {"c2", "c4"});
  std::swap(r.ordered[5], r.ordered[7]);
  std::swap(r.ordered[4], r.ordered[6]);
  EXPECT_EQ(average_precision(r, {"c2", "c4"}), before);
}

TEST(AveragePrecision, StrictlyDecreasesWhenRelevantMovesDown) {
  rng::Generator gen(23);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 3 + gen.below(10);
    auto r = ranking(n);
    std::set<std::string> rel;
    for (std::size_t j = 1; j <= n; ++j) {
      if (gen.below(3) == 0) rel.insert("c" + std::to_string(j));
    }
    if (rel.empty()) rel.insert("c1");
    for (std::size_t j = 0; j + 1 < n; ++j) {
      const bool top_rel = rel.count(r.ordered[j].candidate_id);
      const bool next_rel = rel.count(r.ordered[j + 1].candidate_id);
      if (top_rel && !next_rel) {
        auto swapped = r;
        std::swap(swapped.ordered[j], swapped.ordered[j + 1]);
        EXPECT_LT(average_precision(swapped, rel), average_precision(r, rel));
      }
    }
  }
}

TEST(MeanAveragePrecision, ArithmeticMean) {
  auto a = ranking(4);
  a.question_id = "a";
  auto b = ranking(4);
  b.question_id = "b";
  const auto res = mean_average_precision({a, b}, {{"a", {"c1"}}, {"b", {"c2", "c4"}}});
  EXPECT_DOUBLE_EQ(res.map_score, 0.75);
  EXPECT_EQ(res.num_questions, 2u);
  const auto single = mean_average_precision({b}, {{"b", {"c2", "c4"}}});
  EXPECT_EQ(single.map_score, single.per_question_ap.at("b"));
}

TEST(MeanAveragePrecision, ZeroQuestionsIsAnError) {
  EXPECT_THROW(mean_average_precision({}, {}), ValidationError);
}

struct RandomCase {
  RetrievalTask task;
  fixture::TaskEmbeddings emb;
  std::vector<std::vector<std::string>> ids;
  std::vector<std::set<std::string>> rel;
};

RandomCase random_case(std::uint64_t seed, std::size_t max_relevant) {
  rng::Generator gen(seed);
  RetrievalTask t;
  t.languages.insert(LanguageCode("en"));
  const std::size_t nc = 5 + gen.below(30), nq = 1 + gen.below(8);
  for (std::size_t j = 0; j < nc; ++j) {
    t.candidates.push_back({"c" + std::to_string(100 + j), "s", "x", LanguageCode("en")});
  }
  for (std::size_t i = 0; i < nq; ++i) {
    const std::string id = "q" + std::to_string(i);
    t.questions.push_back({id, id, "t", LanguageCode("en")});
    const std::size_t r = 1 + gen.below(std::min(max_relevant, nc));
    while (t.relevance[id].size() < r) t.relevance[id].insert(t.candidates[gen.below(nc)].candidate_id);
  }
  RandomCase out{t, fixture::random_embeddings(t, 6, seed * 31), {}, {}};
  for (const auto& rk : rank_all(out.task, out.emb.questions, out.emb.candidates)) {
    std::vector<std::string> ids;
    for (const auto& sc : rk.ordered) ids.push_back(sc.candidate_id);
    out.ids.push_back(ids);
    out.rel.push_back(out.task.relevance.at(rk.question_id));
  }
  return out;
}

TEST(MeanAveragePrecision, MatchesLiteralOracleOnRandomTasks) {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto c = random_case(seed, 6);
    const auto rankings = rank_all(c.task, c.emb.questions, c.emb.candidates);
    const double ref = oracle::literal_map(c.ids, c.rel);
    EXPECT_NEAR(mean_average_precision(rankings, c.task.relevance).map_score, ref, 1e-12);
    EXPECT_NEAR(evaluate(c.task, c.emb.questions, c.emb.candidates).map_score, ref, 1e-12);
  }
}

TEST(MeanAveragePrecision, MapIsMeanOfPerQuestionAp) {
  const auto c = random_case(77, 4);
  const auto res = evaluate(c.task, c.emb.questions, c.emb.candidates);
  double sum = 0.0;
  for (const auto& [q, ap] : res.per_question_ap) sum += ap;
  EXPECT_NEAR(res.map_score, sum / res.per_question_ap.size(), 1e-12);
}

TEST(MeanAveragePrecision, PerfectAndWorstCaseRankers) {
  RetrievalTask t;
  t.languages.insert(LanguageCode("en"));
  for (int j = 0; j < 6; ++j) t.candidates.push_back({"c" + std::to_string(j), "", "", LanguageCode("en")});
  t.questions.push_back({"q", "q", "", LanguageCode("en")});
  t.relevance["q"] = {"c1", "c4"};
  EmbeddingSet q(EmbeddingKind::question, 2), good(EmbeddingKind::candidate, 2), bad(EmbeddingKind::candidate, 2);
  q.add("q", std::vector<float>{1, 0});
  for (const auto& c : t.candidates) {
    const bool rel = t.relevance["q"].count(c.candidate_id);
    good.add(c.candidate_id, rel ? std::vector<float>{1, 0} : std::vector<float>{0, 1});
    bad.add(c.candidate_id, rel ? std::vector<float>{-1, 0} : std::vector<float>{0, 1});
  }
  EXPECT_EQ(evaluate(t, q, good).map_score, 1.0);
  const auto worst = rank_all(t, q, bad);
  std::vector<std::string> ids;
  for (const auto& s : worst[0].ordered) ids.push_back(s.candidate_id);
  EXPECT_EQ(ids[4], "c1");
  EXPECT_EQ(ids[5], "c4");
  EXPECT_EQ(evaluate(t, q, bad).map_score, oracle::literal_map({ids}, {t.relevance["q"]}));
  EXPECT_DOUBLE_EQ(evaluate(t, q, bad).map_score, (1.0 / 5 + 2.0 / 6) / 2);
}

TEST(MeanReciprocalRank, Basics) {
  auto r = ranking(5);
  EXPECT_EQ(mean_reciprocal_rank({r}, {{"q", {"c4"}}}), 0.25);
  EXPECT_EQ(mean_reciprocal_rank({r}, {{"q", {"c1", "c5"}}}), 1.0);
}

TEST(MeanReciprocalRank, EqualsMapWhenSingleRelevant) {
  for (std::uint64_t seed = 40; seed < 60; ++seed) {
    const auto c = random_case(seed, 1);
    const auto rankings = rank_all(c.task, c.emb.questions, c.emb.candidates);
    const double mrr = mean_reciprocal_rank(rankings, c.task.relevance);
    EXPECT_EQ(mrr, mean_average_precision(rankings, c.task.relevance).map_score);
    EXPECT_NEAR(mrr, oracle::literal_mrr(c.ids, c.rel), 1e-15);
    for (const auto& rk : rankings) {
      const auto& rel = c.task.relevance.at(rk.question_id);
      std::size_t rank = 0;
      while (!rel.count(rk.ordered[rank].candidate_id)) ++rank;
      EXPECT_EQ(average_precision(rk, rel), 1.0 / double(rank + 1));
    }
  }
}

TEST(EvalJson, RoundsToSixDecimals) {
  EvalResult r;
  r.map_score = 2.0 / 3.0;
  r.per_question_ap["q"] = 2.0 / 3.0;
  r.num_questions = 1;
  r.num_dropped = 2;
  const auto j = eval_result_to_json(r);
  EXPECT_EQ(j["map"].get<double>(), 0.666667);
  EXPECT_EQ(j["num_dropped"], 2);
}

}  // namespace
}  // namespace lareqa
