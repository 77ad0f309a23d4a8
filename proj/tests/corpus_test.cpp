#include <gtest/gtest.h>

#include <algorithm>

#include "lareqa/corpus.hpp"
#include "support/fixtures.hpp"

namespace lareqa {
namespace {

using Spans = std::vector<SentenceSpan>;

TEST(SegmentText, TwoTerminatedSentences) {
  EXPECT_EQ(segment_text("A. B!"), (Spans{{0, 2}, {3, 5}}));
}

TEST(SegmentText, NoTerminatorIsOneSentence) {
  EXPECT_EQ(segment_text("No terminator"), (Spans{{0, 13}}));
}

TEST(SegmentText, TrailingFragmentFormsFinalSentence) {
  EXPECT_EQ(segment_text("X? Y. Z"), (Spans{{0, 2}, {3, 5}, {6, 7}}));
}

TEST(SegmentText, TerminatorWithoutFollowingSpaceDoesNotSplit) {
  EXPECT_EQ(segment_text("Version 3.5 shipped. Done"), (Spans{{0, 20}, {21, 25}}));
}

TEST(SegmentText, SkipsLeadingAndTrailingWhitespace) {
  EXPECT_EQ(segment_text("  Hi there.  Bye  "), (Spans{{2, 11}, {13, 16}}));
  EXPECT_TRUE(segment_text("   ").empty());
}

TEST(SegmentText, FullWidthTerminatorsSplitWithoutSpaces) {
  // offsets are code points, not bytes
  EXPECT_EQ(segment_text("你好。再见！谢谢"), (Spans{{0, 3}, {3, 6}, {6, 8}}));
}

TEST(ParseSquad, EmptyDataGivesNoRecords) {
  EXPECT_TRUE(parse_squad_json(R"({"data": []})", LanguageCode("en")).empty());
}

TEST(ParseSquad, RuleSegmentationWhenNoAnnotation) {
  const auto recs = parse_squad_json(
      R"({"data":[{"paragraphs":[{"context":"Alpha one. Beta two.","qas":[
          {"id":"q1","question":"Which?","answers":[{"text":"two","answer_start":16}]}]}]}]})",
      LanguageCode("en"));
  ASSERT_EQ(recs.size(), 1u);
  EXPECT_EQ(recs[0].boundary_source, BoundarySource::rule);
  EXPECT_EQ(recs[0].sentence_boundaries, (Spans{{0, 10}, {11, 20}}));
  ASSERT_EQ(recs[0].qas.size(), 1u);
  EXPECT_EQ(recs[0].qas[0].answers[0].answer_start, 16u);
}

TEST(ParseSquad, SidecarBoundariesAreUsedVerbatim) {
  const auto sidecar = parse_boundary_sidecar("[[[0, 4], [5, 20]]]");
  const auto recs = parse_squad_json(
      R"({"data":[{"paragraphs":[{"context":"Alpha one. Beta two.","qas":[]}]}]})",
      LanguageCode("en"), sidecar);
  EXPECT_EQ(recs[0].boundary_source, BoundarySource::sidecar);
  EXPECT_EQ(recs[0].sentence_boundaries, (Spans{{0, 4}, {5, 20}}));
}

TEST(ParseSquad, InlineSentenceBreaks) {
  const auto recs = parse_squad_json(
      R"({"data":[{"paragraphs":[{"context":"Alpha one. Beta two.","sentence_breaks":[[0,20]],"qas":[]}]}]})",
      LanguageCode("en"));
  EXPECT_EQ(recs[0].boundary_source, BoundarySource::inline_annotation);
  EXPECT_EQ(recs[0].sentence_boundaries, (Spans{{0, 20}}));
}

TEST(ParseSquad, OffsetsCountCodePoints) {
  // "Ü" and "ö" are two bytes each in UTF-8.
  const auto recs = parse_squad_json(
      R"({"data":[{"paragraphs":[{"context":"Über alles. Schön hier.","qas":[
          {"id":"q","question":"?","answers":[{"text":"Schön","answer_start":12}]}]}]}]})",
      LanguageCode("de"));
  EXPECT_EQ(recs[0].sentence_boundaries, (Spans{{0, 11}, {12, 23}}));
}

TEST(ParseSquad, AnswerStartPastEndIsValidationError) {
  try {
    parse_squad_json(R"({"data":[{"paragraphs":[{"context":"Short.","qas":[
        {"id":"qx7","question":"?","answers":[{"text":"far","answer_start":40}]}]}]}]})",
                     LanguageCode("en"));
    FAIL() << "expected ValidationError";
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("qx7"), std::string::npos);
  }
}

TEST(ParseSquad, MalformedJsonIsParseError) {
  EXPECT_THROW(parse_squad_json("{\"data\": [", LanguageCode("en")), ParseError);
}

TEST(ParseSquad, StructuralErrorNamesParagraphIndex) {
  try {
    parse_squad_json(R"({"data":[{"paragraphs":[{"context":"A.","qas":[]},{"qas":[]}]}]})",
                     LanguageCode("en"));
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("paragraph 1"), std::string::npos);
  }
}

TEST(ParseSquad, SidecarCountMismatchIsRejected) {
  const auto sidecar = parse_boundary_sidecar("[[[0, 2]], [[0, 2]]]");
  EXPECT_THROW(parse_squad_json(R"({"data":[{"paragraphs":[{"context":"A.","qas":[]}]}]})",
                                LanguageCode("en"), sidecar),
               ValidationError);
}

TEST(ParseSquad, OverlappingSidecarBoundariesAreRejected) {
  const auto sidecar = parse_boundary_sidecar("[[[0, 5], [3, 8]]]");
  EXPECT_THROW(parse_squad_json(R"({"data":[{"paragraphs":[{"context":"Abc def gh.","qas":[]}]}]})",
                                LanguageCode("en"), sidecar),
               ValidationError);
}

ParagraphRecord record(const std::string& lang, const std::string& context,
                       std::vector<QaEntry> qas, Spans spans = {}) {
  ParagraphRecord r;
  r.language = LanguageCode(lang);
  r.context = context;
  r.sentence_boundaries = spans.empty() ? segment_text(context) : spans;
  r.qas = std::move(qas);
  return r;
}

TEST(BuildTask, SingleQuestionHasOneRelevantCandidate) {
  const auto task = build_retrieval_task(
      {record("en", "Alpha one. Beta two.", {{"q1", "Which?", {{"two", 16}}}})});
  ASSERT_EQ(task.questions.size(), 1u);
  EXPECT_EQ(task.questions[0].question_id, "q1_en");
  EXPECT_EQ(task.candidates.size(), 2u);
  EXPECT_EQ(task.relevant("q1_en"), (std::set<std::string>{"en-p00000-s001"}));
}

TEST(BuildTask, SharedQasIdLinksAnswersAcrossLanguages) {
  // en answer "two" sits in sentence 1, de answer "drei" in sentence 0.
  const auto task = build_retrieval_task({
      record("en", "Alpha one. Beta two.", {{"q1", "Which?", {{"two", 16}}}}),
      record("de", "Gamma drei. Delta vier. Eps.", {{"q1", "Welche?", {{"drei", 6}}}}),
  });
  const std::set<std::string> expected{"de-p00000-s000", "en-p00000-s001"};
  EXPECT_EQ(task.relevant("q1_en"), expected);
  EXPECT_EQ(task.relevant("q1_de"), expected);
  EXPECT_EQ(task.candidates.size(), 5u);
  EXPECT_EQ(task.languages.size(), 2u);
}

TEST(BuildTask, QasIdInOneLanguageOnlyIsAllowed) {
  const auto task = build_retrieval_task({
      record("en", "Alpha one. Beta two.", {{"q1", "?", {{"one", 6}}}, {"q2", "?", {{"two", 16}}}}),
      record("de", "Gamma drei.", {{"q1", "?", {{"drei", 6}}}}),
  });
  EXPECT_EQ(task.relevant("q2_en").size(), 1u);
  EXPECT_EQ(task.relevant("q1_en").size(), 2u);
}

TEST(BuildTask, SpanCrossingBoundaryWarnsAndUsesMaximalOverlap) {
  // "one. Beta two" starts in sentence 0 but mostly overlaps sentence 1.
  const auto task = build_retrieval_task(
      {record("en", "Alpha one. Beta two.", {{"q1", "?", {{"one. Beta two", 6}}}})});
  EXPECT_EQ(task.relevant("q1_en"), (std::set<std::string>{"en-p00000-s001"}));
  ASSERT_EQ(task.meta.warnings.size(), 1u);
  EXPECT_NE(task.meta.warnings[0].find("crosses"), std::string::npos);
}

TEST(BuildTask, WhitespaceOnlySentenceIsRejected) {
  EXPECT_THROW(build_retrieval_task({record("en", "Alpha.   Beta.", {}, {{0, 6}, {6, 8}, {9, 14}})}),
               ValidationError);
}

TEST(BuildTask, DuplicateQuestionInOneLanguageIsRejected) {
  EXPECT_THROW(build_retrieval_task({record("en", "A b. C d.", {{"q", "?", {{"b", 2}}}}),
                                     record("en", "E f.", {{"q", "?", {{"f", 2}}}})}),
               ValidationError);
}

TEST(BuildTask, RecordsSegmentationSource) {
  auto rec = record("en", "A b. C d.", {});
  rec.boundary_source = BoundarySource::sidecar;
  const auto task = build_retrieval_task({rec, record("de", "E f.", {})});
  EXPECT_EQ(task.meta.segmentation.at(LanguageCode("en")), "sidecar");
  EXPECT_EQ(task.meta.segmentation.at(LanguageCode("de")), "rule");
}

TEST(BuildTask, RepeatedSentenceTextIsNotDeduplicated) {
  const auto task = build_retrieval_task({record("en", "Same. Same.", {}), record("en", "Same.", {})});
  EXPECT_EQ(task.candidates.size(), 3u);
}

class ParallelFixture : public ::testing::Test {
 protected:
  fixture::ParallelCorpusSpec spec{{"de", "en", "zh"}, 5, 4, 2, 9};
  std::vector<ParagraphRecord> records = fixture::parallel_records(spec);
  RetrievalTask task = build_retrieval_task(records);
};

TEST_F(ParallelFixture, PoolTotality) {
  std::size_t sentences = 0;
  for (const auto& r : records) sentences += r.sentence_boundaries.size();
  EXPECT_EQ(task.candidates.size(), sentences);
}

TEST_F(ParallelFixture, QuestionsSharingQasIdShareRelevance) {
  for (const auto& a : task.questions) {
    EXPECT_EQ(task.relevant(a.question_id).size(), spec.languages.size());
    for (const auto& b : task.questions) {
      if (a.qas_id == b.qas_id) EXPECT_EQ(task.relevant(a.question_id), task.relevant(b.question_id));
    }
  }
}

TEST_F(ParallelFixture, RelevantSentenceContainsAnswerStart) {
  std::map<std::string, std::pair<std::size_t, std::size_t>> span_of;
  std::map<LanguageCode, std::size_t> ordinal;
  for (const auto& r : records) {
    const auto p = ordinal[r.language]++;
    for (std::size_t s = 0; s < r.sentence_boundaries.size(); ++s) {
      span_of[make_candidate_id(r.language, p, s)] = {r.sentence_boundaries[s].start,
                                                      r.sentence_boundaries[s].end};
    }
  }
  ordinal.clear();
  for (const auto& r : records) {
    const auto p = ordinal[r.language]++;
    for (const auto& qa : r.qas) {
      const auto& rel = task.relevant(make_question_id(qa.qas_id, r.language));
      const std::string prefix = r.language.str() + "-p" + std::string(5 - std::to_string(p).size(), '0') +
                                 std::to_string(p);
      auto own = std::find_if(rel.begin(), rel.end(),
                              [&](const std::string& id) { return id.rfind(prefix, 0) == 0; });
      ASSERT_NE(own, rel.end());
      const auto [lo, hi] = span_of[*own];
      EXPECT_LE(lo, qa.answers[0].answer_start);
      EXPECT_LT(qa.answers[0].answer_start, hi);
    }
  }
}

TEST_F(ParallelFixture, SerializationIsDeterministicAndRoundTrips) {
  const auto again = build_retrieval_task(fixture::parallel_records(spec));
  EXPECT_EQ(serialize_task(task), serialize_task(again));
  EXPECT_EQ(serialize_task(task_from_json(task_to_json(task))), serialize_task(task));
}

TEST_F(ParallelFixture, RestrictWithIdentityKeepsTask) {
  const auto r = restrict_pool(task, [](const Candidate&) { return true; });
  EXPECT_EQ(r.dropped, 0u);
  EXPECT_EQ(serialize_task(r.task), serialize_task(task));
}

TEST_F(ParallelFixture, RestrictWithAnnihilatorDropsEverything) {
  const auto r = restrict_pool(task, [](const Candidate&) { return false; });
  EXPECT_TRUE(r.task.candidates.empty());
  EXPECT_TRUE(r.task.questions.empty());
  EXPECT_EQ(r.dropped, task.questions.size());
  EXPECT_EQ(r.task.meta.dropped_questions, task.questions.size());
}

TEST_F(ParallelFixture, RestrictToLanguageIntersectsRelevance) {
  const LanguageCode en("en");
  const auto r = restrict_pool(task, [&](const Candidate& c) { return c.language == en; });
  EXPECT_EQ(r.task.candidates.size(), spec.paragraphs * spec.sentences_per_paragraph);
  EXPECT_EQ(r.dropped, 0u);
  for (const auto& q : r.task.questions) EXPECT_EQ(r.task.relevant(q.question_id).size(), 1u);
}

TEST_F(ParallelFixture, TaskStatsCountsPerLanguage) {
  const auto stats = task_stats(task);
  ASSERT_EQ(stats.size(), 3u);
  for (const auto& [lang, s] : stats) {
    EXPECT_EQ(s.questions, spec.paragraphs * spec.questions_per_paragraph);
    EXPECT_EQ(s.candidates, spec.paragraphs * spec.sentences_per_paragraph);
  }
}

TEST(TaskStats, EmptyTaskGivesEmptyMap) { EXPECT_TRUE(task_stats(RetrievalTask{}).empty()); }

TEST(TaskJson, UnknownRelevantCandidateIsRejected) {
  auto j = task_to_json(build_retrieval_task({record("en", "A b.", {{"q", "?", {{"b", 2}}}})}));
  j["relevance"]["q_en"] = {"nope"};
  EXPECT_THROW(task_from_json(j), ValidationError);
}

TEST(LanguageCodeType, RejectsUppercaseAndEmpty) {
  EXPECT_THROW(LanguageCode("EN"), ValidationError);
  EXPECT_THROW(LanguageCode(""), ValidationError);
}

}  // namespace
}  // namespace lareqa
