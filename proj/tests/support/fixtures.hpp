#pragma once

// Synthetic XQuAD-shaped corpora. Every language carries the same paragraphs
// (parallel content); texts are prefixed with a "[xx] " marker so the toy
// encoder sees identical content keys across languages.

#include <string>
#include <vector>

#include "lareqa/corpus.hpp"
#include "lareqa/embed.hpp"
#include "lareqa/rng.hpp"

namespace fixture {

inline const std::vector<std::string>& xquad_languages() {
  static const std::vector<std::string> langs = {"ar", "de", "el", "en", "es", "hi",
                                                 "ru", "th", "tr", "vi", "zh"};
  return langs;
}

inline std::string random_word(lareqa::rng::Generator& gen, std::size_t len) {
  std::string w;
  for (std::size_t i = 0; i < len; ++i) w.push_back(static_cast<char>('a' + gen.below(26)));
  return w;
}

struct ParallelCorpusSpec {
  std::vector<std::string> languages = xquad_languages();
  std::size_t paragraphs = 20;
  std::size_t sentences_per_paragraph = 6;
  std::size_t questions_per_paragraph = 2;
  std::uint64_t seed = 1;
  // false: every language draws its own sentences (no translation twins)
  bool shared_content = true;
  // false: a question keeps only the answer word of its sentence and adds
  // fresh words, instead of repeating the sentence
  bool question_copies_sentence = true;
};

/// One ParagraphRecord per (language, paragraph); sentence boundaries are
/// passed as annotations.
inline std::vector<lareqa::ParagraphRecord> parallel_records(const ParallelCorpusSpec& spec) {
  lareqa::rng::Generator gen(spec.seed);
  auto draw_content = [&](lareqa::rng::Generator& g) {
    std::vector<std::vector<std::string>> content(spec.paragraphs);
    for (auto& para : content) {
      for (std::size_t s = 0; s < spec.sentences_per_paragraph; ++s) {
        std::string text;
        for (int w = 0; w < 4; ++w) {
          if (w) text += ' ';
          text += random_word(g, 5);
        }
        para.push_back(text);
      }
    }
    return content;
  };
  const auto shared = draw_content(gen);
  std::vector<std::vector<std::size_t>> targets(spec.paragraphs);
  for (auto& t : targets) {
    for (std::size_t q = 0; q < spec.questions_per_paragraph; ++q) {
      t.push_back(gen.below(spec.sentences_per_paragraph));
    }
  }

  std::vector<lareqa::ParagraphRecord> records;
  for (const auto& code : spec.languages) {
    const lareqa::LanguageCode lang(code);
    lareqa::rng::Generator own_gen(lareqa::rng::mix(spec.seed, lareqa::rng::fnv1a(code)));
    const auto content = spec.shared_content ? shared : draw_content(own_gen);
    for (std::size_t p = 0; p < spec.paragraphs; ++p) {
      lareqa::ParagraphRecord rec;
      rec.language = lang;
      rec.boundary_source = lareqa::BoundarySource::inline_annotation;
      std::vector<std::size_t> starts;
      for (std::size_t s = 0; s < spec.sentences_per_paragraph; ++s) {
        if (s) rec.context += ' ';
        starts.push_back(rec.context.size());
        rec.context += "[" + code + "] " + content[p][s] + ".";
        rec.sentence_boundaries.push_back({starts.back(), rec.context.size()});
      }
      for (std::size_t q = 0; q < spec.questions_per_paragraph; ++q) {
        const std::size_t s = targets[p][q];
        lareqa::QaEntry qa;
        qa.qas_id = "p" + std::to_string(p) + "q" + std::to_string(q);
        qa.question = "[" + code + "] " + content[p][s];
        if (!spec.question_copies_sentence) {
          qa.question = "[" + code + "] " + content[p][s].substr(0, 5);
          for (int w = 0; w < 3; ++w) qa.question += " " + random_word(own_gen, 5);
        }
        // answer: the first content word of the target sentence
        const std::size_t word_start = starts[s] + code.size() + 3;
        qa.answers.push_back({content[p][s].substr(0, 5), word_start});
        rec.qas.push_back(std::move(qa));
      }
      records.push_back(std::move(rec));
    }
  }
  return records;
}

inline lareqa::RetrievalTask parallel_task(const ParallelCorpusSpec& spec) {
  return lareqa::build_retrieval_task(parallel_records(spec));
}

/// Random unit vector, components uniform in [-1, 1) before normalization.
inline std::vector<float> random_unit(lareqa::rng::Generator& gen, std::size_t dim) {
  std::vector<float> v(dim);
  for (auto& x : v) x = static_cast<float>(2.0 * gen.uniform() - 1.0);
  return lareqa::normalize(std::span<const float>(v));
}

struct TaskEmbeddings {
  lareqa::EmbeddingSet questions;
  lareqa::EmbeddingSet candidates;
};

/// Independent random vectors for every question and candidate of a task.
inline TaskEmbeddings random_embeddings(const lareqa::RetrievalTask& task, std::size_t dim,
                                        std::uint64_t seed) {
  lareqa::rng::Generator gen(seed);
  TaskEmbeddings out{lareqa::EmbeddingSet(lareqa::EmbeddingKind::question, dim),
                     lareqa::EmbeddingSet(lareqa::EmbeddingKind::candidate, dim)};
  for (const auto& q : task.questions) out.questions.add(q.question_id, random_unit(gen, dim));
  for (const auto& c : task.candidates) out.candidates.add(c.candidate_id, random_unit(gen, dim));
  return out;
}

}  // namespace fixture
