#pragma once

#include <algorithm>
#include <compare>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "lareqa/error.hpp"
#include "lareqa/io.hpp"
#include "lareqa/utf8.hpp"

namespace lareqa {

/// Lowercase language identifier such as "en" or "zh".
class LanguageCode {
 public:
  LanguageCode() = default;
  explicit LanguageCode(std::string code) : code_(std::move(code)) {
    if (code_.empty()) throw ValidationError("empty language code");
    for (char c : code_) {
      if (c < 'a' || c > 'z') {
        throw ValidationError("language code must be lowercase ASCII letters: '" +
                              code_ + "'");
      }
    }
  }

  const std::string& str() const { return code_; }
  auto operator<=>(const LanguageCode&) const = default;

 private:
  std::string code_;
};

/// Half-open [start, end) range of Unicode scalar values within a paragraph.
struct SentenceSpan {
  std::size_t start = 0;
  std::size_t end = 0;
  auto operator<=>(const SentenceSpan&) const = default;
};

struct AnswerSpan {
  std::string text;
  std::size_t answer_start = 0;
};

struct QaEntry {
  std::string qas_id;
  std::string question;
  std::vector<AnswerSpan> answers;
};

enum class BoundarySource { sidecar, inline_annotation, rule };

inline std::string_view to_string(BoundarySource s) {
  switch (s) {
    case BoundarySource::sidecar: return "sidecar";
    case BoundarySource::inline_annotation: return "inline";
    case BoundarySource::rule: return "rule";
  }
  return "unknown";
}

struct ParagraphRecord {
  std::string context;
  std::vector<SentenceSpan> sentence_boundaries;
  std::vector<QaEntry> qas;
  LanguageCode language;
  BoundarySource boundary_source = BoundarySource::rule;
};

struct Question {
  std::string question_id;
  std::string qas_id;
  std::string text;
  LanguageCode language;
};

struct Candidate {
  std::string candidate_id;
  std::string sentence;
  std::string context;
  LanguageCode language;
};

struct TaskMeta {
  /// How sentence boundaries were obtained, per language.
  std::map<LanguageCode, std::string> segmentation;
  std::vector<std::string> warnings;
  /// Populated when texts were replaced by translations: id -> source language.
  std::map<std::string, LanguageCode> original_languages;
  std::size_t dropped_questions = 0;
};

struct RetrievalTask {
  std::vector<Question> questions;
  std::vector<Candidate> candidates;
  std::map<std::string, std::set<std::string>> relevance;
  std::set<LanguageCode> languages;
  TaskMeta meta;

  const std::set<std::string>& relevant(const std::string& question_id) const {
    auto it = relevance.find(question_id);
    if (it == relevance.end()) {
      throw ValidationError("no relevance entry for question " + question_id);
    }
    return it->second;
  }

  /// Language used when reporting; differs from `language` after translation.
  LanguageCode reporting_language(const std::string& id, const LanguageCode& fallback) const {
    auto it = meta.original_languages.find(id);
    return it == meta.original_languages.end() ? fallback : it->second;
  }
  LanguageCode reporting_language(const Question& q) const {
    return reporting_language(q.question_id, q.language);
  }
  LanguageCode reporting_language(const Candidate& c) const {
    return reporting_language(c.candidate_id, c.language);
  }
};

// ---------------------------------------------------------------------------
// Segmentation

/// Rule-based fallback sentence splitter. ASCII terminators (. ! ?) end a
/// sentence when followed by whitespace or end of text; the full-width forms
/// (。？！) end one unconditionally since CJK text has no inter-sentence spaces.
inline std::vector<SentenceSpan> segment_text(std::u32string_view text) {
  std::vector<SentenceSpan> out;
  const std::size_t n = text.size();
  std::size_t i = 0;
  while (i < n) {
    while (i < n && utf8::is_space(text[i])) ++i;
    if (i == n) break;
    const std::size_t start = i;
    std::size_t end = n;
    for (; i < n; ++i) {
      const char32_t c = text[i];
      const bool ascii_term = c == U'.' || c == U'!' || c == U'?';
      const bool wide_term = c == U'。' || c == U'？' || c == U'！';
      if (wide_term) {
        // absorb runs like "？！"
        while (i + 1 < n && (text[i + 1] == U'。' || text[i + 1] == U'？' ||
                             text[i + 1] == U'！')) {
          ++i;
        }
        end = i + 1;
        break;
      }
      if (ascii_term && (i + 1 == n || utf8::is_space(text[i + 1]))) {
        end = i + 1;
        break;
      }
    }
    if (end == n) {
      while (end > start && utf8::is_space(text[end - 1])) --end;
    }
    out.push_back({start, end});
    i = end;
  }
  return out;
}

inline std::vector<SentenceSpan> segment_text(std::string_view utf8_text) {
  return segment_text(utf8::decode(utf8_text));
}

// ---------------------------------------------------------------------------
// Parsing

using BoundarySidecar = std::vector<std::vector<SentenceSpan>>;

namespace detail {

inline std::vector<SentenceSpan> spans_from_json(const nlohmann::json& j,
                                                 const std::string& where) {
  if (!j.is_array()) throw ParseError(where + ": boundaries must be a list");
  std::vector<SentenceSpan> spans;
  spans.reserve(j.size());
  for (const auto& pair : j) {
    if (!pair.is_array() || pair.size() != 2 || !pair[0].is_number_unsigned() ||
        !pair[1].is_number_unsigned()) {
      throw ParseError(where + ": each boundary must be [start, end] with non-negative integers");
    }
    spans.push_back({pair[0].get<std::size_t>(), pair[1].get<std::size_t>()});
  }
  return spans;
}

inline void check_boundaries(const std::vector<SentenceSpan>& spans, std::size_t length,
                             const std::string& where) {
  std::size_t prev_end = 0;
  for (std::size_t k = 0; k < spans.size(); ++k) {
    const auto& s = spans[k];
    if (s.start >= s.end || s.end > length || (k > 0 && s.start < prev_end)) {
      throw ValidationError(where + ": sentence boundary " + std::to_string(k) + " [" +
                            std::to_string(s.start) + ", " + std::to_string(s.end) +
                            ") is empty, unsorted, overlapping or past the context length " +
                            std::to_string(length));
    }
    prev_end = s.end;
  }
}

}  // namespace detail

/// Sidecar file: one entry per paragraph, each a list of [start, end] pairs.
inline BoundarySidecar parse_boundary_sidecar(std::string_view raw) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(raw);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed boundary sidecar JSON: ") + e.what());
  }
  if (!j.is_array()) throw ParseError("boundary sidecar must be a JSON list");
  BoundarySidecar out;
  out.reserve(j.size());
  for (std::size_t p = 0; p < j.size(); ++p) {
    out.push_back(detail::spans_from_json(j[p], "sidecar paragraph " + std::to_string(p)));
  }
  return out;
}

/// Parses a SQuAD v1.1 file. Boundaries come from the sidecar when given,
/// otherwise from a paragraph-level "sentence_breaks" annotation, otherwise
/// from segment_text.
inline std::vector<ParagraphRecord> parse_squad_json(
    std::string_view raw, const LanguageCode& language,
    const std::optional<BoundarySidecar>& sidecar = std::nullopt) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(raw);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed SQuAD JSON: ") + e.what());
  }
  if (!doc.is_object() || !doc.contains("data") || !doc["data"].is_array()) {
    throw ParseError("SQuAD JSON must be an object with a 'data' list");
  }

  std::vector<ParagraphRecord> records;
  std::size_t paragraph_index = 0;
  for (const auto& article : doc["data"]) {
    if (!article.is_object() || !article.contains("paragraphs") ||
        !article["paragraphs"].is_array()) {
      throw ParseError("paragraph " + std::to_string(paragraph_index) +
                       ": article without a 'paragraphs' list");
    }
    for (const auto& para : article["paragraphs"]) {
      const std::string where = "paragraph " + std::to_string(paragraph_index);
      if (!para.is_object() || !para.contains("context") || !para["context"].is_string() ||
          !para.contains("qas") || !para["qas"].is_array()) {
        throw ParseError(where + ": expected 'context' string and 'qas' list");
      }
      ParagraphRecord rec;
      rec.language = language;
      rec.context = para["context"].get<std::string>();
      const std::u32string context = utf8::decode(rec.context);

      if (sidecar) {
        if (paragraph_index >= sidecar->size()) {
          throw ValidationError("boundary sidecar has " + std::to_string(sidecar->size()) +
                                " entries but the file has more paragraphs");
        }
        rec.sentence_boundaries = (*sidecar)[paragraph_index];
        rec.boundary_source = BoundarySource::sidecar;
      } else if (para.contains("sentence_breaks")) {
        rec.sentence_boundaries = detail::spans_from_json(para["sentence_breaks"], where);
        rec.boundary_source = BoundarySource::inline_annotation;
      } else {
        rec.sentence_boundaries = segment_text(std::u32string_view(context));
        rec.boundary_source = BoundarySource::rule;
      }
      detail::check_boundaries(rec.sentence_boundaries, context.size(), where);

      for (const auto& qa : para["qas"]) {
        if (!qa.is_object() || !qa.contains("id") || !qa["id"].is_string() ||
            !qa.contains("question") || !qa["question"].is_string() ||
            !qa.contains("answers") || !qa["answers"].is_array()) {
          throw ParseError(where + ": qas entry needs 'id', 'question' and 'answers'");
        }
        QaEntry entry;
        entry.qas_id = qa["id"].get<std::string>();
        entry.question = qa["question"].get<std::string>();
        for (const auto& ans : qa["answers"]) {
          if (!ans.is_object() || !ans.contains("text") || !ans["text"].is_string() ||
              !ans.contains("answer_start") || !ans["answer_start"].is_number_integer()) {
            throw ParseError(where + ": answer of qas_id " + entry.qas_id +
                             " needs 'text' and integer 'answer_start'");
          }
          const auto start = ans["answer_start"].get<long long>();
          const std::u32string text = utf8::decode(ans["text"].get<std::string>());
          if (start < 0 || static_cast<std::size_t>(start) + text.size() > context.size()) {
            throw ValidationError("answer_start " + std::to_string(start) + " of qas_id " +
                                  entry.qas_id + " is out of range for its context (" +
                                  std::to_string(context.size()) + " characters)");
          }
          if (context.compare(static_cast<std::size_t>(start), text.size(), text) != 0) {
            throw ValidationError("answer text of qas_id " + entry.qas_id +
                                  " does not match the context at answer_start " +
                                  std::to_string(start));
          }
          entry.answers.push_back({ans["text"].get<std::string>(),
                                   static_cast<std::size_t>(start)});
        }
        rec.qas.push_back(std::move(entry));
      }
      records.push_back(std::move(rec));
      ++paragraph_index;
    }
  }
  if (sidecar && sidecar->size() != paragraph_index) {
    throw ValidationError("boundary sidecar has " + std::to_string(sidecar->size()) +
                          " entries for " + std::to_string(paragraph_index) + " paragraphs");
  }
  return records;
}

inline std::vector<ParagraphRecord> load_squad_file(
    const std::filesystem::path& path, const LanguageCode& language,
    const std::optional<std::filesystem::path>& sidecar_path = std::nullopt) {
  std::optional<BoundarySidecar> sidecar;
  if (sidecar_path) sidecar = parse_boundary_sidecar(io::read_file(*sidecar_path));
  try {
    return parse_squad_json(io::read_file(path), language, sidecar);
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  } catch (const ValidationError& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Task construction

inline std::string make_candidate_id(const LanguageCode& lang, std::size_t paragraph,
                                     std::size_t sentence) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s-p%05zu-s%03zu", lang.str().c_str(), paragraph, sentence);
  return buf;
}

inline std::string make_question_id(const std::string& qas_id, const LanguageCode& lang) {
  return qas_id + "_" + lang.str();
}

inline RetrievalTask build_retrieval_task(const std::vector<ParagraphRecord>& records) {
  RetrievalTask task;
  std::map<LanguageCode, std::size_t> paragraph_ordinal;
  std::map<std::string, std::set<std::string>> targets_by_qas;
  std::set<std::string> seen_questions;

  for (const auto& rec : records) {
    task.languages.insert(rec.language);
    const auto source = std::string(to_string(rec.boundary_source));
    auto [seg, inserted] = task.meta.segmentation.emplace(rec.language, source);
    if (!inserted && seg->second != source) seg->second = "mixed";

    const std::size_t para = paragraph_ordinal[rec.language]++;
    const std::u32string context = utf8::decode(rec.context);
    detail::check_boundaries(rec.sentence_boundaries, context.size(),
                             rec.language.str() + " paragraph " + std::to_string(para));

    std::vector<std::string> ids;
    ids.reserve(rec.sentence_boundaries.size());
    for (std::size_t s = 0; s < rec.sentence_boundaries.size(); ++s) {
      const auto& span = rec.sentence_boundaries[s];
      std::u32string_view sentence(context.data() + span.start, span.end - span.start);
      if (std::all_of(sentence.begin(), sentence.end(), utf8::is_space)) {
        throw ValidationError("empty sentence " + std::to_string(s) + " in " +
                              rec.language.str() + " paragraph " + std::to_string(para));
      }
      Candidate c;
      c.candidate_id = make_candidate_id(rec.language, para, s);
      c.sentence = utf8::encode(sentence);
      c.context = rec.context;
      c.language = rec.language;
      ids.push_back(c.candidate_id);
      task.candidates.push_back(std::move(c));
    }

    for (const auto& qa : rec.qas) {
      if (qa.answers.empty()) {
        throw ValidationError("qas_id " + qa.qas_id + " (" + rec.language.str() +
                              ") has no answers");
      }
      Question q{make_question_id(qa.qas_id, rec.language), qa.qas_id, qa.question,
                 rec.language};
      if (!seen_questions.insert(q.question_id).second) {
        throw ValidationError("duplicate question " + q.question_id +
                              " (qas_id repeated within one language)");
      }

      // The first listed answer is the target span.
      const AnswerSpan& answer = qa.answers.front();
      const std::size_t a_begin = answer.answer_start;
      const std::size_t a_end = a_begin + utf8::decode(answer.text).size();
      const auto& spans = rec.sentence_boundaries;
      auto containing = std::find_if(spans.begin(), spans.end(), [&](const SentenceSpan& s) {
        return s.start <= a_begin && a_begin < s.end;
      });
      if (containing == spans.end()) {
        throw ValidationError("answer_start " + std::to_string(a_begin) + " of qas_id " +
                              qa.qas_id + " (" + rec.language.str() +
                              ") is not covered by any sentence boundary");
      }
      std::size_t chosen = static_cast<std::size_t>(containing - spans.begin());
      if (a_end > containing->end) {
        std::size_t best_overlap = 0;
        for (std::size_t s = 0; s < spans.size(); ++s) {
          const std::size_t lo = std::max(spans[s].start, a_begin);
          const std::size_t hi = std::min(spans[s].end, a_end);
          const std::size_t overlap = hi > lo ? hi - lo : 0;
          if (overlap > best_overlap) {
            best_overlap = overlap;
            chosen = s;
          }
        }
        task.meta.warnings.push_back("answer span of qas_id " + qa.qas_id + " (" +
                                     rec.language.str() +
                                     ") crosses a sentence boundary; assigned to " +
                                     ids[chosen] + " by maximal overlap");
      }
      targets_by_qas[qa.qas_id].insert(ids[chosen]);
      task.questions.push_back(std::move(q));
    }
  }

  for (const auto& q : task.questions) task.relevance[q.question_id] = targets_by_qas[q.qas_id];
  return task;
}

struct RestrictResult {
  RetrievalTask task;
  std::size_t dropped = 0;
};

/// Filters the candidate pool; questions left without a relevant candidate are dropped.
inline RestrictResult restrict_pool(const RetrievalTask& task,
                                    const std::function<bool(const Candidate&)>& keep) {
  RestrictResult out;
  out.task.languages = task.languages;
  out.task.meta = task.meta;
  std::set<std::string> kept;
  for (const auto& c : task.candidates) {
    if (keep(c)) {
      kept.insert(c.candidate_id);
      out.task.candidates.push_back(c);
    }
  }
  for (const auto& q : task.questions) {
    std::set<std::string> rel;
    for (const auto& id : task.relevant(q.question_id)) {
      if (kept.count(id)) rel.insert(id);
    }
    if (rel.empty()) {
      ++out.dropped;
      continue;
    }
    out.task.relevance.emplace(q.question_id, std::move(rel));
    out.task.questions.push_back(q);
  }
  out.task.meta.dropped_questions += out.dropped;
  return out;
}

/// Keeps only the questions satisfying `keep`; the pool is untouched.
inline RetrievalTask restrict_questions(const RetrievalTask& task,
                                        const std::function<bool(const Question&)>& keep) {
  RetrievalTask out;
  out.languages = task.languages;
  out.meta = task.meta;
  out.candidates = task.candidates;
  for (const auto& q : task.questions) {
    if (!keep(q)) continue;
    out.questions.push_back(q);
    out.relevance.emplace(q.question_id, task.relevant(q.question_id));
  }
  return out;
}

struct LanguageStats {
  std::size_t questions = 0;
  std::size_t candidates = 0;
  auto operator<=>(const LanguageStats&) const = default;
};

inline std::map<LanguageCode, LanguageStats> task_stats(const RetrievalTask& task) {
  std::map<LanguageCode, LanguageStats> stats;
  for (const auto& lang : task.languages) stats[lang];
  for (const auto& q : task.questions) ++stats[q.language].questions;
  for (const auto& c : task.candidates) ++stats[c.language].candidates;
  return stats;
}

// ---------------------------------------------------------------------------
// Serialization

inline nlohmann::json task_to_json(const RetrievalTask& task) {
  using nlohmann::json;
  json questions = json::array();
  for (const auto& q : task.questions) {
    questions.push_back({{"question_id", q.question_id},
                         {"qas_id", q.qas_id},
                         {"text", q.text},
                         {"language", q.language.str()}});
  }
  json candidates = json::array();
  for (const auto& c : task.candidates) {
    candidates.push_back({{"candidate_id", c.candidate_id},
                          {"sentence", c.sentence},
                          {"context", c.context},
                          {"language", c.language.str()}});
  }
  json relevance = json::object();
  for (const auto& [qid, ids] : task.relevance) relevance[qid] = ids;
  json languages = json::array();
  for (const auto& l : task.languages) languages.push_back(l.str());
  json segmentation = json::object();
  for (const auto& [l, s] : task.meta.segmentation) segmentation[l.str()] = s;
  json original = json::object();
  for (const auto& [id, l] : task.meta.original_languages) original[id] = l.str();
  return {{"questions", std::move(questions)},
          {"candidates", std::move(candidates)},
          {"relevance", std::move(relevance)},
          {"languages", std::move(languages)},
          {"meta",
           {{"segmentation", std::move(segmentation)},
            {"warnings", task.meta.warnings},
            {"original_languages", std::move(original)},
            {"dropped_questions", task.meta.dropped_questions}}}};
}

inline RetrievalTask task_from_json(const nlohmann::json& j) {
  RetrievalTask task;
  try {
    for (const auto& l : j.at("languages")) task.languages.emplace(l.get<std::string>());
    for (const auto& q : j.at("questions")) {
      task.questions.push_back({q.at("question_id").get<std::string>(),
                                q.at("qas_id").get<std::string>(),
                                q.at("text").get<std::string>(),
                                LanguageCode(q.at("language").get<std::string>())});
    }
    for (const auto& c : j.at("candidates")) {
      task.candidates.push_back({c.at("candidate_id").get<std::string>(),
                                 c.at("sentence").get<std::string>(),
                                 c.at("context").get<std::string>(),
                                 LanguageCode(c.at("language").get<std::string>())});
    }
    for (const auto& [qid, ids] : j.at("relevance").items()) {
      task.relevance[qid] = ids.get<std::set<std::string>>();
    }
    const auto& meta = j.at("meta");
    for (const auto& [l, s] : meta.at("segmentation").items()) {
      task.meta.segmentation[LanguageCode(l)] = s.get<std::string>();
    }
    task.meta.warnings = meta.at("warnings").get<std::vector<std::string>>();
    for (const auto& [id, l] : meta.at("original_languages").items()) {
      task.meta.original_languages[id] = LanguageCode(l.get<std::string>());
    }
    task.meta.dropped_questions = meta.at("dropped_questions").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("invalid task JSON: ") + e.what());
  }
  std::set<std::string> pool;
  for (const auto& c : task.candidates) pool.insert(c.candidate_id);
  for (const auto& q : task.questions) {
    for (const auto& id : task.relevant(q.question_id)) {
      if (!pool.count(id)) {
        throw ValidationError("question " + q.question_id +
                              " references unknown candidate " + id);
      }
    }
  }
  return task;
}

inline std::string serialize_task(const RetrievalTask& task) {
  return task_to_json(task).dump(1) + "\n";
}

inline RetrievalTask load_task(const std::filesystem::path& path) {
  try {
    return task_from_json(nlohmann::json::parse(io::read_file(path)));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path.string() + ": malformed task JSON: " + e.what());
  }
}

}  // namespace lareqa
