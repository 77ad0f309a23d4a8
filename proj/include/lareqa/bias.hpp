#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "lareqa/corpus.hpp"
#include "lareqa/embed.hpp"
#include "lareqa/error.hpp"
#include "lareqa/metrics.hpp"
#include "lareqa/retrieval.hpp"
#include "lareqa/rng.hpp"

namespace lareqa {

enum class MatrixKind { map_matrix, distribution };

/// Rows are question languages, columns answer languages. Absent cells are
/// language pairs with no data.
struct LanguageMatrix {
  std::vector<LanguageCode> languages;
  std::vector<std::vector<std::optional<double>>> values;
  MatrixKind kind = MatrixKind::map_matrix;

  std::optional<double> at(std::size_t row, std::size_t col) const { return values[row][col]; }
};

/// Languages used for reporting: original languages when the task was translated.
inline std::vector<LanguageCode> reporting_languages(const RetrievalTask& task) {
  std::set<LanguageCode> langs;
  for (const auto& q : task.questions) langs.insert(task.reporting_language(q));
  for (const auto& c : task.candidates) langs.insert(task.reporting_language(c));
  if (langs.empty()) langs = task.languages;
  return {langs.begin(), langs.end()};
}

namespace detail {

inline std::size_t language_position(const std::vector<LanguageCode>& langs, const LanguageCode& l) {
  return static_cast<std::size_t>(std::lower_bound(langs.begin(), langs.end(), l) - langs.begin());
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Remove one target

enum class RemovalMode { same, rand };

inline std::string_view to_string(RemovalMode m) { return m == RemovalMode::same ? "same" : "rand"; }

struct RemoveOneHalf {
  RemovalMode mode = RemovalMode::same;
  double map = 0.0;
  std::size_t num_questions = 0;
  std::size_t skipped = 0;
  std::uint64_t seed = 0;
};

struct RemoveOneReport {
  double map_minus_rand = 0.0;
  double map_minus_same = 0.0;
  /// (rand - same) / rand; empty when map_minus_rand is zero.
  std::optional<double> pct_delta;
  std::uint64_t seed = 0;
  std::size_t skipped_rand = 0;
  std::size_t skipped_same = 0;
};

/// Per question, drops one relevant candidate from the pool and scores the
/// rest: either the question-language target, or a seeded uniform choice
/// among the other-language targets. Questions without a removable target
/// (or with a single target) are skipped and counted.
inline RemoveOneHalf remove_one_target(const RetrievalTask& task, const EmbeddingSet& questions,
                                       const EmbeddingSet& candidates, RemovalMode mode,
                                       std::uint64_t seed) {
  ScoringIndex index(task, questions, candidates);
  const std::size_t n = task.questions.size();
  std::vector<std::optional<double>> ap(n);
  index.for_each_question([&](std::size_t qi, std::span<const double> scores) {
    const auto targets = index.relevant_slots(qi);
    if (targets.size() < 2) return;
    const LanguageCode qlang = task.reporting_language(task.questions[qi]);
    std::vector<std::size_t> same, other;
    for (std::size_t t : targets) {
      (task.reporting_language(index.candidate(t)) == qlang ? same : other).push_back(t);
    }
    std::size_t removed;
    if (mode == RemovalMode::same) {
      if (same.size() != 1) return;
      removed = same.front();
    } else {
      if (other.empty()) return;
      rng::Generator gen(rng::mix(seed, qi));
      removed = other[gen.below(other.size())];
    }
    std::vector<std::size_t> kept;
    for (std::size_t t : targets) {
      if (t != removed) kept.push_back(t);
    }
    ap[qi] = average_precision_from_ranks(
        ranks_of(scores, kept, [removed](std::size_t j) { return j == removed; }));
  });

  RemoveOneHalf half;
  half.mode = mode;
  half.seed = seed;
  double sum = 0.0;
  for (const auto& a : ap) {
    if (a) {
      sum += *a;
      ++half.num_questions;
    } else {
      ++half.skipped;
    }
  }
  if (half.num_questions == 0) {
    throw ValidationError("remove-one-target (" + std::string(to_string(mode)) +
                          "): no question has a removable target");
  }
  half.map = sum / static_cast<double>(half.num_questions);
  return half;
}

inline RemoveOneReport remove_one_report(const RetrievalTask& task, const EmbeddingSet& questions,
                                         const EmbeddingSet& candidates, std::uint64_t seed) {
  const auto r = remove_one_target(task, questions, candidates, RemovalMode::rand, seed);
  const auto s = remove_one_target(task, questions, candidates, RemovalMode::same, seed);
  RemoveOneReport rep;
  rep.map_minus_rand = r.map;
  rep.map_minus_same = s.map;
  rep.seed = seed;
  rep.skipped_rand = r.skipped;
  rep.skipped_same = s.skipped;
  if (r.map > 0.0) rep.pct_delta = (r.map - s.map) / r.map;
  return rep;
}

/// Ordinal rank of each model by pct_delta, 1 = least same-language bias.
inline std::map<std::string, std::size_t> rank_by_pct_delta(
    const std::map<std::string, RemoveOneReport>& reports) {
  std::vector<std::pair<double, std::string>> order;
  for (const auto& [name, rep] : reports) {
    order.emplace_back(rep.pct_delta.value_or(0.0), name);
  }
  std::sort(order.begin(), order.end());
  std::map<std::string, std::size_t> ranks;
  for (std::size_t i = 0; i < order.size(); ++i) ranks[order[i].second] = i + 1;
  return ranks;
}

// ---------------------------------------------------------------------------
// Single-target matrix

/// Cell (ql, al): mean reciprocal rank of each al-language target when it is
/// the only relevant candidate left in the pool (the other targets removed).
inline LanguageMatrix single_target_matrix(const RetrievalTask& task, const EmbeddingSet& questions,
                                           const EmbeddingSet& candidates) {
  ScoringIndex index(task, questions, candidates);
  const auto langs = reporting_languages(task);
  const std::size_t L = langs.size();
  // Per question: (answer language position, reciprocal rank) pairs.
  std::vector<std::vector<std::pair<std::size_t, double>>> per_question(task.questions.size());
  index.for_each_question([&](std::size_t qi, std::span<const double> scores) {
    const auto targets = index.relevant_slots(qi);
    std::vector<char> is_target(scores.size(), 0);
    for (std::size_t t : targets) is_target[t] = 1;
    for (std::size_t t : targets) {
      const std::size_t only[] = {t};
      const auto r = ranks_of(scores, only, [&](std::size_t j) { return is_target[j] != 0; });
      const auto al = detail::language_position(langs, task.reporting_language(index.candidate(t)));
      per_question[qi].emplace_back(al, 1.0 / static_cast<double>(r.front()));
    }
  });

  std::vector<std::vector<double>> sum(L, std::vector<double>(L, 0.0));
  std::vector<std::vector<std::size_t>> count(L, std::vector<std::size_t>(L, 0));
  for (std::size_t qi = 0; qi < task.questions.size(); ++qi) {
    const auto ql = detail::language_position(langs, task.reporting_language(task.questions[qi]));
    for (const auto& [al, rr] : per_question[qi]) {
      sum[ql][al] += rr;
      ++count[ql][al];
    }
  }
  LanguageMatrix m{langs, std::vector<std::vector<std::optional<double>>>(L, std::vector<std::optional<double>>(L)),
                   MatrixKind::map_matrix};
  for (std::size_t r = 0; r < L; ++r) {
    for (std::size_t c = 0; c < L; ++c) {
      if (count[r][c] > 0) m.values[r][c] = sum[r][c] / static_cast<double>(count[r][c]);
    }
  }
  return m;
}

// ---------------------------------------------------------------------------
// Top-k language distribution

/// Row ql: average share of each answer language among the top-k candidates
/// retrieved for ql-language questions. Rows without questions are absent.
inline LanguageMatrix top_k_language_distribution(const RetrievalTask& task,
                                                  const EmbeddingSet& questions,
                                                  const EmbeddingSet& candidates,
                                                  std::size_t k = 100) {
  if (k == 0 || k > task.candidates.size()) {
    throw ValidationError("top-k distribution: k=" + std::to_string(k) + " but the pool has " +
                          std::to_string(task.candidates.size()) + " candidates");
  }
  ScoringIndex index(task, questions, candidates);
  const auto langs = reporting_languages(task);
  const std::size_t L = langs.size();
  std::vector<std::size_t> slot_lang(index.num_candidates());
  for (std::size_t s = 0; s < slot_lang.size(); ++s) {
    slot_lang[s] = detail::language_position(langs, task.reporting_language(index.candidate(s)));
  }
  std::vector<std::vector<std::size_t>> hist(task.questions.size(), std::vector<std::size_t>(L, 0));
  index.for_each_question([&](std::size_t qi, std::span<const double> scores) {
    for (std::size_t s : ranked_slots(scores, k)) ++hist[qi][slot_lang[s]];
  });

  std::vector<std::vector<double>> rows(L, std::vector<double>(L, 0.0));
  std::vector<std::size_t> nq(L, 0);
  for (std::size_t qi = 0; qi < task.questions.size(); ++qi) {
    const auto ql = detail::language_position(langs, task.reporting_language(task.questions[qi]));
    ++nq[ql];
    for (std::size_t c = 0; c < L; ++c) {
      rows[ql][c] += static_cast<double>(hist[qi][c]) / static_cast<double>(k);
    }
  }
  LanguageMatrix m{langs, std::vector<std::vector<std::optional<double>>>(L, std::vector<std::optional<double>>(L)),
                   MatrixKind::distribution};
  for (std::size_t r = 0; r < L; ++r) {
    if (nq[r] == 0) continue;
    double total = 0.0;
    for (double x : rows[r]) total += x;
    for (std::size_t c = 0; c < L; ++c) m.values[r][c] = rows[r][c] / total;
  }
  return m;
}

// ---------------------------------------------------------------------------
// Zero-shot (monolingual pool)

struct ZeroShotResult {
  std::map<LanguageCode, EvalResult> per_language;
  double average = 0.0;
};

/// Each language's questions retrieve only from that language's candidates.
inline ZeroShotResult zero_shot_eval(const RetrievalTask& task, const EmbeddingSet& questions,
                                     const EmbeddingSet& candidates) {
  ZeroShotResult out;
  std::set<LanguageCode> qlangs;
  for (const auto& q : task.questions) qlangs.insert(task.reporting_language(q));
  for (const auto& lang : qlangs) {
    const auto subset = restrict_questions(
        task, [&](const Question& q) { return task.reporting_language(q) == lang; });
    auto restricted = restrict_pool(
        subset, [&](const Candidate& c) { return task.reporting_language(c) == lang; });
    restricted.task.meta.dropped_questions = restricted.dropped;
    if (restricted.task.questions.empty()) {
      EvalResult empty;
      empty.num_dropped = restricted.dropped;
      out.per_language.emplace(lang, empty);
      continue;
    }
    out.per_language.emplace(lang, evaluate(restricted.task, questions, candidates));
  }
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& [lang, r] : out.per_language) {
    if (r.num_questions == 0) continue;
    sum += r.map_score;
    ++n;
  }
  out.average = n ? sum / static_cast<double>(n) : 0.0;
  return out;
}

// ---------------------------------------------------------------------------
// Summaries and output

inline double diagonal_mean(const LanguageMatrix& m) {
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < m.languages.size(); ++i) {
    if (m.values[i][i]) {
      sum += *m.values[i][i];
      ++n;
    }
  }
  return n ? sum / static_cast<double>(n) : 0.0;
}

inline double off_diagonal_mean(const LanguageMatrix& m) {
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < m.languages.size(); ++i) {
    for (std::size_t j = 0; j < m.languages.size(); ++j) {
      if (i != j && m.values[i][j]) {
        sum += *m.values[i][j];
        ++n;
      }
    }
  }
  return n ? sum / static_cast<double>(n) : 0.0;
}

/// Mean over rows of diagonal / row sum. 1/|L| for a uniform matrix, 1 for a
/// purely diagonal one.
inline double diagonal_share(const LanguageMatrix& m) {
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < m.languages.size(); ++i) {
    if (!m.values[i][i]) continue;
    double row = 0.0;
    for (const auto& v : m.values[i]) row += v.value_or(0.0);
    if (row <= 0.0) continue;
    sum += *m.values[i][i] / row;
    ++n;
  }
  return n ? sum / static_cast<double>(n) : 0.0;
}

inline std::string_view to_string(MatrixKind k) {
  return k == MatrixKind::map_matrix ? "map_matrix" : "distribution";
}

inline std::string matrix_to_csv(const LanguageMatrix& m) {
  std::ostringstream out;
  out << "question\\answer";
  for (const auto& l : m.languages) out << ',' << l.str();
  out << '\n';
  char buf[32];
  for (std::size_t r = 0; r < m.languages.size(); ++r) {
    out << m.languages[r].str();
    for (const auto& v : m.values[r]) {
      out << ',';
      if (v) {
        std::snprintf(buf, sizeof buf, "%.6f", *v);
        out << buf;
      }
    }
    out << '\n';
  }
  return out.str();
}

inline LanguageMatrix matrix_from_csv(std::string_view csv) {
  auto split = [](const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream in(line);
    while (std::getline(in, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    return cells;
  };
  std::istringstream in{std::string(csv)};
  std::string line;
  if (!std::getline(in, line)) throw ParseError("empty matrix CSV");
  auto header = split(line);
  if (header.size() < 2) throw ParseError("matrix CSV header needs at least one language");
  LanguageMatrix m;
  for (std::size_t i = 1; i < header.size(); ++i) m.languages.emplace_back(header[i]);
  bool rows_sum_to_one = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto cells = split(line);
    if (cells.size() != header.size()) throw ParseError("matrix CSV row has the wrong number of cells");
    std::vector<std::optional<double>> row;
    double total = 0.0;
    for (std::size_t i = 1; i < cells.size(); ++i) {
      if (cells[i].empty()) {
        row.emplace_back();
        continue;
      }
      try {
        row.emplace_back(std::stod(cells[i]));
      } catch (const std::exception&) {
        throw ParseError("matrix CSV cell is not a number: '" + cells[i] + "'");
      }
      total += *row.back();
    }
    rows_sum_to_one &= std::abs(total - 1.0) < 1e-5;
    m.values.push_back(std::move(row));
  }
  if (m.values.size() != m.languages.size()) throw ParseError("matrix CSV is not square");
  m.kind = rows_sum_to_one ? MatrixKind::distribution : MatrixKind::map_matrix;
  return m;
}

inline nlohmann::json matrix_to_json(const LanguageMatrix& m) {
  nlohmann::json langs = nlohmann::json::array();
  for (const auto& l : m.languages) langs.push_back(l.str());
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : m.values) {
    nlohmann::json row = nlohmann::json::array();
    for (const auto& v : r) row.push_back(v ? nlohmann::json(round6(*v)) : nlohmann::json(nullptr));
    rows.push_back(std::move(row));
  }
  return {{"kind", to_string(m.kind)}, {"languages", std::move(langs)}, {"values", std::move(rows)}};
}

inline nlohmann::json remove_one_to_json(const RemoveOneReport& r) {
  return {{"map_minus_rand", round6(r.map_minus_rand)},
          {"map_minus_same", round6(r.map_minus_same)},
          {"pct_delta", r.pct_delta ? nlohmann::json(round6(*r.pct_delta)) : nlohmann::json(nullptr)},
          {"seed", r.seed},
          {"skipped_rand", r.skipped_rand},
          {"skipped_same", r.skipped_same}};
}

}  // namespace lareqa
