#pragma once

#include <algorithm>
#include <map>
#include <set>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "lareqa/error.hpp"
#include "lareqa/retrieval.hpp"

namespace lareqa {

struct EvalResult {
  double map_score = 0.0;
  std::map<std::string, double> per_question_ap;
  std::size_t num_questions = 0;
  std::size_t num_dropped = 0;
};

/// Fraction of the first j ranked items that are relevant.
inline double precision_at_j(const Ranking& ranking, const std::set<std::string>& relevant,
                             std::size_t j) {
  if (j < 1 || j > ranking.ordered.size()) {
    throw ValidationError("precision_at_j: j=" + std::to_string(j) + " outside [1, " +
                          std::to_string(ranking.ordered.size()) + "]");
  }
  std::size_t hits = 0;
  for (std::size_t k = 0; k < j; ++k) hits += relevant.count(ranking.ordered[k].candidate_id);
  return static_cast<double>(hits) / static_cast<double>(j);
}

/// Average precision given the ascending 1-based ranks of all R relevant items:
/// (1/R) Σ_k k / rank_k, which is the sum of P@j over relevant positions.
inline double average_precision_from_ranks(std::span<const std::size_t> sorted_ranks) {
  if (sorted_ranks.empty()) throw ValidationError("average precision of an empty relevant set");
  double sum = 0.0;
  for (std::size_t k = 0; k < sorted_ranks.size(); ++k) {
    sum += static_cast<double>(k + 1) / static_cast<double>(sorted_ranks[k]);
  }
  return sum / static_cast<double>(sorted_ranks.size());
}

namespace detail {

inline std::vector<std::size_t> relevant_ranks(const Ranking& ranking,
                                               const std::set<std::string>& relevant) {
  std::vector<std::size_t> ranks;
  for (std::size_t j = 0; j < ranking.ordered.size(); ++j) {
    if (relevant.count(ranking.ordered[j].candidate_id)) ranks.push_back(j + 1);
  }
  return ranks;
}

}  // namespace detail

/// AP over the complete ranking (depth = pool size).
inline double average_precision(const Ranking& ranking, const std::set<std::string>& relevant) {
  if (relevant.empty()) {
    throw ValidationError("question " + ranking.question_id + " has no relevant candidates");
  }
  const auto ranks = detail::relevant_ranks(ranking, relevant);
  if (ranks.size() != relevant.size()) {
    throw ValidationError("ranking for " + ranking.question_id +
                          " does not contain every relevant candidate; use "
                          "truncated_average_precision for top-k rankings");
  }
  return average_precision_from_ranks(ranks);
}

/// Truncated-depth AP: (1/R) Σ_{j<=k} P@j·rel(j), R counting all relevant items.
inline double truncated_average_precision(const Ranking& ranking,
                                          const std::set<std::string>& relevant, std::size_t k) {
  if (relevant.empty()) {
    throw ValidationError("question " + ranking.question_id + " has no relevant candidates");
  }
  double sum = 0.0;
  std::size_t hits = 0;
  for (std::size_t j = 0; j < std::min(k, ranking.ordered.size()); ++j) {
    if (relevant.count(ranking.ordered[j].candidate_id)) {
      ++hits;
      sum += static_cast<double>(hits) / static_cast<double>(j + 1);
    }
  }
  return sum / static_cast<double>(relevant.size());
}

inline const std::set<std::string>& relevance_for(
    const std::map<std::string, std::set<std::string>>& relevance, const std::string& qid) {
  auto it = relevance.find(qid);
  if (it == relevance.end()) throw ValidationError("no relevance set for question " + qid);
  return it->second;
}

inline EvalResult mean_average_precision(
    const std::vector<Ranking>& rankings,
    const std::map<std::string, std::set<std::string>>& relevance, std::size_t num_dropped = 0) {
  if (rankings.empty()) throw ValidationError("mean average precision over zero questions");
  EvalResult r;
  double sum = 0.0;
  for (const auto& ranking : rankings) {
    const double ap = average_precision(ranking, relevance_for(relevance, ranking.question_id));
    r.per_question_ap[ranking.question_id] = ap;
    sum += ap;
  }
  r.num_questions = rankings.size();
  r.num_dropped = num_dropped;
  r.map_score = sum / static_cast<double>(rankings.size());
  return r;
}

inline double mean_reciprocal_rank(const std::vector<Ranking>& rankings,
                                   const std::map<std::string, std::set<std::string>>& relevance) {
  if (rankings.empty()) throw ValidationError("mean reciprocal rank over zero questions");
  double sum = 0.0;
  for (const auto& ranking : rankings) {
    const auto& rel = relevance_for(relevance, ranking.question_id);
    if (rel.empty()) {
      throw ValidationError("question " + ranking.question_id + " has no relevant candidates");
    }
    const auto ranks = detail::relevant_ranks(ranking, rel);
    if (ranks.empty()) {
      throw ValidationError("ranking for " + ranking.question_id + " contains no relevant candidate");
    }
    sum += 1.0 / static_cast<double>(ranks.front());
  }
  return sum / static_cast<double>(rankings.size());
}

/// Streams the full evaluation without materializing rankings.
inline EvalResult evaluate(const RetrievalTask& task, const EmbeddingSet& questions,
                           const EmbeddingSet& candidates) {
  if (task.questions.empty()) throw ValidationError("mean average precision over zero questions");
  ScoringIndex index(task, questions, candidates);
  std::vector<double> ap(task.questions.size());
  index.for_each_question([&](std::size_t qi, std::span<const double> scores) {
    const auto targets = index.relevant_slots(qi);
    ap[qi] = average_precision_from_ranks(ranks_of(scores, targets));
  });
  EvalResult r;
  double sum = 0.0;
  for (std::size_t i = 0; i < ap.size(); ++i) {
    r.per_question_ap[task.questions[i].question_id] = ap[i];
    sum += ap[i];
  }
  r.num_questions = ap.size();
  r.num_dropped = task.meta.dropped_questions;
  r.map_score = sum / static_cast<double>(ap.size());
  return r;
}

inline nlohmann::json eval_result_to_json(const EvalResult& r) {
  nlohmann::json per = nlohmann::json::array();
  for (const auto& [qid, ap] : r.per_question_ap) {
    per.push_back({{"question_id", qid}, {"ap", round6(ap)}});
  }
  return {{"map", round6(r.map_score)},
          {"num_questions", r.num_questions},
          {"num_dropped", r.num_dropped},
          {"per_question_ap", std::move(per)}};
}

}  // namespace lareqa
