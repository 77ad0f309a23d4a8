#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "lareqa/corpus.hpp"
#include "lareqa/embed.hpp"
#include "lareqa/error.hpp"
#include "lareqa/matrix.hpp"
#include "lareqa/parallel.hpp"

namespace lareqa {

/// Dot product accumulated in double.
template <std::floating_point T>
double score(std::span<const T> q, std::span<const T> a) {
  if (q.size() != a.size()) {
    throw ValidationError("score: dimension mismatch (" + std::to_string(q.size()) + " vs " +
                          std::to_string(a.size()) + ")");
  }
  double s = 0.0;
  for (std::size_t i = 0; i < q.size(); ++i) s += static_cast<double>(q[i]) * static_cast<double>(a[i]);
  return s;
}

template <std::floating_point T>
double score(const std::vector<T>& q, const std::vector<T>& a) {
  return score(std::span<const T>(q), std::span<const T>(a));
}

/// All-pairs scores Q·Cᵀ, blocked over both operands.
template <std::floating_point T>
Matrix<double> batch_score(const Matrix<T>& queries, const Matrix<T>& candidates) {
  if (queries.rows() > 0 && candidates.rows() > 0 && queries.cols() != candidates.cols()) {
    throw ValidationError("batch_score: shape mismatch (" + std::to_string(queries.cols()) +
                          " vs " + std::to_string(candidates.cols()) + " columns)");
  }
  constexpr std::size_t kRowBlock = 16;
  constexpr std::size_t kColBlock = 256;
  const std::size_t n = queries.rows();
  const std::size_t m = candidates.rows();
  const std::size_t d = queries.cols();
  Matrix<double> out(n, m);
  for (std::size_t i0 = 0; i0 < n; i0 += kRowBlock) {
    const std::size_t i1 = std::min(n, i0 + kRowBlock);
    for (std::size_t j0 = 0; j0 < m; j0 += kColBlock) {
      const std::size_t j1 = std::min(m, j0 + kColBlock);
      for (std::size_t i = i0; i < i1; ++i) {
        const T* q = queries.row(i).data();
        for (std::size_t j = j0; j < j1; ++j) {
          const T* c = candidates.row(j).data();
          double s = 0.0;
          for (std::size_t k = 0; k < d; ++k) s += static_cast<double>(q[k]) * static_cast<double>(c[k]);
          out(i, j) = s;
        }
      }
    }
  }
  return out;
}

struct ScoredCandidate {
  std::string candidate_id;
  double score = 0.0;
};

struct Ranking {
  std::string question_id;
  std::vector<ScoredCandidate> ordered;
};

/// Task embeddings laid out for exhaustive scoring. Candidates are kept in
/// ascending-id order so that slot order is the tie-break order.
class ScoringIndex {
 public:
  static constexpr std::size_t kQuestionBlock = 64;

  ScoringIndex(const RetrievalTask& task, const EmbeddingSet& questions,
               const EmbeddingSet& candidates)
      : task_(&task) {
    if (!task.questions.empty() && !task.candidates.empty() &&
        questions.dim() != candidates.dim()) {
      throw ValidationError("question and candidate embeddings differ in dimension (" +
                            std::to_string(questions.dim()) + " vs " +
                            std::to_string(candidates.dim()) + ")");
    }
    std::vector<std::string> qids;
    for (const auto& q : task.questions) qids.push_back(q.question_id);
    questions.require(qids);
    std::vector<std::string> cids;
    for (const auto& c : task.candidates) cids.push_back(c.candidate_id);
    candidates.require(cids);

    order_.resize(task.candidates.size());
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    std::sort(order_.begin(), order_.end(), [&](std::size_t a, std::size_t b) {
      return task.candidates[a].candidate_id < task.candidates[b].candidate_id;
    });
    for (std::size_t s = 0; s + 1 < order_.size(); ++s) {
      if (task.candidates[order_[s]].candidate_id == task.candidates[order_[s + 1]].candidate_id) {
        throw ValidationError("duplicate candidate id " + task.candidates[order_[s]].candidate_id);
      }
    }
    dim_ = candidates.dim();
    cand_ = Matrix<float>(order_.size(), dim_);
    for (std::size_t s = 0; s < order_.size(); ++s) {
      slot_.emplace(task.candidates[order_[s]].candidate_id, s);
      auto v = candidates.at(task.candidates[order_[s]].candidate_id);
      std::copy(v.begin(), v.end(), cand_.row(s).begin());
    }
    quest_ = Matrix<float>(task.questions.size(), questions.dim());
    for (std::size_t i = 0; i < task.questions.size(); ++i) {
      auto v = questions.at(task.questions[i].question_id);
      std::copy(v.begin(), v.end(), quest_.row(i).begin());
    }
  }

  const RetrievalTask& task() const { return *task_; }
  std::size_t num_questions() const { return quest_.rows(); }
  std::size_t num_candidates() const { return order_.size(); }
  /// Candidate stored in a slot.
  const Candidate& candidate(std::size_t slot) const { return task_->candidates[order_[slot]]; }

  std::size_t slot(const std::string& candidate_id) const {
    auto it = slot_.find(candidate_id);
    if (it == slot_.end()) throw ValidationError("unknown candidate id " + candidate_id);
    return it->second;
  }

  std::vector<std::size_t> relevant_slots(std::size_t question) const {
    std::vector<std::size_t> out;
    for (const auto& id : task_->relevant(task_->questions[question].question_id)) {
      out.push_back(slot(id));
    }
    std::sort(out.begin(), out.end());
    return out;
  }

  /// Scores every question against the pool, handing each row to
  /// visit(question_index, scores_by_slot). Rows are visited in parallel.
  template <typename Visit>
  void for_each_question(Visit&& visit, std::size_t threads = default_threads()) const {
    parallel_blocks(
        num_questions(), kQuestionBlock,
        [&](std::size_t, std::size_t begin, std::size_t end) {
          Matrix<float> block(end - begin, quest_.cols());
          for (std::size_t i = begin; i < end; ++i) {
            auto r = quest_.row(i);
            std::copy(r.begin(), r.end(), block.row(i - begin).begin());
          }
          const Matrix<double> scores = batch_score(block, cand_);
          for (std::size_t i = begin; i < end; ++i) visit(i, scores.row(i - begin));
        },
        threads);
  }

 private:
  const RetrievalTask* task_;
  std::size_t dim_ = 0;
  std::vector<std::size_t> order_;
  std::unordered_map<std::string, std::size_t> slot_;
  Matrix<float> cand_;
  Matrix<float> quest_;
};

/// True when slot a ranks strictly above slot b: higher score, ties by lower slot (id).
inline bool ranks_above(std::span<const double> scores, std::size_t a, std::size_t b) {
  return scores[a] > scores[b] || (scores[a] == scores[b] && a < b);
}

/// 1-based ranks of `targets` in the pool ordering, ignoring excluded slots.
/// Returned in ascending rank order.
template <typename Excluded>
std::vector<std::size_t> ranks_of(std::span<const double> scores, std::span<const std::size_t> targets,
                                  Excluded&& excluded) {
  std::vector<std::size_t> ranks;
  ranks.reserve(targets.size());
  for (std::size_t t : targets) {
    std::size_t above = 0;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (j != t && ranks_above(scores, j, t) && !excluded(j)) ++above;
    }
    ranks.push_back(above + 1);
  }
  std::sort(ranks.begin(), ranks.end());
  return ranks;
}

inline std::vector<std::size_t> ranks_of(std::span<const double> scores,
                                         std::span<const std::size_t> targets) {
  return ranks_of(scores, targets, [](std::size_t) { return false; });
}

/// Slots in ranked order (best first), truncated to top_k if given.
inline std::vector<std::size_t> ranked_slots(std::span<const double> scores,
                                             std::optional<std::size_t> top_k = std::nullopt) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  auto cmp = [&](std::size_t a, std::size_t b) { return ranks_above(scores, a, b); };
  const std::size_t k = std::min(top_k.value_or(order.size()), order.size());
  if (k < order.size()) {
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(), cmp);
    order.resize(k);
  } else {
    std::sort(order.begin(), order.end(), cmp);
  }
  return order;
}

/// Exhaustive ranking of the full pool for every question, in question order.
inline std::vector<Ranking> rank_all(const RetrievalTask& task, const EmbeddingSet& questions,
                                     const EmbeddingSet& candidates,
                                     std::optional<std::size_t> top_k = std::nullopt) {
  ScoringIndex index(task, questions, candidates);
  std::vector<Ranking> out(task.questions.size());
  index.for_each_question([&](std::size_t qi, std::span<const double> scores) {
    Ranking& r = out[qi];
    r.question_id = task.questions[qi].question_id;
    for (std::size_t s : ranked_slots(scores, top_k)) {
      r.ordered.push_back({index.candidate(s).candidate_id, scores[s]});
    }
  });
  return out;
}

/// Rounds to six decimal places for reporting.
inline double round6(double x) { return std::round(x * 1e6) / 1e6; }

/// One JSON object per line; scores rounded to six decimals.
inline std::string rankings_to_jsonl(const std::vector<Ranking>& rankings) {
  std::string out;
  for (const auto& r : rankings) {
    nlohmann::json ordered = nlohmann::json::array();
    for (const auto& sc : r.ordered) {
      ordered.push_back({{"candidate_id", sc.candidate_id},
                         {"score", round6(static_cast<float>(sc.score))}});
    }
    out += nlohmann::json{{"question_id", r.question_id}, {"ordered", std::move(ordered)}}.dump();
    out += '\n';
  }
  return out;
}

}  // namespace lareqa
