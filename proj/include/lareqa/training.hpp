#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "lareqa/corpus.hpp"
#include "lareqa/error.hpp"
#include "lareqa/matrix.hpp"
#include "lareqa/rng.hpp"

namespace lareqa {

enum class Strategy { EnEn, XX, XXmono, XY };

inline std::string_view to_string(Strategy s) {
  switch (s) {
    case Strategy::EnEn: return "EnEn";
    case Strategy::XX: return "XX";
    case Strategy::XXmono: return "XXmono";
    case Strategy::XY: return "XY";
  }
  return "?";
}

inline Strategy parse_strategy(std::string_view raw) {
  std::string s;
  for (char c : raw) {
    if (c != '-') s.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  if (s == "enen") return Strategy::EnEn;
  if (s == "xx") return Strategy::XX;
  if (s == "xxmono") return Strategy::XXmono;
  if (s == "xy") return Strategy::XY;
  throw ValidationError("unknown batching strategy '" + std::string(s) +
                        "' (expected EnEn, XX, XXmono or XY)");
}

struct TrainingPair {
  std::string qas_id;
  std::string question_text;
  LanguageCode question_lang;
  std::string answer_text;
  std::string answer_context;
  LanguageCode answer_lang;

  friend bool operator==(const TrainingPair&, const TrainingPair&) = default;
};

struct TranslatedExample {
  std::string question_text;
  std::string answer_text;
  std::string answer_context;
};

/// (qas_id, language) -> translated example.
using TranslationTable = std::map<std::pair<std::string, LanguageCode>, TranslatedExample>;

// ---------------------------------------------------------------------------
// Expansion

/// Random-access view over an expanded training set. Pairs are built on
/// access, so an X-Y expansion of 80k examples over 11 languages does not
/// hold 9.68M pairs in memory.
class PairSet {
 public:
  PairSet(std::vector<TrainingPair> base, TranslationTable translations,
          std::vector<LanguageCode> languages, Strategy strategy)
      : base_(std::move(base)),
        translations_(std::move(translations)),
        languages_(std::move(languages)),
        strategy_(strategy) {
    const LanguageCode en("en");
    for (const auto& p : base_) {
      if (p.question_lang != en || p.answer_lang != en) {
        throw ValidationError("base pair " + p.qas_id + " is not English");
      }
    }
    if (strategy_ == Strategy::EnEn) {
      languages_ = {en};
      return;
    }
    if (languages_.empty()) throw ValidationError("expansion needs at least one language");
    for (const auto& p : base_) {
      for (const auto& lang : languages_) {
        if (lang != en && !translations_.count({p.qas_id, lang})) {
          throw ValidationError("missing translation for (" + p.qas_id + ", " + lang.str() + ")");
        }
      }
    }
  }

  Strategy strategy() const { return strategy_; }
  const std::vector<LanguageCode>& languages() const { return languages_; }

  std::size_t size() const {
    const std::size_t L = languages_.size();
    switch (strategy_) {
      case Strategy::EnEn: return base_.size();
      case Strategy::XX:
      case Strategy::XXmono: return base_.size() * L;
      case Strategy::XY: return base_.size() * L * L;
    }
    return 0;
  }

  /// (question language, answer language) of pair i without building it.
  std::pair<std::size_t, std::size_t> language_indices(std::size_t i) const {
    const std::size_t L = languages_.size();
    switch (strategy_) {
      case Strategy::EnEn: return {0, 0};
      case Strategy::XX:
      case Strategy::XXmono: return {i % L, i % L};
      case Strategy::XY: return {(i / L) % L, i % L};
    }
    return {0, 0};
  }

  TrainingPair operator[](std::size_t i) const {
    const std::size_t L = languages_.size();
    const std::size_t per_base = strategy_ == Strategy::EnEn ? 1
                                 : strategy_ == Strategy::XY ? L * L
                                                             : L;
    const TrainingPair& b = base_[i / per_base];
    const auto [qi, ai] = language_indices(i);
    TrainingPair p;
    p.qas_id = b.qas_id;
    p.question_lang = languages_[qi];
    p.answer_lang = languages_[ai];
    const auto qt = lookup(b, languages_[qi]);
    const auto at = lookup(b, languages_[ai]);
    p.question_text = qt.question_text;
    p.answer_text = at.answer_text;
    p.answer_context = at.answer_context;
    return p;
  }

  std::vector<TrainingPair> materialize() const {
    std::vector<TrainingPair> out;
    out.reserve(size());
    for (std::size_t i = 0; i < size(); ++i) out.push_back((*this)[i]);
    return out;
  }

 private:
  TranslatedExample lookup(const TrainingPair& b, const LanguageCode& lang) const {
    if (lang.str() == "en") return {b.question_text, b.answer_text, b.answer_context};
    return translations_.at({b.qas_id, lang});
  }

  std::vector<TrainingPair> base_;
  TranslationTable translations_;
  std::vector<LanguageCode> languages_;
  Strategy strategy_;
};

/// En-En keeps the base set; X-X pairs each example with itself in every
/// language; X-Y crosses question and answer languages.
inline PairSet expand_pairs(std::vector<TrainingPair> base, TranslationTable translations,
                            std::vector<LanguageCode> languages, Strategy strategy) {
  return PairSet(std::move(base), std::move(translations), std::move(languages), strategy);
}

/// English training pairs from a built task: each question with the first
/// sentence relevant to it in its own language.
inline std::vector<TrainingPair> pairs_from_task(const RetrievalTask& task) {
  std::map<std::string, const Candidate*> by_id;
  for (const auto& c : task.candidates) by_id.emplace(c.candidate_id, &c);
  std::vector<TrainingPair> out;
  for (const auto& q : task.questions) {
    const Candidate* answer = nullptr;
    for (const auto& id : task.relevant(q.question_id)) {
      const Candidate* c = by_id.at(id);
      if (c->language == q.language) {
        answer = c;
        break;
      }
    }
    if (!answer) throw ValidationError("question " + q.question_id + " has no answer sentence");
    out.push_back({q.qas_id, q.text, q.language, answer->sentence, answer->context, answer->language});
  }
  return out;
}

namespace detail {

template <typename Fn>
void for_each_jsonl(std::string_view jsonl, std::string_view what, Fn&& fn) {
  std::istringstream in{std::string(jsonl)};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      fn(nlohmann::json::parse(line));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(std::string(what) + " line " + std::to_string(lineno) + ": " + e.what());
    }
  }
}

}  // namespace detail

/// English pairs, one JSON object per line: {qas_id, question, answer, context}.
inline std::vector<TrainingPair> parse_pairs_jsonl(std::string_view jsonl) {
  std::vector<TrainingPair> out;
  const LanguageCode en("en");
  detail::for_each_jsonl(jsonl, "training pairs", [&](const nlohmann::json& j) {
    out.push_back({j.at("qas_id").get<std::string>(), j.at("question").get<std::string>(), en,
                   j.at("answer").get<std::string>(), j.value("context", std::string()), en});
  });
  return out;
}

/// Translations, one per line: {qas_id, lang, question, answer, context}.
inline TranslationTable parse_translations_jsonl(std::string_view jsonl) {
  TranslationTable out;
  detail::for_each_jsonl(jsonl, "translations", [&](const nlohmann::json& j) {
    out[{j.at("qas_id").get<std::string>(), LanguageCode(j.at("lang").get<std::string>())}] = {
        j.at("question").get<std::string>(), j.at("answer").get<std::string>(),
        j.value("context", std::string())};
  });
  return out;
}

// ---------------------------------------------------------------------------
// Batching

struct Batch {
  std::size_t index = 0;
  Strategy strategy = Strategy::EnEn;
  std::vector<TrainingPair> pairs;
};

/// Empty when the batch satisfies its strategy's language invariant.
inline std::optional<std::string> batch_violation(const Batch& b) {
  if (b.pairs.empty()) return "empty batch";
  const auto& first = b.pairs.front();
  for (const auto& p : b.pairs) {
    switch (b.strategy) {
      case Strategy::EnEn:
        if (p.question_lang.str() != "en" || p.answer_lang.str() != "en") {
          return "non-English pair " + p.qas_id + " in an EnEn batch";
        }
        break;
      case Strategy::XX:
        if (p.question_lang != p.answer_lang) return "cross-language pair " + p.qas_id + " in an XX batch";
        break;
      case Strategy::XXmono:
        if (p.question_lang != first.question_lang || p.answer_lang != first.question_lang) {
          return "XXmono batch mixes " + first.question_lang.str() + " with " +
                 p.question_lang.str() + "/" + p.answer_lang.str();
        }
        break;
      case Strategy::XY:
        break;
    }
  }
  return std::nullopt;
}

struct BatchStreamInfo {
  std::size_t sub_batch_size = 64;
  /// Sub-batches per optimizer step (2048 = 32 x 64); metadata only.
  std::size_t sub_batches_per_step = 32;
  std::size_t num_batches = 0;
  std::size_t dropped_pairs = 0;
  std::uint64_t seed = 0;
  std::vector<std::string> warnings;
};

/// Deterministic sub-batch stream. EnEn/XX/XY shuffle everything and cut
/// consecutive sub-batches; XXmono shuffles within each language, cuts whole
/// monolingual sub-batches and emits them cycling over a seeded language
/// order. Trailing partial sub-batches are dropped and counted.
class BatchStream {
 public:
  BatchStream(const PairSet& pairs, Strategy strategy, std::size_t sub_batch_size,
              std::uint64_t seed)
      : pairs_(&pairs), strategy_(strategy) {
    info_.sub_batch_size = sub_batch_size;
    info_.seed = seed;
    if (sub_batch_size == 0) throw ValidationError("sub_batch_size must be positive");
    if (pairs.size() < sub_batch_size) {
      throw ValidationError("only " + std::to_string(pairs.size()) +
                            " pairs for a sub-batch size of " + std::to_string(sub_batch_size));
    }
    if (strategy == Strategy::XXmono) {
      plan_monolingual(seed);
    } else {
      plan_shuffled(seed);
    }
    info_.num_batches = order_.size() / sub_batch_size;
  }

  const BatchStreamInfo& info() const { return info_; }

  std::optional<Batch> next() {
    if (cursor_ >= info_.num_batches) return std::nullopt;
    Batch b;
    b.index = cursor_;
    b.strategy = strategy_;
    const std::size_t k = info_.sub_batch_size;
    b.pairs.reserve(k);
    for (std::size_t j = cursor_ * k; j < (cursor_ + 1) * k; ++j) b.pairs.push_back((*pairs_)[order_[j]]);
    ++cursor_;
    return b;
  }

  /// Language indices (into pairs.languages()) of the next batch without building it.
  std::optional<std::vector<std::pair<std::size_t, std::size_t>>> next_languages() {
    if (cursor_ >= info_.num_batches) return std::nullopt;
    const std::size_t k = info_.sub_batch_size;
    std::vector<std::pair<std::size_t, std::size_t>> out;
    out.reserve(k);
    for (std::size_t j = cursor_ * k; j < (cursor_ + 1) * k; ++j) {
      out.push_back(pairs_->language_indices(order_[j]));
    }
    ++cursor_;
    return out;
  }

 private:
  void plan_shuffled(std::uint64_t seed) {
    if (strategy_ == Strategy::XX) {
      for (std::size_t i = 0; i < pairs_->size(); ++i) {
        const auto [q, a] = pairs_->language_indices(i);
        if (q != a) throw ValidationError("XX batching over pairs with differing languages");
      }
    }
    order_.resize(pairs_->size());
    for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = i;
    rng::Generator gen(seed);
    rng::shuffle(std::span(order_), gen);
    const std::size_t keep = order_.size() - order_.size() % info_.sub_batch_size;
    info_.dropped_pairs = order_.size() - keep;
    order_.resize(keep);
  }

  void plan_monolingual(std::uint64_t seed) {
    const std::size_t L = pairs_->languages().size();
    const std::size_t k = info_.sub_batch_size;
    std::vector<std::vector<std::size_t>> buckets(L);
    for (std::size_t i = 0; i < pairs_->size(); ++i) {
      const auto [q, a] = pairs_->language_indices(i);
      if (q != a) throw ValidationError("XXmono batching needs same-language pairs");
      buckets[q].push_back(i);
    }
    rng::Generator gen(seed);
    std::vector<std::size_t> lang_order;
    for (std::size_t l = 0; l < L; ++l) {
      auto& b = buckets[l];
      rng::shuffle(std::span(b), gen);
      if (b.size() < k) {
        if (!b.empty()) {
          info_.warnings.push_back("language " + pairs_->languages()[l].str() + " has only " +
                                   std::to_string(b.size()) + " pairs; bucket dropped");
        }
        info_.dropped_pairs += b.size();
        b.clear();
        continue;
      }
      info_.dropped_pairs += b.size() % k;
      b.resize(b.size() - b.size() % k);
      lang_order.push_back(l);
    }
    rng::shuffle(std::span(lang_order), gen);
    std::vector<std::size_t> cursor(L, 0);
    bool emitted = true;
    while (emitted) {
      emitted = false;
      for (std::size_t l : lang_order) {
        if (cursor[l] >= buckets[l].size()) continue;
        order_.insert(order_.end(), buckets[l].begin() + static_cast<std::ptrdiff_t>(cursor[l]),
                      buckets[l].begin() + static_cast<std::ptrdiff_t>(cursor[l] + k));
        cursor[l] += k;
        emitted = true;
      }
    }
  }

  const PairSet* pairs_;
  Strategy strategy_;
  BatchStreamInfo info_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
};

inline BatchStream make_batches(const PairSet& pairs, Strategy strategy,
                                std::size_t sub_batch_size = 64, std::uint64_t seed = 0) {
  return BatchStream(pairs, strategy, sub_batch_size, seed);
}

inline std::string batch_to_jsonl(const Batch& b) {
  nlohmann::json pairs = nlohmann::json::array();
  for (const auto& p : b.pairs) {
    pairs.push_back({{"qas_id", p.qas_id},
                     {"question", p.question_text},
                     {"question_lang", p.question_lang.str()},
                     {"answer", p.answer_text},
                     {"context", p.answer_context},
                     {"answer_lang", p.answer_lang.str()}});
  }
  return nlohmann::json{{"index", b.index}, {"strategy", to_string(b.strategy)}, {"pairs", std::move(pairs)}}
             .dump() +
         "\n";
}

inline Batch batch_from_json(const nlohmann::json& j) {
  Batch b;
  try {
    b.index = j.at("index").get<std::size_t>();
    b.strategy = parse_strategy(j.at("strategy").get<std::string>());
    for (const auto& p : j.at("pairs")) {
      b.pairs.push_back({p.at("qas_id").get<std::string>(), p.at("question").get<std::string>(),
                         LanguageCode(p.at("question_lang").get<std::string>()),
                         p.at("answer").get<std::string>(), p.at("context").get<std::string>(),
                         LanguageCode(p.at("answer_lang").get<std::string>())});
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("invalid batch line: ") + e.what());
  }
  return b;
}

// ---------------------------------------------------------------------------
// In-batch sampled softmax

struct LossConfig {
  double scale = 1.0;
  /// Leave the positive pair out of the normalizer.
  bool exclude_diagonal = true;
};

namespace detail {

inline void check_loss_input(const Matrix<double>& s, const LossConfig& cfg) {
  if (!(cfg.scale > 0.0) || !std::isfinite(cfg.scale)) throw ValidationError("loss scale must be positive");
  if (s.rows() != s.cols()) throw ValidationError("score matrix must be square");
  if (cfg.exclude_diagonal && s.rows() < 2) {
    throw ValidationError("exclusive in-batch softmax needs K >= 2 (empty denominator)");
  }
  if (s.rows() < 1) throw ValidationError("empty score matrix");
}

/// Softmax weights of row i over its denominator set, scaled scores.
inline std::vector<double> row_softmax(const Matrix<double>& s, std::size_t i, const LossConfig& cfg,
                                       double* log_sum_exp) {
  const std::size_t k = s.cols();
  double max = -INFINITY;
  for (std::size_t j = 0; j < k; ++j) {
    if (cfg.exclude_diagonal && j == i) continue;
    max = std::max(max, cfg.scale * s(i, j));
  }
  std::vector<double> w(k, 0.0);
  double sum = 0.0;
  for (std::size_t j = 0; j < k; ++j) {
    if (cfg.exclude_diagonal && j == i) continue;
    w[j] = std::exp(cfg.scale * s(i, j) - max);
    sum += w[j];
  }
  for (auto& x : w) x /= sum;
  if (log_sum_exp) *log_sum_exp = max + std::log(sum);
  return w;
}

}  // namespace detail

/// -(1/K) Σ_i [c·S_ii − log Σ_j exp(c·S_ij)], j ranging over j≠i when
/// exclude_diagonal is set and over all j otherwise; c = cfg.scale.
inline double in_batch_softmax_loss(const Matrix<double>& s, const LossConfig& cfg = {}) {
  detail::check_loss_input(s, cfg);
  const std::size_t k = s.rows();
  double total = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    double lse = 0.0;
    detail::row_softmax(s, i, cfg, &lse);
    total += cfg.scale * s(i, i) - lse;
  }
  return -total / static_cast<double>(k);
}

/// d loss / d S.
inline Matrix<double> loss_gradient(const Matrix<double>& s, const LossConfig& cfg = {}) {
  detail::check_loss_input(s, cfg);
  const std::size_t k = s.rows();
  const double c = cfg.scale / static_cast<double>(k);
  Matrix<double> g(k, k);
  for (std::size_t i = 0; i < k; ++i) {
    const auto w = detail::row_softmax(s, i, cfg, nullptr);
    for (std::size_t j = 0; j < k; ++j) g(i, j) = c * w[j];
    g(i, i) -= c;
  }
  return g;
}

// ---------------------------------------------------------------------------
// Translate-Test

/// id -> English text, from JSONL lines {"id": str, "en": str}.
inline std::map<std::string, std::string> parse_translation_table(std::string_view jsonl) {
  std::map<std::string, std::string> table;
  std::istringstream in{std::string(jsonl)};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      table[j.at("id").get<std::string>()] = j.at("en").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      throw ParseError("translation table line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return table;
}

/// Replaces every question and sentence with its English translation. Ids and
/// relevance are unchanged; languages become "en" and any other source
/// language is kept in meta.original_languages. Each candidate's context has
/// the paragraph's sentences substituted in place by their translations.
inline RetrievalTask translate_task(const RetrievalTask& task,
                                    const std::map<std::string, std::string>& table) {
  auto lookup = [&](const std::string& id) -> const std::string& {
    auto it = table.find(id);
    if (it == table.end()) throw ValidationError("missing translation for id " + id);
    return it->second;
  };
  const LanguageCode en("en");
  RetrievalTask out = task;
  out.languages = {en};
  auto remember = [&](const std::string& id, const LanguageCode& original) {
    if (original != en) out.meta.original_languages.emplace(id, original);
  };
  for (auto& q : out.questions) {
    q.text = lookup(q.question_id);
    remember(q.question_id, task.reporting_language(q));
    q.language = en;
  }

  // Candidates of one paragraph share an id prefix and appear in order.
  auto paragraph_of = [](const std::string& id) {
    const auto pos = id.rfind("-s");
    return pos == std::string::npos ? id : id.substr(0, pos);
  };
  std::map<std::string, std::vector<std::size_t>> paragraphs;
  for (std::size_t i = 0; i < out.candidates.size(); ++i) {
    paragraphs[paragraph_of(out.candidates[i].candidate_id)].push_back(i);
  }
  for (const auto& [key, members] : paragraphs) {
    const std::string& original = task.candidates[members.front()].context;
    std::string rebuilt;
    std::size_t cursor = 0;
    for (std::size_t i : members) {
      const std::string& sentence = task.candidates[i].sentence;
      const std::string& translated = lookup(task.candidates[i].candidate_id);
      const auto pos = original.find(sentence, cursor);
      if (pos == std::string::npos) {
        if (!rebuilt.empty()) rebuilt += ' ';
        rebuilt += translated;
        continue;
      }
      rebuilt.append(original, cursor, pos - cursor);
      rebuilt += translated;
      cursor = pos + sentence.size();
    }
    rebuilt.append(original, std::min(cursor, original.size()));
    for (std::size_t i : members) {
      auto& c = out.candidates[i];
      c.sentence = lookup(c.candidate_id);
      c.context = rebuilt;
      remember(c.candidate_id, task.reporting_language(task.candidates[i]));
      c.language = en;
    }
  }
  return out;
}

}  // namespace lareqa
