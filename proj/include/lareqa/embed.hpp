#pragma once

#include <cmath>
#include <concepts>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <numbers>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "lareqa/corpus.hpp"
#include "lareqa/error.hpp"
#include "lareqa/io.hpp"
#include "lareqa/rng.hpp"
#include "lareqa/utf8.hpp"

namespace lareqa {

/// v / ||v||_2, with the norm accumulated in double.
template <std::floating_point T>
std::vector<T> normalize(std::span<const T> v) {
  double sq = 0.0;
  for (T x : v) {
    if (!std::isfinite(x)) throw ValidationError("cannot normalize a vector with NaN/Inf");
    sq += static_cast<double>(x) * static_cast<double>(x);
  }
  if (!(sq > 0.0)) throw ValidationError("cannot normalize a zero vector");
  const double inv = 1.0 / std::sqrt(sq);
  std::vector<T> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = static_cast<T>(static_cast<double>(v[i]) * inv);
  return out;
}

template <std::floating_point T>
std::vector<T> normalize(const std::vector<T>& v) {
  return normalize(std::span<const T>(v));
}

enum class EmbeddingKind { question, candidate };

inline std::string_view to_string(EmbeddingKind k) {
  return k == EmbeddingKind::question ? "question" : "candidate";
}

/// Unit-norm float vectors keyed by id. Every insert is re-normalized, so the
/// unit-norm invariant holds for any set that exists.
class EmbeddingSet {
 public:
  /// Inputs further than this from unit norm produce a warning on insert.
  static constexpr double kDriftWarning = 1e-3;

  EmbeddingSet(EmbeddingKind kind, std::size_t dim) : kind_(kind), dim_(dim) {
    if (dim == 0) throw ValidationError("embedding dimension must be positive");
  }

  EmbeddingKind kind() const { return kind_; }
  std::size_t dim() const { return dim_; }
  std::size_t size() const { return ids_.size(); }
  bool empty() const { return ids_.empty(); }
  const std::vector<std::string>& ids() const { return ids_; }
  const std::vector<std::string>& warnings() const { return warnings_; }

  template <std::floating_point T>
  void add(std::string id, std::span<const T> v) {
    if (v.size() != dim_) {
      throw ValidationError("embedding '" + id + "' has dimension " + std::to_string(v.size()) +
                            ", expected " + std::to_string(dim_));
    }
    if (index_.count(id)) throw ValidationError("duplicate embedding id '" + id + "'");
    std::vector<T> unit;
    try {
      unit = normalize(v);
    } catch (const ValidationError& e) {
      throw ValidationError("embedding '" + id + "': " + e.what());
    }
    double sq = 0.0;
    for (T x : v) sq += static_cast<double>(x) * static_cast<double>(x);
    if (std::abs(std::sqrt(sq) - 1.0) > kDriftWarning) {
      warnings_.push_back("embedding '" + id + "' had norm " + std::to_string(std::sqrt(sq)) +
                          "; exporter may not normalize");
    }
    index_.emplace(id, ids_.size());
    ids_.push_back(std::move(id));
    for (T x : unit) data_.push_back(static_cast<float>(x));
  }

  template <std::floating_point T>
  void add(std::string id, const std::vector<T>& v) {
    add(std::move(id), std::span<const T>(v));
  }

  bool contains(const std::string& id) const { return index_.count(id) != 0; }

  std::span<const float> row(std::size_t i) const { return {data_.data() + i * dim_, dim_}; }

  std::span<const float> at(const std::string& id) const {
    auto it = index_.find(id);
    if (it == index_.end()) {
      throw ValidationError("no " + std::string(to_string(kind_)) + " embedding for id '" + id + "'");
    }
    return row(it->second);
  }

  /// Throws naming up to ten ids from `expected` that are absent.
  template <typename Range>
  void require(const Range& expected) const {
    std::vector<std::string> missing;
    std::size_t count = 0;
    for (const auto& id : expected) {
      if (!contains(id)) {
        if (missing.size() < 10) missing.push_back(id);
        ++count;
      }
    }
    if (count == 0) return;
    std::string msg = std::to_string(count) + " " + std::string(to_string(kind_)) +
                      " embedding(s) missing:";
    for (const auto& id : missing) msg += " " + id;
    if (count > missing.size()) msg += " ...";
    throw ValidationError(msg);
  }

 private:
  EmbeddingKind kind_;
  std::size_t dim_;
  std::vector<std::string> ids_;
  std::vector<float> data_;
  std::unordered_map<std::string, std::size_t> index_;
  std::vector<std::string> warnings_;
};

// ---------------------------------------------------------------------------
// File formats

enum class EmbeddingFormat { binary, jsonl };

namespace detail {

inline void put_u16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xFF));
  out.push_back(static_cast<char>(v >> 8));
}
inline void put_u32(std::string& out, std::uint32_t v) {
  for (int k = 0; k < 4; ++k) out.push_back(static_cast<char>((v >> (8 * k)) & 0xFF));
}

class ByteReader {
 public:
  explicit ByteReader(std::string_view bytes) : bytes_(bytes) {}
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int k = 0; k < 4; ++k) v |= static_cast<std::uint32_t>(byte(pos_ + k)) << (8 * k);
    pos_ += 4;
    return v;
  }
  std::uint16_t u16() {
    need(2);
    const auto v = static_cast<std::uint16_t>(byte(pos_) | (byte(pos_ + 1) << 8));
    pos_ += 2;
    return v;
  }
  float f32() {
    const std::uint32_t bits = u32();
    float f;
    std::memcpy(&f, &bits, sizeof f);
    return f;
  }
  std::string_view take(std::size_t n) {
    need(n);
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  unsigned byte(std::size_t i) const { return static_cast<unsigned char>(bytes_[i]); }
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) {
      throw ParseError("truncated embedding file at byte " + std::to_string(pos_));
    }
  }
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

}  // namespace detail

/// Encodes as "EMB1" | u32 dim | u32 count | {u16 id_len, id, dim x f32}*, little-endian.
inline std::string encode_embeddings_binary(const EmbeddingSet& set) {
  std::string out = "EMB1";
  detail::put_u32(out, static_cast<std::uint32_t>(set.dim()));
  detail::put_u32(out, static_cast<std::uint32_t>(set.size()));
  for (std::size_t i = 0; i < set.size(); ++i) {
    const auto& id = set.ids()[i];
    if (id.size() > 0xFFFF) throw ValidationError("embedding id longer than 65535 bytes");
    detail::put_u16(out, static_cast<std::uint16_t>(id.size()));
    out += id;
    for (float x : set.row(i)) {
      std::uint32_t bits;
      std::memcpy(&bits, &x, sizeof bits);
      detail::put_u32(out, bits);
    }
  }
  return out;
}

inline std::string encode_embeddings_jsonl(const EmbeddingSet& set) {
  std::string out;
  for (std::size_t i = 0; i < set.size(); ++i) {
    const auto r = set.row(i);
    nlohmann::json line = {{"id", set.ids()[i]}, {"vec", std::vector<float>(r.begin(), r.end())}};
    out += line.dump();
    out += '\n';
  }
  return out;
}

inline EmbeddingSet decode_embeddings(std::string_view bytes, EmbeddingKind kind) {
  if (bytes.substr(0, 4) == "EMB1") {
    detail::ByteReader in(bytes.substr(4));
    const std::uint32_t dim = in.u32();
    const std::uint32_t count = in.u32();
    EmbeddingSet set(kind, dim);
    std::vector<float> v(dim);
    for (std::uint32_t r = 0; r < count; ++r) {
      std::string id(in.take(in.u16()));
      for (auto& x : v) x = in.f32();
      set.add(std::move(id), std::span<const float>(v));
    }
    if (!in.done()) throw ParseError("trailing bytes after embedding records");
    return set;
  }

  std::optional<EmbeddingSet> set;
  std::istringstream lines{std::string(bytes)};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(lines, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError("embedding JSONL line " + std::to_string(lineno) + ": " + e.what());
    }
    if (!j.is_object() || !j.contains("id") || !j["id"].is_string() || !j.contains("vec") ||
        !j["vec"].is_array()) {
      throw ParseError("embedding JSONL line " + std::to_string(lineno) +
                       ": expected {\"id\": str, \"vec\": [floats]}");
    }
    std::vector<double> v;
    v.reserve(j["vec"].size());
    for (const auto& x : j["vec"]) {
      if (!x.is_number()) {
        throw ValidationError("embedding '" + j["id"].get<std::string>() +
                              "' has a non-numeric (NaN/Inf?) component");
      }
      v.push_back(x.get<double>());
    }
    if (!set) {
      if (v.empty()) throw ValidationError("embedding JSONL line " + std::to_string(lineno) + ": empty vector");
      set.emplace(kind, v.size());
    }
    set->add(j["id"].get<std::string>(), v);
  }
  if (!set) throw ValidationError("embedding file contains no vectors");
  return std::move(*set);
}

template <typename Range>
EmbeddingSet load_embeddings(const std::filesystem::path& path, const Range& expected_ids,
                             EmbeddingKind kind) {
  try {
    EmbeddingSet set = decode_embeddings(io::read_file(path), kind);
    set.require(expected_ids);
    return set;
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  } catch (const ValidationError& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

inline void save_embeddings(const EmbeddingSet& set, const std::filesystem::path& path,
                            EmbeddingFormat format = EmbeddingFormat::binary) {
  io::write_file(path, format == EmbeddingFormat::binary ? encode_embeddings_binary(set)
                                                         : encode_embeddings_jsonl(set));
}

// ---------------------------------------------------------------------------
// Toy encoder

/// Synthetic encoder whose language signal is a dial: 0 gives vectors that
/// depend on content only, 1 collapses each language onto a single anchor.
struct ToyEncoder {
  std::size_t dim = 64;
  std::uint64_t seed = 0;
  double language_offset_strength = 0.0;
};

/// Texts may carry a leading "[xx] " language marker; it is not content.
inline std::string_view content_key(std::string_view text) {
  if (text.size() >= 3 && text.front() == '[') {
    const auto close = text.find(']');
    if (close != std::string_view::npos && close > 1 && close <= 9) {
      bool letters = true;
      for (std::size_t i = 1; i < close; ++i) letters &= text[i] >= 'a' && text[i] <= 'z';
      if (letters) {
        text.remove_prefix(close + 1);
        while (!text.empty() && text.front() == ' ') text.remove_prefix(1);
      }
    }
  }
  return text;
}

/// Seeded signed feature hashing of character 2- and 3-grams, unit norm.
inline std::vector<double> hash_features(std::string_view key, std::size_t dim, std::uint64_t seed) {
  std::u32string padded = U"^";
  padded += utf8::decode(key);
  padded += U"$";
  std::vector<double> v(dim, 0.0);
  for (std::size_t n = 2; n <= 3; ++n) {
    for (std::size_t i = 0; i + n <= padded.size(); ++i) {
      const std::string gram = utf8::encode(std::u32string_view(padded).substr(i, n));
      const std::uint64_t h = rng::mix(seed, rng::fnv1a(gram));
      v[h % dim] += (h >> 63) ? -1.0 : 1.0;
    }
  }
  double sq = 0.0;
  for (double x : v) sq += x * x;
  if (sq == 0.0) {
    v[0] = 1.0;
    return v;
  }
  return normalize(std::span<const double>(v));
}

/// Fixed pseudo-random unit direction for a language.
inline std::vector<double> language_anchor(const LanguageCode& lang, std::size_t dim,
                                           std::uint64_t seed) {
  rng::Generator gen(rng::mix(seed ^ 0xA5A5A5A5A5A5A5A5ULL, rng::fnv1a(lang.str())));
  std::vector<double> v(dim);
  for (std::size_t i = 0; i < dim; i += 2) {
    const double u1 = 1.0 - gen.uniform();
    const double u2 = gen.uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    v[i] = r * std::cos(2.0 * std::numbers::pi * u2);
    if (i + 1 < dim) v[i + 1] = r * std::sin(2.0 * std::numbers::pi * u2);
  }
  return normalize(std::span<const double>(v));
}

inline std::vector<float> toy_encode(std::string_view text, const LanguageCode& lang,
                                     const ToyEncoder& enc) {
  if (enc.dim < 2) throw ValidationError("toy encoder dimension must be at least 2");
  const double s = enc.language_offset_strength;
  if (!(s >= 0.0 && s <= 1.0)) throw ValidationError("language_offset_strength must be in [0, 1]");
  const auto content = hash_features(content_key(text), enc.dim, enc.seed);
  const auto anchor = language_anchor(lang, enc.dim, enc.seed);
  std::vector<double> mixed(enc.dim);
  for (std::size_t i = 0; i < enc.dim; ++i) mixed[i] = (1.0 - s) * content[i] + s * anchor[i];
  double sq = 0.0;
  for (double x : mixed) sq += x * x;
  const auto unit = sq > 0.0 ? normalize(std::span<const double>(mixed)) : anchor;
  return {unit.begin(), unit.end()};
}

/// Question embeddings for every question of a task from the toy encoder.
inline EmbeddingSet toy_question_embeddings(const RetrievalTask& task, const ToyEncoder& enc) {
  EmbeddingSet set(EmbeddingKind::question, enc.dim);
  for (const auto& q : task.questions) {
    set.add(q.question_id, toy_encode(q.text, q.language, enc));
  }
  return set;
}

/// Candidate embeddings from the sentence text alone.
inline EmbeddingSet toy_candidate_embeddings(const RetrievalTask& task, const ToyEncoder& enc) {
  EmbeddingSet set(EmbeddingKind::candidate, enc.dim);
  for (const auto& c : task.candidates) {
    set.add(c.candidate_id, toy_encode(c.sentence, c.language, enc));
  }
  return set;
}

}  // namespace lareqa
