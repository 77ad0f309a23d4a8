#pragma once

#include <atomic>
#include <chrono>
#include <exception>
#include <future>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "lareqa/embed.hpp"
#include "lareqa/error.hpp"

namespace lareqa {

/// HTTP encoder service speaking POST /encode.
struct EncoderEndpoint {
  std::string url;  // scheme://host:port
  std::size_t batch_size = 32;
  std::chrono::milliseconds timeout{30000};
  std::size_t retries = 2;      // extra attempts after the first failure
  std::size_t parallelism = 1;  // concurrent chunk requests

  void validate() const {
    if (url.empty()) throw ValidationError("encoder endpoint url is empty");
    if (batch_size < 1) throw ValidationError("encoder batch_size must be >= 1");
    if (parallelism < 1) throw ValidationError("encoder parallelism must be >= 1");
  }
};

struct EncodeItem {
  std::string id;
  std::string text;
  std::optional<std::string> context;  // answers only
};

inline nlohmann::json encode_request_body(std::span<const EncodeItem> items, EmbeddingKind kind) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& it : items) {
    arr.push_back({{"id", it.id},
                   {"text", it.text},
                   {"context", it.context ? nlohmann::json(*it.context) : nlohmann::json(nullptr)}});
  }
  return {{"kind", kind == EmbeddingKind::question ? "question" : "answer"}, {"items", std::move(arr)}};
}

namespace detail {

inline std::vector<std::vector<double>> post_chunk(const EncoderEndpoint& ep,
                                                   std::span<const EncodeItem> items,
                                                   EmbeddingKind kind) {
  const std::string body = encode_request_body(items, kind).dump();
  std::string last_error;
  for (std::size_t attempt = 0; attempt <= ep.retries; ++attempt) {
    httplib::Client client(ep.url);
    const auto secs = std::chrono::duration_cast<std::chrono::seconds>(ep.timeout);
    const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(ep.timeout - secs);
    client.set_connection_timeout(secs.count(), usecs.count());
    client.set_read_timeout(secs.count(), usecs.count());
    client.set_write_timeout(secs.count(), usecs.count());
    auto res = client.Post("/encode", body, "application/json");
    if (!res) {
      last_error = httplib::to_string(res.error());
      continue;
    }
    if (res->status != 200) {
      last_error = "HTTP status " + std::to_string(res->status);
      continue;
    }
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(res->body);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(std::string("encoder response is not JSON: ") + e.what());
    }
    if (!j.contains("vectors") || !j["vectors"].is_array()) {
      throw ParseError("encoder response lacks a 'vectors' list");
    }
    if (j["vectors"].size() != items.size()) {
      throw ValidationError("encoder returned " + std::to_string(j["vectors"].size()) +
                            " vectors for " + std::to_string(items.size()) + " items");
    }
    try {
      return j["vectors"].get<std::vector<std::vector<double>>>();
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(std::string("encoder vectors malformed: ") + e.what());
    }
  }
  throw TransportError("encoder request to " + ep.url + "/encode failed after " +
                       std::to_string(ep.retries + 1) + " attempt(s): " + last_error);
}

}  // namespace detail

/// Encodes `items` in chunks of endpoint.batch_size; output order follows input order.
inline EmbeddingSet encode_remote(const EncoderEndpoint& ep, const std::vector<EncodeItem>& items,
                                  EmbeddingKind kind) {
  ep.validate();
  const std::size_t chunks = (items.size() + ep.batch_size - 1) / ep.batch_size;
  std::vector<std::vector<std::vector<double>>> results(chunks);

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t c = next++; c < chunks; c = next++) {
      const std::size_t begin = c * ep.batch_size;
      const std::size_t len = std::min(ep.batch_size, items.size() - begin);
      results[c] = detail::post_chunk(ep, std::span(items).subspan(begin, len), kind);
    }
  };
  std::vector<std::future<void>> futures;
  const std::size_t workers = std::min(ep.parallelism, chunks);
  for (std::size_t w = 0; w < workers; ++w) futures.push_back(std::async(std::launch::async, worker));
  std::exception_ptr first_error;
  for (auto& f : futures) {
    try {
      f.get();
    } catch (...) {
      if (!first_error) first_error = std::current_exception();
      next = chunks;
    }
  }
  if (first_error) std::rethrow_exception(first_error);

  std::optional<EmbeddingSet> set;
  std::size_t i = 0;
  for (auto& chunk : results) {
    for (auto& v : chunk) {
      if (!set) set.emplace(kind, v.size());
      set->add(items[i++].id, v);
    }
  }
  // An empty request list yields an empty set; dimension is unknown, use 1.
  return set ? std::move(*set) : EmbeddingSet(kind, 1);
}

}  // namespace lareqa
