#include <gtest/gtest.h>

#include <atomic>
#include <thread>

#include "lareqa/remote.hpp"

namespace lareqa {
namespace {

// In-process encoder: vector = (len(text), 1, number of items in the request).
class FakeEncoder {
 public:
  FakeEncoder() {
    server_.Post("/encode", [this](const httplib::Request& req, httplib::Response& res) {
      ++calls_;
      if (fail_first_ > 0) {
        --fail_first_;
        res.status = 503;
        return;
      }
      const auto body = nlohmann::json::parse(req.body);
      last_kind_ = body["kind"];
      nlohmann::json vectors = nlohmann::json::array();
      for (const auto& item : body["items"]) {
        if (item["context"].is_string()) saw_context_ = true;
        vectors.push_back({double(item["text"].get<std::string>().size()), 1.0,
                           double(body["items"].size())});
      }
      if (drop_one_ && !vectors.empty()) vectors.erase(vectors.end() - 1);
      res.set_content(nlohmann::json{{"vectors", vectors}}.dump(), "application/json");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~FakeEncoder() {
    server_.stop();
    thread_.join();
  }

  EncoderEndpoint endpoint() const {
    EncoderEndpoint ep;
    ep.url = "http://127.0.0.1:" + std::to_string(port_);
    ep.batch_size = 2;
    ep.timeout = std::chrono::milliseconds(2000);
    return ep;
  }

  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
  std::atomic<int> calls_{0};
  std::atomic<int> fail_first_{0};
  bool drop_one_ = false;
  bool saw_context_ = false;
  std::string last_kind_;
};

std::vector<EncodeItem> items(std::size_t n, bool with_context = false) {
  std::vector<EncodeItem> out;
  for (std::size_t i = 0; i < n; ++i) {
    EncodeItem it{"id" + std::to_string(i), std::string(i + 1, 'x'), std::nullopt};
    if (with_context) it.context = "ctx";
    out.push_back(it);
  }
  return out;
}

TEST(RequestBody, QuestionsCarryNullContext) {
  const auto its = items(1);
  const auto body = encode_request_body(its, EmbeddingKind::question);
  EXPECT_EQ(body["kind"], "question");
  EXPECT_TRUE(body["items"][0]["context"].is_null());
  EXPECT_EQ(body["items"][0]["id"], "id0");
}

TEST(RequestBody, CandidatesAreAnswers) {
  const auto its = items(1, true);
  EXPECT_EQ(encode_request_body(its, EmbeddingKind::candidate)["kind"], "answer");
}

TEST(EncodeRemote, ChunksAndPreservesOrder) {
  FakeEncoder fake;
  auto ep = fake.endpoint();
  ep.parallelism = 3;
  const auto set = encode_remote(ep, items(5, true), EmbeddingKind::candidate);
  EXPECT_EQ(fake.calls_, 3);
  EXPECT_TRUE(fake.saw_context_);
  EXPECT_EQ(fake.last_kind_, "answer");
  ASSERT_EQ(set.size(), 5u);
  for (std::size_t i = 0; i < 5; ++i) {
    EXPECT_EQ(set.ids()[i], "id" + std::to_string(i));
    // first component tracks text length, so order mix-ups would show
    const auto v = set.row(i);
    const double chunk = (i == 4) ? 1.0 : 2.0;
    const double len = double(i + 1);
    EXPECT_NEAR(v[0], len / std::sqrt(len * len + 1.0 + chunk * chunk), 1e-6);
  }
}

TEST(EncodeRemote, ThreeItemsInChunksOfTwo) {
  FakeEncoder fake;
  const auto set = encode_remote(fake.endpoint(), items(3), EmbeddingKind::question);
  EXPECT_EQ(fake.calls_, 2);
  ASSERT_EQ(set.size(), 3u);
  // third component carries the request size, before normalization
  auto request_size = [&](std::size_t i) {
    const auto v = set.row(i);
    return v[2] / v[1];
  };
  EXPECT_NEAR(request_size(0), 2.0, 1e-6);
  EXPECT_NEAR(request_size(1), 2.0, 1e-6);
  EXPECT_NEAR(request_size(2), 1.0, 1e-6);
}

TEST(EncodeRemote, EmptyInputMakesNoRequests) {
  FakeEncoder fake;
  const auto set = encode_remote(fake.endpoint(), {}, EmbeddingKind::question);
  EXPECT_EQ(set.size(), 0u);
  EXPECT_EQ(fake.calls_, 0);
}

TEST(EncodeRemote, RetriesTransientFailures) {
  FakeEncoder fake;
  fake.fail_first_ = 2;
  auto ep = fake.endpoint();
  ep.retries = 2;
  EXPECT_EQ(encode_remote(ep, items(1), EmbeddingKind::question).size(), 1u);
  EXPECT_EQ(fake.calls_, 3);
}

TEST(EncodeRemote, GivesUpAfterRetries) {
  FakeEncoder fake;
  fake.fail_first_ = 10;
  auto ep = fake.endpoint();
  ep.retries = 1;
  EXPECT_THROW(encode_remote(ep, items(1), EmbeddingKind::question), TransportError);
  EXPECT_EQ(fake.calls_, 2);
}

TEST(EncodeRemote, CountMismatchIsValidationError) {
  FakeEncoder fake;
  fake.drop_one_ = true;
  EXPECT_THROW(encode_remote(fake.endpoint(), items(2), EmbeddingKind::question), ValidationError);
}

TEST(EncodeRemote, UnreachableServiceIsTransportError) {
  EncoderEndpoint ep;
  ep.url = "http://127.0.0.1:1";
  ep.retries = 0;
  ep.timeout = std::chrono::milliseconds(300);
  EXPECT_THROW(encode_remote(ep, items(1), EmbeddingKind::question), TransportError);
}

TEST(EncodeRemote, InvalidEndpointIsRejected) {
  EncoderEndpoint ep;
  EXPECT_THROW(encode_remote(ep, items(1), EmbeddingKind::question), ValidationError);
}

}  // namespace
}  // namespace lareqa
