#include <doctest.h>
#include <httplib.h>

#include <atomic>
#include <set>
#include <thread>

#include "cir/caption.hpp"
#include "cir/error.hpp"
#include "cir/jsonl.hpp"
#include "test_util.hpp"

using namespace cir;

TEST_CASE("prompt rendering is literal") {
  CHECK(render_caption_prompt("dress", 5) == "Please briefly describe the dress in 5 words.");
  CHECK(render_caption_prompt("image", 10) == "Please briefly describe the image in 10 words.");
  CHECK(render_caption_prompt("shirt", 1) == "Please briefly describe the shirt in 1 words.");
  CHECK_THROWS_AS(render_caption_prompt("", 3), UsageError);
  CHECK_THROWS_AS(render_caption_prompt("dress", 0), UsageError);
  const CaptionRequest r = make_caption_request("id1", "/img/id1.jpg", "toptee", 5);
  CHECK(r.prompt == "Please briefly describe the toptee in 5 words.");
  CHECK(r.k == 5);
}

TEST_CASE("word counting and trimming") {
  CHECK(count_words("  a  red\tdress\n") == 3);
  CHECK(count_words("") == 0);
  CHECK(trim("\t a b \n") == "a b");
}

TEST_CASE("stub captions are deterministic with exactly k words") {
  StubCaptionProvider seven(7), seven_again(7), eight(8);
  const auto a = make_caption_request("a", "a", "image", 10);
  const auto b = make_caption_request("b", "b", "image", 10);
  CHECK(seven.caption(a) == seven_again.caption(a));
  CHECK(seven.caption(a) != seven.caption(b));
  CHECK(seven.caption(a) != eight.caption(a));
  for (int k : {1, 5, 10, 37}) CHECK(count_words(seven.caption(make_caption_request("x", "x", "dress", k))) == k);
}

namespace {

class CountingProvider final : public CaptionProvider {
 public:
  std::string name() const override { return "counting"; }
  std::string caption(const CaptionRequest& r) override {
    ++calls;
    if (r.image_id == "blank") return "   ";
    return "  caption of " + r.image_id + " ";
  }
  std::atomic<int> calls{0};
};

}  // namespace

TEST_CASE("caption_batch keeps request order, trims and records word counts") {
  CountingProvider p;
  std::vector<CaptionRequest> reqs;
  for (int i = 0; i < 50; ++i) reqs.push_back(make_caption_request("img" + std::to_string(i), "", "image", 3));
  const auto out = caption_batch(reqs, p, {8, nullptr});
  REQUIRE(out.size() == 50);
  for (int i = 0; i < 50; ++i) {
    CHECK(out[i].image_id == "img" + std::to_string(i));
    CHECK(out[i].caption == "caption of img" + std::to_string(i));
    CHECK(out[i].token_estimate == 3);
    CHECK(out[i].provider == "counting");
  }
}

TEST_CASE("an empty caption is an error naming the image") {
  CountingProvider p;
  std::vector<CaptionRequest> reqs{make_caption_request("fine", "", "image", 3),
                                   make_caption_request("blank", "", "image", 3)};
  try {
    caption_batch(reqs, p);
    FAIL("expected ProviderError");
  } catch (const ProviderError& e) {
    CHECK(std::string(e.what()).find("blank") != std::string::npos);
  }
}

TEST_CASE("cached ids skip the provider and survive a reopen") {
  testutil::TempDir dir("captions");
  std::vector<CaptionRequest> reqs;
  for (int i = 0; i < 6; ++i) reqs.push_back(make_caption_request("c" + std::to_string(i), "", "image", 2));
  CountingProvider p;
  {
    CaptionCache cache(dir / "captions.jsonl");
    caption_batch(std::span(reqs).first(4), p, {2, &cache});
    CHECK(p.calls == 4);
  }
  CaptionCache cache(dir / "captions.jsonl");
  CHECK(cache.size() == 4);
  const auto out = caption_batch(reqs, p, {2, &cache});
  CHECK(p.calls == 6);
  CHECK(out[0].caption == "caption of c0");
  CHECK(out[5].caption == "caption of c5");

  write_captions(dir / "canon.jsonl", out);
  const auto back = read_captions(dir / "canon.jsonl");
  REQUIRE(back.size() == out.size());
  CHECK(back[3].caption == out[3].caption);
}

TEST_CASE("stub provider at generation scale") {
  std::vector<CaptionRequest> reqs;
  reqs.reserve(96000);
  for (int i = 0; i < 96000; ++i) reqs.push_back(make_caption_request("f" + std::to_string(i), "", "dress", 5));
  StubCaptionProvider stub(3);
  const auto out = caption_batch(reqs, stub, {4, nullptr});
  CHECK(out.size() == 96000);
  CHECK(out[95999].image_id == "f95999");
  CHECK(out[12345].token_estimate == 5);
}

namespace {

struct LocalServer {
  httplib::Server server;
  std::thread thread;
  int port = 0;

  LocalServer() = default;
  void start() {
    port = server.bind_to_any_port("127.0.0.1");
    thread = std::thread([this] { server.listen_after_bind(); });
    server.wait_until_ready();
  }
  ~LocalServer() {
    server.stop();
    if (thread.joinable()) thread.join();
  }
  std::string url() const { return "http://127.0.0.1:" + std::to_string(port); }
};

const RetryPolicy kFast{3, std::chrono::milliseconds(1)};

}  // namespace

TEST_CASE("http provider speaks the caption protocol") {
  LocalServer s;
  std::atomic<int> hits{0};
  s.server.Post("/v1/caption", [&](const httplib::Request& req, httplib::Response& res) {
    ++hits;
    const json body = json::parse(req.body);
    const std::string ref = body.at("image_ref");
    if (ref == "empty") {
      res.set_content(json{{"caption", ""}}.dump(), "application/json");
    } else if (ref == "flaky" && hits < 3) {
      res.status = 500;
    } else if (ref == "down") {
      res.status = 503;
    } else if (ref == "other") {
      res.set_content(json{{"caption", "x"}, {"image_id", "someone-else"}}.dump(), "application/json");
    } else {
      res.set_content(json{{"caption", " " + body.at("prompt").get<std::string>() + " "}}.dump(), "application/json");
    }
  });
  s.start();
  HttpCaptionProvider http(s.url() + "/v1/", kFast, std::chrono::seconds(5));

  const auto ok = caption_batch(std::vector{make_caption_request("a", "a.jpg", "dress", 5)}, http);
  CHECK(ok[0].caption == "Please briefly describe the dress in 5 words.");
  CHECK(ok[0].provider == "http");

  hits = 0;
  CHECK(http.caption(make_caption_request("f", "flaky", "image", 3)) == " Please briefly describe the image in 3 words. ");
  CHECK(hits == 3);

  hits = 0;
  CHECK_THROWS_AS(http.caption(make_caption_request("d", "down", "image", 3)), ProviderError);
  CHECK(hits == 3);

  CHECK_THROWS_AS(http.caption(make_caption_request("o", "other", "image", 3)), ProviderError);

  try {
    caption_batch(std::vector{make_caption_request("img-42", "empty", "image", 3)}, http);
    FAIL("expected ProviderError");
  } catch (const ProviderError& e) {
    CHECK(std::string(e.what()).find("img-42") != std::string::npos);
  }
}

TEST_CASE("http provider surfaces an unreachable endpoint") {
  LocalServer s;
  s.start();
  const std::string url = s.url();
  s.server.stop();
  s.thread.join();
  HttpCaptionProvider http(url, kFast, std::chrono::seconds(1));
  CHECK_THROWS_AS(http.caption(make_caption_request("a", "a", "image", 3)), ProviderError);
}
