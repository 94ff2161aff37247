#include <doctest.h>

#include <atomic>
#include <random>
#include <set>
#include <thread>

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include "helpers.hpp"
#include "medagent/llm.hpp"

using namespace medagent;
using testutil::TempDir;

namespace {

GenRequest req_for(const std::string& prompt, int sample_index = 0) {
  GenRequest r;
  r.prompt = prompt;
  r.sample_index = sample_index;
  return r;
}

}  // namespace

TEST_CASE("scripted mock returns the first matching entry") {
  MockBackend mock({{"question one", 0, "Answer: (A)"},
                    {"question one", 1, "Answer: (B)"},
                    {"", 0, "fallthrough"}});
  CHECK(mock.generate(req_for("about question one", 0)).text == "Answer: (A)");
  CHECK(mock.generate(req_for("about question one", 1)).text == "Answer: (B)");
  CHECK(mock.generate(req_for("something else", 0)).text == "fallthrough");
}

TEST_CASE("substring predicates select specific prompts") {
  MockBackend mock({{"conflict", 0, "1. q1\n2. q2\n3. q3"}, {"", 0, "generic"}});
  CHECK(mock.generate(req_for("resolve the conflict between", 0)).text ==
        "1. q1\n2. q2\n3. q3");
  CHECK(mock.generate(req_for("plain question", 0)).text == "generic");
}

TEST_CASE("unmatched prompt raises a distinguished unscripted error") {
  MockBackend mock({{"needle", 0, "found"}});
  try {
    mock.generate(req_for("no match here", 0));
    FAIL("expected BackendError");
  } catch (const BackendError& e) {
    CHECK(e.kind() == BackendErrorKind::unscripted);
    CHECK_FALSE(e.retryable());
  }
}

TEST_CASE("duplicate script entries are a configuration error") {
  try {
    MockBackend mock({{"same", 1, "a"}, {"same", 1, "b"}});
    FAIL("expected BackendError");
  } catch (const BackendError& e) {
    CHECK(e.kind() == BackendErrorKind::config);
  }
}

TEST_CASE("prompt over the configured context limit raises context_length") {
  MockBackend mock({{"", 0, "ok"}}, "mock", 16);
  CHECK(mock.generate(req_for("short", 0)).text == "ok");
  try {
    mock.generate(req_for(std::string(64, 'x'), 0));
    FAIL("expected BackendError");
  } catch (const BackendError& e) {
    CHECK(e.kind() == BackendErrorKind::context_length);
  }
}

TEST_CASE("mock is deterministic for identical (prompt, sample_index)") {
  MockBackend mock({{"", 0, "stable"}});
  auto a = mock.generate(req_for("p", 0));
  auto b = mock.generate(req_for("p", 0));
  CHECK(a.text == b.text);
  CHECK(a.backend_id == b.backend_id);
}

TEST_CASE("replay wrapper: one upstream call per distinct cache key") {
  TempDir dir;
  MockBackend mock({{"", 0, "zero"}, {"", 1, "one"}});
  CountingBackend counting(mock);
  ReplayBackend replay(counting, DiskCache(dir.path()));

  auto r1 = replay.generate(req_for("prompt", 0));
  auto r2 = replay.generate(req_for("prompt", 0));
  CHECK(r1.text == "zero");
  CHECK(r2.text == "zero");
  CHECK(r2.backend_id == r1.backend_id);
  CHECK(counting.calls() == 1);

  // sample_index enters the cache key
  CHECK(replay.generate(req_for("prompt", 1)).text == "one");
  CHECK(counting.calls() == 2);

  // different prompt, different key
  replay.generate(req_for("other prompt", 0));
  CHECK(counting.calls() == 3);
}

TEST_CASE("replay wrapper: upstream calls equal distinct cache keys on random sequences") {
  TempDir dir;
  MockBackend mock({{"", 0, "s0"}, {"", 1, "s1"}, {"", 2, "s2"}});
  CountingBackend counting(mock);
  ReplayBackend replay(counting, DiskCache(dir.path()));

  std::mt19937 rng(6021);
  std::set<std::string> distinct;
  for (int i = 0; i < 200; ++i) {
    GenRequest req;
    req.prompt = "prompt-" + std::to_string(rng() % 10);
    req.sample_index = static_cast<int>(rng() % 3);
    req.temperature = (rng() % 2) ? 0.7 : 0.2;
    distinct.insert(cache_key_digest(replay.id(), req));
    replay.generate(req);
    CHECK(counting.calls() == distinct.size());
  }
}

TEST_CASE("cache key digest ignores nothing in the canonical request") {
  GenRequest a = req_for("p", 0);
  GenRequest b = req_for("p", 0);
  b.temperature = a.temperature + 0.1;
  CHECK(cache_key_digest("m", a) != cache_key_digest("m", b));
  CHECK(cache_key_digest("m", a) != cache_key_digest("other", a));
  CHECK(cache_key_digest("m", a) == cache_key_digest("m", req_for("p", 0)));
}

TEST_CASE("http backend speaks the minimal chat-completion exchange") {
  httplib::Server server;
  std::atomic<int> hits{0};
  nlohmann::json seen_body;
  std::string seen_auth;
  server.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
    hits.fetch_add(1);
    seen_body = nlohmann::json::parse(req.body);
    if (req.has_header("Authorization")) seen_auth = req.get_header_value("Authorization");
    nlohmann::json out{{"choices",
                        nlohmann::json::array(
                            {nlohmann::json{{"message", {{"content", "Answer: (C)"}}}}})},
                       {"usage", {{"prompt_tokens", 12}, {"completion_tokens", 3}}}};
    res.set_content(out.dump(), "application/json");
  });
  int port = server.bind_to_any_port("127.0.0.1");
  std::thread server_thread([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  HttpLlmConfig cfg;
  cfg.base_url = "http://127.0.0.1:" + std::to_string(port);
  cfg.api_key = "sk-test";
  cfg.model = "test-model";
  HttpLlmBackend backend(cfg);
  GenRequest req = req_for("What is the PTT reference range?", 2);
  req.temperature = 0.5;
  req.max_tokens = 128;
  GenResponse resp = backend.generate(req);

  CHECK(resp.text == "Answer: (C)");
  REQUIRE(resp.usage.has_value());
  CHECK(resp.usage->prompt_tokens == 12);
  CHECK(hits.load() == 1);
  CHECK(seen_auth == "Bearer sk-test");
  CHECK(seen_body["model"] == "test-model");
  CHECK(seen_body["temperature"] == 0.5);
  CHECK(seen_body["max_tokens"] == 128);
  REQUIRE(seen_body["messages"].size() == 1);
  CHECK(seen_body["messages"][0]["role"] == "user");
  CHECK(seen_body["messages"][0]["content"] == req.prompt);

  server.stop();
  server_thread.join();
}

TEST_CASE("http backend retries transport failures then succeeds") {
  httplib::Server server;
  std::atomic<int> hits{0};
  server.Post("/v1/chat/completions", [&](const httplib::Request&, httplib::Response& res) {
    if (hits.fetch_add(1) == 0) {
      res.status = 503;
      return;
    }
    nlohmann::json out{
        {"choices",
         nlohmann::json::array({nlohmann::json{{"message", {{"content", "recovered"}}}}})}};
    res.set_content(out.dump(), "application/json");
  });
  int port = server.bind_to_any_port("127.0.0.1");
  std::thread server_thread([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  HttpLlmConfig cfg;
  cfg.base_url = "http://127.0.0.1:" + std::to_string(port);
  cfg.model = "m";
  cfg.retry_base_ms = 1;
  HttpLlmBackend backend(cfg);
  CHECK(backend.generate(req_for("p")).text == "recovered");
  CHECK(hits.load() == 2);

  server.stop();
  server_thread.join();
}

TEST_CASE("http backend maps auth and refusal without retry loops") {
  httplib::Server server;
  std::atomic<int> hits{0};
  server.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
    hits.fetch_add(1);
    nlohmann::json body = nlohmann::json::parse(req.body);
    std::string content = body["messages"][0]["content"];
    if (content == "forbidden") {
      res.status = 401;
    } else if (content == "filtered") {
      res.status = 400;
      res.set_content("{\"error\": \"blocked by safety filter\"}", "application/json");
    } else {
      res.status = 400;
      res.set_content("{\"error\": \"maximum context length exceeded, too many tokens\"}",
                      "application/json");
    }
  });
  int port = server.bind_to_any_port("127.0.0.1");
  std::thread server_thread([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  HttpLlmConfig cfg;
  cfg.base_url = "http://127.0.0.1:" + std::to_string(port);
  cfg.model = "m";
  cfg.retry_base_ms = 1;
  HttpLlmBackend backend(cfg);

  try {
    backend.generate(req_for("forbidden"));
    FAIL("expected auth error");
  } catch (const BackendError& e) {
    CHECK(e.kind() == BackendErrorKind::auth);
  }
  try {
    backend.generate(req_for("filtered"));
    FAIL("expected refusal");
  } catch (const BackendError& e) {
    CHECK(e.kind() == BackendErrorKind::refusal);
    CHECK(std::string(e.what()).find("safety filter") != std::string::npos);
  }
  try {
    backend.generate(req_for("overflow"));
    FAIL("expected context_length");
  } catch (const BackendError& e) {
    CHECK(e.kind() == BackendErrorKind::context_length);
  }
  CHECK(hits.load() == 3);  // none of these retried

  server.stop();
  server_thread.join();
}

TEST_CASE("script file loader round trip") {
  TempDir dir;
  testutil::write_file(dir / "script.jsonl",
                       "{\"match\":\"q1\",\"sample_index\":0,\"text\":\"Answer: (A)\"}\n"
                       "{\"match\":\"\",\"sample_index\":0,\"text\":\"default\"}\n");
  auto entries = load_script_file(dir / "script.jsonl");
  REQUIRE(entries.size() == 2);
  MockBackend mock(entries);
  CHECK(mock.generate(req_for("about q1", 0)).text == "Answer: (A)");
}
