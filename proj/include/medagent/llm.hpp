#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "medagent/errors.hpp"
#include "medagent/runstore.hpp"

namespace medagent {

struct GenUsage {
  int prompt_tokens = 0;
  int completion_tokens = 0;
};

struct GenRequest {
  std::string prompt;
  double temperature = 0.7;
  int max_tokens = 1024;
  // Distinguishes parallel samples of the same prompt. Injected into cache
  // keys but never into the prompt itself; remote backends realize sample
  // diversity via temperature.
  int sample_index = 0;
  std::vector<std::string> stop_sequences;
};

struct GenResponse {
  std::string text;
  std::string backend_id;
  std::optional<GenUsage> usage;
};

// Canonical request payload (prompt, sampling params, sample_index); retry
// bookkeeping never enters the key.
nlohmann::json canonical_request(const GenRequest& req);
std::string cache_key_digest(const std::string& backend_id, const GenRequest& req);

class TextBackend {
 public:
  virtual ~TextBackend() = default;
  virtual GenResponse generate(const GenRequest& request) = 0;
  virtual std::string id() const = 0;
};

// ---------------------------------------------------------------------------
// Deterministic scripted mock
// ---------------------------------------------------------------------------

struct ScriptEntry {
  std::string match;  // substring the prompt must contain ("" matches all)
  int sample_index = 0;
  std::string text;
};

// Pure lookup table: the first entry whose substring matches the prompt and
// whose sample_index matches the request wins. No state mutates between calls.
class MockBackend : public TextBackend {
 public:
  explicit MockBackend(std::vector<ScriptEntry> entries, std::string backend_id = "mock",
                       std::size_t context_char_limit = 0);

  GenResponse generate(const GenRequest& request) override;
  std::string id() const override { return backend_id_; }

 private:
  std::vector<ScriptEntry> entries_;
  std::string backend_id_;
  std::size_t context_char_limit_;  // 0 = unlimited
};

std::vector<ScriptEntry> load_script_file(const std::filesystem::path& path);

// Test/support backend computing completions from the request.
class CallbackBackend : public TextBackend {
 public:
  using Fn = std::function<std::string(const GenRequest&)>;
  CallbackBackend(Fn fn, std::string backend_id = "callback")
      : fn_(std::move(fn)), backend_id_(std::move(backend_id)) {}

  GenResponse generate(const GenRequest& request) override {
    return {fn_(request), backend_id_, std::nullopt};
  }
  std::string id() const override { return backend_id_; }

 private:
  Fn fn_;
  std::string backend_id_;
};

// Counts upstream calls without touching the wrapped backend's behavior.
class CountingBackend : public TextBackend {
 public:
  explicit CountingBackend(TextBackend& upstream) : upstream_(upstream) {}

  GenResponse generate(const GenRequest& request) override {
    calls_.fetch_add(1);
    return upstream_.generate(request);
  }
  std::string id() const override { return upstream_.id(); }
  std::uint64_t calls() const { return calls_.load(); }

 private:
  TextBackend& upstream_;
  std::atomic<std::uint64_t> calls_{0};
};

// ---------------------------------------------------------------------------
// Record/replay wrapper
// ---------------------------------------------------------------------------

// Memoizes generate() through a DiskCache. Upstream call count equals the
// number of distinct cache keys; values are never altered.
class ReplayBackend : public TextBackend {
 public:
  ReplayBackend(TextBackend& upstream, DiskCache cache);

  GenResponse generate(const GenRequest& request) override;
  std::string id() const override { return upstream_.id(); }

  DiskCache& cache() { return cache_; }

 private:
  TextBackend& upstream_;
  DiskCache cache_;
};

// ---------------------------------------------------------------------------
// Remote HTTP chat backend
// ---------------------------------------------------------------------------

struct HttpLlmConfig {
  std::string base_url;  // scheme://host[:port]
  std::string api_key;
  std::string model;
  std::string path = "/v1/chat/completions";
  int max_retries = 3;        // transport errors only
  int retry_base_ms = 250;    // doubled per retry
  int timeout_s = 60;
  std::size_t context_char_limit = 0;  // 0 = unlimited; checked client-side
};

// Reads MEDAGENT_LLM_BASE_URL / MEDAGENT_LLM_API_KEY / MEDAGENT_LLM_MODEL.
HttpLlmConfig http_llm_config_from_env();

// Minimal chat-completion exchange:
//   request  {model, messages:[{role,content}], temperature, max_tokens}
//   response {choices:[{message:{content}}]}
class HttpLlmBackend : public TextBackend {
 public:
  explicit HttpLlmBackend(HttpLlmConfig config);
  ~HttpLlmBackend() override;

  GenResponse generate(const GenRequest& request) override;
  std::string id() const override;

 private:
  HttpLlmConfig config_;
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace medagent
