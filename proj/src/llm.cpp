#include "medagent/llm.hpp"

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <set>
#include <thread>

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include "medagent/textutil.hpp"

namespace medagent {

using nlohmann::json;

nlohmann::json canonical_request(const GenRequest& req) {
  return json{{"prompt", req.prompt},
              {"temperature", req.temperature},
              {"max_tokens", req.max_tokens},
              {"sample_index", req.sample_index},
              {"stop_sequences", req.stop_sequences}};
}

std::string cache_key_digest(const std::string& backend_id, const GenRequest& req) {
  return canonical_digest(json{{"backend_id", backend_id}, {"request", canonical_request(req)}});
}

// --- MockBackend -------------------------------------------------------------

MockBackend::MockBackend(std::vector<ScriptEntry> entries, std::string backend_id,
                         std::size_t context_char_limit)
    : entries_(std::move(entries)),
      backend_id_(std::move(backend_id)),
      context_char_limit_(context_char_limit) {
  std::set<std::pair<std::string, int>> seen;
  for (const auto& e : entries_) {
    if (!seen.insert({e.match, e.sample_index}).second) {
      throw BackendError(BackendErrorKind::config,
                         "duplicate script entry for (match=\"" + e.match + "\", sample_index=" +
                             std::to_string(e.sample_index) + ")");
    }
  }
}

GenResponse MockBackend::generate(const GenRequest& request) {
  if (context_char_limit_ > 0 && request.prompt.size() > context_char_limit_) {
    throw BackendError(BackendErrorKind::context_length,
                       "prompt of " + std::to_string(request.prompt.size()) +
                           " chars exceeds configured context limit of " +
                           std::to_string(context_char_limit_));
  }
  for (const auto& e : entries_) {
    if (e.sample_index != request.sample_index) continue;
    if (e.match.empty() || request.prompt.find(e.match) != std::string::npos) {
      return {e.text, backend_id_, std::nullopt};
    }
  }
  throw BackendError(BackendErrorKind::unscripted,
                     "unscripted prompt (sample_index=" + std::to_string(request.sample_index) +
                         "): " + request.prompt.substr(0, 120));
}

std::vector<ScriptEntry> load_script_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open script file: " + path.string());
  std::vector<ScriptEntry> entries;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    try {
      json j = json::parse(line);
      ScriptEntry e;
      e.match = j.value("match", std::string{});
      e.sample_index = j.value("sample_index", 0);
      e.text = j.at("text").get<std::string>();
      entries.push_back(std::move(e));
    } catch (const json::exception& ex) {
      throw DataError("script line " + std::to_string(line_no) + ": " + ex.what());
    }
  }
  return entries;
}

// --- ReplayBackend -----------------------------------------------------------

ReplayBackend::ReplayBackend(TextBackend& upstream, DiskCache cache)
    : upstream_(upstream), cache_(std::move(cache)) {}

GenResponse ReplayBackend::generate(const GenRequest& request) {
  std::string digest = cache_key_digest(upstream_.id(), request);
  json entry = cache_.get_or_compute(digest, [&] {
    GenResponse fresh = upstream_.generate(request);
    json resp{{"text", fresh.text}, {"backend_id", fresh.backend_id}};
    if (fresh.usage) {
      resp["usage"] = json{{"prompt_tokens", fresh.usage->prompt_tokens},
                           {"completion_tokens", fresh.usage->completion_tokens}};
    }
    return json{{"request", canonical_request(request)}, {"response", resp}};
  });

  const json& resp = entry.at("response");
  GenResponse out;
  out.text = resp.at("text").get<std::string>();
  out.backend_id = resp.at("backend_id").get<std::string>();
  if (resp.contains("usage")) {
    out.usage = GenUsage{resp["usage"].value("prompt_tokens", 0),
                         resp["usage"].value("completion_tokens", 0)};
  }
  return out;
}

// --- HttpLlmBackend ----------------------------------------------------------

HttpLlmConfig http_llm_config_from_env() {
  HttpLlmConfig cfg;
  if (const char* v = std::getenv("MEDAGENT_LLM_BASE_URL")) cfg.base_url = v;
  if (const char* v = std::getenv("MEDAGENT_LLM_API_KEY")) cfg.api_key = v;
  if (const char* v = std::getenv("MEDAGENT_LLM_MODEL")) cfg.model = v;
  return cfg;
}

struct HttpLlmBackend::Impl {
  explicit Impl(const HttpLlmConfig& cfg) : client(cfg.base_url) {
    client.set_connection_timeout(cfg.timeout_s);
    client.set_read_timeout(cfg.timeout_s);
  }
  httplib::Client client;
};

HttpLlmBackend::HttpLlmBackend(HttpLlmConfig config) : config_(std::move(config)) {
  if (config_.base_url.empty()) {
    throw BackendError(BackendErrorKind::config, "http backend requires a base URL");
  }
  impl_ = std::make_unique<Impl>(config_);
}

HttpLlmBackend::~HttpLlmBackend() = default;

std::string HttpLlmBackend::id() const { return "http:" + config_.model; }

GenResponse HttpLlmBackend::generate(const GenRequest& request) {
  if (config_.context_char_limit > 0 && request.prompt.size() > config_.context_char_limit) {
    throw BackendError(BackendErrorKind::context_length,
                       "prompt exceeds configured context limit of " +
                           std::to_string(config_.context_char_limit) + " chars");
  }

  json body{{"model", config_.model},
            {"messages", json::array({json{{"role", "user"}, {"content", request.prompt}}})},
            {"temperature", request.temperature},
            {"max_tokens", request.max_tokens}};
  if (!request.stop_sequences.empty()) body["stop"] = request.stop_sequences;
  std::string payload = body.dump();

  httplib::Headers headers;
  if (!config_.api_key.empty()) headers.emplace("Authorization", "Bearer " + config_.api_key);

  int delay_ms = config_.retry_base_ms;
  std::string last_transport_error;
  for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
    if (attempt > 0) {
      std::this_thread::sleep_for(std::chrono::milliseconds(delay_ms));
      delay_ms *= 2;
    }

    httplib::Result res = impl_->client.Post(config_.path, headers, payload, "application/json");
    if (!res) {
      last_transport_error = "transport failure: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status == 401 || res->status == 403) {
      throw BackendError(BackendErrorKind::auth,
                         "authentication failed (HTTP " + std::to_string(res->status) + ")");
    }
    if (res->status == 429 || res->status >= 500) {
      last_transport_error = "HTTP " + std::to_string(res->status);
      continue;
    }
    if (res->status >= 400) {
      // distinguish context overflow from provider refusals
      if (contains_ci(res->body, "context") &&
          (contains_ci(res->body, "length") || contains_ci(res->body, "window") ||
           contains_ci(res->body, "token"))) {
        throw BackendError(BackendErrorKind::context_length, res->body);
      }
      throw BackendError(BackendErrorKind::refusal,
                         "provider rejected request (HTTP " + std::to_string(res->status) +
                             "): " + res->body);
    }

    json parsed;
    try {
      parsed = json::parse(res->body);
    } catch (const json::exception& e) {
      throw BackendError(BackendErrorKind::transport,
                         std::string("unparseable provider response: ") + e.what());
    }
    if (!parsed.contains("choices") || parsed["choices"].empty()) {
      throw BackendError(BackendErrorKind::refusal,
                         "provider returned no choices: " + res->body.substr(0, 200));
    }
    const json& choice = parsed["choices"][0];
    std::string text = choice.at("message").at("content").get<std::string>();
    if (text.empty()) {
      throw BackendError(BackendErrorKind::refusal, "provider returned an empty completion");
    }

    GenResponse out;
    out.text = std::move(text);
    out.backend_id = id();
    if (parsed.contains("usage")) {
      out.usage = GenUsage{parsed["usage"].value("prompt_tokens", 0),
                           parsed["usage"].value("completion_tokens", 0)};
    }
    return out;
  }
  throw BackendError(BackendErrorKind::transport,
                     "all retries exhausted: " + last_transport_error);
}

}  // namespace medagent
