#include "medagent/search.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <semaphore>
#include <set>

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>
#include <json.hpp>

#include "medagent/errors.hpp"
#include "medagent/textutil.hpp"

namespace medagent {

using nlohmann::json;

// --- Bm25Index ---------------------------------------------------------------

Bm25Index Bm25Index::build(std::vector<FixtureDoc> docs) {
  if (docs.empty()) throw DataError("fixture corpus must contain at least one doc");
  std::set<std::string> ids;
  for (const auto& d : docs) {
    if (!ids.insert(d.doc_id).second) throw DataError("duplicate doc_id: " + d.doc_id);
  }

  Bm25Index index;
  index.docs_ = std::move(docs);
  std::size_t total_len = 0;
  for (const auto& d : index.docs_) {
    std::vector<std::string> tokens = tokenize(d.title + " " + d.content);
    std::map<std::string, std::size_t> tf;
    for (const auto& t : tokens) ++tf[t];
    for (const auto& [term, _] : tf) ++index.doc_freqs_[term];
    index.doc_lens_.push_back(tokens.size());
    total_len += tokens.size();
    index.term_freqs_.push_back(std::move(tf));
  }
  index.avg_doc_len_ = static_cast<double>(total_len) / static_cast<double>(index.docs_.size());
  return index;
}

std::size_t Bm25Index::doc_freq(const std::string& term) const {
  auto it = doc_freqs_.find(term);
  return it == doc_freqs_.end() ? 0 : it->second;
}

std::size_t Bm25Index::term_freq(std::size_t doc, const std::string& term) const {
  const auto& tf = term_freqs_.at(doc);
  auto it = tf.find(term);
  return it == tf.end() ? 0 : it->second;
}

double Bm25Index::idf(const std::string& term) const {
  double n = static_cast<double>(doc_count());
  double df = static_cast<double>(doc_freq(term));
  return std::log((n - df + 0.5) / (df + 0.5));
}

double Bm25Index::score(std::size_t doc, const std::vector<std::string>& query_terms) const {
  double s = 0.0;
  double len_norm = kK1 * (1.0 - kB + kB * static_cast<double>(doc_lens_[doc]) / avg_doc_len_);
  for (const auto& term : query_terms) {
    double tf = static_cast<double>(term_freq(doc, term));
    if (tf == 0.0) continue;
    s += idf(term) * tf * (kK1 + 1.0) / (tf + len_norm);
  }
  return s;
}

std::vector<Bm25Index::Scored> Bm25Index::query(const std::string& query_text,
                                                std::size_t top_k) const {
  std::vector<std::string> terms = tokenize(query_text);
  std::vector<Scored> scored;
  for (std::size_t i = 0; i < docs_.size(); ++i) {
    bool any_overlap = std::any_of(terms.begin(), terms.end(),
                                   [&](const std::string& t) { return term_freq(i, t) > 0; });
    if (!any_overlap) continue;
    scored.push_back({i, score(i, terms)});
  }
  std::sort(scored.begin(), scored.end(), [&](const Scored& a, const Scored& b) {
    if (a.score != b.score) return a.score > b.score;
    return docs_[a.doc].doc_id < docs_[b.doc].doc_id;
  });
  if (scored.size() > top_k) scored.resize(top_k);
  return scored;
}

std::vector<FixtureDoc> load_fixture_docs(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open fixture corpus: " + path.string());
  std::vector<FixtureDoc> docs;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    try {
      json j = json::parse(line);
      FixtureDoc d;
      d.doc_id = j.at("doc_id").get<std::string>();
      d.title = j.value("title", std::string{});
      d.content = j.at("content").get<std::string>();
      d.source_url = j.value("source_url", std::string{});
      docs.push_back(std::move(d));
    } catch (const json::exception& e) {
      throw DataError("corpus line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return docs;
}

// --- FixtureSearchBackend ------------------------------------------------------

std::vector<RetrievedDoc> FixtureSearchBackend::search(const std::string& query, int top_k) {
  if (query.empty()) throw DataError("search query must be non-empty");
  if (top_k <= 0) throw DataError("top_k must be positive");
  std::vector<RetrievedDoc> out;
  int rank = 1;
  for (const auto& hit : index_.query(query, static_cast<std::size_t>(top_k))) {
    const FixtureDoc& d = index_.docs()[hit.doc];
    out.push_back({d.title, d.content, d.source_url, rank++, query});
  }
  return out;
}

// --- HttpSearchBackend ---------------------------------------------------------

HttpSearchConfig http_search_config_from_env() {
  HttpSearchConfig cfg;
  if (const char* v = std::getenv("MEDAGENT_SEARCH_BASE_URL")) cfg.base_url = v;
  if (const char* v = std::getenv("MEDAGENT_SEARCH_API_KEY")) cfg.api_key = v;
  return cfg;
}

struct HttpSearchBackend::Impl {
  explicit Impl(const HttpSearchConfig& cfg)
      : client(cfg.base_url), slots(cfg.max_concurrent > 0 ? cfg.max_concurrent : 1) {
    client.set_connection_timeout(cfg.timeout_s);
    client.set_read_timeout(cfg.timeout_s);
  }
  httplib::Client client;
  std::counting_semaphore<64> slots;
};

HttpSearchBackend::HttpSearchBackend(HttpSearchConfig config) : config_(std::move(config)) {
  if (config_.base_url.empty()) {
    throw BackendError(BackendErrorKind::config, "http search backend requires a base URL");
  }
  impl_ = std::make_unique<Impl>(config_);
}

HttpSearchBackend::~HttpSearchBackend() = default;

std::vector<RetrievedDoc> HttpSearchBackend::search(const std::string& query, int top_k) {
  if (query.empty()) throw DataError("search query must be non-empty");
  httplib::Params params{{"q", query}, {"top_k", std::to_string(top_k)}};
  httplib::Headers headers;
  if (!config_.api_key.empty()) headers.emplace("X-Api-Key", config_.api_key);

  impl_->slots.acquire();
  httplib::Result res = impl_->client.Get(config_.path, params, headers);
  impl_->slots.release();

  if (!res) {
    throw BackendError(BackendErrorKind::transport,
                       "search transport failure: " + httplib::to_string(res.error()));
  }
  if (res->status == 401 || res->status == 403) {
    throw BackendError(BackendErrorKind::auth, "search authentication failed");
  }
  if (res->status != 200) {
    throw BackendError(BackendErrorKind::transport,
                       "search returned HTTP " + std::to_string(res->status));
  }

  std::vector<RetrievedDoc> out;
  try {
    json parsed = json::parse(res->body);
    int rank = 1;
    for (const auto& r : parsed.at("results")) {
      RetrievedDoc d;
      d.title = r.value("title", std::string{});
      d.content = r.contains("content") ? r["content"].get<std::string>()
                                        : r.value("snippet", std::string{});
      d.source_url = r.value("url", std::string{});
      d.rank = rank++;
      d.query = query;
      if (!d.content.empty()) out.push_back(std::move(d));
      if (static_cast<int>(out.size()) >= top_k) break;
    }
  } catch (const json::exception& e) {
    throw BackendError(BackendErrorKind::transport,
                       std::string("unparseable search response: ") + e.what());
  }
  if (!config_.allowed_domains.empty()) out = filter_domains(std::move(out), config_.allowed_domains);
  return out;
}

std::vector<RetrievedDoc> filter_domains(std::vector<RetrievedDoc> docs,
                                         const std::vector<std::string>& allowed_domains) {
  if (allowed_domains.empty()) return docs;
  auto host_of = [](const std::string& url) {
    std::string rest = url;
    if (auto pos = rest.find("://"); pos != std::string::npos) rest = rest.substr(pos + 3);
    if (auto pos = rest.find_first_of("/?#"); pos != std::string::npos) rest = rest.substr(0, pos);
    return to_lower(rest);
  };
  auto allowed = [&](const std::string& host) {
    for (const auto& d : allowed_domains) {
      std::string dom = to_lower(d);
      if (host == dom) return true;
      if (host.size() > dom.size() && host.compare(host.size() - dom.size(), dom.size(), dom) == 0 &&
          host[host.size() - dom.size() - 1] == '.') {
        return true;
      }
    }
    return false;
  };
  std::vector<RetrievedDoc> out;
  int rank = 1;
  for (auto& d : docs) {
    if (allowed(host_of(d.source_url))) {
      d.rank = rank++;
      out.push_back(std::move(d));
    }
  }
  return out;
}

// --- format_context ------------------------------------------------------------

namespace {

std::string render_doc(const RetrievedDoc& d) {
  std::string s;
  if (!d.title.empty()) {
    s += d.title;
    s += '\n';
  }
  s += d.content;
  s += "\nSource: ";
  s += d.source_url;
  s += '\n';
  return s;
}

std::string render_block(std::span<const RetrievedDoc> docs, std::size_t count) {
  if (count == 0) return {};
  std::string s = "Search Results\n";
  for (std::size_t i = 0; i < count; ++i) {
    s += render_doc(docs[i]);
    if (i + 1 < count) s += '\n';
  }
  return s;
}

}  // namespace

ContextBlock format_context(std::span<const RetrievedDoc> docs, std::size_t char_budget) {
  std::vector<RetrievedDoc> ordered(docs.begin(), docs.end());
  std::stable_sort(ordered.begin(), ordered.end(),
                   [](const RetrievedDoc& a, const RetrievedDoc& b) { return a.rank < b.rank; });

  ContextBlock block;
  std::size_t keep = 0;
  std::string best;
  for (std::size_t k = 1; k <= ordered.size(); ++k) {
    std::string candidate = render_block(ordered, k);
    if (candidate.size() > char_budget) break;
    keep = k;
    best = std::move(candidate);
  }
  block.text = std::move(best);
  block.docs_included = keep;
  block.truncated = keep < ordered.size();
  return block;
}

}  // namespace medagent
