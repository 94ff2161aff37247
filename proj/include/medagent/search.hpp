#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "medagent/records.hpp"

namespace medagent {

struct FixtureDoc {
  std::string doc_id;
  std::string title;
  std::string content;
  std::string source_url;
};

// Offline BM25 index over a fixture corpus (k1=1.2, b=0.75, lowercase +
// punctuation-strip tokenization). idf(t) = ln((N - df + 0.5) / (df + 0.5)),
// which goes negative when a term appears in most documents of a tiny corpus;
// ranking is still well defined. Index statistics are exposed so they can be
// recomputed from the docs in tests.
class Bm25Index {
 public:
  static constexpr double kK1 = 1.2;
  static constexpr double kB = 0.75;

  // Throws DataError on an empty doc list or duplicate doc_ids.
  static Bm25Index build(std::vector<FixtureDoc> docs);

  std::size_t doc_count() const { return docs_.size(); }
  double avg_doc_len() const { return avg_doc_len_; }
  std::size_t doc_len(std::size_t i) const { return doc_lens_[i]; }
  std::size_t doc_freq(const std::string& term) const;
  std::size_t term_freq(std::size_t doc, const std::string& term) const;
  double idf(const std::string& term) const;
  const std::vector<FixtureDoc>& docs() const { return docs_; }

  double score(std::size_t doc, const std::vector<std::string>& query_terms) const;

  struct Scored {
    std::size_t doc = 0;
    double score = 0.0;
  };
  // Docs sharing no term with the query are excluded. Ordered by score
  // descending, ties broken by doc_id ascending.
  std::vector<Scored> query(const std::string& query_text, std::size_t top_k) const;

 private:
  std::vector<FixtureDoc> docs_;
  std::vector<std::size_t> doc_lens_;
  std::vector<std::map<std::string, std::size_t>> term_freqs_;
  std::map<std::string, std::size_t> doc_freqs_;
  double avg_doc_len_ = 0.0;
};

std::vector<FixtureDoc> load_fixture_docs(const std::filesystem::path& path);

class SearchBackend {
 public:
  virtual ~SearchBackend() = default;
  // Empty result set is not an error. Ranks ascend from 1 in relevance order.
  virtual std::vector<RetrievedDoc> search(const std::string& query, int top_k) = 0;
  virtual std::string id() const = 0;
};

// Deterministic stand-in for the web API: a pure function of
// (corpus, query, top_k).
class FixtureSearchBackend : public SearchBackend {
 public:
  explicit FixtureSearchBackend(Bm25Index index) : index_(std::move(index)) {}

  std::vector<RetrievedDoc> search(const std::string& query, int top_k) override;
  std::string id() const override { return "fixture"; }

  const Bm25Index& index() const { return index_; }

 private:
  Bm25Index index_;
};

struct HttpSearchConfig {
  std::string base_url;
  std::string api_key;
  std::string path = "/search";
  int timeout_s = 30;
  int max_concurrent = 4;
  // optional domain allowlist; empty means no filtering
  std::vector<std::string> allowed_domains;
};

HttpSearchConfig http_search_config_from_env();

// GET {path}?q=<query>&top_k=<k> with the key in an X-Api-Key header.
// Expects {results:[{title, content|snippet, url}]}.
class HttpSearchBackend : public SearchBackend {
 public:
  explicit HttpSearchBackend(HttpSearchConfig config);
  ~HttpSearchBackend() override;

  std::vector<RetrievedDoc> search(const std::string& query, int top_k) override;
  std::string id() const override { return "http-search"; }

 private:
  HttpSearchConfig config_;
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// Drops docs whose source_url host is not (a subdomain of) an allowed domain.
std::vector<RetrievedDoc> filter_domains(std::vector<RetrievedDoc> docs,
                                         const std::vector<std::string>& allowed_domains);

struct ContextBlock {
  std::string text;
  bool truncated = false;
  std::size_t docs_included = 0;
};

// Serializes docs in rank order into a "Search Results" block whose sections
// each end with "Source: <url>". Truncation drops whole docs from the tail;
// growing the budget never removes a doc a smaller budget included.
ContextBlock format_context(std::span<const RetrievedDoc> docs, std::size_t char_budget);

}  // namespace medagent
