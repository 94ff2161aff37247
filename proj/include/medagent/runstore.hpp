#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>

#include <json.hpp>

namespace medagent {

// SHA-256 of raw bytes, lowercase hex.
std::string sha256_hex(std::string_view bytes);

std::string sha256_file(const std::filesystem::path& path);

// Field-order-independent digest: nlohmann keeps object keys sorted, so a
// dump of the value is already canonical.
std::string canonical_digest(const nlohmann::json& value);

// Content-addressed on-disk cache. One file per entry under a two-level
// digest-prefix tree (root/ab/cd/<digest>.json). A corrupted entry is treated
// as a miss with a warning. The cache is a pure memo: it changes call counts,
// never values.
class DiskCache {
 public:
  explicit DiskCache(std::filesystem::path root);

  // Root taken from MEDAGENT_CACHE_DIR; nullopt when unset.
  static std::optional<DiskCache> from_env();

  // At-most-once compute per key under concurrency (per-key single flight):
  // concurrent misses on one key share a single producer call.
  nlohmann::json get_or_compute(const std::string& digest,
                                const std::function<nlohmann::json()>& produce);

  std::optional<nlohmann::json> lookup(const std::string& digest) const;

  const std::filesystem::path& root() const { return root_; }
  std::uint64_t hits() const { return state_->hits.load(); }
  std::uint64_t misses() const { return state_->misses.load(); }

 private:
  struct State {
    std::mutex flights_mutex;
    std::map<std::string, std::shared_future<nlohmann::json>> flights;
    std::atomic<std::uint64_t> hits{0};
    std::atomic<std::uint64_t> misses{0};
  };

  std::filesystem::path entry_path(const std::string& digest) const;

  std::filesystem::path root_;
  std::shared_ptr<State> state_;  // copies of a cache share one flight table
};

// Append-only line-delimited record stream. Appends are serialized; records
// are readable in write order and reopening continues without truncation.
class RecordWriter {
 public:
  explicit RecordWriter(std::filesystem::path file);
  ~RecordWriter();

  RecordWriter(const RecordWriter&) = delete;
  RecordWriter& operator=(const RecordWriter&) = delete;

  // Returns the byte offset the record was written at.
  std::uint64_t append(const nlohmann::json& record);
  std::uint64_t append_line(const std::string& line);

  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
  std::mutex mutex_;
  std::FILE* file_ = nullptr;
};

}  // namespace medagent
