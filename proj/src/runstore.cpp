#include "medagent/runstore.hpp"

#include <openssl/evp.h>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include "medagent/errors.hpp"

namespace medagent {

std::string sha256_hex(std::string_view bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (!ctx) throw std::runtime_error("EVP_MD_CTX_new failed");
  bool ok = EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) == 1 &&
            EVP_DigestUpdate(ctx, bytes.data(), bytes.size()) == 1 &&
            EVP_DigestFinal_ex(ctx, digest, &len) == 1;
  EVP_MD_CTX_free(ctx);
  if (!ok) throw std::runtime_error("SHA-256 computation failed");

  static const char* hex = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[digest[i] >> 4]);
    out.push_back(hex[digest[i] & 0xf]);
  }
  return out;
}

std::string sha256_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open file for digest: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return sha256_hex(ss.str());
}

std::string canonical_digest(const nlohmann::json& value) {
  return sha256_hex(value.dump());
}

// --- DiskCache ---------------------------------------------------------------

DiskCache::DiskCache(std::filesystem::path root)
    : root_(std::move(root)), state_(std::make_shared<State>()) {
  std::filesystem::create_directories(root_);
}

std::optional<DiskCache> DiskCache::from_env() {
  const char* dir = std::getenv("MEDAGENT_CACHE_DIR");
  if (!dir || !*dir) return std::nullopt;
  return DiskCache(dir);
}

std::filesystem::path DiskCache::entry_path(const std::string& digest) const {
  if (digest.size() < 4) return root_ / (digest + ".json");
  return root_ / digest.substr(0, 2) / digest.substr(2, 2) / (digest + ".json");
}

std::optional<nlohmann::json> DiskCache::lookup(const std::string& digest) const {
  std::filesystem::path p = entry_path(digest);
  std::ifstream in(p);
  if (!in) return std::nullopt;
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception&) {
    std::cerr << "warning: corrupted cache entry treated as miss: " << p.string() << "\n";
    return std::nullopt;
  }
}

nlohmann::json DiskCache::get_or_compute(const std::string& digest,
                                         const std::function<nlohmann::json()>& produce) {
  if (auto hit = lookup(digest)) {
    state_->hits.fetch_add(1);
    return *hit;
  }

  std::shared_future<nlohmann::json> flight;
  std::shared_ptr<std::promise<nlohmann::json>> promise;
  {
    std::lock_guard<std::mutex> lock(state_->flights_mutex);
    auto it = state_->flights.find(digest);
    if (it != state_->flights.end()) {
      flight = it->second;
    } else {
      // re-check under the lock: a completed flight may have landed on disk
      if (auto hit = lookup(digest)) {
        state_->hits.fetch_add(1);
        return *hit;
      }
      promise = std::make_shared<std::promise<nlohmann::json>>();
      flight = promise->get_future().share();
      state_->flights.emplace(digest, flight);
      state_->misses.fetch_add(1);
    }
  }

  if (!promise) {
    // follower: served from the leader's in-flight compute
    state_->hits.fetch_add(1);
    return flight.get();
  }

  auto land = [&] {
    std::lock_guard<std::mutex> lock(state_->flights_mutex);
    state_->flights.erase(digest);
  };
  try {
    nlohmann::json value = produce();
    std::filesystem::path p = entry_path(digest);
    std::filesystem::create_directories(p.parent_path());
    static std::atomic<std::uint64_t> tmp_counter{0};
    std::filesystem::path tmp = p;
    tmp += ".tmp" + std::to_string(tmp_counter.fetch_add(1));
    {
      std::ofstream out(tmp);
      out << value.dump();
    }
    std::filesystem::rename(tmp, p);
    promise->set_value(value);
    land();
    return value;
  } catch (...) {
    promise->set_exception(std::current_exception());
    land();
    throw;
  }
}

// --- RecordWriter ------------------------------------------------------------

RecordWriter::RecordWriter(std::filesystem::path file) : path_(std::move(file)) {
  std::filesystem::path parent = path_.parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
  file_ = std::fopen(path_.string().c_str(), "ab");
  if (!file_) throw DataError("cannot open stream for append: " + path_.string());
}

RecordWriter::~RecordWriter() {
  if (file_) std::fclose(file_);
}

std::uint64_t RecordWriter::append(const nlohmann::json& record) {
  return append_line(record.dump());
}

std::uint64_t RecordWriter::append_line(const std::string& line) {
  std::lock_guard<std::mutex> lock(mutex_);
  long pos = std::ftell(file_);
  std::string buf = line;
  buf.push_back('\n');
  if (std::fwrite(buf.data(), 1, buf.size(), file_) != buf.size()) {
    throw DataError("append failed on stream: " + path_.string());
  }
  std::fflush(file_);
  return static_cast<std::uint64_t>(pos < 0 ? 0 : pos);
}

}  // namespace medagent
