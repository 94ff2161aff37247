#include <doctest.h>

#include <atomic>
#include <thread>
#include <vector>

#include "helpers.hpp"
#include "medagent/runstore.hpp"

using namespace medagent;
using testutil::TempDir;

TEST_CASE("sha256 matches the FIPS-180 test vector") {
  CHECK(sha256_hex("abc") ==
        "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  CHECK(sha256_hex("") ==
        "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
}

TEST_CASE("canonical digest is field-order independent") {
  nlohmann::json a{{"x", 1}, {"y", "z"}};
  nlohmann::json b{{"y", "z"}, {"x", 1}};
  CHECK(canonical_digest(a) == canonical_digest(b));
}

TEST_CASE("miss then hit invokes the producer exactly once") {
  TempDir dir;
  DiskCache cache(dir.path());
  int calls = 0;
  auto produce = [&] {
    ++calls;
    return nlohmann::json{{"v", 42}};
  };
  auto a = cache.get_or_compute("k1", produce);
  auto b = cache.get_or_compute("k1", produce);
  CHECK(calls == 1);
  CHECK(a == b);
  CHECK(cache.hits() == 1);
  CHECK(cache.misses() == 1);
}

TEST_CASE("concurrent misses on one key share a single producer call") {
  TempDir dir;
  DiskCache cache(dir.path());
  std::atomic<int> calls{0};
  auto produce = [&] {
    calls.fetch_add(1);
    std::this_thread::sleep_for(std::chrono::milliseconds(30));
    return nlohmann::json{{"v", 1}};
  };
  std::vector<std::thread> threads;
  std::atomic<int> ok{0};
  for (int i = 0; i < 8; ++i) {
    threads.emplace_back([&] {
      auto v = cache.get_or_compute("shared", produce);
      if (v.at("v") == 1) ok.fetch_add(1);
    });
  }
  for (auto& t : threads) t.join();
  CHECK(calls.load() == 1);
  CHECK(ok.load() == 8);
}

TEST_CASE("corrupted entry is treated as a miss and repaired") {
  TempDir dir;
  DiskCache cache(dir.path());
  cache.get_or_compute("key", [] { return nlohmann::json{{"v", 7}}; });

  // clobber the stored entry
  bool clobbered = false;
  for (const auto& e : std::filesystem::recursive_directory_iterator(dir.path())) {
    if (e.is_regular_file()) {
      testutil::write_file(e.path(), "{corrupt");
      clobbered = true;
    }
  }
  REQUIRE(clobbered);

  int calls = 0;
  auto v = cache.get_or_compute("key", [&] {
    ++calls;
    return nlohmann::json{{"v", 8}};
  });
  CHECK(calls == 1);
  CHECK(v.at("v") == 8);
  // repaired on disk
  CHECK(cache.lookup("key").has_value());
}

TEST_CASE("append_record keeps write order and survives reopen") {
  TempDir dir;
  auto path = dir / "stream.jsonl";
  {
    RecordWriter writer(path);
    writer.append(nlohmann::json{{"n", 1}});
    writer.append(nlohmann::json{{"n", 2}});
  }
  {
    RecordWriter writer(path);  // reopen continues, no truncation
    writer.append(nlohmann::json{{"n", 3}});
  }
  std::string content = testutil::read_file(path);
  CHECK(content == "{\"n\":1}\n{\"n\":2}\n{\"n\":3}\n");
}

TEST_CASE("concurrent appends produce intact lines") {
  TempDir dir;
  RecordWriter writer(dir / "stream.jsonl");
  std::vector<std::thread> threads;
  for (int w = 0; w < 4; ++w) {
    threads.emplace_back([&, w] {
      for (int i = 0; i < 25; ++i) {
        writer.append(nlohmann::json{{"worker", w}, {"i", i}});
      }
    });
  }
  for (auto& t : threads) t.join();

  std::istringstream in(testutil::read_file(dir / "stream.jsonl"));
  std::string line;
  int count = 0;
  while (std::getline(in, line)) {
    auto j = nlohmann::json::parse(line);  // throws if interleaved
    CHECK(j.contains("worker"));
    ++count;
  }
  CHECK(count == 100);
}
