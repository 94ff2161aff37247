#include <doctest.h>

#include <limits>
#include <random>

#include "helpers.hpp"
#include "medagent/records.hpp"

using namespace medagent;
using testutil::TempDir;

TEST_CASE("mcq round trip is byte-identical after canonicalization") {
  McqItem item = testutil::make_mcq("q1", 2);
  item.meta["step"] = "2";
  std::string line = canonical_line(item);
  McqItem parsed = mcq_from_json(nlohmann::json::parse(line));
  CHECK(canonical_line(parsed) == line);
}

TEST_CASE("serialization round trip holds across record kinds") {
  std::mt19937 rng(7);
  for (int i = 0; i < 50; ++i) {
    CotRecord cot;
    cot.question_id = "q" + std::to_string(rng() % 1000);
    cot.instruction = "inst";
    cot.question = "question " + std::to_string(rng());
    cot.target_cot = "reasoning\nAnswer: (A)";
    cot.correct = (rng() % 2) == 0;
    cot.round = static_cast<int>(rng() % 4);
    if (rng() % 2) cot.predicted_index = static_cast<int>(rng() % 4);
    if (rng() % 2) {
      cot.search_context = std::vector<RetrievedDoc>{
          {"t", "content " + std::to_string(rng()), "https://example.org/" + std::to_string(rng()),
           1, "query"}};
    }
    std::string line = canonical_line(cot);
    CHECK(canonical_line(cot_from_json(nlohmann::json::parse(line))) == line);
  }

  RunRecord run;
  run.item_id = "item-1";
  run.final_answer = 3;
  run.backend_id = "mock";
  run.config_hash = "abc";
  IterationLog it1;
  it1.entropy = 0.6931471805599453;
  it1.counts = {{0, 2}, {1, 2}};
  it1.searched = true;
  it1.queries = {"a", "b", "c"};
  IterationLog it2;
  it2.entropy = 0.0;
  it2.counts = {{0, 5}};
  run.per_iteration = {it1, it2};
  std::string line = canonical_line(run);
  CHECK(canonical_line(run_from_json(nlohmann::json::parse(line))) == line);
}

TEST_CASE("infinite entropy survives the wire as null") {
  RunRecord run;
  run.item_id = "i";
  run.final_answer = std::string("text answer");
  run.backend_id = "b";
  run.config_hash = "h";
  IterationLog log;
  log.entropy = std::numeric_limits<double>::infinity();
  log.searched = false;
  run.per_iteration = {log};
  std::string line = canonical_line(run);
  CHECK(line.find("\"entropy\":null") != std::string::npos);
  RunRecord parsed = run_from_json(nlohmann::json::parse(line));
  CHECK(std::isinf(parsed.per_iteration[0].entropy));
  CHECK(canonical_line(parsed) == line);
}

TEST_CASE("validate_record reports every violation, not just the first") {
  McqItem item;
  item.id = "x";
  item.question = "q";
  item.options = {"", "b", "c", "d"};
  item.answer_index = 7;
  auto violations = validate_record(item);
  REQUIRE(violations.size() == 2);
  CHECK(violations[0].find("options[0]") != std::string::npos);
  CHECK(violations[1].find("answer_index") != std::string::npos);
}

TEST_CASE("validate_record on EHR bundles and spans") {
  EhrBundle bundle;
  bundle.id = "b1";
  bundle.target_entity = "sepsis";
  bundle.notes = {{"n1", "text"}, {"n1", "other"}};
  auto v = validate_record(bundle);
  REQUIRE(v.size() == 1);
  CHECK(v[0].find("duplicate note_id") != std::string::npos);

  SpanItem span;
  span.id = "s1";
  span.question = "when";
  span.video_duration_s = 100.0;
  span.gt_span = {10.0, 20.0};
  CHECK(validate_record(span).empty());

  span.gt_span = {30.0, 20.0};
  CHECK(validate_record(span).size() == 1);
}

TEST_CASE("load_dataset parses valid files and preserves order") {
  TempDir dir;
  std::vector<McqItem> items{testutil::make_mcq("a", 0), testutil::make_mcq("b", 1),
                             testutil::make_mcq("c", 3)};
  write_jsonl(dir / "mcq.jsonl", items);
  auto loaded = load_mcq_file(dir / "mcq.jsonl");
  REQUIRE(loaded.size() == 3);
  CHECK(loaded[0].id == "a");
  CHECK(loaded[2].answer_index == 3);
}

TEST_CASE("malformed line errors carry the line number") {
  TempDir dir;
  testutil::write_file(dir / "bad.jsonl",
                       canonical_line(testutil::make_mcq("a")) + "\nnot json at all\n");
  try {
    load_mcq_file(dir / "bad.jsonl");
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }
}

TEST_CASE("invariant violations name the field and id") {
  TempDir dir;
  McqItem bad = testutil::make_mcq("q9");
  bad.answer_index = 7;
  testutil::write_file(dir / "bad.jsonl", to_json(bad).dump() + "\n");
  try {
    load_mcq_file(dir / "bad.jsonl");
    FAIL("expected DataError");
  } catch (const DataError& e) {
    std::string msg = e.what();
    CHECK(msg.find("answer_index") != std::string::npos);
    CHECK(msg.find("q9") != std::string::npos);
  }
}

TEST_CASE("duplicate ids within a dataset are rejected") {
  TempDir dir;
  testutil::write_file(dir / "dup.jsonl", canonical_line(testutil::make_mcq("same")) + "\n" +
                                              canonical_line(testutil::make_mcq("same")) + "\n");
  CHECK_THROWS_AS(load_mcq_file(dir / "dup.jsonl"), DataError);
}

TEST_CASE("load_dataset dispatches on the kind enum") {
  TempDir dir;
  write_jsonl(dir / "mcq.jsonl", std::vector<McqItem>{testutil::make_mcq("a", 1)});
  Dataset ds = load_dataset(dir / "mcq.jsonl", dataset_kind_from_string("mcq"));
  auto* items = std::get_if<std::vector<McqItem>>(&ds);
  REQUIRE(items != nullptr);
  CHECK(items->size() == 1);
  CHECK_THROWS_AS(dataset_kind_from_string("bogus"), DataError);
}

TEST_CASE("missing schema field is rejected") {
  TempDir dir;
  nlohmann::json j = to_json(testutil::make_mcq("q"));
  j.erase("schema");
  testutil::write_file(dir / "noschema.jsonl", j.dump() + "\n");
  CHECK_THROWS_AS(load_mcq_file(dir / "noschema.jsonl"), DataError);
}
