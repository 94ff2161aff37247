#include "medagent/cli.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <memory>
#include <mutex>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "medagent/engine.hpp"
#include "medagent/haystack.hpp"
#include "medagent/llm.hpp"
#include "medagent/metrics.hpp"
#include "medagent/parallel.hpp"
#include "medagent/rater.hpp"
#include "medagent/records.hpp"
#include "medagent/reference.hpp"
#include "medagent/runstore.hpp"
#include "medagent/search.hpp"
#include "medagent/selftrain.hpp"
#include "medagent/textutil.hpp"

namespace medagent {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

json load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("config " + path + ": " + e.what());
  }
}

// Resolved backends for one run. Owning pointers; `llm` survives the
// wrappers that reference it.
struct Backends {
  std::unique_ptr<TextBackend> llm_base;
  std::unique_ptr<ReplayBackend> llm_replay;
  std::unique_ptr<SearchBackend> search;

  TextBackend& llm() { return llm_replay ? static_cast<TextBackend&>(*llm_replay) : *llm_base; }
};

std::unique_ptr<TextBackend> make_llm_backend(const json& spec) {
  std::string type = spec.value("type", "http");
  if (type == "mock") {
    std::string script = spec.value("script", std::string{});
    if (script.empty()) throw ConfigError("mock llm backend requires a \"script\" file");
    return std::make_unique<MockBackend>(load_script_file(script),
                                         spec.value("id", std::string("mock")),
                                         spec.value("context_char_limit", std::size_t{0}));
  }
  if (type == "http") {
    HttpLlmConfig cfg = http_llm_config_from_env();
    if (spec.contains("base_url")) cfg.base_url = spec["base_url"].get<std::string>();
    if (spec.contains("model")) cfg.model = spec["model"].get<std::string>();
    if (spec.contains("path")) cfg.path = spec["path"].get<std::string>();
    cfg.context_char_limit = spec.value("context_char_limit", cfg.context_char_limit);
    cfg.max_retries = spec.value("max_retries", cfg.max_retries);
    cfg.timeout_s = spec.value("timeout_s", cfg.timeout_s);
    return std::make_unique<HttpLlmBackend>(cfg);
  }
  throw ConfigError("unknown llm backend type: " + type);
}

std::unique_ptr<SearchBackend> make_search_backend(const json& spec) {
  std::string type = spec.value("type", "fixture");
  if (type == "fixture") {
    std::string corpus = spec.value("corpus", std::string{});
    if (corpus.empty()) throw ConfigError("fixture search backend requires a \"corpus\" file");
    return std::make_unique<FixtureSearchBackend>(Bm25Index::build(load_fixture_docs(corpus)));
  }
  if (type == "http") {
    HttpSearchConfig cfg = http_search_config_from_env();
    if (spec.contains("base_url")) cfg.base_url = spec["base_url"].get<std::string>();
    if (spec.contains("path")) cfg.path = spec["path"].get<std::string>();
    if (spec.contains("allowed_domains")) {
      cfg.allowed_domains = spec["allowed_domains"].get<std::vector<std::string>>();
    }
    cfg.max_concurrent = spec.value("max_concurrent", cfg.max_concurrent);
    return std::make_unique<HttpSearchBackend>(cfg);
  }
  throw ConfigError("unknown search backend type: " + type);
}

Backends make_backends(const json& config) {
  Backends b;
  if (!config.contains("llm")) throw ConfigError("config requires an \"llm\" backend spec");
  b.llm_base = make_llm_backend(config["llm"]);
  if (config.contains("search")) b.search = make_search_backend(config["search"]);

  const json cache_spec = config.value("cache", json::object());
  bool cache_enabled = cache_spec.value("enabled", false);
  if (cache_enabled) {
    std::string dir = cache_spec.value("dir", std::string{});
    std::optional<DiskCache> cache =
        dir.empty() ? DiskCache::from_env() : std::make_optional(DiskCache(dir));
    if (!cache) {
      throw ConfigError("cache enabled but no cache dir (config \"cache.dir\" or MEDAGENT_CACHE_DIR)");
    }
    b.llm_replay = std::make_unique<ReplayBackend>(*b.llm_base, std::move(*cache));
  }
  return b;
}

// fixture search that fails loudly when a command that never searches is run
// without a corpus
class NullSearchBackend : public SearchBackend {
 public:
  std::vector<RetrievedDoc> search(const std::string&, int) override {
    throw BackendError(BackendErrorKind::config,
                       "no search backend configured (set \"search\" in the config)");
  }
  std::string id() const override { return "null"; }
};

// --- report rendering -------------------------------------------------------

void write_text_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << content;
}

std::string fixed_width_table(const std::vector<std::array<std::string, 3>>& rows) {
  std::size_t w0 = 0, w1 = 0;
  for (const auto& r : rows) {
    w0 = std::max(w0, r[0].size());
    w1 = std::max(w1, r[1].size());
  }
  std::ostringstream out;
  for (const auto& r : rows) {
    out << std::left << std::setw(static_cast<int>(w0) + 2) << r[0]
        << std::setw(static_cast<int>(w1) + 2) << r[1] << r[2] << '\n';
  }
  return out.str();
}

std::string format_value(double v) {
  std::ostringstream out;
  out << std::setprecision(6) << v;
  return out.str();
}

// plot-data rows: metric,series,value
void append_plot_row(std::string& csv, const std::string& metric, const std::string& series,
                     double value) {
  csv += metric + "," + series + "," + format_value(value) + "\n";
}

struct RunOutputs {
  fs::path dir;
  RecordWriter runs;
  RecordWriter preds;
  RecordWriter errors;

  explicit RunOutputs(const fs::path& d)
      : dir(d), runs(d / "runs.jsonl"), preds(d / "preds.jsonl"), errors(d / "errors.jsonl") {}
};

fs::path prepare_run_dir(const json& config, const std::string& dataset_path) {
  std::string out = config.value("output_dir", std::string{});
  if (out.empty()) throw ConfigError("config requires \"output_dir\"");
  fs::path dir(out);
  fs::create_directories(dir);
  write_text_file(dir / "config.json", config.dump(2) + "\n");
  json digest{{"dataset", dataset_path}, {"sha256", sha256_file(dataset_path)}};
  write_text_file(dir / "dataset.digest", digest.dump() + "\n");
  return dir;
}

int workers_from(const json& config) { return std::max(1, config.value("workers", 1)); }

// Item failures must not abort a batch, but an auth failure is systemic:
// no item can succeed, so it propagates to the run exit code.
void rethrow_if_systemic(const std::exception& e) {
  if (const auto* backend = dynamic_cast<const BackendError*>(&e)) {
    if (backend->kind() == BackendErrorKind::auth) throw *backend;
  }
}

// --- run-mcq ------------------------------------------------------------------

int cmd_run_mcq(const std::string& config_path, bool dry_run) {
  json config = load_config_file(config_path);
  std::string dataset_path = config.value("dataset", std::string{});
  if (dataset_path.empty()) throw ConfigError("config requires \"dataset\"");
  std::vector<McqItem> items = load_mcq_file(dataset_path);
  LoopConfig loop = LoopConfig::from_json(config.value("engine", json::object()));

  if (dry_run) {
    std::cout << "config ok: " << config_path << "\n"
              << "dataset ok: " << dataset_path << " (" << items.size() << " items)\n"
              << "engine: " << loop.to_json().dump() << "\n";
    if (!items.empty()) {
      std::cout << "--- first prompt ---\n" << build_mcq_prompt(items.front(), "") << "\n";
    }
    return kExitOk;
  }

  config["engine"] = loop.to_json();  // store the fully resolved knobs
  Backends backends = make_backends(config);
  if (!backends.search) backends.search = std::make_unique<NullSearchBackend>();
  fs::path dir = prepare_run_dir(config, dataset_path);
  RunOutputs outputs(dir);

  std::vector<std::optional<int>> answers(items.size());
  std::atomic<int> failures{0};
  parallel_for(items.size(), workers_from(config), [&](std::size_t i) {
    const McqItem& item = items[i];
    try {
      RunRecord record = run_item(item, loop, backends.llm(), *backends.search);
      answers[i] = std::get<int>(record.final_answer);
      outputs.runs.append(to_json(record));
      outputs.preds.append(json{{"schema", kSchemaVersion},
                                {"item_id", item.id},
                                {"prediction", std::get<int>(record.final_answer)}});
    } catch (const std::exception& e) {
      rethrow_if_systemic(e);
      failures.fetch_add(1);
      outputs.errors.append(json{{"item_id", item.id}, {"error", e.what()}});
    }
  });

  std::vector<int> preds;
  std::vector<int> golds;
  ScoreReport report;
  report.metric = "accuracy";
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (!answers[i]) continue;
    preds.push_back(*answers[i]);
    golds.push_back(items[i].answer_index);
    report.per_item.emplace_back(items[i].id, *answers[i] == items[i].answer_index ? 1.0 : 0.0);
  }
  report.value = accuracy(preds, golds);
  report.n = preds.size();
  if (failures > 0) {
    report.flagged = true;
    report.note = std::to_string(failures.load()) + " item(s) failed and were excluded";
  }

  write_text_file(dir / "report.json", report.to_json().dump(2) + "\n");
  std::string csv = "metric,series,value\n";
  append_plot_row(csv, "accuracy", "run", report.value);
  write_text_file(dir / "plotdata.csv", csv);
  std::vector<std::array<std::string, 3>> rows{{"metric", "n", "value"},
                                               {"accuracy", std::to_string(report.n),
                                                format_value(report.value)}};
  std::string table = fixed_width_table(rows);
  write_text_file(dir / "report.txt", table);
  std::cout << table;
  return kExitOk;
}

// --- run-cpc ------------------------------------------------------------------

int cmd_run_cpc(const std::string& config_path) {
  json config = load_config_file(config_path);
  std::string dataset_path = config.value("dataset", std::string{});
  if (dataset_path.empty()) throw ConfigError("config requires \"dataset\"");
  std::vector<CaseItem> items = load_case_file(dataset_path);
  json engine_spec = config.value("engine", json::object());
  if (!engine_spec.contains("max_iterations")) engine_spec["max_iterations"] = 2;  // one search round
  LoopConfig loop = LoopConfig::from_json(engine_spec);

  config["engine"] = loop.to_json();  // store the fully resolved knobs
  Backends backends = make_backends(config);
  if (!backends.search) backends.search = std::make_unique<NullSearchBackend>();
  fs::path dir = prepare_run_dir(config, dataset_path);
  RunOutputs outputs(dir);

  std::vector<std::optional<std::vector<std::string>>> ranked(items.size());
  std::atomic<int> failures{0};
  parallel_for(items.size(), workers_from(config), [&](std::size_t i) {
    try {
      CaseResult result = run_case_open_ended(items[i], loop, backends.llm(), *backends.search);
      ranked[i] = result.differential;
      outputs.runs.append(to_json(result.record));
      outputs.preds.append(json{{"schema", kSchemaVersion},
                                {"item_id", items[i].id},
                                {"prediction", result.differential},
                                {"flagged", result.flagged}});
    } catch (const std::exception& e) {
      rethrow_if_systemic(e);
      failures.fetch_add(1);
      outputs.errors.append(json{{"item_id", items[i].id}, {"error", e.what()}});
    }
  });

  std::vector<std::vector<std::string>> lists;
  std::vector<std::string> golds;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (!ranked[i]) continue;
    lists.push_back(*ranked[i]);
    golds.push_back(items[i].ground_truth_diagnosis);
  }
  double top1 = top_k_accuracy(lists, golds, 1);
  double top10 = top_k_accuracy(lists, golds, 10);

  ScoreReport report;
  report.metric = "top_k_accuracy";
  report.value = top10;
  report.n = lists.size();
  report.extra["top_1"] = top1;
  report.extra["top_10"] = top10;
  report.note = "match rule: normalized exact match (may understate against clinician adjudication)";
  if (failures > 0) report.flagged = true;
  write_text_file(dir / "report.json", report.to_json().dump(2) + "\n");

  std::string csv = "metric,series,value\n";
  append_plot_row(csv, "top_1_accuracy", "run", top1);
  append_plot_row(csv, "top_10_accuracy", "run", top10);
  write_text_file(dir / "plotdata.csv", csv);
  std::vector<std::array<std::string, 3>> rows{{"metric", "n", "value"},
                                               {"top-1", std::to_string(lists.size()), format_value(top1)},
                                               {"top-10", std::to_string(lists.size()), format_value(top10)}};
  std::string table = fixed_width_table(rows);
  write_text_file(dir / "report.txt", table);
  std::cout << table;
  return kExitOk;
}

// --- run-geneturing --------------------------------------------------------------

int cmd_run_geneturing(const std::string& config_path) {
  json config = load_config_file(config_path);
  std::string dataset_path = config.value("dataset", std::string{});
  if (dataset_path.empty()) throw ConfigError("config requires \"dataset\"");
  std::vector<CaseItem> items = load_case_file(dataset_path);  // case_text = question
  json engine_spec = config.value("engine", json::object());
  if (!engine_spec.contains("max_iterations")) engine_spec["max_iterations"] = 2;  // one search round
  LoopConfig loop = LoopConfig::from_json(engine_spec);

  std::vector<std::string> lexicon = kDefaultAbstentionLexicon;
  if (config.contains("abstention_lexicon")) {
    lexicon = config["abstention_lexicon"].get<std::vector<std::string>>();
  }

  config["engine"] = loop.to_json();  // store the fully resolved knobs
  Backends backends = make_backends(config);
  if (!backends.search) backends.search = std::make_unique<NullSearchBackend>();
  fs::path dir = prepare_run_dir(config, dataset_path);
  RunOutputs outputs(dir);

  struct Outcome {
    bool abstained = false;
    bool correct = false;
  };
  std::vector<std::optional<Outcome>> outcomes(items.size());
  std::atomic<int> failures{0};
  parallel_for(items.size(), workers_from(config), [&](std::size_t i) {
    try {
      OpenQaResult result =
          run_open_qa(items[i].id, items[i].case_text, loop, backends.llm(), *backends.search);
      Outcome o;
      o.abstained = is_abstention(result.answer, lexicon);
      o.correct = !o.abstained && diagnosis_match(result.answer, items[i].ground_truth_diagnosis);
      outcomes[i] = o;
      outputs.runs.append(to_json(result.record));
      outputs.preds.append(json{{"schema", kSchemaVersion},
                                {"item_id", items[i].id},
                                {"prediction", result.answer},
                                {"abstained", o.abstained}});
    } catch (const std::exception& e) {
      rethrow_if_systemic(e);
      failures.fetch_add(1);
      outputs.errors.append(json{{"item_id", items[i].id}, {"error", e.what()}});
    }
  });

  long answered = 0, correct = 0, abstained = 0;
  for (const auto& o : outcomes) {
    if (!o) continue;
    if (o->abstained) {
      ++abstained;
      continue;
    }
    ++answered;
    if (o->correct) ++correct;
  }
  // abstentions are excluded from numerical scoring
  double acc = answered == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(answered);

  ScoreReport report;
  report.metric = "accuracy_excluding_abstentions";
  report.value = acc;
  report.n = static_cast<std::size_t>(answered);
  report.extra["abstained"] = static_cast<double>(abstained);
  report.extra["answered"] = static_cast<double>(answered);
  if (failures > 0) report.flagged = true;
  write_text_file(dir / "report.json", report.to_json().dump(2) + "\n");

  std::string csv = "metric,series,value\n";
  append_plot_row(csv, "accuracy", "run", acc);
  append_plot_row(csv, "abstained", "run", static_cast<double>(abstained));
  write_text_file(dir / "plotdata.csv", csv);
  std::vector<std::array<std::string, 3>> rows{
      {"metric", "n", "value"},
      {"accuracy (excl. abstained)", std::to_string(answered), format_value(acc)},
      {"abstained", std::to_string(abstained), ""}};
  std::string table = fixed_width_table(rows);
  write_text_file(dir / "report.txt", table);
  std::cout << table;
  return kExitOk;
}

// --- gen-cot ------------------------------------------------------------------

int cmd_gen_cot(const std::string& config_path) {
  json config = load_config_file(config_path);
  std::string dataset_path = config.value("dataset", std::string{});
  if (dataset_path.empty()) throw ConfigError("config requires \"dataset\"");
  std::vector<McqItem> items = load_mcq_file(dataset_path);

  json st = config.value("selftrain", json::object());
  std::string seeds_dir = st.value("seeds_dir", std::string{});
  if (seeds_dir.empty()) throw ConfigError("config requires \"selftrain.seeds_dir\"");
  std::vector<SeedDemo> seeds = load_seed_demos(seeds_dir);

  CotGenConfig gen_cfg;
  gen_cfg.round = st.value("round", 0);
  gen_cfg.queries_per_question = st.value("queries_per_question", gen_cfg.queries_per_question);
  gen_cfg.top_k_per_query = st.value("top_k_per_query", gen_cfg.top_k_per_query);
  gen_cfg.temperature = st.value("temperature", gen_cfg.temperature);
  std::optional<int> parent_round;
  if (st.contains("parent_round") && !st["parent_round"].is_null()) {
    parent_round = st["parent_round"].get<int>();
  }
  std::vector<std::string> kind_names =
      st.value("kinds", std::vector<std::string>{"no_search", "with_search"});
  std::string rounds_root = st.value("rounds_root", std::string{});
  if (rounds_root.empty()) throw ConfigError("config requires \"selftrain.rounds_root\"");

  Backends backends = make_backends(config);

  std::vector<DemoKind> kinds;
  for (const auto& name : kind_names) {
    if (name == "no_search") kinds.push_back(DemoKind::no_search);
    else if (name == "with_search") kinds.push_back(DemoKind::with_search);
    else throw ConfigError("unknown cot kind: " + name);
  }

  struct Task {
    const McqItem* item;
    DemoKind kind;
  };
  std::vector<Task> tasks;
  for (const auto& item : items) {
    for (DemoKind kind : kinds) tasks.push_back({&item, kind});
  }

  std::vector<std::optional<CotRecord>> generated(tasks.size());
  std::mutex error_mutex;
  std::vector<std::string> errors;
  parallel_for(tasks.size(), workers_from(config), [&](std::size_t i) {
    try {
      generated[i] = generate_cot(*tasks[i].item, tasks[i].kind, seeds, backends.llm(),
                                  backends.search.get(), gen_cfg);
    } catch (const std::exception& e) {
      rethrow_if_systemic(e);
      std::lock_guard<std::mutex> lock(error_mutex);
      errors.push_back(tasks[i].item->id + " (" + to_string(tasks[i].kind) + "): " + e.what());
    }
  });

  std::vector<CotRecord> records;
  for (auto& r : generated) {
    if (r) records.push_back(std::move(*r));
  }
  auto [kept, dropped] = filter_cots(std::move(records));
  fs::path round_dir = fs::path(rounds_root) / ("round_" + std::to_string(gen_cfg.round));
  RoundManifest manifest = export_round(kept, static_cast<int>(dropped.size()), gen_cfg.round,
                                        parent_round, backends.llm().id(), round_dir);

  std::vector<std::array<std::string, 3>> rows{
      {"round", "count", "value"},
      {"generated", std::to_string(manifest.generated), ""},
      {"kept", std::to_string(manifest.kept),
       format_value(manifest.generated == 0
                        ? 0.0
                        : static_cast<double>(manifest.kept) / manifest.generated)},
      {"dropped", std::to_string(manifest.dropped), ""},
      {"failed", std::to_string(errors.size()), ""}};
  std::string table = fixed_width_table(rows);
  write_text_file(round_dir / "report.txt", table);
  std::cout << table;
  if (!errors.empty()) {
    std::string log;
    for (const auto& e : errors) log += e + "\n";
    write_text_file(round_dir / "errors.txt", log);
  }
  return kExitOk;
}

// --- ehr-haystack ---------------------------------------------------------------

int cmd_ehr_haystack(const std::string& config_path) {
  json config = load_config_file(config_path);
  std::string dataset_path = config.value("dataset", std::string{});
  if (dataset_path.empty()) throw ConfigError("config requires \"dataset\"");
  std::vector<EhrBundle> bundles = load_ehr_file(dataset_path);

  json hs = config.value("haystack", json::object());
  HaystackConfig hcfg;
  hcfg.context_char_limit = hs.value("context_char_limit", hcfg.context_char_limit);
  hcfg.temperature = hs.value("temperature", hcfg.temperature);
  hcfg.max_tokens = hs.value("max_tokens", hcfg.max_tokens);
  if (hs.contains("one_shot_demo_file")) {
    std::ifstream demo(hs["one_shot_demo_file"].get<std::string>());
    if (!demo) throw ConfigError("cannot open one_shot_demo_file");
    std::ostringstream ss;
    ss << demo.rdbuf();
    hcfg.one_shot_demo = ss.str();
  }

  Backends backends = make_backends(config);
  fs::path dir = prepare_run_dir(config, dataset_path);
  RecordWriter verdict_writer(dir / "verdicts.jsonl");
  RecordWriter error_writer(dir / "errors.jsonl");

  std::vector<std::optional<HaystackVerdict>> verdicts(bundles.size());
  std::atomic<int> dropped_total{0};
  std::atomic<int> failures{0};
  parallel_for(bundles.size(), workers_from(config), [&](std::size_t i) {
    try {
      MentionRetrieval retrieval = retrieve_mentions(bundles[i], backends.llm(), hcfg);
      dropped_total.fetch_add(static_cast<int>(retrieval.dropped.size()));
      HaystackVerdict verdict = adjudicate(bundles[i], retrieval.hits, backends.llm(), hcfg);
      json vj = to_json(verdict);
      vj["dropped_quotes"] = retrieval.dropped.size();
      verdict_writer.append(vj);
      verdicts[i] = std::move(verdict);
    } catch (const std::exception& e) {
      rethrow_if_systemic(e);
      failures.fetch_add(1);
      error_writer.append(json{{"bundle_id", bundles[i].id}, {"error", e.what()}});
    }
  });

  std::vector<HaystackVerdict> completed;
  std::vector<EhrBundle> scored_bundles;
  for (std::size_t i = 0; i < bundles.size(); ++i) {
    if (verdicts[i]) {
      completed.push_back(*verdicts[i]);
      scored_bundles.push_back(bundles[i]);
    }
  }
  HaystackEval eval = evaluate_run(completed, scored_bundles);

  json report{{"schema", kSchemaVersion},
              {"precision", eval.precision},
              {"recall", eval.recall},
              {"f1", eval.f1},
              {"confusion", json{{"tp", eval.tp}, {"fp", eval.fp}, {"fn", eval.fn}, {"tn", eval.tn}}},
              {"dropped_quotes", dropped_total.load()},
              {"failures", failures.load()},
              {"flagged", eval.flagged}};
  write_text_file(dir / "report.json", report.dump(2) + "\n");
  std::vector<std::array<std::string, 3>> rows{
      {"metric", "", "value"},
      {"precision", "", format_value(eval.precision)},
      {"recall", "", format_value(eval.recall)},
      {"f1", "", format_value(eval.f1)},
      {"tp/fp/fn/tn", "",
       std::to_string(eval.tp) + "/" + std::to_string(eval.fp) + "/" + std::to_string(eval.fn) +
           "/" + std::to_string(eval.tn)}};
  std::string table = fixed_width_table(rows);
  write_text_file(dir / "report.txt", table);
  std::string csv = "metric,series,value\n";
  append_plot_row(csv, "precision", "run", eval.precision);
  append_plot_row(csv, "recall", "run", eval.recall);
  append_plot_row(csv, "f1", "run", eval.f1);
  write_text_file(dir / "plotdata.csv", csv);
  std::cout << table;
  return kExitOk;
}

// --- score ----------------------------------------------------------------------

std::map<std::string, json> load_pred_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open predictions file: " + path);
  std::map<std::string, json> preds;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw DataError("pred line " + std::to_string(line_no) + ": " + e.what());
    }
    if (j.contains("item_id") && j.contains("prediction")) {
      preds[j["item_id"].get<std::string>()] = j["prediction"];
    } else if (j.contains("item_id") && j.contains("final_answer")) {
      preds[j["item_id"].get<std::string>()] = j["final_answer"];  // RunRecord lines
    } else {
      throw DataError("pred line " + std::to_string(line_no) +
                      ": expected item_id with prediction or final_answer");
    }
  }
  return preds;
}

json require_pred(const std::map<std::string, json>& preds, const std::string& id) {
  auto it = preds.find(id);
  if (it == preds.end()) throw DataError("no prediction for item " + id);
  return it->second;
}

int cmd_score(const std::string& metric, const std::string& preds_path,
              const std::string& golds_path, int k, const std::string& out_path) {
  ScoreReport report;

  if (metric == "accuracy") {
    std::map<std::string, json> preds = load_pred_lines(preds_path);
    std::vector<McqItem> golds = load_mcq_file(golds_path);
    std::vector<int> p, g;
    for (const auto& item : golds) {
      int pred = require_pred(preds, item.id).get<int>();
      p.push_back(pred);
      g.push_back(item.answer_index);
      report.per_item.emplace_back(item.id, pred == item.answer_index ? 1.0 : 0.0);
    }
    report.metric = "accuracy";
    report.value = accuracy(p, g);
    report.n = p.size();
  } else if (metric == "top_k") {
    std::map<std::string, json> preds = load_pred_lines(preds_path);
    std::vector<CaseItem> golds = load_case_file(golds_path);
    std::vector<std::vector<std::string>> lists;
    std::vector<std::string> gold_strings;
    for (const auto& item : golds) {
      lists.push_back(require_pred(preds, item.id).get<std::vector<std::string>>());
      gold_strings.push_back(item.ground_truth_diagnosis);
    }
    report.metric = "top_" + std::to_string(k) + "_accuracy";
    report.value = top_k_accuracy(lists, gold_strings, k);
    report.n = lists.size();
  } else if (metric == "token_f1") {
    std::map<std::string, json> preds = load_pred_lines(preds_path);
    std::vector<CaseItem> golds = load_case_file(golds_path);
    double sum = 0.0;
    for (const auto& item : golds) {
      double f1 = token_f1(require_pred(preds, item.id).get<std::string>(),
                           item.ground_truth_diagnosis);
      report.per_item.emplace_back(item.id, f1);
      sum += f1;
    }
    report.metric = "token_f1";
    report.n = golds.size();
    report.value = golds.empty() ? 0.0 : sum / static_cast<double>(golds.size());
  } else if (metric == "prf1") {
    // boolean predictions against EHR bundle labels; verdict files
    // (bundle_id + present) are accepted directly
    std::map<std::string, bool> bool_preds;
    {
      std::ifstream in(preds_path);
      if (!in) throw DataError("cannot open predictions file: " + preds_path);
      std::string line;
      while (std::getline(in, line)) {
        if (line.empty()) continue;
        json j = json::parse(line);
        if (j.contains("bundle_id") && j.contains("present")) {
          bool_preds[j["bundle_id"].get<std::string>()] = j["present"].get<bool>();
        } else if (j.contains("item_id") && j.contains("prediction")) {
          bool_preds[j["item_id"].get<std::string>()] = j["prediction"].get<bool>();
        }
      }
    }
    std::vector<EhrBundle> golds = load_ehr_file(golds_path);
    long tp = 0, fp = 0, fn = 0, tn = 0;
    for (const auto& b : golds) {
      auto it = bool_preds.find(b.id);
      if (it == bool_preds.end()) throw DataError("no prediction for bundle " + b.id);
      bool predicted = it->second;
      if (predicted && b.label) ++tp;
      if (predicted && !b.label) ++fp;
      if (!predicted && b.label) ++fn;
      if (!predicted && !b.label) ++tn;
    }
    Prf1Result prf = prf1(tp, fp, fn, tn);
    report.metric = "f1";
    report.value = prf.f1;
    report.n = golds.size();
    report.extra["precision"] = prf.precision;
    report.extra["recall"] = prf.recall;
    report.extra["tp"] = static_cast<double>(tp);
    report.extra["fp"] = static_cast<double>(fp);
    report.extra["fn"] = static_cast<double>(fn);
    report.extra["tn"] = static_cast<double>(tn);
    report.flagged = prf.flagged;
  } else if (metric == "iou") {
    std::map<std::string, json> preds = load_pred_lines(preds_path);
    std::vector<SpanItem> golds = load_span_file(golds_path);
    std::vector<TimeSpan> p, g;
    for (const auto& item : golds) {
      json pj = require_pred(preds, item.id);
      p.push_back(TimeSpan{pj.at("start_s").get<double>(), pj.at("end_s").get<double>()});
      g.push_back(item.gt_span);
    }
    IouSuiteResult suite = iou_suite(p, g, kDefaultIouThresholds);
    report.metric = "miou";
    report.value = suite.mean_iou;
    report.n = p.size();
    for (const auto& [t, v] : suite.at_threshold) {
      std::ostringstream key;
      key << "iou@" << t;
      report.extra[key.str()] = v;
    }
    for (std::size_t i = 0; i < golds.size(); ++i) {
      report.per_item.emplace_back(golds[i].id, suite.per_item[i]);
    }
  } else {
    throw DataError("unknown metric: " + metric + " (accuracy, top_k, token_f1, iou, prf1)");
  }

  std::string rendered = report.to_json().dump(2) + "\n";
  if (!out_path.empty()) {
    write_text_file(out_path, rendered);
  }
  std::cout << rendered;
  return kExitOk;
}

// --- rater-analysis ---------------------------------------------------------------

int cmd_rater_analysis(const std::string& ratings_path, const std::string& dataset_path,
                       const std::string& preds_path, int replicates, std::uint64_t seed,
                       const std::string& out_dir, const std::string& entropy_a,
                       const std::string& entropy_b) {
  std::vector<RaterRecord> ratings = load_rater_file(ratings_path);
  std::vector<McqItem> items = load_mcq_file(dataset_path);
  std::map<std::string, int> golds;
  for (const auto& item : items) golds[item.id] = item.answer_index;
  std::map<std::string, int> model_preds;
  for (const auto& [id, pred] : load_pred_lines(preds_path)) model_preds[id] = pred.get<int>();

  fs::path dir(out_dir.empty() ? "rater_analysis" : out_dir);
  fs::create_directories(dir);

  json report{{"schema", kSchemaVersion}};
  std::string csv = "metric,series,value\n";
  std::vector<std::array<std::string, 3>> rows{{"analysis", "rule", "value"}};

  for (VoteRule rule : {VoteRule::majority, VoteRule::unanimous}) {
    std::string rule_name = to_string(rule);
    AgreementReport agreement = rater_vs_vote_agreement(ratings, golds, rule);
    report["agreement"][rule_name] = json{{"missing_info", agreement.missing_info},
                                          {"label_error", agreement.label_error},
                                          {"ambiguous", agreement.ambiguous},
                                          {"overlap_pre", agreement.overlap_pre},
                                          {"overlap_post", agreement.overlap_post}};
    rows.push_back({"agreement missing_info", rule_name, format_value(agreement.missing_info)});
    rows.push_back({"agreement label_error", rule_name, format_value(agreement.label_error)});
    rows.push_back({"agreement ambiguous", rule_name, format_value(agreement.ambiguous)});
    rows.push_back({"answer overlap pre-reveal", rule_name, format_value(agreement.overlap_pre)});
    rows.push_back({"answer overlap post-reveal", rule_name, format_value(agreement.overlap_post)});

    // accuracy-vs-remaining curve data for nested filter sets
    struct Stage {
      std::string name;
      FlagSet flags;
    };
    std::vector<Stage> stages{
        {"none", FlagSet{}},
        {"missing", FlagSet{.missing_info = true}},
        {"missing+errors", FlagSet{.missing_info = true, .label_error = true}},
        {"missing+errors+ambiguous",
         FlagSet{.missing_info = true, .label_error = true, .ambiguous = true}},
    };
    for (const auto& stage : stages) {
      BootstrapResult boot = bootstrap_filtered_accuracy(ratings, model_preds, golds, rule,
                                                         replicates, stage.flags, seed);
      report["bootstrap"][rule_name][stage.name] =
          json{{"mean_accuracy", boot.mean_accuracy},
               {"std_accuracy", boot.std_accuracy},
               {"mean_remaining", boot.mean_remaining},
               {"std_remaining", boot.std_remaining},
               {"replicates", boot.replicates}};
      append_plot_row(csv, "filtered_accuracy", rule_name + "/" + stage.name, boot.mean_accuracy);
      append_plot_row(csv, "remaining_fraction", rule_name + "/" + stage.name, boot.mean_remaining);
      rows.push_back({"filtered accuracy (" + stage.name + ")", rule_name,
                      format_value(boot.mean_accuracy) + " +/- " + format_value(boot.std_accuracy)});
    }
  }

  // per-question selection agreement over the first three raters
  {
    std::map<std::string, std::vector<const RaterRecord*>> grouped;
    for (const auto& r : ratings) grouped[r.question_id].push_back(&r);
    double j3_sum = 0.0, j2_sum = 0.0;
    long counted = 0;
    for (const auto& [_, records] : grouped) {
      if (records.size() < 3) continue;
      JaccardAgreement jac = jaccard_agreement(records[0]->post_reveal.selections,
                                               records[1]->post_reveal.selections,
                                               records[2]->post_reveal.selections);
      j3_sum += jac.j_unanimous;
      j2_sum += jac.j_majority;
      ++counted;
    }
    if (counted > 0) {
      report["jaccard"] = json{{"unanimous", j3_sum / counted}, {"majority", j2_sum / counted}};
      rows.push_back({"jaccard unanimous", "", format_value(j3_sum / counted)});
      rows.push_back({"jaccard majority", "", format_value(j2_sum / counted)});
    }

    // nominal alpha over single-selection cells (multi-select = missing)
    std::set<std::string> rater_ids;
    for (const auto& r : ratings) rater_ids.insert(r.rater_id);
    std::vector<std::string> rater_order(rater_ids.begin(), rater_ids.end());
    std::vector<std::vector<std::optional<int>>> matrix;
    for (const auto& [_, records] : grouped) {
      std::vector<std::optional<int>> row(rater_order.size());
      for (const auto* r : records) {
        auto pos = std::find(rater_order.begin(), rater_order.end(), r->rater_id);
        if (r->post_reveal.selections.size() == 1) {
          row[static_cast<std::size_t>(pos - rater_order.begin())] =
              *r->post_reveal.selections.begin();
        }
      }
      matrix.push_back(std::move(row));
    }
    try {
      double alpha = krippendorff_alpha(matrix);
      report["krippendorff_alpha"] = alpha;
      rows.push_back({"krippendorff alpha", "", format_value(alpha)});
    } catch (const DataError&) {
      // no pairable single-selection cells; omit
    }
  }

  if (!entropy_a.empty() && !entropy_b.empty()) {
    auto load_values = [](const std::string& path) {
      std::ifstream in(path);
      if (!in) throw DataError("cannot open entropy file: " + path);
      std::vector<double> values;
      double v;
      while (in >> v) values.push_back(v);
      return values;
    };
    std::vector<double> a = load_values(entropy_a);
    std::vector<double> b = load_values(entropy_b);
    TTestResult t = welch_t_test(a, b);
    report["entropy_t_test"] =
        json{{"t", t.t}, {"df", t.df}, {"p_two_sided", t.p_two_sided}};
    rows.push_back({"entropy t-test p (two-sided)", "", format_value(t.p_two_sided)});
  }

  write_text_file(dir / "report.json", report.dump(2) + "\n");
  write_text_file(dir / "plotdata.csv", csv);
  std::string table = fixed_width_table(rows);
  write_text_file(dir / "report.txt", table);
  std::cout << table;
  return kExitOk;
}

// --- report -----------------------------------------------------------------------

int cmd_report(const std::vector<std::string>& run_dirs, const std::string& rounds_root,
               const std::string& out_path) {
  std::vector<std::array<std::string, 3>> rows{{"source", "metric", "value"}};
  std::string csv = "metric,series,value\n";

  for (const auto& d : run_dirs) {
    fs::path report_path = fs::path(d) / "report.json";
    std::ifstream in(report_path);
    if (!in) throw DataError("no report.json in " + d);
    json j = json::parse(in);
    std::string metric = j.value("metric", std::string("?"));
    double value = j.value("value", 0.0);
    rows.push_back({d, metric, format_value(value)});
    append_plot_row(csv, metric, d, value);
    if (j.contains("extra")) {
      for (const auto& [k, v] : j["extra"].items()) {
        rows.push_back({d, k, format_value(v.get<double>())});
        append_plot_row(csv, k, d, v.get<double>());
      }
    }
  }

  if (!rounds_root.empty()) {
    // saturation view: kept-rate per self-training round
    std::vector<fs::path> round_dirs;
    for (const auto& entry : fs::directory_iterator(rounds_root)) {
      if (entry.is_directory() &&
          entry.path().filename().string().rfind("round_", 0) == 0) {
        round_dirs.push_back(entry.path());
      }
    }
    std::sort(round_dirs.begin(), round_dirs.end());
    for (const auto& rd : round_dirs) {
      RoundManifest manifest = load_manifest(rd);
      double kept_rate = manifest.generated == 0
                             ? 0.0
                             : static_cast<double>(manifest.kept) / manifest.generated;
      rows.push_back({rd.string(), "kept_rate", format_value(kept_rate)});
      append_plot_row(csv, "kept_rate", "round_" + std::to_string(manifest.round), kept_rate);
    }
  }

  rows.push_back({"", "", ""});
  rows.push_back({"reference (published, not reproducible here)", "", ""});
  for (const auto& ref : kReferenceResults) {
    rows.push_back({std::string(ref.benchmark), std::string(ref.metric), format_value(ref.value)});
  }

  std::string table = fixed_width_table(rows);
  std::cout << table;
  if (!out_path.empty()) write_text_file(out_path, csv);
  return kExitOk;
}

}  // namespace

int dispatch(int argc, const char* const* argv) {
  CLI::App app{"uncertainty-guided search reasoning and evaluation harness"};
  app.require_subcommand(1);

  std::string config_path;
  bool dry_run = false;

  CLI::App* run_mcq = app.add_subcommand("run-mcq", "uncertainty-guided loop over MCQ items");
  run_mcq->add_option("--config", config_path, "run config file")->required();
  run_mcq->add_flag("--dry-run", dry_run, "validate config and prompts without backend calls");

  CLI::App* run_cpc = app.add_subcommand("run-cpc", "open-ended differential diagnosis runs");
  run_cpc->add_option("--config", config_path, "run config file")->required();

  CLI::App* run_gt = app.add_subcommand("run-geneturing", "open QA with abstention tally");
  run_gt->add_option("--config", config_path, "run config file")->required();

  CLI::App* gen_cot = app.add_subcommand("gen-cot", "generate and filter training CoTs");
  gen_cot->add_option("--config", config_path, "run config file")->required();

  CLI::App* ehr = app.add_subcommand("ehr-haystack", "two-step retrieval over EHR bundles");
  ehr->add_option("--config", config_path, "run config file")->required();

  std::string metric, preds_path, golds_path, out_path;
  int k = 10;
  CLI::App* score = app.add_subcommand("score", "score a predictions file against golds");
  score->add_option("--metric", metric, "accuracy | top_k | token_f1 | iou")->required();
  score->add_option("--preds", preds_path, "line-delimited predictions")->required();
  score->add_option("--golds", golds_path, "gold dataset file")->required();
  score->add_option("--k", k, "k for top_k");
  score->add_option("--out", out_path, "write the score report here");

  std::string ratings_path, dataset_path, entropy_a, entropy_b, analysis_out;
  int replicates = 1000;
  std::uint64_t seed = 17;
  CLI::App* rater = app.add_subcommand("rater-analysis", "committee flags and bootstrap accuracy");
  rater->add_option("--ratings", ratings_path, "line-delimited rater records")->required();
  rater->add_option("--dataset", dataset_path, "MCQ dataset with gold answers")->required();
  rater->add_option("--preds", preds_path, "model predictions")->required();
  rater->add_option("--replicates", replicates, "bootstrap replicates");
  rater->add_option("--seed", seed, "bootstrap seed");
  rater->add_option("--out", analysis_out, "output directory");
  rater->add_option("--entropy-a", entropy_a, "entropy samples, group A (one per line)");
  rater->add_option("--entropy-b", entropy_b, "entropy samples, group B");

  std::vector<std::string> run_dirs;
  std::string rounds_root;
  CLI::App* report = app.add_subcommand("report", "aggregate run reports and plot data");
  report->add_option("--run-dir", run_dirs, "run directory (repeatable)");
  report->add_option("--rounds-root", rounds_root, "self-training rounds directory");
  report->add_option("--out", out_path, "plot-data csv path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (run_mcq->parsed()) return cmd_run_mcq(config_path, dry_run);
    if (run_cpc->parsed()) return cmd_run_cpc(config_path);
    if (run_gt->parsed()) return cmd_run_geneturing(config_path);
    if (gen_cot->parsed()) return cmd_gen_cot(config_path);
    if (ehr->parsed()) return cmd_ehr_haystack(config_path);
    if (score->parsed()) return cmd_score(metric, preds_path, golds_path, k, out_path);
    if (rater->parsed()) {
      return cmd_rater_analysis(ratings_path, dataset_path, preds_path, replicates, seed,
                                analysis_out, entropy_a, entropy_b);
    }
    if (report->parsed()) return cmd_report(run_dirs, rounds_root, out_path);
    std::cerr << "no subcommand\n";
    return kExitUsage;
  } catch (const BackendError& e) {
    std::cerr << "backend error: " << e.what() << "\n";
    if (e.kind() == BackendErrorKind::auth) return kExitAuth;
    if (e.kind() == BackendErrorKind::config) return kExitConfig;
    return kExitBackend;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInternal;
  }
}

}  // namespace medagent
