#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "specter/common.hpp"
#include "specter/config.hpp"
#include "support/tmpdir.hpp"

using namespace specter;
using specter::test::TmpDir;
namespace fs = std::filesystem;

namespace {

std::string bin_path() {
  const char* p = std::getenv("SPECTER_TEST_BIN");
  REQUIRE_MESSAGE(p != nullptr, "SPECTER_TEST_BIN not set");
  return p;
}

std::string data_dir() {
  const char* p = std::getenv("SPECTER_TEST_DATA");
  REQUIRE_MESSAGE(p != nullptr, "SPECTER_TEST_DATA not set");
  return p;
}

struct RunResult {
  int exit_code;
  std::string out;
  std::string err;
};

// Spawn the CLI through the shell; args must already be shell-safe (all our
// paths come from TmpDir and contain no spaces).
RunResult run_cli(const std::string& args, const std::string& stdin_file = "") {
  static std::atomic<int> counter{0};
  int id = counter.fetch_add(1);
  fs::path out = fs::temp_directory_path() /
                 ("specter_cli_out_" + std::to_string(::getpid()) + "_" +
                  std::to_string(id));
  fs::path err = fs::temp_directory_path() /
                 ("specter_cli_err_" + std::to_string(::getpid()) + "_" +
                  std::to_string(id));
  std::string cmd = bin_path() + " " + args;
  if (!stdin_file.empty()) cmd += " < " + stdin_file;
  cmd += " > " + out.string() + " 2> " + err.string();
  int rc = std::system(cmd.c_str());
  RunResult r;
  r.exit_code = WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
  r.out = fs::exists(out) ? read_file(out.string()) : "";
  r.err = fs::exists(err) ? read_file(err.string()) : "";
  fs::remove(out);
  fs::remove(err);
  return r;
}

size_t count_lines(const std::string& s) {
  size_t n = 0;
  for (char c : s)
    if (c == '\n') ++n;
  return n;
}

}  // namespace

TEST_CASE("help exits zero for the root and every subcommand") {
  const char* cmds[] = {"",
                        "ngram",
                        "ngram train",
                        "score",
                        "features",
                        "features enumerate",
                        "train",
                        "classify",
                        "eval",
                        "perturb",
                        "robustness",
                        "analyze",
                        "analyze entropy"};
  for (const char* c : cmds) {
    std::string args = std::string(c) + (*c ? " --help" : "--help");
    auto r = run_cli(args);
    CAPTURE(c);
    CHECK(r.exit_code == 0);
    CHECK(r.out.find("Usage") != std::string::npos);
  }
}

TEST_CASE("unknown subcommand exits 1 and is named") {
  auto r = run_cli("frobnicate");
  CHECK(r.exit_code == 1);
  CHECK(r.err.find("frobnicate") != std::string::npos);
}

TEST_CASE("missing required flags exit 1") {
  CHECK(run_cli("ngram train --order 3").exit_code == 1);
  CHECK(run_cli("classify").exit_code == 1);
  CHECK(run_cli("perturb --kind char_swap").exit_code == 1);
}

TEST_CASE("invalid order is a usage error") {
  auto r = run_cli("ngram train --order 2 --corpus x --out y");
  CHECK(r.exit_code == 1);
}

TEST_CASE("runtime failures exit 2 with an error line") {
  auto r = run_cli("ngram train --order 3 --corpus /nonexistent --out /tmp/x");
  CHECK(r.exit_code == 2);
  CHECK(r.err.find("error:") != std::string::npos);

  r = run_cli("classify --model /nonexistent.json --in -", "/dev/null");
  CHECK(r.exit_code == 2);
  CHECK(r.err.find("error:") != std::string::npos);
}

TEST_CASE("full pipeline on the shipped sample data") {
  TmpDir tmp("cli_pipeline");
  std::string d = tmp.path().string();
  std::string corpus = data_dir() + "/sample_corpus.txt";
  std::string dataset = data_dir() + "/smoke_dataset.jsonl";

  auto r = run_cli("ngram train --order 1 --corpus " + corpus + " --out " +
                   d + "/unigram.json");
  REQUIRE(r.exit_code == 0);
  r = run_cli("ngram train --order 3 --delta 0.9 --corpus " + corpus +
              " --out " + d + "/trigram.json");
  REQUIRE(r.exit_code == 0);

  std::string providers = "unigram=" + d + "/unigram.json,trigram=" + d +
                          "/trigram.json";

  SUBCASE("score fills one cache record per provider and document") {
    r = run_cli("score --providers " + providers + " --cache " + d +
                "/cache --dataset " + dataset);
    REQUIRE(r.exit_code == 0);
    size_t records = 0;
    for (auto& e : fs::recursive_directory_iterator(d + "/cache/scores"))
      if (e.is_regular_file()) ++records;
    CHECK(records == 48);  // 24 documents x 2 providers
    // Every record carries the provider, the document, and the probabilities.
    for (auto& e : fs::recursive_directory_iterator(d + "/cache/scores")) {
      if (!e.is_regular_file()) continue;
      auto j = nlohmann::json::parse(read_file(e.path().string()));
      CHECK(j.contains("provider"));
      CHECK(j.contains("doc_id"));
      CHECK(j["probs"].is_array());
      CHECK(!j["probs"].empty());
      break;
    }
  }

  SUBCASE("train, classify, eval") {
    r = run_cli("train --dataset " + dataset + " --providers " + providers +
                " --depth 2 --max-k 3 --out " + d + "/model.json");
    REQUIRE_MESSAGE(r.exit_code == 0, r.err);

    // classify: plain mode prints "<label>\t<score>"
    std::string doc = d + "/doc.txt";
    write_file_atomic(doc, "The committee reviewed the proposal and "
                           "requested several clarifications before "
                           "approving the budget for next year.\n");
    r = run_cli("classify --model " + d + "/model.json --in " + doc);
    REQUIRE_MESSAGE(r.exit_code == 0, r.err);
    CHECK((r.out.find("human") == 0 || r.out.find("ai") == 0));

    // classify --json: {"score": float, "label": str, "features": {...}}
    r = run_cli("classify --model " + d + "/model.json --in " + doc +
                " --json");
    REQUIRE(r.exit_code == 0);
    auto j = nlohmann::json::parse(r.out);
    CHECK(j["score"].is_number());
    CHECK(j["label"].is_string());
    CHECK(j["features"].is_object());
    CHECK(!j["features"].empty());

    // stdin variant matches the file variant
    auto r2 = run_cli("classify --model " + d + "/model.json --json", doc);
    CHECK(r2.out == r.out);

    // eval writes the CSV plus a JSON mirror
    write_file_atomic(d + "/plan.json", R"([
      {"name": "all", "kind": "detector", "mode": "in_domain"},
      {"name": "ppl", "kind": "perplexity", "mode": "in_domain"}
    ])");
    r = run_cli("eval --plan " + d + "/plan.json --dataset " + dataset +
                " --providers " + providers + " --depth 2 --out " + d +
                "/report.csv");
    // --depth is not an eval flag; it must be rejected as usage
    CHECK(r.exit_code == 1);
    r = run_cli("eval --plan " + d + "/plan.json --dataset " + dataset +
                " --providers " + providers + " --out " + d + "/report.csv");
    REQUIRE_MESSAGE(r.exit_code == 0, r.err);
    std::string csv = read_file(d + "/report.csv");
    CHECK(csv.find("condition,n,tp,fp,fn,tn,") == 0);
    CHECK(csv.find("\nall,") != std::string::npos);
    CHECK(csv.find("\nppl,") != std::string::npos);
    CHECK(fs::exists(d + "/report.json"));
  }

  SUBCASE("robustness sweep writes the curve") {
    r = run_cli("train --dataset " + dataset + " --providers " + providers +
                " --depth 2 --max-k 2 --out " + d + "/model.json");
    REQUIRE(r.exit_code == 0);
    r = run_cli("robustness --model " + d + "/model.json --dataset " +
                dataset + " --kind char_swap --counts 0,3 --seeds 1 --out " +
                d + "/curve.csv");
    REQUIRE_MESSAGE(r.exit_code == 0, r.err);
    std::string csv = read_file(d + "/curve.csv");
    CHECK(csv.find("kind,count,per_100_tokens,metric,n") == 0);
    CHECK(count_lines(csv) == 3);  // header + two counts
  }

  SUBCASE("analyze entropy writes the curve") {
    r = run_cli("analyze entropy --provider trigram --class ai --dataset " +
                dataset + " --providers " + providers + " --out " + d +
                "/entropy.csv");
    REQUIRE_MESSAGE(r.exit_code == 0, r.err);
    std::string csv = read_file(d + "/entropy.csv");
    CHECK(csv.find("position,provider,class,mean_logprob,n_docs") !=
          std::string::npos);
  }
}

TEST_CASE("perturb maps stdin to stdout deterministically") {
  TmpDir tmp("cli_perturb");
  std::string in = tmp.path().string() + "/in.txt";
  write_file_atomic(in, "The quick brown fox jumps over the lazy dog and "
                        "then naps in the warm afternoon sun.\n");

  auto zero = run_cli("perturb --kind char_swap --count 0 --seed 1", in);
  REQUIRE(zero.exit_code == 0);
  CHECK(zero.out == read_file(in));

  auto a = run_cli("perturb --kind char_swap --count 5 --seed 1", in);
  auto b = run_cli("perturb --kind char_swap --count 5 --seed 1", in);
  auto c = run_cli("perturb --kind char_swap --count 5 --seed 2", in);
  REQUIRE(a.exit_code == 0);
  CHECK(a.out == b.out);
  CHECK(a.out != read_file(in));
  CHECK(a.out != c.out);

  auto syn = run_cli("perturb --kind synonym_replace --count 3 --seed 1 "
                     "--synonyms " + data_dir() + "/sample_synonyms.txt",
                     in);
  CHECK(syn.exit_code == 0);
}

TEST_CASE("repeated runs produce identical artifacts") {
  TmpDir tmp("cli_determinism");
  std::string d = tmp.path().string();
  std::string corpus = data_dir() + "/sample_corpus.txt";
  std::string dataset = data_dir() + "/smoke_dataset.jsonl";

  for (int i = 1; i <= 2; ++i) {
    std::string s = std::to_string(i);
    REQUIRE(run_cli("ngram train --order 3 --corpus " + corpus + " --out " +
                    d + "/tri" + s + ".json").exit_code == 0);
    REQUIRE(run_cli("ngram train --order 1 --corpus " + corpus + " --out " +
                    d + "/uni" + s + ".json").exit_code == 0);
    REQUIRE(run_cli("features enumerate --depth 3 --providers "
                    "unigram,trigram --out " + d + "/f" + s + ".txt")
                .exit_code == 0);
  }
  CHECK(read_file(d + "/tri1.json") == read_file(d + "/tri2.json"));
  CHECK(read_file(d + "/uni1.json") == read_file(d + "/uni2.json"));
  CHECK(read_file(d + "/f1.txt") == read_file(d + "/f2.txt"));

  std::string providers = "unigram=" + d + "/uni1.json,trigram=" + d +
                          "/tri1.json";
  for (int i = 1; i <= 2; ++i) {
    std::string s = std::to_string(i);
    REQUIRE(run_cli("train --dataset " + dataset + " --providers " +
                    providers + " --depth 2 --max-k 2 --out " + d + "/m" + s +
                    ".json").exit_code == 0);
  }
  CHECK(read_file(d + "/m1.json") == read_file(d + "/m2.json"));
}

TEST_CASE("config file supplies providers and flags override it") {
  TmpDir tmp("cli_config");
  std::string d = tmp.path().string();
  std::string corpus = data_dir() + "/sample_corpus.txt";
  REQUIRE(run_cli("ngram train --order 1 --corpus " + corpus + " --out " + d +
                  "/u.json").exit_code == 0);
  REQUIRE(run_cli("ngram train --order 3 --corpus " + corpus + " --out " + d +
                  "/t.json").exit_code == 0);
  write_file_atomic(d + "/cfg.json", R"({
    "providers": [
      {"name": "unigram", "model_path": ")" + d + R"(/u.json"},
      {"name": "trigram", "model_path": ")" + d + R"(/t.json"}
    ],
    "tokenizer": "reference",
    "depth": 1
  })");

  // Providers and depth come from the file.
  auto r = run_cli("--config " + d + "/cfg.json features enumerate --out " +
                   d + "/a.txt");
  REQUIRE_MESSAGE(r.exit_code == 0, r.err);
  CHECK(count_lines(read_file(d + "/a.txt")) == 14);  // 2 providers, depth 1

  // The command-line flag wins over the file.
  r = run_cli("--config " + d + "/cfg.json features enumerate --depth 2 "
              "--out " + d + "/b.txt");
  REQUIRE(r.exit_code == 0);
  CHECK(count_lines(read_file(d + "/b.txt")) == 63);

  // Provider names alone resolve their model paths through the file.
  r = run_cli("--config " + d + "/cfg.json score --providers unigram "
              "--cache " + d + "/cache --dataset " + data_dir() +
              "/smoke_dataset.jsonl");
  REQUIRE_MESSAGE(r.exit_code == 0, r.err);

  // A bad config is a runtime error, not a crash.
  write_file_atomic(d + "/bad.json", R"({"no_such_key": 1})");
  r = run_cli("--config " + d + "/bad.json features enumerate --out " + d +
              "/c.txt");
  CHECK(r.exit_code == 2);
  CHECK(r.err.find("no_such_key") != std::string::npos);
}

// ---- config module (in-process) -----------------------------------------

TEST_CASE("load_config round-trips every known key") {
  TmpDir tmp("config_load");
  std::string p = tmp.path().string() + "/cfg.json";
  write_file_atomic(p, R"({
    "providers": [{"name": "unigram", "model_path": "/m/u.json"},
                  {"name": "neural:davinci"}],
    "cache_dir": "/tmp/cache",
    "api_base": "https://api.example.com/v1",
    "api_key": "k-123",
    "requests_per_second": 2.5,
    "max_attempts": 7,
    "backoff_initial_ms": 250,
    "tokenizer": "reference",
    "delta": 0.8,
    "lambda_u": 0.01,
    "C": 2.0,
    "depth": 2,
    "max_k": 5,
    "epsilon": 0.001,
    "seed": 99,
    "jobs": 3
  })");
  ToolConfig cfg = load_config(p);
  REQUIRE(cfg.providers.providers.size() == 2);
  CHECK(cfg.providers.providers[0].name == "unigram");
  CHECK(cfg.providers.providers[0].model_path == "/m/u.json");
  CHECK(cfg.providers.providers[1].name == "neural:davinci");
  CHECK(cfg.providers.cache_dir == "/tmp/cache");
  CHECK(cfg.providers.api_base == "https://api.example.com/v1");
  CHECK(cfg.providers.api_key == "k-123");
  CHECK(cfg.providers.requests_per_second == doctest::Approx(2.5));
  CHECK(cfg.providers.max_attempts == 7);
  CHECK(cfg.providers.backoff_initial_ms == 250);
  CHECK(cfg.providers.tokenizer == "reference");
  CHECK(cfg.delta == doctest::Approx(0.8));
  CHECK(cfg.lambda_u == doctest::Approx(0.01));
  CHECK(cfg.C == doctest::Approx(2.0));
  CHECK(cfg.depth == 2);
  CHECK(cfg.max_k == 5);
  CHECK(cfg.epsilon == doctest::Approx(0.001));
  CHECK(cfg.seed == 99);
  CHECK(cfg.jobs == 3);
}

TEST_CASE("load_config rejects junk") {
  TmpDir tmp("config_reject");
  std::string p = tmp.path().string() + "/cfg.json";

  write_file_atomic(p, R"({"depht": 3})");
  CHECK_THROWS_WITH_AS(load_config(p), "unknown config key 'depht'", Error);

  write_file_atomic(p, R"({"providers": {"name": "unigram"}})");
  CHECK_THROWS_AS(load_config(p), Error);

  write_file_atomic(p, R"({"providers": [{"name": "unigram", "paht": "x"}]})");
  CHECK_THROWS_WITH_AS(load_config(p), "unknown provider key 'paht'", Error);

  write_file_atomic(p, "not json");
  CHECK_THROWS_AS(load_config(p), std::exception);

  CHECK_THROWS_AS(load_config(tmp.path().string() + "/missing.json"), Error);
}

TEST_CASE("environment variables override the file and the flags") {
  ToolConfig cfg;
  cfg.providers.api_key = "from-file";
  cfg.providers.api_base = "https://file.example.com";

  ::setenv("SPECTER_API_KEY", "from-env", 1);
  ::setenv("SPECTER_API_BASE", "https://env.example.com", 1);
  apply_env(cfg);
  CHECK(cfg.providers.api_key == "from-env");
  CHECK(cfg.providers.api_base == "https://env.example.com");

  // Unset (or empty) variables leave the config alone.
  ::unsetenv("SPECTER_API_KEY");
  ::setenv("SPECTER_API_BASE", "", 1);
  cfg.providers.api_key = "kept";
  cfg.providers.api_base = "kept";
  apply_env(cfg);
  CHECK(cfg.providers.api_key == "kept");
  CHECK(cfg.providers.api_base == "kept");
  ::unsetenv("SPECTER_API_BASE");
}
