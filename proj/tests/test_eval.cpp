#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "specter/common.hpp"
#include "specter/detector.hpp"
#include "specter/eval.hpp"
#include "specter/ngram.hpp"
#include "support/tmpdir.hpp"

using namespace specter;
using nlohmann::json;

namespace {

std::vector<Label> labels01(const std::vector<int>& v) {
  std::vector<Label> out;
  for (int x : v) out.push_back(x ? Label::ai : Label::human);
  return out;
}

}  // namespace

TEST_CASE("confusion counts map to the usual metrics") {
  // one TP, one FP: precision 1/2, recall 1, F1 2/3
  auto r = compute_metrics(labels01({1, 1}), labels01({1, 0}));
  CHECK(r.tp == 1);
  CHECK(r.fp == 1);
  CHECK(r.fn == 0);
  CHECK(r.tn == 0);
  CHECK(r.n() == 2);
  CHECK(r.precision() == doctest::Approx(0.5));
  CHECK(r.recall() == doctest::Approx(1.0));
  CHECK(r.f1() == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
  CHECK(r.accuracy() == doctest::Approx(0.5));
  CHECK(r.f1_applicable());

  auto perfect = compute_metrics(labels01({1, 0, 1, 0}), labels01({1, 0, 1, 0}));
  CHECK(perfect.f1() == 1.0);
  CHECK(perfect.accuracy() == 1.0);

  // all-wrong predictions: precision and recall both 0, F1 defined as 0
  auto worst = compute_metrics(labels01({0, 1}), labels01({1, 0}));
  CHECK(worst.f1() == 0.0);
  CHECK(worst.precision() == 0.0);
  CHECK(worst.recall() == 0.0);

  // all-human gold: accuracy still meaningful, F1 side not applicable
  auto humans = compute_metrics(labels01({0, 1, 0, 0}), labels01({0, 0, 0, 0}));
  CHECK_FALSE(humans.f1_applicable());
  CHECK(humans.accuracy() == doctest::Approx(0.75));
  CHECK(humans.fp == 1);
  CHECK(humans.tn == 3);
}

TEST_CASE("confusion counts always partition the documents") {
  std::mt19937_64 rng(29);
  for (int it = 0; it < 50; ++it) {
    size_t n = 1 + bounded_rand(rng, 40);
    std::vector<int> p(n), g(n);
    for (size_t i = 0; i < n; ++i) {
      p[i] = static_cast<int>(bounded_rand(rng, 2));
      g[i] = static_cast<int>(bounded_rand(rng, 2));
    }
    auto r = compute_metrics(labels01(p), labels01(g));
    CHECK(r.tp + r.fp + r.fn + r.tn == n);
    CHECK(r.n() == n);
    CHECK(r.accuracy() >= 0.0);
    CHECK(r.accuracy() <= 1.0);
    CHECK(r.f1() >= 0.0);
    CHECK(r.f1() <= 1.0);
  }
}

TEST_CASE("metric inputs are validated") {
  CHECK_THROWS_WITH_AS(compute_metrics({}, {}),
                       "prediction and gold lists must be the same nonempty length",
                       Error);
  CHECK_THROWS_AS(compute_metrics(labels01({1}), labels01({1, 0})), Error);
  CHECK_THROWS_WITH_AS(
      compute_metrics({Label::unlabeled}, labels01({1})),
      "labels must be human or ai", Error);
}

TEST_CASE("oracle threshold reproduces an exact positive count") {
  std::vector<double> scores = {0.9, 0.2, 0.6};
  auto t2 = oracle_threshold(scores, 2);
  CHECK(t2.threshold == 0.6);
  CHECK(t2.labels == std::vector<int>{1, 0, 1});

  auto t0 = oracle_threshold(scores, 0);
  CHECK(std::isinf(t0.threshold));
  CHECK(t0.threshold > 0.9);
  CHECK(t0.labels == std::vector<int>{0, 0, 0});

  auto t3 = oracle_threshold(scores, 3);
  CHECK(t3.threshold == 0.2);
  CHECK(t3.labels == std::vector<int>{1, 1, 1});

  // boundary ties go to the earliest indices
  auto tie = oracle_threshold({0.5, 0.5, 0.5, 0.5}, 2);
  CHECK(tie.threshold == 0.5);
  CHECK(tie.labels == std::vector<int>{1, 1, 0, 0});

  CHECK_THROWS_WITH_AS(oracle_threshold(scores, 4),
                       "target positive count exceeds the number of scores",
                       Error);
}

TEST_CASE("oracle threshold holds on big random score lists") {
  std::mt19937_64 rng(41);
  std::vector<double> scores(1000);
  for (size_t i = 0; i < scores.size(); ++i)
    scores[i] = static_cast<double>(i) * 1e-3;  // distinct by construction
  std::shuffle(scores.begin(), scores.end(), rng);

  for (size_t target : {size_t{0}, size_t{1}, size_t{37}, size_t{999}, size_t{1000}}) {
    auto t = oracle_threshold(scores, target);
    size_t ge = 0, ones = 0;
    for (size_t i = 0; i < scores.size(); ++i) {
      ge += scores[i] >= t.threshold ? 1 : 0;
      ones += t.labels[i];
      if (t.labels[i]) CHECK(scores[i] >= t.threshold);
      if (!t.labels[i]) CHECK(scores[i] < t.threshold);
    }
    CHECK(ge == target);
    CHECK(ones == target);
  }
}

TEST_CASE("perplexity baseline separates when perplexity separates") {
  std::vector<double> train_ppl, eval_ppl;
  std::vector<int> train_y, eval_y;
  for (int i = 0; i < 20; ++i) {
    train_ppl.push_back(100.0 + i);  // human: high perplexity
    train_y.push_back(0);
    train_ppl.push_back(20.0 + i);  // ai: low
    train_y.push_back(1);
  }
  for (int i = 0; i < 10; ++i) {
    eval_ppl.push_back(95.0 + 2 * i);
    eval_y.push_back(0);
    eval_ppl.push_back(18.0 + 2 * i);
    eval_y.push_back(1);
  }
  auto r = perplexity_baseline(train_ppl, train_y, eval_ppl, eval_y);
  CHECK(r.f1() > 0.9);
  CHECK(r.f1() == 1.0);
}

TEST_CASE("perplexity baseline cannot beat chance on identical distributions") {
  std::vector<double> train_ppl, eval_ppl;
  std::vector<int> train_y, eval_y;
  for (int i = 0; i < 30; ++i) {
    double p = 50.0 + (i % 10);
    train_ppl.push_back(p);
    train_y.push_back(i % 2);
  }
  for (int i = 0; i < 20; ++i) {
    eval_ppl.push_back(50.0 + (i % 10));
    eval_y.push_back((i / 10) % 2);
  }
  auto r = perplexity_baseline(train_ppl, train_y, eval_ppl, eval_y);
  CHECK(r.f1() < 0.7);
}

TEST_CASE("perplexity baseline works with one document per class") {
  // boundary lands at the midpoint of the two training perplexities
  auto r = perplexity_baseline({100.0, 20.0}, {0, 1}, {61.0, 59.0}, {0, 1});
  CHECK(r.tp == 1);
  CHECK(r.tn == 1);
  CHECK(r.f1() == 1.0);

  CHECK_THROWS_AS(perplexity_baseline({}, {}, {1.0}, {0}), Error);
  CHECK_THROWS_AS(perplexity_baseline({1.0}, {0, 1}, {1.0}, {0}), Error);
  CHECK_THROWS_WITH_AS(perplexity_baseline({1.0, 2.0}, {0, 2}, {1.0}, {0}),
                       "labels must be 0 or 1", Error);
}

TEST_CASE("trim_text cuts after whole tokens") {
  std::string s = "alpha beta gamma delta";
  CHECK(trim_text(s, 2) == "alpha beta");
  CHECK(trim_text(s, 4) == s);
  CHECK(trim_text(s, 400) == s);  // longer than the text: unchanged
  CHECK(trim_text(s, 0) == "");

  // offsets agree with the tokenizer's spans, punctuation included
  std::string p = "Hi, there. Bye.";
  auto ts = tokenize(p);
  for (size_t n = 1; n < ts.size(); ++n)
    CHECK(trim_text(p, n) == p.substr(0, ts.spans[n - 1].second));
}

TEST_CASE("spearman rank correlation") {
  CHECK(spearman({1, 2, 3, 4}, {10, 20, 30, 40}) == doctest::Approx(1.0));
  CHECK(spearman({1, 2, 3, 4}, {9, 7, 5, 3}) == doctest::Approx(-1.0));
  // classic small case: one swapped pair
  CHECK(spearman({1, 2, 3}, {1, 3, 2}) == doctest::Approx(0.5));
  // monotone under any strictly increasing transform
  CHECK(spearman({1, 2, 3, 4}, {1, 8, 27, 64}) == doctest::Approx(1.0));
  // ties get averaged ranks
  CHECK(spearman({1, 1, 2, 2}, {1, 1, 2, 2}) == doctest::Approx(1.0));
  // constant vector has no rank variance
  CHECK(spearman({5, 5, 5}, {1, 2, 3}) == 0.0);
  CHECK_THROWS_AS(spearman({1.0}, {1.0}), Error);
  CHECK_THROWS_AS(spearman({1.0, 2.0}, {1.0}), Error);
}

namespace {

// Two synthetic domains, each with a human and an ai dialect; n-gram models
// are trained on human-style text so the dialects separate cleanly.
struct EvalFixture {
  test::TmpDir tmp{"eval"};
  Dataset ds;
  FitConfig cfg;

  EvalFixture() {
    std::vector<std::string> human_words = {"river", "stone", "meadow",
                                            "lantern", "harvest", "evening"};
    std::vector<std::string> ai_words = {"tensor", "module", "vector",
                                         "kernel", "matrix", "buffer"};
    std::mt19937_64 rng(7);
    auto make_doc = [&](const std::vector<std::string>& vocab, size_t len) {
      std::string text;
      for (size_t i = 0; i < len; ++i) {
        if (i) text += ' ';
        text += vocab[bounded_rand(rng, vocab.size())];
      }
      return text;
    };

    std::vector<TokenSequence> corpus;
    for (int i = 0; i < 40; ++i)
      corpus.push_back(tokenize(make_doc(human_words, 30)));
    auto uni = UnigramModel::train(corpus, 1e-3);
    auto tri = TrigramModel::train(corpus, 0.9, 1e-3);
    uni.save((tmp.path() / "uni.json").string());
    tri.save((tmp.path() / "tri.json").string());

    auto add_domain = [&](const std::string& tag, const std::string& prefix) {
      for (int i = 0; i < 20; ++i) {
        Document d;
        d.id = prefix + "h" + std::to_string(i);
        d.text = make_doc(human_words, 30 + i % 13);
        d.label = Label::human;
        d.domain_tag = tag;
        ds.documents.push_back(d);
        ds.splits[d.id] = i < 10 ? Split::train : (i < 15 ? Split::val : Split::test);
      }
      for (int i = 0; i < 20; ++i) {
        Document d;
        d.id = prefix + "a" + std::to_string(i);
        d.text = make_doc(ai_words, 28 + i % 11);
        d.label = Label::ai;
        d.domain_tag = tag;
        ds.documents.push_back(d);
        ds.splits[d.id] = i < 10 ? Split::train : (i < 15 ? Split::val : Split::test);
      }
    };
    add_domain("news", "n");
    add_domain("fiction", "f");

    cfg.providers.providers = {{"unigram", (tmp.path() / "uni.json").string()},
                               {"trigram", (tmp.path() / "tri.json").string()}};
    cfg.providers.tokenizer = "reference";
    cfg.depth = 2;
    cfg.max_k = 2;
  }
};

}  // namespace

TEST_CASE("plan validation enforces tag discipline") {
  EvalFixture fx;
  ExperimentPlan p;
  p.name = "in";
  p.mode = "in_domain";
  p.train_tags = {"news"};
  p.eval_tags = {"news"};
  CHECK_NOTHROW(validate_plan(p, fx.ds));

  p.eval_tags = {"fiction"};
  CHECK_THROWS_WITH_AS(validate_plan(p, fx.ds),
                       "in-domain plan requires matching train and eval tags",
                       Error);

  p.mode = "out_of_domain";
  CHECK_NOTHROW(validate_plan(p, fx.ds));
  p.eval_tags = {"news", "fiction"};
  CHECK_THROWS_WITH_AS(
      validate_plan(p, fx.ds),
      "out-of-domain plan requires disjoint train and eval tags", Error);
  p.train_tags.clear();
  CHECK_THROWS_WITH_AS(
      validate_plan(p, fx.ds),
      "out-of-domain plan requires explicit train and eval tags", Error);

  p.mode = "in_domain";
  p.train_tags = {"blog"};
  p.eval_tags = {"blog"};
  CHECK_THROWS_WITH_AS(validate_plan(p, fx.ds),
                       "domain tag 'blog' not in dataset", Error);

  p.train_tags = p.eval_tags = {"news"};
  p.kind = "svm";
  CHECK_THROWS_WITH_AS(validate_plan(p, fx.ds),
                       "unknown experiment kind 'svm'", Error);
  p.kind = "detector";
  p.mode = "transfer";
  CHECK_THROWS_WITH_AS(validate_plan(p, fx.ds),
                       "unknown experiment mode 'transfer'", Error);
  p.mode = "in_domain";
  p.trim = 0;
  CHECK_THROWS_WITH_AS(validate_plan(p, fx.ds), "trim must be positive", Error);
}

TEST_CASE("plan files load and reject junk") {
  test::TmpDir tmp{"plans"};
  auto path = (tmp.path() / "plans.json").string();

  write_file_atomic(path, R"([
    {"name": "all_domains"},
    {"name": "news_only", "mode": "in_domain",
     "train_tags": ["news"], "eval_tags": ["news"], "trim": 100},
    {"name": "transfer", "kind": "perplexity", "mode": "out_of_domain",
     "train_tags": ["news"], "eval_tags": ["fiction"]}
  ])");
  auto plans = load_plans(path);
  REQUIRE(plans.size() == 3);
  CHECK(plans[0].name == "all_domains");
  CHECK(plans[0].kind == "detector");
  CHECK(plans[0].mode == "in_domain");
  CHECK(plans[0].train_tags.empty());
  CHECK_FALSE(plans[0].trim.has_value());
  CHECK(plans[1].trim == size_t{100});
  CHECK(plans[1].train_tags == std::vector<std::string>{"news"});
  CHECK(plans[2].kind == "perplexity");

  write_file_atomic(path, R"([{"name": "x", "shots": 3}])");
  CHECK_THROWS_WITH_AS(load_plans(path), "unknown plan key 'shots'", Error);
  write_file_atomic(path, R"([{"kind": "detector"}])");
  CHECK_THROWS_WITH_AS(load_plans(path), "plan needs a nonempty name", Error);
  write_file_atomic(path, R"([{"name": "x", "trim": 0}])");
  CHECK_THROWS_WITH_AS(load_plans(path), "trim must be a positive integer", Error);
  write_file_atomic(path, R"([{"name": "x", "trim": -5}])");
  CHECK_THROWS_AS(load_plans(path), Error);
  write_file_atomic(path, R"({"name": "x"})");
  CHECK_THROWS_WITH_AS(load_plans(path), "plan file must hold a JSON array", Error);
  write_file_atomic(path, "[{");
  CHECK_THROWS_AS(load_plans(path), Error);
}

TEST_CASE("experiments run in-domain, out-of-domain, and trimmed") {
  EvalFixture fx;

  ExperimentPlan in_domain;
  in_domain.name = "news_in";
  in_domain.train_tags = {"news"};
  in_domain.eval_tags = {"news"};
  auto r = run_experiment(in_domain, fx.ds, fx.cfg);
  CHECK(r.n() == 10);  // 5 human + 5 ai test docs in the domain
  CHECK(r.f1() >= 0.9);

  // empty tag lists mean every domain
  ExperimentPlan everything;
  everything.name = "all";
  auto all = run_experiment(everything, fx.ds, fx.cfg);
  CHECK(all.n() == 20);
  CHECK(all.f1() >= 0.9);

  ExperimentPlan ood;
  ood.name = "news_to_fiction";
  ood.mode = "out_of_domain";
  ood.train_tags = {"news"};
  ood.eval_tags = {"fiction"};
  auto ro = run_experiment(ood, fx.ds, fx.cfg);
  CHECK(ro.n() == 10);
  CHECK(ro.f1_applicable());

  ExperimentPlan trimmed = in_domain;
  trimmed.name = "news_trim";
  trimmed.trim = 15;
  auto rt = run_experiment(trimmed, fx.ds, fx.cfg);
  CHECK(rt.n() == 10);

  ExperimentPlan ppl = in_domain;
  ppl.name = "news_ppl";
  ppl.kind = "perplexity";
  auto rp = run_experiment(ppl, fx.ds, fx.cfg);
  CHECK(rp.n() == 10);
  CHECK(rp.f1() >= 0.9);  // dialects differ wildly in n-gram perplexity
}

TEST_CASE("length sweep default grid and untrimmed equivalence") {
  CHECK(kDefaultLengthSweep ==
        std::vector<size_t>{10, 25, 50, 100, 250, 500, 1000});

  EvalFixture fx;
  auto artifact = fit_detector(fx.ds, fx.cfg);
  ProviderSet ps(fx.cfg.providers);
  auto docs = fx.ds.docs_in(Split::test);
  REQUIRE(docs.size() == 20);

  auto sweep = length_sweep(artifact, ps, docs, {5, 20, 1000});
  REQUIRE(sweep.size() == 3);
  CHECK(sweep[0].first == 5);
  for (auto& [n, rep] : sweep) CHECK(rep.n() == docs.size());

  // no document reaches 1000 tokens, so that point equals full-text scoring
  std::vector<Label> pred, gold;
  for (const Document* d : docs) {
    pred.push_back(classify(artifact, ps, d->id, d->text).label);
    gold.push_back(d->label);
  }
  auto full = compute_metrics(pred, gold);
  CHECK(sweep[2].second.tp == full.tp);
  CHECK(sweep[2].second.fp == full.fp);
  CHECK(sweep[2].second.fn == full.fn);
  CHECK(sweep[2].second.tn == full.tn);

  // full-length documents separate at least as well as 5-token stubs
  CHECK(sweep[2].second.f1() >= sweep[0].second.f1());

  CHECK_THROWS_AS(length_sweep(artifact, ps, {}, {10}), Error);
  CHECK_THROWS_AS(length_sweep(artifact, ps, docs, {}), Error);
  CHECK_THROWS_AS(length_sweep(artifact, ps, docs, {0}), Error);
}

TEST_CASE("report files carry rows, na cells, and the macro average") {
  test::TmpDir tmp{"report"};
  MetricReport mixed;
  mixed.tp = 8;
  mixed.fp = 1;
  mixed.fn = 2;
  mixed.tn = 9;
  MetricReport humans_only;
  humans_only.fp = 1;
  humans_only.tn = 9;
  std::vector<ReportRow> rows = {{"in_domain", mixed},
                                 {"human,only", humans_only}};

  auto csv_path = (tmp.path() / "report.csv").string();
  write_report_csv(rows, csv_path);
  std::string csv = read_file(csv_path);
  auto lines = [&] {
    std::vector<std::string> out;
    size_t start = 0;
    while (start < csv.size()) {
      size_t end = csv.find('\n', start);
      out.push_back(csv.substr(start, end - start));
      start = end + 1;
    }
    return out;
  }();
  REQUIRE(lines.size() == 3);
  CHECK(lines[0] == "condition,n,tp,fp,fn,tn,accuracy,precision,recall,f1");
  CHECK(lines[1].substr(0, 22) == "in_domain,20,8,1,2,9,0");
  // metric cells round-trip through the fixed double format
  {
    std::vector<std::string> cells;
    size_t start = 0;
    while (start <= lines[1].size()) {
      size_t end = lines[1].find(',', start);
      cells.push_back(lines[1].substr(start, end == std::string::npos
                                                 ? std::string::npos
                                                 : end - start));
      if (end == std::string::npos) break;
      start = end + 1;
    }
    REQUIRE(cells.size() == 10);
    CHECK(parse_double(cells[6]) == mixed.accuracy());
    CHECK(parse_double(cells[7]) == mixed.precision());
    CHECK(parse_double(cells[8]) == mixed.recall());
    CHECK(parse_double(cells[9]) == mixed.f1());
  }
  // quoted condition, all-human row reports accuracy but no F1 family
  CHECK(lines[2] == "\"human,only\",10,0,1,0,9,0.90000000000000002,na,na,na");

  auto json_path = (tmp.path() / "report.json").string();
  write_report_json(rows, json_path);
  auto j = json::parse(read_file(json_path));
  REQUIRE(j["conditions"].size() == 2);
  CHECK(j["conditions"][0]["condition"] == "in_domain");
  CHECK(j["conditions"][0]["f1"] == format_double(mixed.f1()));
  CHECK(j["conditions"][1]["f1"].is_null());
  CHECK(j["conditions"][1]["precision"].is_null());
  CHECK(j["conditions"][1]["accuracy"] == "0.90000000000000002");
  // macro average covers only the rows where F1 applies
  CHECK(j["macro_f1"] == format_double(mixed.f1()));

  // byte-stable on rewrite
  write_report_csv(rows, csv_path);
  CHECK(read_file(csv_path) == csv);

  write_report_json({{"h", humans_only}}, json_path);
  CHECK(json::parse(read_file(json_path))["macro_f1"].is_null());
}
