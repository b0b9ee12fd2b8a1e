// Command-line entry point.  Exit codes: 0 ok, 1 usage, 2 runtime error.
// Config precedence: --config file < flags < environment variables.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "specter/analysis.hpp"
#include "specter/common.hpp"
#include "specter/config.hpp"
#include "specter/corpus.hpp"
#include "specter/detector.hpp"
#include "specter/eval.hpp"
#include "specter/features.hpp"
#include "specter/ngram.hpp"
#include "specter/perturb.hpp"
#include "specter/providers.hpp"

using ordered_json = nlohmann::ordered_json;
namespace fs = std::filesystem;

namespace specter {
namespace {

void log_line(const std::string& msg) {
  std::cerr << "[specter] " << msg << "\n";
}

struct Ctx {
  std::string config_path;
  int jobs = -1;      // -1: not given on the command line
  long seed = -1;     // -1: not given (split seed for train/eval)

  // Resolved base config: file, then the globals above, then env.
  ToolConfig base() const {
    ToolConfig cfg;
    if (!config_path.empty()) cfg = load_config(config_path);
    if (jobs >= 0) cfg.jobs = static_cast<size_t>(jobs);
    if (seed >= 0) cfg.seed = static_cast<uint64_t>(seed);
    apply_env(cfg);
    return cfg;
  }
};

std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

// "name" (model path looked up in the config) or "name=path".
std::vector<ProviderSpec> resolve_providers(const std::string& csv,
                                            const ToolConfig& cfg) {
  std::vector<ProviderSpec> out;
  if (csv.empty()) {
    out = cfg.providers.providers;
    if (out.empty())
      throw Error("no providers: pass --providers or define them in the "
                  "config file");
    return out;
  }
  for (const std::string& item : split_csv(csv)) {
    ProviderSpec spec;
    size_t eq = item.find('=');
    spec.name = item.substr(0, eq == std::string::npos ? item.size() : eq);
    if (eq != std::string::npos) spec.model_path = item.substr(eq + 1);
    ProviderKind kind = parse_provider_name(spec.name);
    if (kind != ProviderKind::neural && spec.model_path.empty()) {
      for (const auto& p : cfg.providers.providers)
        if (p.name == spec.name) spec.model_path = p.model_path;
      if (spec.model_path.empty())
        throw Error("provider '" + spec.name +
                    "' needs a model path: use name=path or define it in "
                    "the config file");
    }
    out.push_back(std::move(spec));
  }
  return out;
}

ProviderSetConfig provider_set_config(const ToolConfig& cfg,
                                      const std::string& providers_csv) {
  ProviderSetConfig psc = cfg.providers;
  psc.providers = resolve_providers(providers_csv, cfg);
  return psc;
}

// .jsonl file, dataset directory, or plain text with blank-line documents.
std::vector<std::string> load_corpus_texts(const std::string& path) {
  std::vector<std::string> texts;
  if (fs::is_directory(path)) {
    Dataset d = load_dataset(path, DatasetFormat::text_dir);
    for (auto& doc : d.documents) texts.push_back(std::move(doc.text));
  } else if (path.size() > 6 &&
             path.compare(path.size() - 6, 6, ".jsonl") == 0) {
    Dataset d = load_dataset(path, DatasetFormat::jsonl);
    for (auto& doc : d.documents) texts.push_back(std::move(doc.text));
  } else {
    std::string data = read_file(path);
    std::string block;
    std::istringstream in(data);
    std::string line;
    auto flush_block = [&] {
      if (block.find_first_not_of(" \t\r\n") != std::string::npos)
        texts.push_back(block);
      block.clear();
    };
    while (std::getline(in, line)) {
      if (line.find_first_not_of(" \t\r") == std::string::npos) {
        flush_block();
      } else {
        if (!block.empty()) block += "\n";
        block += line;
      }
    }
    flush_block();
  }
  if (texts.empty()) throw Error("no documents in corpus " + path);
  return texts;
}

Dataset load_any_dataset(const std::string& path) {
  return load_dataset(path, fs::is_directory(path) ? DatasetFormat::text_dir
                                                   : DatasetFormat::jsonl);
}

FitConfig make_fit_config(const ToolConfig& cfg,
                          const std::string& providers_csv) {
  FitConfig fc;
  fc.providers = provider_set_config(cfg, providers_csv);
  fc.depth = cfg.depth;
  fc.max_k = cfg.max_k;
  fc.epsilon = cfg.epsilon;
  fc.C = cfg.C;
  fc.jobs = cfg.jobs;
  return fc;
}

// Rebuild the provider wiring an artifact was trained with, keeping the
// runtime plumbing (cache, endpoint, credentials) from the current config.
ProviderSet artifact_providers(const DetectorArtifact& a,
                               const ToolConfig& cfg) {
  ProviderSetConfig psc = cfg.providers;
  psc.providers = a.providers;
  psc.tokenizer = a.tokenizer;
  return ProviderSet(psc);
}

// ---- subcommand bodies -------------------------------------------------

void cmd_ngram_train(const Ctx& ctx, int order, double delta, double lambda,
                     bool delta_set, bool lambda_set,
                     const std::string& corpus, const std::string& out) {
  ToolConfig cfg = ctx.base();
  if (!delta_set) delta = cfg.delta;
  if (!lambda_set) lambda = cfg.lambda_u;
  auto texts = load_corpus_texts(corpus);
  std::vector<TokenSequence> seqs;
  size_t total = 0;
  for (const auto& t : texts) {
    auto ts = tokenize(t);
    total += ts.size();
    if (!ts.empty()) seqs.push_back(std::move(ts));
  }
  if (order == 1) {
    UnigramModel::train(seqs, lambda).save(out);
  } else {
    TrigramModel::train(seqs, delta, lambda).save(out);
  }
  std::ostringstream msg;
  msg << "trained order-" << order << " model on " << seqs.size()
      << " documents (" << total << " tokens) -> " << out;
  log_line(msg.str());
}

void cmd_score(const Ctx& ctx, const std::string& providers_csv,
               const std::string& cache, const std::string& dataset) {
  ToolConfig cfg = ctx.base();
  ProviderSetConfig psc = provider_set_config(cfg, providers_csv);
  if (!cache.empty()) psc.cache_dir = cache;
  if (psc.cache_dir.empty())
    throw Error("score needs a cache directory: pass --cache or set "
                "cache_dir in the config file");
  ProviderSet ps(psc);
  Dataset ds = load_any_dataset(dataset);
  size_t records = 0;
  for (const auto& doc : ds.documents) {
    auto pvs = ps.score_all(doc.id, doc.text);
    for (const auto& pv : pvs) {
      std::string token = provider_token(pv.provider);
      ordered_json j;
      j["provider"] = pv.provider;
      j["doc_id"] = pv.doc_id;
      ordered_json probs = ordered_json::array();
      for (double p : pv.probs) probs.push_back(format_double(p));
      j["probs"] = std::move(probs);
      char key[17];
      std::snprintf(key, sizeof key, "%016llx",
                    static_cast<unsigned long long>(
                        cache_key(token, doc.text)));
      fs::path rec = fs::path(psc.cache_dir) / "scores" / token /
                     (std::string(key) + ".json");
      write_file_atomic(rec, j.dump(2) + "\n");
      ++records;
    }
  }
  std::ostringstream msg;
  msg << "scored " << ds.documents.size() << " documents with " << ps.size()
      << " providers (" << records << " records) -> " << psc.cache_dir;
  log_line(msg.str());
}

void cmd_features_enumerate(const Ctx& ctx, int depth, bool depth_set,
                            const std::string& providers_csv,
                            const std::string& out) {
  ToolConfig cfg = ctx.base();
  if (!depth_set) depth = cfg.depth;
  std::vector<std::string> tokens;
  if (providers_csv.empty()) {
    for (const auto& p : cfg.providers.providers)
      tokens.push_back(provider_token(p.name));
    if (tokens.empty())
      throw Error("no providers: pass --providers or define them in the "
                  "config file");
  } else {
    for (const std::string& name : split_csv(providers_csv)) {
      parse_provider_name(name);
      tokens.push_back(provider_token(name));
    }
  }
  auto feats = enumerate_features(tokens, depth);
  std::string body;
  for (const auto& f : feats) {
    body += format_feature(f);
    body += "\n";
  }
  write_file_atomic(out, body);
  std::ostringstream msg;
  msg << "enumerated " << feats.size() << " features at depth " << depth
      << " -> " << out;
  log_line(msg.str());
}

Dataset load_and_split(const std::string& dataset, uint64_t seed) {
  Dataset ds = load_any_dataset(dataset);
  return split_dataset(std::move(ds), SplitRatios{}, seed);
}

void cmd_train(const Ctx& ctx, const std::string& dataset,
               const std::string& providers_csv, const CLI::App* sub,
               int depth, size_t max_k, double epsilon, double C,
               double threshold, bool no_handcrafted,
               const std::string& out) {
  ToolConfig cfg = ctx.base();
  if (sub->count("--depth")) cfg.depth = depth;
  if (sub->count("--max-k")) cfg.max_k = max_k;
  if (sub->count("--epsilon")) cfg.epsilon = epsilon;
  if (sub->count("--C")) cfg.C = C;
  FitConfig fc = make_fit_config(cfg, providers_csv);
  fc.use_handcrafted = !no_handcrafted;
  if (sub->count("--threshold")) fc.threshold = threshold;
  Dataset ds = load_and_split(dataset, cfg.seed);
  DetectorArtifact art = fit_detector(ds, fc);
  save_artifact(art, out);
  std::ostringstream msg;
  msg << "trained detector on " << ds.labeled_count() << " labeled documents"
      << " (split seed " << cfg.seed << "), selected " << art.selected.size()
      << " features -> " << out;
  log_line(msg.str());
  for (const auto& f : art.selected) log_line("  " + format_feature(f));
}

void cmd_classify(const Ctx& ctx, const std::string& model,
                  const std::string& in, bool as_json) {
  ToolConfig cfg = ctx.base();
  DetectorArtifact art = load_artifact(model);
  ProviderSet ps = artifact_providers(art, cfg);
  std::string text;
  if (in == "-") {
    std::ostringstream buf;
    buf << std::cin.rdbuf();
    text = buf.str();
  } else {
    text = read_file(in);
  }
  std::string doc_id = in == "-" ? "stdin" : in;
  Classification cls = classify(art, ps, doc_id, text);
  if (as_json) {
    auto names = art.columns();
    auto row = doc_features(art, ps, doc_id, text);
    ordered_json j;
    j["score"] = cls.score;
    j["label"] = label_name(cls.label);
    ordered_json feats;
    for (size_t i = 0; i < names.size(); ++i) feats[names[i]] = row[i];
    j["features"] = std::move(feats);
    std::cout << j.dump(2) << "\n";
  } else {
    std::cout << label_name(cls.label) << "\t" << format_double(cls.score)
              << "\n";
  }
}

void cmd_eval(const Ctx& ctx, const std::string& plan,
              const std::string& dataset, const std::string& providers_csv,
              const std::string& out) {
  ToolConfig cfg = ctx.base();
  FitConfig fc = make_fit_config(cfg, providers_csv);
  Dataset ds = load_and_split(dataset, cfg.seed);
  auto plans = load_plans(plan);
  std::vector<ReportRow> rows;
  for (const auto& p : plans) {
    MetricReport rep = run_experiment(p, ds, fc);
    std::ostringstream msg;
    msg << "plan '" << p.name << "': n=" << rep.n()
        << " accuracy=" << format_double(rep.accuracy())
        << " f1=" << (rep.f1_applicable() ? format_double(rep.f1()) : "na");
    log_line(msg.str());
    rows.push_back({p.name, rep});
  }
  write_report_csv(rows, out);
  fs::path json_out = fs::path(out).replace_extension(".json");
  write_report_json(rows, json_out.string());
  log_line("report -> " + out + " and " + json_out.string());
}

void cmd_perturb(const std::string& kind, size_t count, uint64_t seed,
                 const std::string& synonyms, const std::string& command) {
  Perturbation p;
  p.kind = parse_perturb_kind(kind);
  p.count = count;
  p.seed = seed;
  p.command = command;
  SynonymLexicon lex;
  bool have_lex = !synonyms.empty();
  if (have_lex) lex = SynonymLexicon::load(synonyms);
  std::ostringstream buf;
  buf << std::cin.rdbuf();
  std::cout << perturb(buf.str(), p, have_lex ? &lex : nullptr);
}

void cmd_robustness(const Ctx& ctx, const std::string& model,
                    const std::string& dataset, const std::string& kind,
                    const std::string& counts_csv,
                    const std::string& seeds_csv, const std::string& synonyms,
                    const std::string& command, const std::string& out) {
  ToolConfig cfg = ctx.base();
  DetectorArtifact art = load_artifact(model);
  ProviderSet ps = artifact_providers(art, cfg);
  Dataset ds = load_any_dataset(dataset);
  std::vector<const Document*> docs;
  for (const auto& d : ds.documents)
    if (d.label == Label::ai) docs.push_back(&d);
  if (docs.empty()) throw Error("no ai-labeled documents in " + dataset);
  PerturbKind pk = parse_perturb_kind(kind);
  std::vector<size_t> counts;
  for (const auto& c : split_csv(counts_csv))
    counts.push_back(static_cast<size_t>(std::stoull(c)));
  if (counts.empty()) throw Error("--counts needs at least one value");
  std::vector<uint64_t> seeds;
  for (const auto& s : split_csv(seeds_csv))
    seeds.push_back(std::stoull(s));
  if (seeds.empty()) seeds.push_back(cfg.seed);
  SynonymLexicon lex;
  bool have_lex = !synonyms.empty();
  if (have_lex) lex = SynonymLexicon::load(synonyms);
  auto points = robustness_sweep(art, ps, docs, pk, counts, seeds,
                                 have_lex ? &lex : nullptr, command,
                                 cfg.jobs);
  write_robustness_csv(pk, points, out);
  std::ostringstream msg;
  msg << "robustness sweep (" << kind << ") over " << docs.size()
      << " documents x " << seeds.size() << " seeds -> " << out;
  log_line(msg.str());
}

void cmd_analyze_entropy(const Ctx& ctx, const std::string& provider,
                         const std::string& label_class,
                         const std::string& dataset,
                         const std::string& providers_csv, size_t max_pos,
                         const std::string& out) {
  ToolConfig cfg = ctx.base();
  ProviderSetConfig psc = provider_set_config(cfg, providers_csv);
  ProviderSet ps(psc);
  size_t index = ps.size();
  auto names = ps.names();
  for (size_t i = 0; i < names.size(); ++i)
    if (names[i] == provider || provider_token(names[i]) == provider)
      index = i;
  if (index == ps.size())
    throw Error("provider '" + provider + "' is not configured");
  Label want = parse_label(label_class);
  Dataset ds = load_any_dataset(dataset);
  std::vector<ProbabilityVector> vectors;
  for (const auto& d : ds.documents)
    if (d.label == want) vectors.push_back(ps.score(index, d.id, d.text));
  if (vectors.empty())
    throw Error("no documents labeled '" + label_class + "' in " + dataset);
  size_t limit = max_pos;
  if (limit == 0)
    for (const auto& v : vectors) limit = std::max(limit, v.size());
  auto series = entropy_rate(vectors, limit, provider_token(names[index]),
                             label_class);
  emit_entropy_csv({series}, out);
  std::ostringstream msg;
  msg << "entropy over " << vectors.size() << " '" << label_class
      << "' documents, " << series.mean_logprob.size() << " positions -> "
      << out;
  log_line(msg.str());
}

int run(int argc, char** argv) {
  CLI::App app{"specter: weak-model text detector toolkit"};
  app.require_subcommand(1);
  Ctx ctx;
  app.add_option("--config", ctx.config_path, "JSON config file");
  app.add_option("--jobs", ctx.jobs, "parallel workers (0 = all cores)");
  app.add_option("--seed", ctx.seed, "seed for dataset splitting");

  // ngram train
  auto* ngram = app.add_subcommand("ngram", "n-gram language models");
  ngram->require_subcommand(1);
  ngram->fallthrough();
  auto* ntrain = ngram->add_subcommand("train", "train a unigram or trigram");
  ntrain->fallthrough();
  int order = 3;
  double delta = 0.9, lambda = 1e-3;
  std::string corpus, ngram_out;
  ntrain->add_option("--order", order, "model order")
      ->check(CLI::IsMember({1, 3}))
      ->required();
  ntrain->add_option("--delta", delta, "absolute discount (trigram)");
  ntrain->add_option("--lambda", lambda, "out-of-vocabulary mass");
  ntrain->add_option("--corpus", corpus,
                     ".txt with blank-line documents, .jsonl, or directory")
      ->required();
  ntrain->add_option("--out", ngram_out, "model file to write")->required();
  ntrain->callback([&] {
    cmd_ngram_train(ctx, order, delta, lambda, ntrain->count("--delta") > 0,
                    ntrain->count("--lambda") > 0, corpus, ngram_out);
  });

  // score
  auto* score = app.add_subcommand(
      "score", "score a dataset with every provider and fill the cache");
  score->fallthrough();
  std::string score_providers, score_cache, score_dataset;
  score->add_option("--providers", score_providers,
                    "comma list: name or name=model_path");
  score->add_option("--cache", score_cache, "cache directory");
  score->add_option("--dataset", score_dataset, ".jsonl file or directory")
      ->required();
  score->callback(
      [&] { cmd_score(ctx, score_providers, score_cache, score_dataset); });

  // features enumerate
  auto* features = app.add_subcommand("features", "structured feature space");
  features->require_subcommand(1);
  features->fallthrough();
  auto* fenum =
      features->add_subcommand("enumerate", "write the canonical feature list");
  fenum->fallthrough();
  int fdepth = 3;
  std::string feat_providers, feat_out;
  fenum->add_option("--depth", fdepth, "max vectors per expression");
  fenum->add_option("--providers", feat_providers, "comma list of names");
  fenum->add_option("--out", feat_out, "feature list file")->required();
  fenum->callback([&] {
    cmd_features_enumerate(ctx, fdepth, fenum->count("--depth") > 0,
                           feat_providers, feat_out);
  });

  // train
  auto* train = app.add_subcommand("train", "fit a detector artifact");
  train->fallthrough();
  std::string train_dataset, train_providers, train_out;
  int tdepth = 3;
  size_t tmax_k = 10;
  double teps = 1e-4, tC = 1.0, tthreshold = 0.5;
  bool no_hand = false;
  train->add_option("--dataset", train_dataset, ".jsonl file or directory")
      ->required();
  train->add_option("--providers", train_providers,
                    "comma list: name or name=model_path");
  train->add_option("--depth", tdepth, "feature search depth");
  train->add_option("--max-k", tmax_k, "forward selection budget");
  train->add_option("--epsilon", teps, "selection stopping threshold");
  train->add_option("--C", tC, "inverse regularization strength");
  train->add_option("--threshold", tthreshold, "classification threshold");
  train->add_flag("--no-handcrafted", no_hand,
                  "drop the fixed handcrafted features");
  train->add_option("--out", train_out, "artifact file to write")->required();
  train->callback([&] {
    cmd_train(ctx, train_dataset, train_providers, train, tdepth, tmax_k,
              teps, tC, tthreshold, no_hand, train_out);
  });

  // classify
  auto* cls = app.add_subcommand("classify", "classify one document");
  cls->fallthrough();
  std::string cls_model, cls_in = "-";
  bool cls_json = false;
  cls->add_option("--model", cls_model, "detector artifact")->required();
  cls->add_option("--in", cls_in, "document file ('-' for stdin)");
  cls->add_flag("--json", cls_json,
                "emit {score, label, features} JSON instead of text");
  cls->callback([&] { cmd_classify(ctx, cls_model, cls_in, cls_json); });

  // eval
  auto* eval = app.add_subcommand("eval", "run experiment plans");
  eval->fallthrough();
  std::string eval_plan, eval_dataset, eval_providers, eval_out;
  eval->add_option("--plan", eval_plan, "JSON plan file")->required();
  eval->add_option("--dataset", eval_dataset, ".jsonl file or directory")
      ->required();
  eval->add_option("--providers", eval_providers,
                   "comma list: name or name=model_path");
  eval->add_option("--out", eval_out, "report CSV (JSON written alongside)")
      ->required();
  eval->callback(
      [&] { cmd_eval(ctx, eval_plan, eval_dataset, eval_providers, eval_out); });

  // perturb
  auto* pert = app.add_subcommand("perturb", "perturb stdin to stdout");
  pert->fallthrough();
  std::string pkind, psyn, pcmd;
  size_t pcount = 0;
  uint64_t pseed = 0;
  pert->add_option("--kind", pkind, "perturbation kind")->required();
  pert->add_option("--count", pcount, "number of edits")->required();
  pert->add_option("--seed", pseed, "edit-placement seed");
  pert->add_option("--synonyms", psyn, "synonym lexicon file");
  pert->add_option("--command", pcmd, "external transform shell command");
  pert->callback([&] { cmd_perturb(pkind, pcount, pseed, psyn, pcmd); });

  // robustness
  auto* rob = app.add_subcommand(
      "robustness", "metric-vs-edit-count sweep over the ai documents");
  rob->fallthrough();
  std::string rmodel, rdataset, rkind, rcounts, rseeds, rsyn, rcmd, rout;
  rob->add_option("--model", rmodel, "detector artifact")->required();
  rob->add_option("--dataset", rdataset, ".jsonl file or directory")
      ->required();
  rob->add_option("--kind", rkind, "perturbation kind")->required();
  rob->add_option("--counts", rcounts, "comma list of edit counts")
      ->required();
  rob->add_option("--seeds", rseeds, "comma list of seeds");
  rob->add_option("--synonyms", rsyn, "synonym lexicon file");
  rob->add_option("--command", rcmd, "external transform shell command");
  rob->add_option("--out", rout, "curve CSV")->required();
  rob->callback([&] {
    cmd_robustness(ctx, rmodel, rdataset, rkind, rcounts, rseeds, rsyn, rcmd,
                   rout);
  });

  // analyze entropy
  auto* analyze = app.add_subcommand("analyze", "aggregate analyses");
  analyze->require_subcommand(1);
  analyze->fallthrough();
  auto* entropy = analyze->add_subcommand(
      "entropy", "per-position mean log-probability curve");
  entropy->fallthrough();
  std::string aprovider, aclass, adataset, aproviders, aout;
  size_t amax = 0;
  entropy->add_option("--provider", aprovider, "provider name or token")
      ->required();
  entropy->add_option("--class", aclass, "document class: human or ai")
      ->required();
  entropy->add_option("--dataset", adataset, ".jsonl file or directory")
      ->required();
  entropy->add_option("--providers", aproviders,
                      "comma list: name or name=model_path");
  entropy->add_option("--max-positions", amax,
                      "truncate the curve (0 = longest document)");
  entropy->add_option("--out", aout, "curve CSV")->required();
  entropy->callback([&] {
    cmd_analyze_entropy(ctx, aprovider, aclass, adataset, aproviders, amax,
                        aout);
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    auto extras = app.remaining();
    if (!extras.empty() && !extras.front().empty() &&
        extras.front()[0] != '-') {
      std::cerr << "error: unknown subcommand '" << extras.front() << "'\n";
      return 1;
    }
    app.exit(e);
    return 1;
  }
  return 0;
}

}  // namespace
}  // namespace specter

int main(int argc, char** argv) {
  try {
    return specter::run(argc, argv);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
