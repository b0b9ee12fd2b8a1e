#include "specter/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <unordered_set>

#include "json.hpp"
#include "specter/common.hpp"

namespace specter {

namespace {

using ordered_json = nlohmann::ordered_json;

int label_to01(Label l) {
  if (l == Label::unlabeled) throw Error("labels must be human or ai");
  return l == Label::ai ? 1 : 0;
}

constexpr const char* kNa = "na";

std::string metric_cell(const MetricReport& r, double (MetricReport::*m)() const,
                        bool applicable) {
  return applicable ? format_double((r.*m)()) : std::string(kNa);
}

std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

}  // namespace

double MetricReport::precision() const {
  size_t d = tp + fp;
  return d == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(d);
}

double MetricReport::recall() const {
  size_t d = tp + fn;
  return d == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(d);
}

double MetricReport::f1() const {
  double p = precision(), r = recall();
  double d = p + r;
  return d == 0.0 ? 0.0 : 2.0 * p * r / d;
}

double MetricReport::accuracy() const {
  size_t total = n();
  return total == 0 ? 0.0
                    : static_cast<double>(tp + tn) / static_cast<double>(total);
}

MetricReport compute_metrics(const std::vector<Label>& pred,
                             const std::vector<Label>& gold) {
  if (pred.empty() || pred.size() != gold.size())
    throw Error("prediction and gold lists must be the same nonempty length");
  MetricReport r;
  for (size_t i = 0; i < pred.size(); ++i) {
    int p = label_to01(pred[i]);
    int g = label_to01(gold[i]);
    if (p && g)
      ++r.tp;
    else if (p && !g)
      ++r.fp;
    else if (!p && g)
      ++r.fn;
    else
      ++r.tn;
  }
  return r;
}

OracleThreshold oracle_threshold(const std::vector<double>& scores,
                                 size_t target_positive_count) {
  if (target_positive_count > scores.size())
    throw Error("target positive count exceeds the number of scores");
  OracleThreshold out;
  out.labels.assign(scores.size(), 0);
  if (target_positive_count == 0) {
    out.threshold = std::numeric_limits<double>::infinity();
    return out;
  }
  std::vector<size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](size_t a, size_t b) {
    return scores[a] > scores[b];
  });
  for (size_t k = 0; k < target_positive_count; ++k) out.labels[idx[k]] = 1;
  out.threshold = scores[idx[target_positive_count - 1]];
  return out;
}

MetricReport perplexity_baseline(const std::vector<double>& train_ppl,
                                 const std::vector<int>& train_y,
                                 const std::vector<double>& eval_ppl,
                                 const std::vector<int>& eval_y) {
  if (train_ppl.empty() || train_ppl.size() != train_y.size())
    throw Error("perplexity baseline needs matching nonempty train vectors");
  if (eval_ppl.empty() || eval_ppl.size() != eval_y.size())
    throw Error("perplexity baseline needs matching nonempty eval vectors");
  for (int y : train_y)
    if (y != 0 && y != 1) throw Error("labels must be 0 or 1");
  for (int y : eval_y)
    if (y != 0 && y != 1) throw Error("labels must be 0 or 1");

  std::vector<std::vector<double>> X;
  X.reserve(train_ppl.size());
  for (double p : train_ppl) X.push_back({p});
  Scaler sc = Scaler::fit(X);
  sc.transform_all(X);
  LogisticModel m = train_logreg(X, train_y, 1.0);

  std::vector<Label> pred, gold;
  pred.reserve(eval_ppl.size());
  for (size_t i = 0; i < eval_ppl.size(); ++i) {
    double x = sc.transform({eval_ppl[i]})[0];
    double score = sigmoid(m.w[0] * x + m.b);
    pred.push_back(score >= 0.5 ? Label::ai : Label::human);
    gold.push_back(eval_y[i] ? Label::ai : Label::human);
  }
  return compute_metrics(pred, gold);
}

double doc_perplexity(const ProviderSet& ps, size_t provider_index,
                      const std::string& doc_id, const std::string& text) {
  return perplexity(ps.score(provider_index, doc_id, text));
}

std::string trim_text(const std::string& text, size_t n) {
  TokenSequence ts = tokenize(text);
  if (n >= ts.size()) return text;
  if (n == 0) return "";
  return text.substr(0, ts.spans[n - 1].second);
}

namespace {

std::set<std::string> tag_set(const std::vector<std::string>& tags) {
  return {tags.begin(), tags.end()};
}

void check_kind_mode(const ExperimentPlan& plan) {
  if (plan.kind != "detector" && plan.kind != "perplexity")
    throw Error("unknown experiment kind '" + plan.kind + "'");
  if (plan.mode != "in_domain" && plan.mode != "out_of_domain")
    throw Error("unknown experiment mode '" + plan.mode + "'");
  if (plan.trim && *plan.trim == 0) throw Error("trim must be positive");
}

}  // namespace

void validate_plan(const ExperimentPlan& plan, const Dataset& ds) {
  check_kind_mode(plan);
  std::unordered_set<std::string> known;
  for (const Document& d : ds.documents) known.insert(d.domain_tag);
  for (const auto* tags : {&plan.train_tags, &plan.eval_tags})
    for (const std::string& t : *tags)
      if (!known.count(t)) throw Error("domain tag '" + t + "' not in dataset");

  std::set<std::string> tr = tag_set(plan.train_tags);
  std::set<std::string> ev = tag_set(plan.eval_tags);
  if (plan.mode == "in_domain") {
    if (tr != ev)
      throw Error("in-domain plan requires matching train and eval tags");
  } else {
    if (tr.empty() || ev.empty())
      throw Error("out-of-domain plan requires explicit train and eval tags");
    for (const std::string& t : tr)
      if (ev.count(t))
        throw Error("out-of-domain plan requires disjoint train and eval tags");
  }
}

std::vector<ExperimentPlan> load_plans(const std::string& path) {
  ordered_json j;
  try {
    j = ordered_json::parse(read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw Error("bad plan file " + path + ": " + e.what());
  }
  if (!j.is_array()) throw Error("plan file must hold a JSON array");

  static const std::unordered_set<std::string> kKnown = {
      "name", "kind", "mode", "train_tags", "eval_tags", "trim"};
  std::vector<ExperimentPlan> plans;
  for (const auto& o : j) {
    if (!o.is_object()) throw Error("each plan must be a JSON object");
    for (auto it = o.begin(); it != o.end(); ++it)
      if (!kKnown.count(it.key()))
        throw Error("unknown plan key '" + it.key() + "'");
    ExperimentPlan p;
    if (!o.contains("name") || !o["name"].is_string() ||
        o["name"].get<std::string>().empty())
      throw Error("plan needs a nonempty name");
    p.name = o["name"].get<std::string>();
    if (o.contains("kind")) p.kind = o["kind"].get<std::string>();
    if (o.contains("mode")) p.mode = o["mode"].get<std::string>();
    auto read_tags = [&](const char* key, std::vector<std::string>& out) {
      if (!o.contains(key)) return;
      if (!o[key].is_array()) throw Error(std::string(key) + " must be a list");
      for (const auto& t : o[key]) out.push_back(t.get<std::string>());
    };
    read_tags("train_tags", p.train_tags);
    read_tags("eval_tags", p.eval_tags);
    if (o.contains("trim")) {
      if (!o["trim"].is_number_unsigned() || o["trim"].get<uint64_t>() == 0)
        throw Error("trim must be a positive integer");
      p.trim = o["trim"].get<size_t>();
    }
    check_kind_mode(p);
    plans.push_back(std::move(p));
  }
  return plans;
}

namespace {

bool tag_match(const std::vector<std::string>& tags, const std::string& tag) {
  if (tags.empty()) return true;
  return std::find(tags.begin(), tags.end(), tag) != tags.end();
}

std::vector<const Document*> tagged_docs(const Dataset& ds, Split s,
                                         const std::vector<std::string>& tags) {
  std::vector<const Document*> out;
  for (const Document* d : ds.docs_in(s))
    if (tag_match(tags, d->domain_tag)) out.push_back(d);
  return out;
}

}  // namespace

MetricReport run_experiment(const ExperimentPlan& plan, const Dataset& ds,
                            const FitConfig& fit_cfg) {
  validate_plan(plan, ds);

  std::vector<const Document*> eval_docs =
      tagged_docs(ds, Split::test, plan.eval_tags);
  if (eval_docs.empty()) throw Error("no eval documents match the plan");
  auto eval_text = [&](const Document* d) {
    return plan.trim ? trim_text(d->text, *plan.trim) : d->text;
  };

  if (plan.kind == "perplexity") {
    if (fit_cfg.providers.providers.empty())
      throw Error("perplexity baseline needs a configured provider");
    ProviderSet ps(fit_cfg.providers);
    size_t strongest = fit_cfg.providers.providers.size() - 1;
    std::vector<const Document*> train_docs =
        tagged_docs(ds, Split::train, plan.train_tags);
    if (train_docs.empty()) throw Error("no train documents match the plan");
    std::vector<double> train_ppl, eval_ppl;
    std::vector<int> train_y, eval_y;
    for (const Document* d : train_docs) {
      train_ppl.push_back(doc_perplexity(ps, strongest, d->id, d->text));
      train_y.push_back(label_to01(d->label));
    }
    for (const Document* d : eval_docs) {
      std::string text = eval_text(d);
      eval_ppl.push_back(doc_perplexity(ps, strongest, d->id, text));
      eval_y.push_back(label_to01(d->label));
    }
    return perplexity_baseline(train_ppl, train_y, eval_ppl, eval_y);
  }

  // Detector: refit on the tag-filtered train/val splits, report on test.
  Dataset filtered;
  for (Split s : {Split::train, Split::val})
    for (const Document* d : tagged_docs(ds, s, plan.train_tags)) {
      filtered.documents.push_back(*d);
      filtered.splits[d->id] = s;
    }
  if (filtered.documents.empty())
    throw Error("no train documents match the plan");
  DetectorArtifact a = fit_detector(filtered, fit_cfg);
  ProviderSet ps(fit_cfg.providers);

  std::vector<Label> pred, gold;
  for (const Document* d : eval_docs) {
    pred.push_back(classify(a, ps, d->id, eval_text(d)).label);
    gold.push_back(d->label);
  }
  return compute_metrics(pred, gold);
}

const std::vector<size_t> kDefaultLengthSweep = {10, 25, 50, 100, 250, 500, 1000};

std::vector<std::pair<size_t, MetricReport>> length_sweep(
    const DetectorArtifact& a, const ProviderSet& ps,
    const std::vector<const Document*>& docs, const std::vector<size_t>& Ns) {
  if (docs.empty()) throw Error("length sweep needs documents");
  if (Ns.empty()) throw Error("length sweep needs lengths");
  for (size_t n : Ns)
    if (n == 0) throw Error("length sweep lengths must be positive");

  std::vector<Label> gold;
  gold.reserve(docs.size());
  for (const Document* d : docs) gold.push_back(d->label);

  std::vector<std::pair<size_t, MetricReport>> out;
  out.reserve(Ns.size());
  for (size_t n : Ns) {
    std::vector<Label> pred;
    pred.reserve(docs.size());
    for (const Document* d : docs) {
      std::string text = trim_text(d->text, n);
      pred.push_back(classify(a, ps, d->id, text).label);
    }
    out.emplace_back(n, compute_metrics(pred, gold));
  }
  return out;
}

namespace {

std::vector<double> average_ranks(const std::vector<double>& v) {
  size_t n = v.size();
  std::vector<size_t> idx(n);
  std::iota(idx.begin(), idx.end(), size_t{0});
  std::stable_sort(idx.begin(), idx.end(),
                   [&](size_t a, size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(n);
  size_t i = 0;
  while (i < n) {
    size_t j = i;
    while (j + 1 < n && v[idx[j + 1]] == v[idx[i]]) ++j;
    double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (size_t k = i; k <= j; ++k) ranks[idx[k]] = avg;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

double spearman(const std::vector<double>& xs, const std::vector<double>& ys) {
  if (xs.size() != ys.size() || xs.size() < 2)
    throw Error("spearman needs two equal-length vectors of size >= 2");
  std::vector<double> rx = average_ranks(xs);
  std::vector<double> ry = average_ranks(ys);
  double n = static_cast<double>(xs.size());
  double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (size_t i = 0; i < rx.size(); ++i) {
    double dx = rx[i] - mx, dy = ry[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

void write_report_csv(const std::vector<ReportRow>& rows,
                      const std::string& path) {
  std::ostringstream out;
  out << "condition,n,tp,fp,fn,tn,accuracy,precision,recall,f1\n";
  for (const ReportRow& row : rows) {
    const MetricReport& r = row.report;
    bool app = r.f1_applicable();
    out << csv_escape(row.condition) << ',' << r.n() << ',' << r.tp << ','
        << r.fp << ',' << r.fn << ',' << r.tn << ','
        << format_double(r.accuracy()) << ','
        << metric_cell(r, &MetricReport::precision, app) << ','
        << metric_cell(r, &MetricReport::recall, app) << ','
        << metric_cell(r, &MetricReport::f1, app) << '\n';
  }
  write_file_atomic(path, out.str());
}

void write_report_json(const std::vector<ReportRow>& rows,
                       const std::string& path) {
  ordered_json conditions = ordered_json::array();
  double macro_sum = 0.0;
  size_t macro_n = 0;
  for (const ReportRow& row : rows) {
    const MetricReport& r = row.report;
    bool app = r.f1_applicable();
    ordered_json o;
    o["condition"] = row.condition;
    o["n"] = r.n();
    o["tp"] = r.tp;
    o["fp"] = r.fp;
    o["fn"] = r.fn;
    o["tn"] = r.tn;
    o["accuracy"] = format_double(r.accuracy());
    if (app) {
      o["precision"] = format_double(r.precision());
      o["recall"] = format_double(r.recall());
      o["f1"] = format_double(r.f1());
      macro_sum += r.f1();
      ++macro_n;
    } else {
      o["precision"] = nullptr;
      o["recall"] = nullptr;
      o["f1"] = nullptr;
    }
    conditions.push_back(std::move(o));
  }
  ordered_json j;
  j["conditions"] = std::move(conditions);
  if (macro_n > 0)
    j["macro_f1"] = format_double(macro_sum / static_cast<double>(macro_n));
  else
    j["macro_f1"] = nullptr;
  write_file_atomic(path, j.dump(2) + "\n");
}

}  // namespace specter
