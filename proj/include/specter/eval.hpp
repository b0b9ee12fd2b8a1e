#pragma once

// Metrics, oracle thresholding, the perplexity-only baseline, domain
// experiment plans, and the document-length sweep.

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "specter/corpus.hpp"
#include "specter/detector.hpp"
#include "specter/providers.hpp"

namespace specter {

// Binary confusion report with ai as the positive class.  When the gold set
// has no positives (a precision-only evaluation), F1/precision/recall are
// not applicable and reported as such.
struct MetricReport {
  size_t tp = 0, fp = 0, fn = 0, tn = 0;

  size_t n() const { return tp + fp + fn + tn; }
  bool f1_applicable() const { return tp + fn > 0; }
  double precision() const;  // 0/0 -> 0
  double recall() const;     // 0/0 -> 0
  double f1() const;         // 0/0 -> 0
  double accuracy() const;
};

MetricReport compute_metrics(const std::vector<Label>& pred,
                             const std::vector<Label>& gold);

// Threshold reproducing a target positive count on a score list.  labels has
// exactly `target` ones; ties at the boundary are resolved by index order
// (earlier indices first), and threshold is +inf when target is 0.
struct OracleThreshold {
  double threshold = 0.0;
  std::vector<int> labels;
};

OracleThreshold oracle_threshold(const std::vector<double>& scores,
                                 size_t target_positive_count);

// One-feature logistic model on document perplexity: fit on the train
// perplexities, report on eval.  Labels are 0 (human) / 1 (ai).
MetricReport perplexity_baseline(const std::vector<double>& train_ppl,
                                 const std::vector<int>& train_y,
                                 const std::vector<double>& eval_ppl,
                                 const std::vector<int>& eval_y);

// Perplexity of one document under one configured provider.
double doc_perplexity(const ProviderSet& ps, size_t provider_index,
                      const std::string& doc_id, const std::string& text);

// Text cut after its first n tokens (reference tokenizer); n >= token count
// returns the text unchanged.
std::string trim_text(const std::string& text, size_t n);

struct ExperimentPlan {
  std::string name;
  std::string kind = "detector";    // "detector" | "perplexity"
  std::string mode = "in_domain";   // "in_domain" | "out_of_domain"
  std::vector<std::string> train_tags;  // empty = every domain
  std::vector<std::string> eval_tags;
  std::optional<size_t> trim;  // applied to eval documents only
};

// Validates tag discipline: in_domain needs equal tag sets, out_of_domain
// disjoint ones, and every named tag must exist in the dataset.
void validate_plan(const ExperimentPlan& plan, const Dataset& ds);

// Plan file: JSON array of plan objects (unknown keys rejected).
std::vector<ExperimentPlan> load_plans(const std::string& path);

// Fits per the plan on train/val splits filtered to train_tags, then reports
// on the test split filtered to eval_tags (trimmed when the plan says so).
MetricReport run_experiment(const ExperimentPlan& plan, const Dataset& ds,
                            const FitConfig& fit_cfg);

// Re-score the same documents trimmed to each N.  Default Ns:
// 10, 25, 50, 100, 250, 500, 1000.
std::vector<std::pair<size_t, MetricReport>> length_sweep(
    const DetectorArtifact& a, const ProviderSet& ps,
    const std::vector<const Document*>& docs, const std::vector<size_t>& Ns);

extern const std::vector<size_t> kDefaultLengthSweep;

// Spearman rank correlation with average ranks on ties; inputs same length,
// >= 2 entries.  Zero-variance rank vectors yield 0.
double spearman(const std::vector<double>& xs, const std::vector<double>& ys);

struct ReportRow {
  std::string condition;
  MetricReport report;
};

// CSV schema: condition,n,tp,fp,fn,tn,accuracy,precision,recall,f1 with "na"
// for inapplicable cells.  JSON mirrors the rows and records the unweighted
// macro-average F1 over applicable conditions (null when none).
void write_report_csv(const std::vector<ReportRow>& rows,
                      const std::string& path);
void write_report_json(const std::vector<ReportRow>& rows,
                       const std::string& path);

}  // namespace specter
