#pragma once

// Forward feature selection, feature scaling, L2-regularized logistic
// regression, and the serialized detector artifact.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "specter/corpus.hpp"
#include "specter/features.hpp"
#include "specter/providers.hpp"

namespace specter {

// Column standardization fit on the training rows.  Standard deviations are
// floored at 1e-12 so constant columns stay usable.
struct Scaler {
  std::vector<double> mean;
  std::vector<double> stddev;

  static Scaler fit(const std::vector<std::vector<double>>& rows);
  std::vector<double> transform(const std::vector<double>& row) const;
  std::vector<double> inverse(const std::vector<double>& row) const;
  void transform_all(std::vector<std::vector<double>>& rows) const;
};

struct LogisticModel {
  std::vector<double> w;
  double b = 0.0;
  double C = 1.0;
};

double sigmoid(double margin);

// (1/2)|w|^2 + C * sum log(1 + exp(-y_i (w.x_i + b))), y in {-1,+1} mapped
// from labels {0,1}.  The bias is unregularized.
double logreg_objective(const std::vector<std::vector<double>>& X,
                        const std::vector<int>& y,
                        const std::vector<double>& w, double b, double C);
void logreg_gradient(const std::vector<std::vector<double>>& X,
                     const std::vector<int>& y, const std::vector<double>& w,
                     double b, double C, std::vector<double>& grad_w,
                     double& grad_b);

// Damped Newton with line search; converges to gradient inf-norm <= 1e-6 or
// throws.  X rows must be finite and both classes present.
LogisticModel train_logreg(const std::vector<std::vector<double>>& X,
                           const std::vector<int>& y, double C);

// Inputs to forward selection: one column per candidate ([candidate][doc])
// plus optional always-included handcrafted rows ([doc][k]; empty disables).
struct SelectionData {
  std::vector<std::vector<double>> train_cols;
  std::vector<std::vector<double>> val_cols;
  std::vector<std::vector<double>> train_hand;
  std::vector<std::vector<double>> val_hand;
  std::vector<int> train_y;
  std::vector<int> val_y;
};

struct SelectionResult {
  std::vector<size_t> selected;  // indices into candidates, in pick order
  std::vector<double> val_f1;    // F1 after each accepted step; non-decreasing
};

// Greedy: each step trains an interim model on current + candidate +
// handcrafted columns (scaler refit per step, same C) and keeps the candidate
// with the best validation F1; ties go to the smaller canonical string.
// Stops when the improvement drops below epsilon or max_k is reached.
// Candidates with a non-finite value on any train or val document are
// excluded; all of them excluded is an error.
SelectionResult forward_select(const std::vector<FeatureExpr>& candidates,
                               const SelectionData& data, size_t max_k,
                               double epsilon, double C = 1.0, size_t jobs = 1);

struct FitConfig {
  ProviderSetConfig providers;
  int depth = 3;
  size_t max_k = 10;
  double epsilon = 1e-4;
  double C = 1.0;
  bool use_handcrafted = true;
  // Provider tokens for the handcrafted davinci/ada roles; empty picks the
  // last / first configured provider.
  std::string strong;
  std::string weak;
  double threshold = 0.5;
  size_t jobs = 1;
  // When set, forward selection is replaced by max_k candidates drawn
  // uniformly (without replacement) with this seed.
  std::optional<uint64_t> random_features;
};

struct DetectorArtifact {
  std::vector<ProviderSpec> providers;
  std::string tokenizer = "auto";
  std::vector<FeatureExpr> selected;
  bool use_handcrafted = true;
  std::string strong;
  std::string weak;
  Scaler scaler;
  LogisticModel model;
  double threshold = 0.5;

  // Column names in matrix order: selected canonical strings, then the
  // handcrafted names when enabled.
  std::vector<std::string> columns() const;
};

void save_artifact(const DetectorArtifact& a, const std::string& path);
DetectorArtifact load_artifact(const std::string& path);

// Score providers -> enumerate -> forward-select on train/val -> scale ->
// final logistic fit on train.  Deterministic for a fixed dataset and config.
DetectorArtifact fit_detector(const Dataset& ds, const FitConfig& cfg);

// Raw (unscaled) feature row for one document, in columns() order.
std::vector<double> doc_features(const DetectorArtifact& a,
                                 const ProviderSet& ps,
                                 const std::string& doc_id,
                                 const std::string& text);

struct Classification {
  double score = 0.0;  // sigmoid of the scaled margin
  Label label = Label::human;
};

// label = ai iff score >= threshold
Classification classify(const DetectorArtifact& a, const ProviderSet& ps,
                        const std::string& doc_id, const std::string& text);

struct AblationVariant {
  std::string name;
  FitConfig config;
};

// Standard ablation grid over a base config: handcrafted-only, depths 1-4,
// dropped neural providers, no-handcrafted, and seeded random features.
std::vector<AblationVariant> ablation_variants(const FitConfig& base,
                                               uint64_t seed);

}  // namespace specter
