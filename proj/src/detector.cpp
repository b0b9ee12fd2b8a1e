#include "specter/detector.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <json.hpp>

#include "specter/kernels.hpp"

using ordered_json = nlohmann::ordered_json;
using nlohmann::json;

namespace specter {

Scaler Scaler::fit(const std::vector<std::vector<double>>& rows) {
  if (rows.empty()) throw Error("cannot fit a scaler on zero rows");
  size_t cols = rows[0].size();
  for (const auto& r : rows)
    if (r.size() != cols) throw Error("ragged feature matrix");
  Scaler s;
  s.mean.resize(cols);
  s.stddev.resize(cols);
  std::vector<double> col(rows.size());
  const auto& k = kernels::ops();
  for (size_t c = 0; c < cols; ++c) {
    for (size_t i = 0; i < rows.size(); ++i) col[i] = rows[i][c];
    double mean = k.sum(col.data(), col.size()) /
                  static_cast<double>(col.size());
    double var = k.sum_sq_dev(col.data(), col.size(), mean) /
                 static_cast<double>(col.size());
    s.mean[c] = mean;
    s.stddev[c] = std::max(std::sqrt(var), 1e-12);
  }
  return s;
}

std::vector<double> Scaler::transform(const std::vector<double>& row) const {
  if (row.size() != mean.size()) throw Error("row width does not match scaler");
  std::vector<double> out(row.size());
  for (size_t c = 0; c < row.size(); ++c)
    out[c] = (row[c] - mean[c]) / stddev[c];
  return out;
}

std::vector<double> Scaler::inverse(const std::vector<double>& row) const {
  if (row.size() != mean.size()) throw Error("row width does not match scaler");
  std::vector<double> out(row.size());
  for (size_t c = 0; c < row.size(); ++c) out[c] = row[c] * stddev[c] + mean[c];
  return out;
}

void Scaler::transform_all(std::vector<std::vector<double>>& rows) const {
  for (auto& r : rows) r = transform(r);
}

double sigmoid(double margin) {
  if (margin >= 0.0) return 1.0 / (1.0 + std::exp(-margin));
  double e = std::exp(margin);
  return e / (1.0 + e);
}

namespace {

// log(1 + exp(t)) without overflow
double log1pexp(double t) {
  if (t > 0.0) return t + std::log1p(std::exp(-t));
  return std::log1p(std::exp(t));
}

void check_xy(const std::vector<std::vector<double>>& X,
              const std::vector<int>& y) {
  if (X.empty()) throw Error("empty training set");
  if (X.size() != y.size()) throw Error("row/label count mismatch");
  size_t cols = X[0].size();
  bool pos = false, neg = false;
  for (size_t i = 0; i < X.size(); ++i) {
    if (X[i].size() != cols) throw Error("ragged feature matrix");
    for (double v : X[i])
      if (!std::isfinite(v)) throw Error("non-finite feature value");
    if (y[i] != 0 && y[i] != 1) throw Error("labels must be 0 or 1");
    (y[i] == 1 ? pos : neg) = true;
  }
  if (!pos || !neg) throw Error("training data has a single class");
}

}  // namespace

double logreg_objective(const std::vector<std::vector<double>>& X,
                        const std::vector<int>& y,
                        const std::vector<double>& w, double b, double C) {
  const auto& k = kernels::ops();
  double obj = 0.5 * k.dot(w.data(), w.data(), w.size());
  for (size_t i = 0; i < X.size(); ++i) {
    double margin = k.dot(w.data(), X[i].data(), w.size()) + b;
    double yi = y[i] == 1 ? 1.0 : -1.0;
    obj += C * log1pexp(-yi * margin);
  }
  return obj;
}

void logreg_gradient(const std::vector<std::vector<double>>& X,
                     const std::vector<int>& y, const std::vector<double>& w,
                     double b, double C, std::vector<double>& grad_w,
                     double& grad_b) {
  const auto& k = kernels::ops();
  grad_w = w;  // d/dw of the ridge term
  grad_b = 0.0;
  for (size_t i = 0; i < X.size(); ++i) {
    double margin = k.dot(w.data(), X[i].data(), w.size()) + b;
    double yi = y[i] == 1 ? 1.0 : -1.0;
    double coef = -C * yi * sigmoid(-yi * margin);
    for (size_t c = 0; c < w.size(); ++c) grad_w[c] += coef * X[i][c];
    grad_b += coef;
  }
}

LogisticModel train_logreg(const std::vector<std::vector<double>>& X,
                           const std::vector<int>& y, double C) {
  if (!(C > 0.0)) throw Error("C must be positive");
  check_xy(X, y);
  size_t d = X[0].size();

  // Parameters packed as [w..., b].  The dimension is always small (selected
  // features plus the handcrafted block), so damped Newton is both cheap and
  // far sturdier than first-order methods on the near-separable matrices
  // forward selection routinely produces: quasi-Newton line searches stall
  // when the loss plateau flattens below double resolution while the
  // gradient is still above tolerance.
  size_t n = d + 1;
  std::vector<double> theta(n, 0.0);

  auto eval_f = [&](const std::vector<double>& t) {
    std::vector<double> w(t.begin(), t.begin() + static_cast<ptrdiff_t>(d));
    return logreg_objective(X, y, w, t[d], C);
  };
  auto eval_g = [&](const std::vector<double>& t, std::vector<double>& g) {
    std::vector<double> w(t.begin(), t.begin() + static_cast<ptrdiff_t>(d));
    std::vector<double> gw;
    double gb;
    logreg_gradient(X, y, w, t[d], C, gw, gb);
    g.assign(gw.begin(), gw.end());
    g.push_back(gb);
  };

  const auto& k = kernels::ops();
  // Ridge block plus C * sum_i sigma'(m_i) x~ x~^T over augmented rows;
  // PSD by construction (the b diagonal entry carries no ridge).
  auto eval_h = [&](const std::vector<double>& t, std::vector<double>& H) {
    H.assign(n * n, 0.0);
    for (size_t c = 0; c < d; ++c) H[c * n + c] = 1.0;
    for (size_t i = 0; i < X.size(); ++i) {
      double margin = k.dot(t.data(), X[i].data(), d) + t[d];
      double s = sigmoid(margin);
      double coef = C * s * (1.0 - s);
      if (coef <= 0.0) continue;
      for (size_t a = 0; a < n; ++a) {
        double xa = a < d ? X[i][a] : 1.0;
        for (size_t b = a; b < n; ++b) {
          double xb = b < d ? X[i][b] : 1.0;
          H[a * n + b] += coef * xa * xb;
        }
      }
    }
    for (size_t a = 1; a < n; ++a)
      for (size_t b = 0; b < a; ++b) H[a * n + b] = H[b * n + a];
  };

  // In-place Cholesky solve of A x = rhs; false when A is not positive
  // definite to working precision.
  auto chol_solve = [n](std::vector<double> A, std::vector<double> rhs,
                        std::vector<double>& x) {
    for (size_t c = 0; c < n; ++c) {
      for (size_t r = c; r < n; ++r) {
        double sum = A[r * n + c];
        for (size_t j = 0; j < c; ++j) sum -= A[r * n + j] * A[c * n + j];
        if (r == c) {
          if (!(sum > 0.0)) return false;
          A[c * n + c] = std::sqrt(sum);
        } else {
          A[r * n + c] = sum / A[c * n + c];
        }
      }
    }
    for (size_t r = 0; r < n; ++r) {
      double sum = rhs[r];
      for (size_t j = 0; j < r; ++j) sum -= A[r * n + j] * rhs[j];
      rhs[r] = sum / A[r * n + r];
    }
    x.assign(n, 0.0);
    for (size_t r = n; r-- > 0;) {
      double sum = rhs[r];
      for (size_t j = r + 1; j < n; ++j) sum -= A[j * n + r] * x[j];
      x[r] = sum / A[r * n + r];
    }
    return true;
  };

  auto inf_norm = [](const std::vector<double>& v) {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::fabs(x));
    return m;
  };

  constexpr double kTol = 1e-6;
  constexpr int kMaxIter = 200;
  std::vector<double> g(n), g_trial(n), H, dir, trial(n);
  double f = eval_f(theta);
  eval_g(theta, g);

  auto finish = [&] {
    LogisticModel m;
    m.w.assign(theta.begin(), theta.begin() + static_cast<ptrdiff_t>(d));
    m.b = theta[d];
    m.C = C;
    return m;
  };

  for (int iter = 0; iter < kMaxIter; ++iter) {
    double gnorm = inf_norm(g);
    if (gnorm <= kTol) return finish();

    eval_h(theta, H);
    bool advanced = false;
    double damp = 0.0;
    // Damping ladder: pure Newton first, then Levenberg-style ridge growth
    // whenever the factorization or the step acceptance fails.
    for (int attempt = 0; attempt < 60 && !advanced; ++attempt) {
      std::vector<double> A = H;
      if (damp > 0.0)
        for (size_t c = 0; c < n; ++c) A[c * n + c] += damp;
      if (chol_solve(A, g, dir)) {
        double gp = 0.0;  // directional derivative along -dir
        for (size_t c = 0; c < n; ++c) gp -= g[c] * dir[c];
        if (gp < 0.0) {
          double step = 1.0;
          for (int ls = 0; ls < 40 && !advanced; ++ls) {
            for (size_t c = 0; c < n; ++c) trial[c] = theta[c] - step * dir[c];
            double ft = eval_f(trial);
            // Strict decrease keeps Armijo honest once the predicted
            // reduction rounds away against f.
            if (ft < f && ft <= f + 1e-4 * step * gp) {
              theta = trial;
              f = ft;
              eval_g(theta, g);
              advanced = true;
              break;
            }
            // Plateau endgame: near the optimum the objective moves below
            // double resolution (the full Newton step may even read a few
            // ulps high), so accept on strict gradient progress instead.
            if (ft <= f + 1e-12 * std::fabs(f)) {
              eval_g(trial, g_trial);
              if (inf_norm(g_trial) < gnorm) {
                theta = trial;
                f = ft;
                g = g_trial;
                advanced = true;
                break;
              }
            }
            step *= 0.5;
          }
        }
      }
      if (!advanced) damp = damp == 0.0 ? 1e-8 : damp * 10.0;
    }
    if (!advanced) break;  // no progress at any damping level
  }

  if (inf_norm(g) <= kTol) return finish();
  throw Error("logistic regression did not converge");
}

namespace {

double binary_f1(const std::vector<int>& gold, const std::vector<int>& pred) {
  size_t tp = 0, fp = 0, fn = 0;
  for (size_t i = 0; i < gold.size(); ++i) {
    if (pred[i] == 1 && gold[i] == 1) ++tp;
    else if (pred[i] == 1) ++fp;
    else if (gold[i] == 1) ++fn;
  }
  double prec = tp + fp ? static_cast<double>(tp) / (tp + fp) : 0.0;
  double rec = tp + fn ? static_cast<double>(tp) / (tp + fn) : 0.0;
  return prec + rec > 0.0 ? 2.0 * prec * rec / (prec + rec) : 0.0;
}

// Assemble rows from selected candidate columns + handcrafted rows.
std::vector<std::vector<double>> assemble_rows(
    const std::vector<std::vector<double>>& cols,
    const std::vector<size_t>& which,
    const std::vector<std::vector<double>>& hand, size_t n_docs) {
  std::vector<std::vector<double>> rows(n_docs);
  for (size_t i = 0; i < n_docs; ++i) {
    auto& r = rows[i];
    r.reserve(which.size() + (hand.empty() ? 0 : hand[i].size()));
    for (size_t c : which) r.push_back(cols[c][i]);
    if (!hand.empty())
      r.insert(r.end(), hand[i].begin(), hand[i].end());
  }
  return rows;
}

// Trains on the train rows, returns validation F1 at threshold 0.5.
double interim_f1(const std::vector<std::vector<double>>& train_rows,
                  const std::vector<int>& train_y,
                  const std::vector<std::vector<double>>& val_rows,
                  const std::vector<int>& val_y, double C) {
  Scaler sc = Scaler::fit(train_rows);
  std::vector<std::vector<double>> tr = train_rows;
  sc.transform_all(tr);
  LogisticModel m = train_logreg(tr, train_y, C);
  const auto& k = kernels::ops();
  std::vector<int> pred(val_rows.size());
  for (size_t i = 0; i < val_rows.size(); ++i) {
    auto x = sc.transform(val_rows[i]);
    double margin = k.dot(m.w.data(), x.data(), x.size()) + m.b;
    pred[i] = margin >= 0.0 ? 1 : 0;
  }
  return binary_f1(val_y, pred);
}

}  // namespace

SelectionResult forward_select(const std::vector<FeatureExpr>& candidates,
                               const SelectionData& data, size_t max_k,
                               double epsilon, double C, size_t jobs) {
  if (candidates.empty()) throw Error("no candidate features");
  if (candidates.size() != data.train_cols.size() ||
      candidates.size() != data.val_cols.size())
    throw Error("candidate/column count mismatch");
  size_t n_train = data.train_y.size();
  size_t n_val = data.val_y.size();
  for (const auto& c : data.train_cols)
    if (c.size() != n_train) throw Error("train column length mismatch");
  for (const auto& c : data.val_cols)
    if (c.size() != n_val) throw Error("val column length mismatch");
  if (!data.train_hand.empty() && data.train_hand.size() != n_train)
    throw Error("handcrafted train row count mismatch");
  if (!data.val_hand.empty() && data.val_hand.size() != n_val)
    throw Error("handcrafted val row count mismatch");

  SelectionResult res;
  if (max_k == 0) return res;

  // Usable candidates: finite everywhere on train and val.
  std::vector<char> usable(candidates.size(), 1);
  size_t n_usable = 0;
  for (size_t c = 0; c < candidates.size(); ++c) {
    for (double v : data.train_cols[c])
      if (!std::isfinite(v)) usable[c] = 0;
    for (double v : data.val_cols[c])
      if (!std::isfinite(v)) usable[c] = 0;
    n_usable += usable[c];
  }
  if (n_usable == 0)
    throw Error("every candidate feature evaluated non-finite");

  // Tie order: lexicographic by canonical string.
  std::vector<size_t> order(candidates.size());
  std::iota(order.begin(), order.end(), size_t{0});
  std::vector<std::string> names(candidates.size());
  for (size_t c = 0; c < candidates.size(); ++c)
    names[c] = format_feature(candidates[c]);
  std::sort(order.begin(), order.end(),
            [&](size_t a, size_t b) { return names[a] < names[b]; });

  std::vector<char> taken(candidates.size(), 0);
  double prev_f1 = 0.0;
  while (res.selected.size() < max_k) {
    std::vector<double> f1s(candidates.size(), -1.0);
    parallel_for(candidates.size(), jobs, [&](size_t c) {
      if (!usable[c] || taken[c]) return;
      std::vector<size_t> which = res.selected;
      which.push_back(c);
      auto tr = assemble_rows(data.train_cols, which, data.train_hand, n_train);
      auto va = assemble_rows(data.val_cols, which, data.val_hand, n_val);
      f1s[c] = interim_f1(tr, data.train_y, va, data.val_y, C);
    });
    size_t best = candidates.size();
    double best_f1 = -1.0;
    for (size_t c : order) {
      if (f1s[c] > best_f1) {
        best_f1 = f1s[c];
        best = c;
      }
    }
    if (best == candidates.size() || best_f1 - prev_f1 < epsilon) break;
    taken[best] = 1;
    res.selected.push_back(best);
    res.val_f1.push_back(best_f1);
    prev_f1 = best_f1;
  }
  return res;
}

std::vector<std::string> DetectorArtifact::columns() const {
  std::vector<std::string> out;
  out.reserve(selected.size() +
              (use_handcrafted ? HandcraftedFeatures::kCount : 0));
  for (const auto& e : selected) out.push_back(format_feature(e));
  if (use_handcrafted)
    for (size_t i = 0; i < HandcraftedFeatures::kCount; ++i)
      out.push_back(HandcraftedFeatures::name(i));
  return out;
}

namespace {

std::vector<std::string> provider_tokens(
    const std::vector<ProviderSpec>& specs) {
  std::vector<std::string> toks;
  toks.reserve(specs.size());
  for (const auto& s : specs) toks.push_back(provider_token(s.name));
  return toks;
}

void resolve_roles(const std::vector<std::string>& tokens, std::string& strong,
                   std::string& weak) {
  if (strong.empty()) strong = tokens.back();
  if (weak.empty()) weak = tokens.front();
  for (const auto& role : {strong, weak})
    if (std::find(tokens.begin(), tokens.end(), role) == tokens.end())
      throw Error("handcrafted role provider '" + role +
                  "' is not a configured provider");
}

}  // namespace

DetectorArtifact fit_detector(const Dataset& ds, const FitConfig& cfg) {
  if (cfg.providers.providers.empty()) throw Error("no providers configured");
  if (!(cfg.threshold >= 0.0 && cfg.threshold <= 1.0))
    throw Error("threshold must be in [0,1]");
  auto tokens = provider_tokens(cfg.providers.providers);
  std::string strong = cfg.strong, weak = cfg.weak;
  if (cfg.use_handcrafted) resolve_roles(tokens, strong, weak);
  if (cfg.max_k == 0 && !cfg.use_handcrafted)
    throw Error("no usable features: max_k is 0 and handcrafted features are "
                "disabled");

  auto train_docs = ds.docs_in(Split::train);
  auto val_docs = ds.docs_in(Split::val);
  auto check_docs = [](const std::vector<const Document*>& docs,
                       const char* split) {
    bool pos = false, neg = false;
    for (const auto* d : docs) {
      if (d->label == Label::unlabeled)
        throw Error(std::string("unlabeled document '") + d->id + "' in " +
                    split + " split");
      (d->label == Label::ai ? pos : neg) = true;
    }
    if (!pos || !neg)
      throw Error(std::string(split) + " split needs both classes");
  };
  check_docs(train_docs, "train");
  check_docs(val_docs, "val");

  ProviderSet ps(cfg.providers);

  // One probability map + handcrafted row per document, train then val.
  size_t n_train = train_docs.size(), n_val = val_docs.size();
  std::vector<const Document*> all_docs = train_docs;
  all_docs.insert(all_docs.end(), val_docs.begin(), val_docs.end());
  std::vector<VectorMap> maps(all_docs.size());
  std::vector<std::vector<double>> hand(all_docs.size());
  for (size_t i = 0; i < all_docs.size(); ++i) {
    const Document* d = all_docs[i];
    maps[i] = vector_map(ps.score_all(d->id, d->text));
    if (cfg.use_handcrafted) {
      auto ts = ps.canonical_tokens(d->text);
      auto lens = word_token_lengths(d->text, ts);
      auto h = handcrafted(maps[i], lens, strong, weak);
      auto vals = h.values();
      for (double v : vals)
        if (!std::isfinite(v))
          throw Error("handcrafted features non-finite for document '" +
                      d->id + "'");
      hand[i].assign(vals.begin(), vals.end());
    }
  }

  auto candidates = enumerate_features(tokens, cfg.depth);

  SelectionData data;
  data.train_cols.resize(candidates.size());
  data.val_cols.resize(candidates.size());
  parallel_for(candidates.size(), cfg.jobs, [&](size_t c) {
    auto& tr = data.train_cols[c];
    auto& va = data.val_cols[c];
    tr.resize(n_train);
    va.resize(n_val);
    for (size_t i = 0; i < n_train; ++i)
      tr[i] = evaluate_feature(candidates[c], maps[i]);
    for (size_t i = 0; i < n_val; ++i)
      va[i] = evaluate_feature(candidates[c], maps[n_train + i]);
  });
  data.train_y.resize(n_train);
  data.val_y.resize(n_val);
  for (size_t i = 0; i < n_train; ++i)
    data.train_y[i] = train_docs[i]->label == Label::ai ? 1 : 0;
  for (size_t i = 0; i < n_val; ++i)
    data.val_y[i] = val_docs[i]->label == Label::ai ? 1 : 0;
  if (cfg.use_handcrafted) {
    data.train_hand.assign(hand.begin(), hand.begin() + static_cast<ptrdiff_t>(n_train));
    data.val_hand.assign(hand.begin() + static_cast<ptrdiff_t>(n_train), hand.end());
  }

  std::vector<size_t> picked;
  if (cfg.random_features) {
    std::vector<size_t> pool;
    for (size_t c = 0; c < candidates.size(); ++c) {
      bool ok = true;
      for (double v : data.train_cols[c]) ok = ok && std::isfinite(v);
      for (double v : data.val_cols[c]) ok = ok && std::isfinite(v);
      if (ok) pool.push_back(c);
    }
    if (pool.empty() && cfg.max_k > 0)
      throw Error("every candidate feature evaluated non-finite");
    std::mt19937_64 rng(*cfg.random_features);
    size_t k = std::min(cfg.max_k, pool.size());
    for (size_t i = 0; i < k; ++i) {
      size_t j = i + bounded_rand(rng, pool.size() - i);
      std::swap(pool[i], pool[j]);
      picked.push_back(pool[i]);
    }
  } else {
    auto sel = forward_select(candidates, data, cfg.max_k, cfg.epsilon, cfg.C,
                              cfg.jobs);
    picked = sel.selected;
  }
  if (picked.empty() && !cfg.use_handcrafted)
    throw Error("no usable features: nothing selected and handcrafted "
                "features are disabled");

  auto train_rows = assemble_rows(data.train_cols, picked, data.train_hand,
                                  n_train);
  DetectorArtifact a;
  a.providers = cfg.providers.providers;
  a.tokenizer = cfg.providers.tokenizer;
  for (size_t c : picked) a.selected.push_back(candidates[c]);
  a.use_handcrafted = cfg.use_handcrafted;
  a.strong = cfg.use_handcrafted ? strong : "";
  a.weak = cfg.use_handcrafted ? weak : "";
  a.scaler = Scaler::fit(train_rows);
  a.scaler.transform_all(train_rows);
  a.model = train_logreg(train_rows, data.train_y, cfg.C);
  a.threshold = cfg.threshold;
  return a;
}

std::vector<double> doc_features(const DetectorArtifact& a,
                                 const ProviderSet& ps,
                                 const std::string& doc_id,
                                 const std::string& text) {
  auto m = vector_map(ps.score_all(doc_id, text));
  std::vector<double> row;
  row.reserve(a.selected.size() +
              (a.use_handcrafted ? HandcraftedFeatures::kCount : 0));
  for (const auto& e : a.selected) {
    double v = evaluate_feature(e, m);
    if (!std::isfinite(v))
      throw Error("feature " + format_feature(e) +
                  " evaluated non-finite for document '" + doc_id + "'");
    row.push_back(v);
  }
  if (a.use_handcrafted) {
    auto ts = ps.canonical_tokens(text);
    auto lens = word_token_lengths(text, ts);
    auto h = handcrafted(m, lens, a.strong, a.weak);
    auto vals = h.values();
    row.insert(row.end(), vals.begin(), vals.end());
  }
  return row;
}

Classification classify(const DetectorArtifact& a, const ProviderSet& ps,
                        const std::string& doc_id, const std::string& text) {
  auto x = a.scaler.transform(doc_features(a, ps, doc_id, text));
  const auto& k = kernels::ops();
  double margin = k.dot(a.model.w.data(), x.data(), x.size()) + a.model.b;
  Classification out;
  out.score = sigmoid(margin);
  out.label = out.score >= a.threshold ? Label::ai : Label::human;
  return out;
}

namespace {

constexpr int kArtifactVersion = 1;

ordered_json doubles_to_json(const std::vector<double>& v) {
  ordered_json arr = ordered_json::array();
  for (double x : v) arr.push_back(format_double(x));
  return arr;
}

std::vector<double> doubles_from_json(const json& arr, const char* what) {
  if (!arr.is_array()) throw Error(std::string(what) + " must be an array");
  std::vector<double> out;
  out.reserve(arr.size());
  for (const auto& x : arr) out.push_back(parse_double(x.get<std::string>()));
  return out;
}

}  // namespace

void save_artifact(const DetectorArtifact& a, const std::string& path) {
  ordered_json j;
  j["format"] = "specter-detector";
  j["version"] = kArtifactVersion;
  ordered_json provs = ordered_json::array();
  for (const auto& p : a.providers) {
    ordered_json item;
    item["name"] = p.name;
    item["model_path"] = p.model_path;
    provs.push_back(std::move(item));
  }
  j["providers"] = std::move(provs);
  j["tokenizer"] = a.tokenizer;
  ordered_json feats = ordered_json::array();
  for (const auto& e : a.selected) feats.push_back(format_feature(e));
  j["features"] = std::move(feats);
  j["handcrafted"] = a.use_handcrafted;
  j["strong"] = a.strong;
  j["weak"] = a.weak;
  j["threshold"] = format_double(a.threshold);
  j["scaler"] = {{"mean", doubles_to_json(a.scaler.mean)},
                 {"stddev", doubles_to_json(a.scaler.stddev)}};
  j["model"] = {{"w", doubles_to_json(a.model.w)},
                {"b", format_double(a.model.b)},
                {"C", format_double(a.model.C)}};
  write_file_atomic(path, j.dump(2) + "\n");
}

DetectorArtifact load_artifact(const std::string& path) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw Error(path + ": not a valid detector artifact: " + e.what());
  }
  try {
    static const std::vector<std::string> kKnown = {
        "format", "version", "providers", "tokenizer", "features",
        "handcrafted", "strong", "weak", "threshold", "scaler", "model"};
    for (const auto& [key, _] : j.items())
      if (std::find(kKnown.begin(), kKnown.end(), key) == kKnown.end())
        throw Error(path + ": unknown artifact key '" + key + "'");
    if (j.at("format").get<std::string>() != "specter-detector")
      throw Error(path + ": not a detector artifact");
    if (j.at("version").get<int>() != kArtifactVersion)
      throw Error(path + ": unsupported artifact version");

    DetectorArtifact a;
    for (const auto& p : j.at("providers")) {
      ProviderSpec spec;
      spec.name = p.at("name").get<std::string>();
      parse_provider_name(spec.name);
      spec.model_path = p.at("model_path").get<std::string>();
      a.providers.push_back(std::move(spec));
    }
    if (a.providers.empty()) throw Error(path + ": artifact has no providers");
    a.tokenizer = j.at("tokenizer").get<std::string>();
    auto tokens = provider_tokens(a.providers);
    for (const auto& f : j.at("features"))
      a.selected.push_back(parse_feature(f.get<std::string>(), &tokens));
    a.use_handcrafted = j.at("handcrafted").get<bool>();
    a.strong = j.at("strong").get<std::string>();
    a.weak = j.at("weak").get<std::string>();
    if (a.use_handcrafted) resolve_roles(tokens, a.strong, a.weak);
    a.threshold = parse_double(j.at("threshold").get<std::string>());
    if (!(a.threshold >= 0.0 && a.threshold <= 1.0))
      throw Error(path + ": threshold out of range");
    a.scaler.mean = doubles_from_json(j.at("scaler").at("mean"), "scaler.mean");
    a.scaler.stddev =
        doubles_from_json(j.at("scaler").at("stddev"), "scaler.stddev");
    a.model.w = doubles_from_json(j.at("model").at("w"), "model.w");
    a.model.b = parse_double(j.at("model").at("b").get<std::string>());
    a.model.C = parse_double(j.at("model").at("C").get<std::string>());
    if (!(a.model.C > 0.0)) throw Error(path + ": C must be positive");

    size_t cols = a.columns().size();
    if (a.scaler.mean.size() != cols || a.scaler.stddev.size() != cols ||
        a.model.w.size() != cols)
      throw Error(path + ": column count mismatch between features, scaler, "
                         "and model");
    for (double s : a.scaler.stddev)
      if (!(s > 0.0)) throw Error(path + ": scaler stddev must be positive");
    return a;
  } catch (const json::exception& e) {
    throw Error(path + ": malformed detector artifact: " + e.what());
  }
}

std::vector<AblationVariant> ablation_variants(const FitConfig& base,
                                               uint64_t seed) {
  std::vector<AblationVariant> out;

  {
    FitConfig c = base;
    c.max_k = 0;
    c.use_handcrafted = true;
    out.push_back({"handcrafted_only", std::move(c)});
  }
  for (int depth = 1; depth <= 4; ++depth) {
    FitConfig c = base;
    c.depth = depth;
    out.push_back({"depth_" + std::to_string(depth), std::move(c)});
  }

  // Provider subsets: drop the strongest (last) neural provider, then all.
  std::vector<size_t> neural;
  for (size_t i = 0; i < base.providers.providers.size(); ++i)
    if (parse_provider_name(base.providers.providers[i].name) ==
        ProviderKind::neural)
      neural.push_back(i);
  if (!neural.empty() && base.providers.providers.size() > 1) {
    FitConfig c = base;
    c.providers.providers.erase(
        c.providers.providers.begin() + static_cast<ptrdiff_t>(neural.back()));
    c.strong.clear();
    c.weak.clear();
    out.push_back({"drop_strongest_neural", std::move(c)});
  }
  if (!neural.empty() && neural.size() < base.providers.providers.size()) {
    FitConfig c = base;
    for (size_t j = neural.size(); j-- > 0;)
      c.providers.providers.erase(
          c.providers.providers.begin() + static_cast<ptrdiff_t>(neural[j]));
    c.strong.clear();
    c.weak.clear();
    out.push_back({"no_neural", std::move(c)});
  }

  {
    FitConfig c = base;
    c.use_handcrafted = false;
    out.push_back({"no_handcrafted", std::move(c)});
  }
  {
    FitConfig c = base;
    c.random_features = seed;
    out.push_back({"random_features", std::move(c)});
  }
  return out;
}

}  // namespace specter
