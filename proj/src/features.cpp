#include "specter/features.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "specter/kernels.hpp"

namespace specter {

const char* vector_fn_symbol(VectorFn f) {
  switch (f) {
    case VectorFn::add: return "+";
    case VectorFn::sub: return "-";
    case VectorFn::mul: return "*";
    case VectorFn::div: return "/";
    case VectorFn::gt: return ">";
    case VectorFn::lt: return "<";
  }
  return "?";
}

const char* scalar_fn_name(ScalarFn f) {
  switch (f) {
    case ScalarFn::max: return "max";
    case ScalarFn::min: return "min";
    case ScalarFn::avg: return "avg";
    case ScalarFn::avg_top25: return "avg_top25";
    case ScalarFn::len: return "len";
    case ScalarFn::l2: return "l2";
    case ScalarFn::var: return "var";
  }
  return "?";
}

bool vector_fn_commutative(VectorFn f) {
  return f == VectorFn::add || f == VectorFn::mul;
}

std::string format_feature(const FeatureExpr& e) {
  std::string out = scalar_fn_name(e.scalar);
  out += '(';
  out += e.base;
  out += "_probs";
  for (const auto& s : e.steps) {
    out += ' ';
    out += vector_fn_symbol(s.fn);
    out += ' ';
    out += s.operand;
    out += "_probs";
  }
  out += ')';
  return out;
}

namespace {

constexpr const char* kProbsSuffix = "_probs";
constexpr size_t kProbsSuffixLen = 6;

[[noreturn]] void parse_error(const std::string& what, size_t col) {
  throw Error(what + " at column " + std::to_string(col));
}

bool ident_char(char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') ||
         (c >= '0' && c <= '9') || c == '_';
}

}  // namespace

FeatureExpr parse_feature(const std::string& s,
                          const std::vector<std::string>* known) {
  size_t i = 0;
  auto skip_ws = [&] {
    while (i < s.size() && (s[i] == ' ' || s[i] == '\t')) ++i;
  };

  skip_ws();
  size_t name_start = i;
  while (i < s.size() && ident_char(s[i])) ++i;
  std::string name = s.substr(name_start, i - name_start);
  FeatureExpr e;
  bool found = false;
  for (ScalarFn f : kScalarFns)
    if (name == scalar_fn_name(f)) {
      e.scalar = f;
      found = true;
    }
  if (!found)
    parse_error("unknown scalar function '" + name + "'", name_start);
  skip_ws();
  if (i >= s.size() || s[i] != '(') parse_error("expected '('", i);
  ++i;

  auto read_provider = [&]() -> std::string {
    skip_ws();
    size_t start = i;
    while (i < s.size() && ident_char(s[i])) ++i;
    std::string tok = s.substr(start, i - start);
    if (tok.size() <= kProbsSuffixLen ||
        tok.compare(tok.size() - kProbsSuffixLen, kProbsSuffixLen,
                    kProbsSuffix) != 0)
      parse_error("expected a provider reference ending in _probs", start);
    tok.resize(tok.size() - kProbsSuffixLen);
    if (known && std::find(known->begin(), known->end(), tok) == known->end())
      parse_error("unknown provider '" + tok + "'", start);
    return tok;
  };

  e.base = read_provider();
  for (;;) {
    skip_ws();
    if (i >= s.size()) parse_error("expected ')'", i);
    if (s[i] == ')') {
      ++i;
      break;
    }
    FeatureStep step;
    switch (s[i]) {
      case '+': step.fn = VectorFn::add; break;
      case '-': step.fn = VectorFn::sub; break;
      case '*': step.fn = VectorFn::mul; break;
      case '/': step.fn = VectorFn::div; break;
      case '>': step.fn = VectorFn::gt; break;
      case '<': step.fn = VectorFn::lt; break;
      default:
        parse_error(std::string("unknown operator '") + s[i] + "'", i);
    }
    ++i;
    step.operand = read_provider();
    e.steps.push_back(std::move(step));
  }
  skip_ws();
  if (i != s.size()) parse_error("trailing characters", i);
  return e;
}

std::vector<double> apply_vector_fn(VectorFn f, const std::vector<double>& p1,
                                    const std::vector<double>& p2) {
  if (p1.size() != p2.size())
    throw Error("vector length mismatch: " + std::to_string(p1.size()) +
                " vs " + std::to_string(p2.size()));
  std::vector<double> out(p1.size());
  const kernels::Ops& k = kernels::ops();
  switch (f) {
    case VectorFn::add: k.add(p1.data(), p2.data(), out.data(), out.size()); break;
    case VectorFn::sub: k.sub(p1.data(), p2.data(), out.data(), out.size()); break;
    case VectorFn::mul: k.mul(p1.data(), p2.data(), out.data(), out.size()); break;
    case VectorFn::div:
      k.div_clamped(p1.data(), p2.data(), out.data(), out.size(), kDivEps);
      break;
    case VectorFn::gt: k.greater(p1.data(), p2.data(), out.data(), out.size()); break;
    case VectorFn::lt: k.less(p1.data(), p2.data(), out.data(), out.size()); break;
  }
  return out;
}

double apply_scalar_fn(ScalarFn f, const std::vector<double>& p) {
  if (p.empty()) throw Error("scalar function over an empty vector");
  const kernels::Ops& k = kernels::ops();
  size_t n = p.size();
  switch (f) {
    case ScalarFn::max: return k.maximum(p.data(), n);
    case ScalarFn::min: return k.minimum(p.data(), n);
    case ScalarFn::avg: return k.sum(p.data(), n) / static_cast<double>(n);
    case ScalarFn::avg_top25: {
      size_t take = std::min<size_t>(25, n);
      std::vector<double> low(p);
      std::partial_sort(low.begin(), low.begin() + static_cast<ptrdiff_t>(take),
                        low.end());
      return k.sum(low.data(), take) / static_cast<double>(take);
    }
    case ScalarFn::len: return static_cast<double>(n);
    case ScalarFn::l2: return std::sqrt(k.sum_squares(p.data(), n));
    case ScalarFn::var: {
      double mean = k.sum(p.data(), n) / static_cast<double>(n);
      return k.sum_sq_dev(p.data(), n, mean) / static_cast<double>(n);
    }
  }
  throw Error("unreachable scalar fn");
}

VectorMap vector_map(const std::vector<ProbabilityVector>& pvs) {
  VectorMap out;
  for (const auto& pv : pvs) {
    auto [it, fresh] = out.emplace(provider_token(pv.provider), pv.probs);
    if (!fresh)
      throw Error("duplicate provider token '" + it->first + "'");
  }
  return out;
}

double evaluate_feature(const FeatureExpr& e, const VectorMap& vectors) {
  auto lookup = [&](const std::string& tok) -> const std::vector<double>& {
    auto it = vectors.find(tok);
    if (it == vectors.end())
      throw Error("no probability vector for provider '" + tok + "'");
    return it->second;
  };
  std::vector<double> acc = lookup(e.base);
  for (const auto& s : e.steps) acc = apply_vector_fn(s.fn, acc, lookup(s.operand));
  double v = apply_scalar_fn(e.scalar, acc);
  if (!std::isfinite(v)) return std::numeric_limits<double>::quiet_NaN();
  return v;
}

namespace {

// '<' mirrors '>' with swapped operands, so the search space skips it.
constexpr std::array<VectorFn, 5> kSearchFns = {
    VectorFn::add, VectorFn::sub, VectorFn::mul, VectorFn::div, VectorFn::gt};

struct Enumerator {
  const std::vector<std::string>& providers;
  int max_depth;
  std::vector<FeatureExpr> out;

  void emit_scalars(const FeatureExpr& shape) {
    for (ScalarFn f : kScalarFns) {
      FeatureExpr e = shape;
      e.scalar = f;
      out.push_back(std::move(e));
    }
  }

  // used_p / used_f: indices into providers / kSearchFns already consumed.
  void expand(FeatureExpr& shape, std::vector<size_t>& used_p,
              std::vector<size_t>& used_f) {
    emit_scalars(shape);
    if (static_cast<int>(shape.depth()) >= max_depth) return;
    bool first_step = shape.steps.empty();
    size_t base_idx = used_p.front();
    for (size_t fi = 0; fi < kSearchFns.size(); ++fi) {
      if (std::find(used_f.begin(), used_f.end(), fi) != used_f.end()) continue;
      VectorFn fn = kSearchFns[fi];
      // Unordered provider pairs for +, *, and > when both operands are raw
      // providers: the mirrored form is either identical or the complement.
      bool unordered = first_step && fn != VectorFn::sub && fn != VectorFn::div;
      for (size_t pi = 0; pi < providers.size(); ++pi) {
        if (std::find(used_p.begin(), used_p.end(), pi) != used_p.end()) continue;
        if (unordered && pi < base_idx) continue;
        shape.steps.push_back({fn, providers[pi]});
        used_p.push_back(pi);
        used_f.push_back(fi);
        expand(shape, used_p, used_f);
        used_f.pop_back();
        used_p.pop_back();
        shape.steps.pop_back();
      }
    }
  }
};

}  // namespace

std::vector<FeatureExpr> enumerate_features(
    const std::vector<std::string>& providers, int max_depth) {
  if (max_depth < 1) throw Error("max_depth must be at least 1");
  if (providers.empty()) throw Error("need at least one provider");
  for (size_t i = 0; i < providers.size(); ++i) {
    if (providers[i].empty()) throw Error("empty provider token");
    for (char c : providers[i])
      if (!ident_char(c))
        throw Error("provider token '" + providers[i] +
                    "' is not usable in feature strings");
    for (size_t j = i + 1; j < providers.size(); ++j)
      if (providers[i] == providers[j])
        throw Error("duplicate provider token '" + providers[i] + "'");
  }

  Enumerator en{providers, max_depth, {}};
  for (size_t pi = 0; pi < providers.size(); ++pi) {
    FeatureExpr shape;
    shape.base = providers[pi];
    std::vector<size_t> used_p{pi};
    std::vector<size_t> used_f;
    en.expand(shape, used_p, used_f);
  }

  std::sort(en.out.begin(), en.out.end(),
            [](const FeatureExpr& a, const FeatureExpr& b) {
              return format_feature(a) < format_feature(b);
            });
  en.out.erase(std::unique(en.out.begin(), en.out.end()), en.out.end());
  return en.out;
}

std::array<double, HandcraftedFeatures::kCount> HandcraftedFeatures::values()
    const {
  return {outlier_count,
          avg_top25_largest,
          avg_rank25_50_largest,
          davinci_minus_ada_top25,
          davinci_minus_ada_25_50,
          avg_len_25_longest_words,
          avg_len_25_50_longest_words};
}

const char* HandcraftedFeatures::name(size_t i) {
  static constexpr const char* kNames[kCount] = {
      "outlier_count",
      "avg_top25_largest",
      "avg_rank25_50_largest",
      "davinci_minus_ada_top25",
      "davinci_minus_ada_25_50",
      "avg_len_25_longest_words",
      "avg_len_25_50_longest_words"};
  return i < kCount ? kNames[i] : "?";
}

namespace {

// Mean of the descending-sorted slice [lo, hi); truncated, empty slice -> 0.
double window_mean_desc(std::vector<double> v, size_t lo, size_t hi) {
  if (v.size() < hi) hi = v.size();
  if (lo >= hi) return 0.0;
  std::partial_sort(v.begin(), v.begin() + static_cast<ptrdiff_t>(hi), v.end(),
                    std::greater<double>());
  double sum = 0.0;
  for (size_t i = lo; i < hi; ++i) sum += v[i];
  return sum / static_cast<double>(hi - lo);
}

}  // namespace

HandcraftedFeatures handcrafted(const VectorMap& vectors,
                                const std::vector<int>& word_token_lengths,
                                const std::string& strong,
                                const std::string& weak) {
  auto find = [&](const std::string& tok) -> const std::vector<double>& {
    auto it = vectors.find(tok);
    if (it == vectors.end())
      throw Error("handcrafted features need provider '" + tok + "'");
    return it->second;
  };
  const std::vector<double>& d = find(strong);
  const std::vector<double>& a = find(weak);

  HandcraftedFeatures h;
  for (double p : d)
    if (-std::log2(p) > 10.0) h.outlier_count += 1.0;
  h.avg_top25_largest = window_mean_desc(d, 0, 25);
  h.avg_rank25_50_largest = window_mean_desc(d, 25, 50);

  std::vector<double> diff = apply_vector_fn(VectorFn::sub, d, a);
  h.davinci_minus_ada_top25 = window_mean_desc(diff, 0, 25);
  h.davinci_minus_ada_25_50 = window_mean_desc(diff, 25, 50);

  std::vector<double> lens(word_token_lengths.begin(),
                           word_token_lengths.end());
  h.avg_len_25_longest_words = window_mean_desc(lens, 0, 25);
  h.avg_len_25_50_longest_words = window_mean_desc(lens, 25, 50);
  return h;
}

}  // namespace specter
