#pragma once

// Structured feature space over per-token probability vectors: elementwise
// vector functions, scalar reductions, the depth-limited enumerator, the
// string grammar, and the seven fixed handcrafted features.

#include <array>
#include <string>
#include <unordered_map>
#include <vector>

#include "specter/common.hpp"
#include "specter/providers.hpp"

namespace specter {

enum class VectorFn { add, sub, mul, div, gt, lt };
enum class ScalarFn { max, min, avg, avg_top25, len, l2, var };

inline constexpr std::array<VectorFn, 6> kVectorFns = {
    VectorFn::add, VectorFn::sub, VectorFn::mul,
    VectorFn::div, VectorFn::gt,  VectorFn::lt};
inline constexpr std::array<ScalarFn, 7> kScalarFns = {
    ScalarFn::max, ScalarFn::min, ScalarFn::avg, ScalarFn::avg_top25,
    ScalarFn::len, ScalarFn::l2,  ScalarFn::var};

const char* vector_fn_symbol(VectorFn f);  // "+", "-", "*", "/", ">", "<"
const char* scalar_fn_name(ScalarFn f);    // "max", ..., "avg_top25", "l2"
bool vector_fn_commutative(VectorFn f);    // add and mul

// Denominator clamp used by '/' everywhere features are evaluated.
inline constexpr double kDivEps = 1e-10;

struct FeatureStep {
  VectorFn fn;
  std::string operand;  // provider token, e.g. "ada"
  bool operator==(const FeatureStep&) const = default;
};

// base (op operand)* folded strictly left to right, then one scalar fn.
struct FeatureExpr {
  std::string base;  // provider token
  std::vector<FeatureStep> steps;
  ScalarFn scalar = ScalarFn::avg;

  size_t depth() const { return steps.size() + 1; }  // vectors touched
  bool operator==(const FeatureExpr&) const = default;
};

// Canonical form: scalar "(" base "_probs" (" " op " " operand "_probs")* ")".
std::string format_feature(const FeatureExpr& e);

// Inverse of format_feature; whitespace between elements is flexible.  Errors
// carry the 0-based column of the offending character.  When `known` is
// non-null every provider token must be a member.
FeatureExpr parse_feature(const std::string& s,
                          const std::vector<std::string>* known = nullptr);

// Elementwise per the table above; gt/lt emit 1.0/0.0 indicators; div clamps
// denominators with |d| < kDivEps.  Length mismatch is an error.
std::vector<double> apply_vector_fn(VectorFn f, const std::vector<double>& p1,
                                    const std::vector<double>& p2);

// Reductions; the empty vector is an error.  avg_top25 averages the
// min(25, n) smallest entries, var is the population variance, l2 the
// Euclidean norm, len the element count.
double apply_scalar_fn(ScalarFn f, const std::vector<double>& p);

// Provider token -> per-token linear probabilities (or any derived values).
using VectorMap = std::unordered_map<std::string, std::vector<double>>;

// Flatten score_all() output into the map evaluate_feature consumes.
VectorMap vector_map(const std::vector<ProbabilityVector>& pvs);

// Fold the steps over the base vector, reduce with the scalar fn.  A missing
// provider is an error; a non-finite value comes back as quiet NaN so callers
// can drop the candidate rather than crash.
double evaluate_feature(const FeatureExpr& e, const VectorMap& vectors);

// All features over the given provider tokens up to max_depth vectors per
// expression.  Deduplicated, sorted by canonical string.  Pruning: operand
// providers are pairwise distinct within an expression, no vector fn repeats,
// commutative fns and '>' take unordered provider pairs at the first step
// (provider-list order), and '<' is never emitted (p < q mirrors q > p).
std::vector<FeatureExpr> enumerate_features(
    const std::vector<std::string>& providers, int max_depth);

struct HandcraftedFeatures {
  double outlier_count = 0;
  double avg_top25_largest = 0;
  double avg_rank25_50_largest = 0;
  double davinci_minus_ada_top25 = 0;
  double davinci_minus_ada_25_50 = 0;
  double avg_len_25_longest_words = 0;
  double avg_len_25_50_longest_words = 0;

  static constexpr size_t kCount = 7;
  std::array<double, kCount> values() const;
  static const char* name(size_t i);  // fixed order, matches values()
};

// The seven fixed features.  `strong` is the davinci-role provider token and
// `weak` the ada-role one; both must be in the map.  outlier_count counts
// tokens whose surprisal -log2 p exceeds 10 bits on the strong vector; the
// rank features average descending-sorted windows [0,25) and [25,50),
// truncated when fewer values exist (empty window -> 0).
HandcraftedFeatures handcrafted(const VectorMap& vectors,
                                const std::vector<int>& word_token_lengths,
                                const std::string& strong,
                                const std::string& weak);

}  // namespace specter
