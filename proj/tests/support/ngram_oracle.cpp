#include "support/ngram_oracle.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace specter::test {

namespace {

using Pair = std::pair<Sym, Sym>;

// Expand one document into its padded symbol stream: two begin sentinels
// followed by the tokens.  Predictions only ever target real tokens.
std::vector<Sym> padded(const std::vector<std::string>& doc) {
  std::vector<Sym> out;
  out.push_back(Sym::Bos());
  out.push_back(Sym::Bos());
  for (const auto& t : doc) out.push_back(Sym::Word(t));
  return out;
}

}  // namespace

NgramOracle::NgramOracle(std::vector<std::vector<std::string>> docs,
                         double delta, double lambda_u)
    : docs_(std::move(docs)), delta_(delta), lambda_u_(lambda_u) {}

std::vector<std::string> NgramOracle::vocab_words() const {
  std::set<std::string> words;
  for (const auto& d : docs_)
    for (const auto& t : d) words.insert(t);
  return {words.begin(), words.end()};
}

size_t NgramOracle::vocab_size() const { return vocab_words().size() + 2; }

double NgramOracle::prob_unigram(const Sym& w, size_t extra_types) const {
  // distinct predecessors of w, and distinct bigram pairs overall
  std::set<Sym> left_of_w;
  std::set<Pair> all_pairs;
  for (const auto& d : docs_) {
    auto s = padded(d);
    for (size_t i = 2; i < s.size(); ++i) {  // predict positions only
      all_pairs.insert({s[i - 1], s[i]});
      if (s[i] == w) left_of_w.insert(s[i - 1]);
    }
  }
  double cc = static_cast<double>(left_of_w.size());
  double total = static_cast<double>(all_pairs.size());
  double floor_n = static_cast<double>(vocab_size() + extra_types);
  return (1.0 - lambda_u_) * cc / total + lambda_u_ / floor_n;
}

double NgramOracle::prob_trigram(const Sym& u, const Sym& v, const Sym& w,
                                 size_t extra_types) const {
  int64_t c_uvw = 0;       // c(u v w)
  int64_t c_uv_dot = 0;    // c(u v .)
  std::set<Sym> uv_types;  // {w' : c(u v w') > 0}
  std::set<Sym> left_vw;   // {u' : c(u' v w) > 0}
  std::set<Pair> around_v; // {(u', w') : c(u' v w') > 0}
  std::set<Sym> right_v;   // {w' : N1+(. v w') > 0}
  for (const auto& d : docs_) {
    auto s = padded(d);
    for (size_t i = 2; i < s.size(); ++i) {
      const Sym& a = s[i - 2];
      const Sym& b = s[i - 1];
      const Sym& c = s[i];
      if (a == u && b == v) {
        ++c_uv_dot;
        uv_types.insert(c);
        if (c == w) ++c_uvw;
      }
      if (b == v) {
        around_v.insert({a, c});
        right_v.insert(c);
        if (c == w) left_vw.insert(a);
      }
    }
  }

  double p_uni = prob_unigram(w, extra_types);

  double p_bi = p_uni;
  double bv = static_cast<double>(around_v.size());
  if (bv > 0.0) {
    double n1vw = static_cast<double>(left_vw.size());
    double kv = static_cast<double>(right_v.size());
    p_bi = std::max(n1vw - delta_, 0.0) / bv + delta_ * kv / bv * p_uni;
  }

  double t = static_cast<double>(c_uv_dot);
  if (t > 0.0) {
    double cuvw = static_cast<double>(c_uvw);
    double n1uv = static_cast<double>(uv_types.size());
    return std::max(cuvw - delta_, 0.0) / t + delta_ * n1uv / t * p_bi;
  }
  return p_bi;
}

}  // namespace specter::test
