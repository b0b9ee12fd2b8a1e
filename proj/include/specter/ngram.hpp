#pragma once

// Count-based language models: a continuation-count ("fertility") unigram
// and an absolute-discount trigram that backs off through a continuation
// bigram to the fertility unigram.
//
// Counting conventions:
//  * every document is padded with two leading <s> sentinels; sentinels are
//    context only and are never predicted (no n-gram ends in a sentinel)
//  * fertility counts come from distinct (prev, w) bigram pairs; the first
//    token of a document pairs with <s>
//  * vocabulary ids 0 and 1 are reserved for <s> and </s>; both receive the
//    uniform floor when distributions are evaluated
//
// Out-of-vocabulary handling at scoring time: the uniform floor is widened
// to lambda_u / (|V| + #new), where #new is the number of distinct unknown
// token types in the sequence being scored, so each conditional distribution
// still sums to 1 over the extended vocabulary.  Model-level queries take
// extra_types explicitly (0 for the closed vocabulary).

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "specter/common.hpp"
#include "specter/corpus.hpp"

namespace specter {

class Vocabulary {
 public:
  static constexpr uint32_t kBos = 0;  // <s>
  static constexpr uint32_t kEos = 1;  // </s>

  Vocabulary();

  uint32_t add(const std::string& token);  // existing id if already present
  std::optional<uint32_t> find(std::string_view token) const;
  const std::string& token(uint32_t id) const;
  size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }

 private:
  std::unordered_map<std::string, uint32_t> ids_;
  std::vector<std::string> tokens_;
};

// Distinct-left-context counts: cont[w] = |{v : (v,w) seen}|, total = sum.
struct FertilityTable {
  std::vector<int64_t> cont;
  int64_t total_types = 0;
};

class UnigramModel {
 public:
  // lambda_u in (0,1); corpus must contain at least 2 tokens in total
  static UnigramModel train(const std::vector<TokenSequence>& corpus,
                            double lambda_u);

  // P(w); extra_types widens the uniform floor for OOV-extended vocabularies
  double prob(std::optional<uint32_t> w, size_t extra_types) const;

  // natural-log probability per token, with the OOV floor extension applied
  std::vector<double> score(const TokenSequence& ts) const;

  void save(const std::string& path) const;
  static UnigramModel load(const std::string& path);

  const Vocabulary& vocab() const { return vocab_; }
  double lambda_u() const { return lambda_u_; }
  const FertilityTable& fertility() const { return fert_; }

 private:
  Vocabulary vocab_;
  FertilityTable fert_;
  double lambda_u_ = 0.0;
};

class TrigramModel {
 public:
  // delta in (0,1), lambda_u in (0,1); corpus >= 2 tokens
  static TrigramModel train(const std::vector<TokenSequence>& corpus,
                            double delta, double lambda_u);

  // P(w | u, v).  A nullopt slot stands for an unknown token: unknown
  // contexts contribute zero counts (forcing back-off) and an unknown target
  // receives only the floor mass.
  double prob(std::optional<uint32_t> u, std::optional<uint32_t> v,
              std::optional<uint32_t> w, size_t extra_types) const;

  std::vector<double> score(const TokenSequence& ts) const;

  void save(const std::string& path) const;
  static TrigramModel load(const std::string& path);

  const Vocabulary& vocab() const { return vocab_; }
  double delta() const { return delta_; }
  double lambda_u() const { return lambda_u_; }

  // deterministic sampling support: distribution over the full vocabulary
  // for a given (possibly sentinel) context
  std::vector<double> distribution(uint32_t u, uint32_t v) const;

 private:
  void derive_tables();

  Vocabulary vocab_;
  FertilityTable fert_;
  double delta_ = 0.0;
  double lambda_u_ = 0.0;

  // primary counts (serialized); everything else is derived
  std::unordered_map<uint64_t, int64_t> trigram_;  // pack3(u,v,w) -> count

  // derived
  std::unordered_map<uint64_t, int64_t> ctx_total_;   // pack2(u,v) -> c(uv.)
  std::unordered_map<uint64_t, int64_t> ctx_types_;   // pack2(u,v) -> N1+(uv.)
  std::unordered_map<uint64_t, int64_t> cont_bigram_; // pack2(v,w) -> N1+(.vw)
  std::vector<int64_t> cont_total_;                   // v -> N1+(.v.)
  std::vector<int64_t> cont_types_;                   // v -> |{w : N1+(.vw)>0}|
};

// id packing helpers (ids are bounded to 21 bits at training time)
inline uint64_t pack2(uint32_t a, uint32_t b) {
  return (static_cast<uint64_t>(a) << 32) | b;
}
inline uint64_t pack3(uint32_t a, uint32_t b, uint32_t c) {
  return (static_cast<uint64_t>(a) << 42) | (static_cast<uint64_t>(b) << 21) | c;
}

// Count distinct token types in ts that are missing from vocab.
size_t count_new_types(const Vocabulary& vocab, const TokenSequence& ts);

}  // namespace specter
