#pragma once

// Probability providers: the local n-gram models plus remote neural scorers
// reached over an OpenAI-style completions endpoint.  A ProviderSet presents
// them uniformly: every provider yields one probability per token of a
// shared, canonical tokenization of the document, so downstream vector
// features can combine providers elementwise.
//
// Canonical tokenization: the first neural provider's tokens when one is
// configured (tokenizer="auto"), else the reference tokenizer.  Additional
// neural providers must agree token-for-token or scoring fails with an
// alignment error.

#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "specter/common.hpp"
#include "specter/corpus.hpp"
#include "specter/ngram.hpp"

namespace specter {

enum class ProviderKind { unigram, trigram, neural };

// "unigram" | "trigram" | "neural:<alias>"; throws on anything else
ProviderKind parse_provider_name(const std::string& name);

// short token used in feature strings: "unigram", "trigram", or the alias
std::string provider_token(const std::string& name);

struct ProbabilityVector {
  std::string provider;  // full provider name
  std::string doc_id;
  std::vector<double> probs;  // linear token probabilities, each in (0, 1]

  size_t size() const { return probs.size(); }
};

// exp(-mean(ln p)); empty vector is an error
double perplexity(const ProbabilityVector& pv);

struct ProviderSpec {
  std::string name;        // validated by parse_provider_name
  std::string model_path;  // n-gram models only
};

struct ProviderSetConfig {
  std::vector<ProviderSpec> providers;
  std::string cache_dir;       // "" disables the response cache
  std::string api_base;        // e.g. http://127.0.0.1:8089/v1
  std::string api_key;
  double requests_per_second = 1.0;
  int max_attempts = 5;
  int backoff_initial_ms = 100;
  std::string tokenizer = "auto";  // "auto" | "reference"
};

// Median of the linear probabilities at positions 1.. (the endpoint reports
// no logprob for the first token); 0.5 when there is nothing to take a
// median over.  Exposed for tests.
double first_token_fill(const std::vector<double>& rest_linear);

// Content key for the response cache: provider alias + document text.
uint64_t cache_key(const std::string& alias, const std::string& text);

struct NeuralResponse {
  std::vector<std::string> tokens;
  std::vector<double> logp;  // first entry already filled by the median rule
};

class NeuralClient {
 public:
  NeuralClient(std::string alias, const ProviderSetConfig& cfg);

  // cache -> HTTP with retry/backoff -> cache fill
  NeuralResponse fetch(const std::string& text);

 private:
  NeuralResponse fetch_http(const std::string& text);
  std::optional<NeuralResponse> cache_get(const std::string& text) const;
  void cache_put(const std::string& text, const NeuralResponse& r) const;
  void rate_limit_wait();

  std::string alias_;
  std::string cache_subdir_;
  std::string base_host_;  // scheme://host[:port]
  std::string base_path_;  // path prefix of api_base
  std::string api_key_;
  std::string cache_dir_;
  double min_interval_ms_ = 0.0;
  int max_attempts_;
  int backoff_initial_ms_;
  std::mutex mu_;
  double last_request_ms_ = -1.0;
  // per-process memo so tokenizing and scoring one document costs one call
  std::unordered_map<uint64_t, NeuralResponse> memo_;
};

class ProviderSet {
 public:
  explicit ProviderSet(ProviderSetConfig cfg);

  const ProviderSetConfig& config() const { return cfg_; }
  size_t size() const { return cfg_.providers.size(); }
  std::vector<std::string> names() const;

  // canonical token sequence for a document text
  TokenSequence canonical_tokens(const std::string& text) const;

  // probability vector of provider i over the canonical tokens
  ProbabilityVector score(size_t i, const std::string& doc_id,
                          const std::string& text) const;

  // all providers over one shared tokenization
  std::vector<ProbabilityVector> score_all(const std::string& doc_id,
                                           const std::string& text) const;

  const UnigramModel* unigram_model(size_t i) const;
  const TrigramModel* trigram_model(size_t i) const;

 private:
  struct Entry {
    ProviderKind kind;
    std::shared_ptr<UnigramModel> unigram;
    std::shared_ptr<TrigramModel> trigram;
    std::shared_ptr<NeuralClient> neural;  // shared: fetch() locks internally
  };

  const Entry& entry(size_t i) const;
  NeuralResponse neural_fetch(size_t i, const std::string& text) const;
  TokenSequence align_neural(const std::string& text,
                             const std::vector<std::string>& tokens) const;

  ProviderSetConfig cfg_;
  std::vector<Entry> entries_;
  int first_neural_ = -1;
};

}  // namespace specter
