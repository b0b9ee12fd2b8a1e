#include "specter/providers.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <thread>
#include <unordered_map>
#include <unordered_set>

#include <httplib.h>
#include <json.hpp>

namespace fs = std::filesystem;
using nlohmann::json;
using ordered_json = nlohmann::ordered_json;

namespace specter {

ProviderKind parse_provider_name(const std::string& name) {
  if (name == "unigram") return ProviderKind::unigram;
  if (name == "trigram") return ProviderKind::trigram;
  if (name.rfind("neural:", 0) == 0) {
    if (name.size() == 7)
      throw Error("neural provider needs an alias, e.g. neural:ada");
    return ProviderKind::neural;
  }
  throw Error("unknown provider '" + name +
              "' (expected unigram, trigram, or neural:<alias>)");
}

std::string provider_token(const std::string& name) {
  ProviderKind kind = parse_provider_name(name);
  if (kind == ProviderKind::neural) return name.substr(7);
  return name;
}

namespace {

// Models and cached endpoint replies speak natural logs; the vector the rest
// of the pipeline sees holds linear probabilities.
std::vector<double> exp_all(const std::vector<double>& logp) {
  std::vector<double> out(logp.size());
  for (size_t i = 0; i < logp.size(); ++i) out[i] = std::exp(logp[i]);
  return out;
}

}  // namespace

double perplexity(const ProbabilityVector& pv) {
  if (pv.probs.empty()) throw Error("perplexity of an empty vector");
  double mean = 0.0;
  for (double p : pv.probs) mean += std::log(p);
  mean /= static_cast<double>(pv.probs.size());
  return std::exp(-mean);
}

double first_token_fill(const std::vector<double>& rest_linear) {
  if (rest_linear.empty()) return 0.5;
  std::vector<double> sorted = rest_linear;
  std::sort(sorted.begin(), sorted.end());
  size_t n = sorted.size();
  if (n % 2 == 1) return sorted[n / 2];
  return (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0;
}

uint64_t cache_key(const std::string& alias, const std::string& text) {
  return fnv1a64("model=" + alias + "\n" + text);
}

namespace {

std::string sanitize_component(const std::string& s) {
  std::string out;
  for (char c : s) {
    bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') ||
              (c >= '0' && c <= '9') || c == '.' || c == '_' || c == '-';
    out += ok ? c : '_';
  }
  return out.empty() ? std::string("_") : out;
}

// "http://host:port/prefix" -> {"http://host:port", "/prefix"}
std::pair<std::string, std::string> split_base_url(const std::string& base) {
  auto scheme_end = base.find("://");
  if (scheme_end == std::string::npos)
    throw Error("API base must include a scheme: '" + base + "'");
  auto path_start = base.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {base, ""};
  std::string host = base.substr(0, path_start);
  std::string path = base.substr(path_start);
  while (!path.empty() && path.back() == '/') path.pop_back();
  return {host, path};
}

double now_ms() {
  using namespace std::chrono;
  return duration<double, std::milli>(steady_clock::now().time_since_epoch())
      .count();
}

std::string body_excerpt(const std::string& body) {
  std::string t = body.substr(0, 200);
  for (char& c : t)
    if (c == '\n' || c == '\r') c = ' ';
  return t;
}

}  // namespace

NeuralClient::NeuralClient(std::string alias, const ProviderSetConfig& cfg)
    : alias_(std::move(alias)),
      cache_subdir_(sanitize_component(alias_)),
      api_key_(cfg.api_key),
      cache_dir_(cfg.cache_dir),
      max_attempts_(cfg.max_attempts),
      backoff_initial_ms_(cfg.backoff_initial_ms) {
  if (!cfg.api_base.empty())
    std::tie(base_host_, base_path_) = split_base_url(cfg.api_base);
  if (cfg.requests_per_second > 0.0)
    min_interval_ms_ = 1000.0 / cfg.requests_per_second;
  if (max_attempts_ < 1) max_attempts_ = 1;
}

std::optional<NeuralResponse> NeuralClient::cache_get(
    const std::string& text) const {
  if (cache_dir_.empty()) return std::nullopt;
  fs::path p = fs::path(cache_dir_) / cache_subdir_ /
               (to_hex(cache_key(alias_, text)) + ".json");
  if (!fs::exists(p)) return std::nullopt;
  json j;
  try {
    j = json::parse(read_file(p));
  } catch (const json::exception& e) {
    throw Error("corrupt cache entry " + p.string() + ": " + e.what());
  }
  NeuralResponse r;
  r.tokens = j.at("tokens").get<std::vector<std::string>>();
  for (const auto& s : j.at("logp"))
    r.logp.push_back(parse_double(s.get<std::string>()));
  if (r.tokens.size() != r.logp.size())
    throw Error("corrupt cache entry " + p.string() + ": length mismatch");
  return r;
}

void NeuralClient::cache_put(const std::string& text,
                             const NeuralResponse& r) const {
  if (cache_dir_.empty()) return;
  fs::path p = fs::path(cache_dir_) / cache_subdir_ /
               (to_hex(cache_key(alias_, text)) + ".json");
  ordered_json j;
  j["model"] = alias_;
  j["tokens"] = r.tokens;
  ordered_json lp = ordered_json::array();
  for (double v : r.logp) lp.push_back(format_double(v));
  j["logp"] = std::move(lp);
  write_file_atomic(p, j.dump() + "\n");
}

void NeuralClient::rate_limit_wait() {
  if (min_interval_ms_ <= 0.0) return;
  double now = now_ms();
  if (last_request_ms_ >= 0.0) {
    double wait = last_request_ms_ + min_interval_ms_ - now;
    if (wait > 0.0) {
      std::this_thread::sleep_for(std::chrono::duration<double, std::milli>(wait));
      now = now_ms();
    }
  }
  last_request_ms_ = now;
}

NeuralResponse NeuralClient::fetch_http(const std::string& text) {
  if (base_host_.empty())
    throw Error("provider 'neural:" + alias_ +
                "': no API base configured (set SPECTER_API_BASE or api_base)");
  ordered_json req;
  req["model"] = alias_;
  req["prompt"] = text;
  req["max_tokens"] = 0;
  req["echo"] = true;
  req["logprobs"] = 0;
  const std::string body = req.dump();
  const std::string path = base_path_ + "/completions";

  std::string last_error;
  for (int attempt = 0; attempt < max_attempts_; ++attempt) {
    if (attempt > 0) {
      auto delay = std::chrono::milliseconds(
          static_cast<int64_t>(backoff_initial_ms_) << (attempt - 1));
      std::this_thread::sleep_for(delay);
    }
    rate_limit_wait();
    httplib::Client client(base_host_);
    client.set_read_timeout(60, 0);
    client.set_connection_timeout(10, 0);
    httplib::Headers headers;
    if (!api_key_.empty())
      headers.emplace("Authorization", "Bearer " + api_key_);
    auto res = client.Post(path, headers, body, "application/json");
    if (!res) {
      last_error = "connection failed (" + httplib::to_string(res.error()) + ")";
      continue;
    }
    if (res->status == 429 || res->status >= 500) {
      last_error = "HTTP " + std::to_string(res->status);
      continue;
    }
    if (res->status < 200 || res->status >= 300)
      throw Error("provider 'neural:" + alias_ + "': HTTP " +
                  std::to_string(res->status) + ": " + body_excerpt(res->body));

    json j;
    try {
      j = json::parse(res->body);
    } catch (const json::exception& e) {
      throw Error("provider 'neural:" + alias_ +
                  "': malformed response JSON: " + std::string(e.what()));
    }
    try {
      const auto& lp = j.at("choices").at(0).at("logprobs");
      NeuralResponse r;
      r.tokens = lp.at("tokens").get<std::vector<std::string>>();
      const auto& raw = lp.at("token_logprobs");
      if (raw.size() != r.tokens.size())
        throw Error("token/logprob length mismatch");
      std::vector<double> rest_linear;
      for (size_t i = 1; i < raw.size(); ++i) {
        if (raw[i].is_null()) throw Error("null logprob after position 0");
        rest_linear.push_back(std::exp(raw[i].get<double>()));
      }
      r.logp.resize(r.tokens.size());
      for (size_t i = 1; i < raw.size(); ++i) r.logp[i] = raw[i].get<double>();
      if (!r.tokens.empty())
        r.logp[0] = std::log(first_token_fill(rest_linear));
      return r;
    } catch (const json::exception& e) {
      throw Error("provider 'neural:" + alias_ +
                  "': unexpected response shape: " + std::string(e.what()));
    }
  }
  throw Error("provider 'neural:" + alias_ + "': giving up after " +
              std::to_string(max_attempts_) + " attempts; last error: " +
              last_error);
}

NeuralResponse NeuralClient::fetch(const std::string& text) {
  std::lock_guard<std::mutex> lock(mu_);
  uint64_t key = cache_key(alias_, text);
  if (auto it = memo_.find(key); it != memo_.end()) return it->second;
  if (auto cached = cache_get(text)) {
    memo_.emplace(key, *cached);
    return *cached;
  }
  NeuralResponse r = fetch_http(text);
  cache_put(text, r);
  memo_.emplace(key, r);
  return r;
}

// ------------------------------------------------------------- ProviderSet

ProviderSet::ProviderSet(ProviderSetConfig cfg) : cfg_(std::move(cfg)) {
  if (cfg_.providers.empty()) throw Error("no providers configured");
  if (cfg_.tokenizer != "auto" && cfg_.tokenizer != "reference")
    throw Error("tokenizer must be 'auto' or 'reference', got '" +
                cfg_.tokenizer + "'");
  std::unordered_set<std::string> seen;
  for (size_t i = 0; i < cfg_.providers.size(); ++i) {
    const auto& spec = cfg_.providers[i];
    ProviderKind kind = parse_provider_name(spec.name);
    if (!seen.insert(spec.name).second)
      throw Error("duplicate provider '" + spec.name + "'");
    Entry e;
    e.kind = kind;
    switch (kind) {
      case ProviderKind::unigram:
        if (spec.model_path.empty())
          throw Error("provider 'unigram' needs a model path");
        e.unigram = std::make_shared<UnigramModel>(
            UnigramModel::load(spec.model_path));
        break;
      case ProviderKind::trigram:
        if (spec.model_path.empty())
          throw Error("provider 'trigram' needs a model path");
        e.trigram = std::make_shared<TrigramModel>(
            TrigramModel::load(spec.model_path));
        break;
      case ProviderKind::neural:
        e.neural = std::make_shared<NeuralClient>(provider_token(spec.name), cfg_);
        if (first_neural_ < 0) first_neural_ = static_cast<int>(i);
        break;
    }
    entries_.push_back(std::move(e));
  }
}

std::vector<std::string> ProviderSet::names() const {
  std::vector<std::string> out;
  for (const auto& spec : cfg_.providers) out.push_back(spec.name);
  return out;
}

const ProviderSet::Entry& ProviderSet::entry(size_t i) const {
  if (i >= entries_.size()) throw Error("provider index out of range");
  return entries_[i];
}

const UnigramModel* ProviderSet::unigram_model(size_t i) const {
  return entry(i).unigram.get();
}

const TrigramModel* ProviderSet::trigram_model(size_t i) const {
  return entry(i).trigram.get();
}

NeuralResponse ProviderSet::neural_fetch(size_t i, const std::string& text) const {
  return entry(i).neural->fetch(text);
}

namespace {

// endpoint tokens may carry leading whitespace ("world" arrives as " world")
std::string_view strip_ws(const std::string& tok) {
  size_t b = 0, e = tok.size();
  while (b < e && std::isspace(static_cast<unsigned char>(tok[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(tok[e - 1]))) --e;
  return std::string_view(tok).substr(b, e - b);
}

}  // namespace

TokenSequence ProviderSet::align_neural(
    const std::string& text, const std::vector<std::string>& tokens) const {
  TokenSequence ts;
  size_t cursor = 0;
  for (size_t i = 0; i < tokens.size(); ++i) {
    std::string_view core = strip_ws(tokens[i]);
    while (cursor < text.size() &&
           std::isspace(static_cast<unsigned char>(text[cursor])))
      ++cursor;
    if (core.empty() || text.compare(cursor, core.size(), core) != 0)
      throw Error("neural tokens do not align with document text at token " +
                  std::to_string(i));
    ts.tokens.emplace_back(core);
    ts.spans.emplace_back(cursor, cursor + core.size());
    cursor += core.size();
  }
  return ts;
}

TokenSequence ProviderSet::canonical_tokens(const std::string& text) const {
  if (cfg_.tokenizer == "auto" && first_neural_ >= 0) {
    auto r = neural_fetch(static_cast<size_t>(first_neural_), text);
    return align_neural(text, r.tokens);
  }
  return tokenize(text);
}

ProbabilityVector ProviderSet::score(size_t i, const std::string& doc_id,
                                     const std::string& text) const {
  auto ts = canonical_tokens(text);
  if (ts.empty()) throw Error("document '" + doc_id + "' has no tokens");
  const Entry& e = entry(i);
  ProbabilityVector pv;
  pv.provider = cfg_.providers[i].name;
  pv.doc_id = doc_id;
  switch (e.kind) {
    case ProviderKind::unigram:
      pv.probs = exp_all(e.unigram->score(ts));
      break;
    case ProviderKind::trigram:
      pv.probs = exp_all(e.trigram->score(ts));
      break;
    case ProviderKind::neural: {
      auto r = neural_fetch(i, text);
      if (r.tokens.size() != ts.size())
        throw Error("provider '" + pv.provider + "' returned " +
                    std::to_string(r.tokens.size()) + " tokens for document '" +
                    doc_id + "', expected " + std::to_string(ts.size()) +
                    " (misaligned at token " +
                    std::to_string(std::min(r.tokens.size(), ts.size())) + ")");
      for (size_t t = 0; t < ts.size(); ++t)
        if (strip_ws(r.tokens[t]) != ts.tokens[t])
          throw Error("provider '" + pv.provider +
                      "' tokens disagree with the canonical tokenization of '" +
                      doc_id + "' at token " + std::to_string(t));
      pv.probs = exp_all(r.logp);
      break;
    }
  }
  return pv;
}

std::vector<ProbabilityVector> ProviderSet::score_all(
    const std::string& doc_id, const std::string& text) const {
  std::vector<ProbabilityVector> out;
  out.reserve(size());
  for (size_t i = 0; i < size(); ++i) out.push_back(score(i, doc_id, text));
  return out;
}

}  // namespace specter
