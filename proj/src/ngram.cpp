#include "specter/ngram.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include <json.hpp>

using ordered_json = nlohmann::ordered_json;
using nlohmann::json;

namespace specter {

namespace {

constexpr uint32_t kMaxVocab = 1u << 21;  // pack3 budget

void check_params(double delta, double lambda_u, bool with_delta) {
  if (with_delta && !(delta > 0.0 && delta < 1.0))
    throw Error("discount must be in (0,1), got " + format_double(delta));
  if (!(lambda_u > 0.0 && lambda_u < 1.0))
    throw Error("floor weight must be in (0,1), got " + format_double(lambda_u));
}

size_t total_tokens(const std::vector<TokenSequence>& corpus) {
  size_t n = 0;
  for (const auto& ts : corpus) n += ts.size();
  return n;
}

}  // namespace

Vocabulary::Vocabulary() {
  add("<s>");
  add("</s>");
}

uint32_t Vocabulary::add(const std::string& token) {
  auto it = ids_.find(token);
  if (it != ids_.end()) return it->second;
  if (tokens_.size() >= kMaxVocab) throw Error("vocabulary exceeds 2^21 types");
  auto id = static_cast<uint32_t>(tokens_.size());
  ids_.emplace(token, id);
  tokens_.push_back(token);
  return id;
}

std::optional<uint32_t> Vocabulary::find(std::string_view token) const {
  auto it = ids_.find(std::string(token));
  if (it == ids_.end()) return std::nullopt;
  return it->second;
}

const std::string& Vocabulary::token(uint32_t id) const {
  if (id >= tokens_.size()) throw Error("token id out of range");
  return tokens_[id];
}

size_t count_new_types(const Vocabulary& vocab, const TokenSequence& ts) {
  std::unordered_set<std::string_view> fresh;
  for (const auto& tok : ts.tokens)
    if (!vocab.find(tok)) fresh.insert(tok);
  return fresh.size();
}

// --------------------------------------------------------------- unigram

UnigramModel UnigramModel::train(const std::vector<TokenSequence>& corpus,
                                 double lambda_u) {
  check_params(0.5, lambda_u, false);
  if (total_tokens(corpus) < 2)
    throw Error("corpus has fewer than 2 tokens; nothing to count");

  UnigramModel m;
  m.lambda_u_ = lambda_u;
  for (const auto& ts : corpus)
    for (const auto& tok : ts.tokens) m.vocab_.add(tok);

  m.fert_.cont.assign(m.vocab_.size(), 0);
  std::unordered_set<uint64_t> seen;
  for (const auto& ts : corpus) {
    uint32_t prev = Vocabulary::kBos;
    for (const auto& tok : ts.tokens) {
      uint32_t w = *m.vocab_.find(tok);
      if (seen.insert(pack2(prev, w)).second) {
        ++m.fert_.cont[w];
        ++m.fert_.total_types;
      }
      prev = w;
    }
  }
  return m;
}

double UnigramModel::prob(std::optional<uint32_t> w, size_t extra_types) const {
  double cc = w ? static_cast<double>(fert_.cont[*w]) : 0.0;
  double total = static_cast<double>(fert_.total_types);
  double floor_n = static_cast<double>(vocab_.size() + extra_types);
  return (1.0 - lambda_u_) * cc / total + lambda_u_ / floor_n;
}

std::vector<double> UnigramModel::score(const TokenSequence& ts) const {
  size_t extra = count_new_types(vocab_, ts);
  std::vector<double> logp;
  logp.reserve(ts.size());
  for (const auto& tok : ts.tokens)
    logp.push_back(std::log(prob(vocab_.find(tok), extra)));
  return logp;
}

void UnigramModel::save(const std::string& path) const {
  ordered_json j;
  j["format"] = "specter-ngram";
  j["version"] = 1;
  j["order"] = 1;
  j["lambda_u"] = format_double(lambda_u_);
  j["vocab"] = vocab_.tokens();
  j["continuation"] = fert_.cont;
  j["total_types"] = fert_.total_types;
  write_file_atomic(path, j.dump(2) + "\n");
}

namespace {

json load_model_json(const std::string& path, int want_order) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw Error(path + ": bad JSON: " + e.what());
  }
  if (j.value("format", "") != "specter-ngram")
    throw Error(path + ": not a model file (missing format tag)");
  if (j.value("version", 0) != 1)
    throw Error(path + ": unsupported model version");
  if (j.value("order", 0) != want_order)
    throw Error(path + ": expected order-" + std::to_string(want_order) +
                " model, found order " + std::to_string(j.value("order", 0)));
  return j;
}

Vocabulary vocab_from_json(const json& j, const std::string& path) {
  const auto& toks = j.at("vocab");
  if (!toks.is_array() || toks.size() < 2 || toks[0] != "<s>" || toks[1] != "</s>")
    throw Error(path + ": malformed vocabulary");
  Vocabulary v;
  for (size_t i = 2; i < toks.size(); ++i) {
    uint32_t id = v.add(toks[i].get<std::string>());
    if (id != i)
      throw Error(path + ": duplicate vocabulary entry '" +
                  toks[i].get<std::string>() + "'");
  }
  return v;
}

}  // namespace

UnigramModel UnigramModel::load(const std::string& path) {
  json j = load_model_json(path, 1);
  UnigramModel m;
  m.vocab_ = vocab_from_json(j, path);
  m.lambda_u_ = parse_double(j.at("lambda_u").get<std::string>());
  check_params(0.5, m.lambda_u_, false);
  m.fert_.cont = j.at("continuation").get<std::vector<int64_t>>();
  m.fert_.total_types = j.at("total_types").get<int64_t>();
  if (m.fert_.cont.size() != m.vocab_.size())
    throw Error(path + ": continuation table size mismatch");
  if (m.fert_.total_types <= 0)
    throw Error(path + ": nonpositive type total");
  return m;
}

// --------------------------------------------------------------- trigram

TrigramModel TrigramModel::train(const std::vector<TokenSequence>& corpus,
                                 double delta, double lambda_u) {
  check_params(delta, lambda_u, true);
  if (total_tokens(corpus) < 2)
    throw Error("corpus has fewer than 2 tokens; nothing to count");

  TrigramModel m;
  m.delta_ = delta;
  m.lambda_u_ = lambda_u;
  for (const auto& ts : corpus)
    for (const auto& tok : ts.tokens) m.vocab_.add(tok);

  m.fert_.cont.assign(m.vocab_.size(), 0);
  std::unordered_set<uint64_t> seen_bigrams;
  for (const auto& ts : corpus) {
    uint32_t u = Vocabulary::kBos, v = Vocabulary::kBos;
    for (const auto& tok : ts.tokens) {
      uint32_t w = *m.vocab_.find(tok);
      ++m.trigram_[pack3(u, v, w)];
      if (seen_bigrams.insert(pack2(v, w)).second) {
        ++m.fert_.cont[w];
        ++m.fert_.total_types;
      }
      u = v;
      v = w;
    }
  }
  m.derive_tables();
  return m;
}

void TrigramModel::derive_tables() {
  ctx_total_.clear();
  ctx_types_.clear();
  cont_bigram_.clear();
  cont_total_.assign(vocab_.size(), 0);
  cont_types_.assign(vocab_.size(), 0);
  for (const auto& [key, count] : trigram_) {
    auto u = static_cast<uint32_t>(key >> 42);
    auto v = static_cast<uint32_t>((key >> 21) & (kMaxVocab - 1));
    auto w = static_cast<uint32_t>(key & (kMaxVocab - 1));
    ctx_total_[pack2(u, v)] += count;
    ctx_types_[pack2(u, v)] += 1;
    auto [it, fresh] = cont_bigram_.emplace(pack2(v, w), 0);
    it->second += 1;
    if (it->second == 1) ++cont_types_[v];
    ++cont_total_[v];
    (void)fresh;
  }
}

double TrigramModel::prob(std::optional<uint32_t> u, std::optional<uint32_t> v,
                          std::optional<uint32_t> w, size_t extra_types) const {
  auto lookup = [](const std::unordered_map<uint64_t, int64_t>& map, uint64_t key) {
    auto it = map.find(key);
    return it == map.end() ? int64_t{0} : it->second;
  };

  // fertility unigram
  double cc = w ? static_cast<double>(fert_.cont[*w]) : 0.0;
  double cc_total = static_cast<double>(fert_.total_types);
  double floor_n = static_cast<double>(vocab_.size() + extra_types);
  double p_uni = (1.0 - lambda_u_) * cc / cc_total + lambda_u_ / floor_n;

  // continuation bigram over (v, w)
  double p_bi = p_uni;
  if (v) {
    double bv = static_cast<double>(cont_total_[*v]);
    if (bv > 0.0) {
      double n1vw =
          (w ? static_cast<double>(lookup(cont_bigram_, pack2(*v, *w))) : 0.0);
      double kv = static_cast<double>(cont_types_[*v]);
      p_bi = std::max(n1vw - delta_, 0.0) / bv + delta_ * kv / bv * p_uni;
    }
  }

  // trigram over (u, v, w)
  if (u && v) {
    double t = static_cast<double>(lookup(ctx_total_, pack2(*u, *v)));
    if (t > 0.0) {
      double cuvw =
          (w ? static_cast<double>(lookup(trigram_, pack3(*u, *v, *w))) : 0.0);
      double n1uv = static_cast<double>(lookup(ctx_types_, pack2(*u, *v)));
      return std::max(cuvw - delta_, 0.0) / t + delta_ * n1uv / t * p_bi;
    }
  }
  return p_bi;
}

std::vector<double> TrigramModel::score(const TokenSequence& ts) const {
  size_t extra = count_new_types(vocab_, ts);
  std::vector<double> logp;
  logp.reserve(ts.size());
  std::optional<uint32_t> u = Vocabulary::kBos, v = Vocabulary::kBos;
  for (const auto& tok : ts.tokens) {
    std::optional<uint32_t> w = vocab_.find(tok);
    logp.push_back(std::log(prob(u, v, w, extra)));
    u = v;
    v = w;
  }
  return logp;
}

std::vector<double> TrigramModel::distribution(uint32_t u, uint32_t v) const {
  std::vector<double> p(vocab_.size());
  for (uint32_t w = 0; w < vocab_.size(); ++w) p[w] = prob(u, v, w, 0);
  return p;
}

void TrigramModel::save(const std::string& path) const {
  ordered_json j;
  j["format"] = "specter-ngram";
  j["version"] = 1;
  j["order"] = 3;
  j["delta"] = format_double(delta_);
  j["lambda_u"] = format_double(lambda_u_);
  j["vocab"] = vocab_.tokens();
  j["continuation"] = fert_.cont;
  j["total_types"] = fert_.total_types;
  std::vector<std::pair<uint64_t, int64_t>> rows(trigram_.begin(), trigram_.end());
  std::sort(rows.begin(), rows.end());
  ordered_json tris = ordered_json::array();
  for (const auto& [key, count] : rows) {
    tris.push_back({key >> 42, (key >> 21) & (kMaxVocab - 1),
                    key & (kMaxVocab - 1), count});
  }
  j["trigrams"] = std::move(tris);
  write_file_atomic(path, j.dump(2) + "\n");
}

TrigramModel TrigramModel::load(const std::string& path) {
  json j = load_model_json(path, 3);
  TrigramModel m;
  m.vocab_ = vocab_from_json(j, path);
  m.delta_ = parse_double(j.at("delta").get<std::string>());
  m.lambda_u_ = parse_double(j.at("lambda_u").get<std::string>());
  check_params(m.delta_, m.lambda_u_, true);
  m.fert_.cont = j.at("continuation").get<std::vector<int64_t>>();
  m.fert_.total_types = j.at("total_types").get<int64_t>();
  if (m.fert_.cont.size() != m.vocab_.size())
    throw Error(path + ": continuation table size mismatch");
  if (m.fert_.total_types <= 0) throw Error(path + ": nonpositive type total");
  for (const auto& row : j.at("trigrams")) {
    if (!row.is_array() || row.size() != 4)
      throw Error(path + ": malformed trigram row");
    auto u = row[0].get<uint32_t>();
    auto v = row[1].get<uint32_t>();
    auto w = row[2].get<uint32_t>();
    auto c = row[3].get<int64_t>();
    if (u >= m.vocab_.size() || v >= m.vocab_.size() || w >= m.vocab_.size() ||
        c <= 0)
      throw Error(path + ": trigram row out of range");
    m.trigram_[pack3(u, v, w)] = c;
  }
  m.derive_tables();
  return m;
}

}  // namespace specter
