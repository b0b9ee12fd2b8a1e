#include "specter/config.hpp"

#include <cstdlib>
#include <unordered_set>

#include "json.hpp"
#include "specter/common.hpp"

namespace specter {

namespace {
using nlohmann::json;
}

ToolConfig load_config(const std::string& path) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw Error("bad config file " + path + ": " + e.what());
  }
  if (!j.is_object()) throw Error("config must be a JSON object");

  static const std::unordered_set<std::string> kKnown = {
      "providers",   "cache_dir", "api_base",           "api_key",
      "requests_per_second",      "max_attempts",       "backoff_initial_ms",
      "tokenizer",   "delta",     "lambda_u",           "C",
      "depth",       "max_k",     "epsilon",            "seed",
      "jobs"};
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!kKnown.count(it.key()))
      throw Error("unknown config key '" + it.key() + "'");

  ToolConfig cfg;
  if (j.contains("providers")) {
    if (!j["providers"].is_array())
      throw Error("providers must be a list of {name, model_path}");
    for (const auto& p : j["providers"]) {
      if (!p.is_object() || !p.contains("name"))
        throw Error("providers must be a list of {name, model_path}");
      for (auto it = p.begin(); it != p.end(); ++it)
        if (it.key() != "name" && it.key() != "model_path")
          throw Error("unknown provider key '" + it.key() + "'");
      ProviderSpec spec;
      spec.name = p["name"].get<std::string>();
      if (p.contains("model_path"))
        spec.model_path = p["model_path"].get<std::string>();
      cfg.providers.providers.push_back(std::move(spec));
    }
  }
  if (j.contains("cache_dir"))
    cfg.providers.cache_dir = j["cache_dir"].get<std::string>();
  if (j.contains("api_base"))
    cfg.providers.api_base = j["api_base"].get<std::string>();
  if (j.contains("api_key"))
    cfg.providers.api_key = j["api_key"].get<std::string>();
  if (j.contains("requests_per_second"))
    cfg.providers.requests_per_second = j["requests_per_second"].get<double>();
  if (j.contains("max_attempts"))
    cfg.providers.max_attempts = j["max_attempts"].get<int>();
  if (j.contains("backoff_initial_ms"))
    cfg.providers.backoff_initial_ms = j["backoff_initial_ms"].get<int>();
  if (j.contains("tokenizer"))
    cfg.providers.tokenizer = j["tokenizer"].get<std::string>();
  if (j.contains("delta")) cfg.delta = j["delta"].get<double>();
  if (j.contains("lambda_u")) cfg.lambda_u = j["lambda_u"].get<double>();
  if (j.contains("C")) cfg.C = j["C"].get<double>();
  if (j.contains("depth")) cfg.depth = j["depth"].get<int>();
  if (j.contains("max_k")) cfg.max_k = j["max_k"].get<size_t>();
  if (j.contains("epsilon")) cfg.epsilon = j["epsilon"].get<double>();
  if (j.contains("seed")) cfg.seed = j["seed"].get<uint64_t>();
  if (j.contains("jobs")) cfg.jobs = j["jobs"].get<size_t>();

  if (cfg.providers.tokenizer != "auto" && cfg.providers.tokenizer != "reference")
    throw Error("tokenizer must be 'auto' or 'reference'");
  if (!(cfg.delta >= 0.0 && cfg.delta < 1.0))
    throw Error("delta must be in [0, 1)");
  if (!(cfg.lambda_u > 0.0 && cfg.lambda_u < 1.0))
    throw Error("lambda_u must be in (0, 1)");
  if (!(cfg.C > 0.0)) throw Error("C must be positive");
  if (cfg.depth < 1) throw Error("depth must be at least 1");
  if (!(cfg.epsilon >= 0.0)) throw Error("epsilon must be non-negative");
  return cfg;
}

void apply_env(ToolConfig& cfg) {
  if (const char* key = std::getenv("SPECTER_API_KEY"); key && *key)
    cfg.providers.api_key = key;
  if (const char* base = std::getenv("SPECTER_API_BASE"); base && *base)
    cfg.providers.api_base = base;
}

}  // namespace specter
