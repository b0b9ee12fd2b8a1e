#pragma once

// Tool-wide configuration: provider wiring plus the training defaults.
// Precedence is config file < command-line flags < environment variables.

#include <cstdint>
#include <string>

#include "specter/providers.hpp"

namespace specter {

struct ToolConfig {
  ProviderSetConfig providers;
  double delta = 0.9;      // Kneser-Ney discount
  double lambda_u = 1e-3;  // unigram out-of-vocabulary mass
  double C = 1.0;          // logistic regression inverse regularization
  int depth = 3;           // feature search depth
  size_t max_k = 10;       // forward selection budget
  double epsilon = 1e-4;   // forward selection stopping threshold
  uint64_t seed = 0;
  size_t jobs = 0;  // 0 = all logical cores
};

// JSON object; unknown keys are rejected.  Missing file is an error.
ToolConfig load_config(const std::string& path);

// SPECTER_API_KEY / SPECTER_API_BASE override whatever is set so far.
void apply_env(ToolConfig& cfg);

}  // namespace specter
