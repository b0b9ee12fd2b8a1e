#pragma once

// Per-position mean log-probability curves: how predictable token i is on
// average across a document collection, per provider and label class.

#include <cstddef>
#include <string>
#include <vector>

#include "specter/providers.hpp"

namespace specter {

struct EntropySeries {
  std::string provider;
  std::string label_class;  // "human" or "ai"
  // mean_logprob[i] is the mean natural-log probability at position i+1 over
  // the documents long enough to reach it; n_docs[i] counts those documents.
  std::vector<double> mean_logprob;
  std::vector<size_t> n_docs;
};

// Aggregates up to M positions, truncated at the longest document.  All
// vectors must come from one provider and one label class (named by the
// caller); empty input or M = 0 is an error.
EntropySeries entropy_rate(const std::vector<ProbabilityVector>& vectors,
                           size_t M, const std::string& provider,
                           const std::string& label_class);

// CSV with a "# log_base: e" metadata comment and columns
// position,provider,class,mean_logprob,n_docs (one row per series position).
void emit_entropy_csv(const std::vector<EntropySeries>& series,
                      const std::string& path);

}  // namespace specter
