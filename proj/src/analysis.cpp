#include "specter/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "specter/common.hpp"

namespace specter {

EntropySeries entropy_rate(const std::vector<ProbabilityVector>& vectors,
                           size_t M, const std::string& provider,
                           const std::string& label_class) {
  if (vectors.empty()) throw Error("entropy rate needs documents");
  if (M == 0) throw Error("entropy rate needs a positive position limit");

  size_t longest = 0;
  for (const ProbabilityVector& pv : vectors)
    longest = std::max(longest, pv.probs.size());
  size_t m = std::min(M, longest);

  EntropySeries out;
  out.provider = provider;
  out.label_class = label_class;
  out.mean_logprob.assign(m, 0.0);
  out.n_docs.assign(m, 0);

  // Document-order accumulation per position: contributions land in the same
  // order a position-by-position pass over the documents would add them.
  for (const ProbabilityVector& pv : vectors) {
    size_t len = std::min(m, pv.probs.size());
    for (size_t i = 0; i < len; ++i) {
      out.mean_logprob[i] += std::log(pv.probs[i]);
      out.n_docs[i] += 1;
    }
  }
  for (size_t i = 0; i < m; ++i)
    out.mean_logprob[i] /= static_cast<double>(out.n_docs[i]);
  return out;
}

void emit_entropy_csv(const std::vector<EntropySeries>& series,
                      const std::string& path) {
  if (series.empty()) throw Error("no series to write");
  std::ostringstream out;
  out << "# log_base: e\n";
  out << "position,provider,class,mean_logprob,n_docs\n";
  for (const EntropySeries& s : series) {
    if (s.mean_logprob.size() != s.n_docs.size())
      throw Error("series positions and document counts disagree");
    for (size_t i = 0; i < s.mean_logprob.size(); ++i)
      out << (i + 1) << ',' << s.provider << ',' << s.label_class << ','
          << format_double(s.mean_logprob[i]) << ',' << s.n_docs[i] << '\n';
  }
  write_file_atomic(path, out.str());
}

}  // namespace specter
