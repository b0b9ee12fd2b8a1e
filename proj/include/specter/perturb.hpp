#pragma once

// Seeded text perturbations (character, word, sentence, paragraph level, plus
// an external-command hook) and the robustness sweep that re-scores perturbed
// ai documents against a trained detector.

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "specter/corpus.hpp"
#include "specter/detector.hpp"
#include "specter/providers.hpp"

namespace specter {

enum class PerturbKind {
  char_insert,
  char_delete,
  char_swap,
  space_edit,
  case_flip,
  word_swap,
  synonym_replace,
  sentence_swap,
  paragraph_swap,
  external_transform,
};

const char* perturb_kind_name(PerturbKind k);
PerturbKind parse_perturb_kind(const std::string& name);

struct Perturbation {
  PerturbKind kind = PerturbKind::char_swap;
  size_t count = 0;
  uint64_t seed = 0;
  // external_transform only: shell command mapping stdin -> stdout, run once
  // for any nonzero count.
  std::string command;
};

// word -> synonyms, all lowercase; no word maps to itself.  File format: one
// entry per line, "word synonym [synonym...]", '#' comments allowed.
struct SynonymLexicon {
  std::unordered_map<std::string, std::vector<std::string>> entries;

  static SynonymLexicon load(const std::string& path);
};

// Applies `count` edits at sites sampled uniformly without replacement from
// the original text (clamped to the available sites), high-to-low so earlier
// edits never shift later sites.  Deterministic in (kind, count, seed, text).
std::string perturb(const std::string& text, const Perturbation& p,
                    const SynonymLexicon* lexicon = nullptr);

// Segmentation helpers used by the swap kinds, exposed for testing.  Both
// splits are loss-free: pieces + separators concatenate back to the input.
// Sentences end at . ! ? followed by whitespace + an uppercase letter, or at
// end of text; paragraphs are blank-line-delimited blocks.
std::vector<std::string> split_sentences(const std::string& text);
std::vector<std::string> split_paragraphs(const std::string& text);

struct RobustnessPoint {
  size_t count = 0;        // edits per document
  double per100 = 0.0;     // mean edits per 100 tokens of the originals
  double metric = 0.0;     // recall: fraction of (doc, seed) runs still ai
  size_t n = 0;            // docs x seeds aggregated
};

// Perturb every ai-labeled doc at each count under each seed and reclassify.
// The count-0 point reproduces the unperturbed baseline exactly.
std::vector<RobustnessPoint> robustness_sweep(
    const DetectorArtifact& a, const ProviderSet& ps,
    const std::vector<const Document*>& docs, PerturbKind kind,
    const std::vector<size_t>& counts, const std::vector<uint64_t>& seeds,
    const SynonymLexicon* lexicon = nullptr, const std::string& command = "",
    size_t jobs = 1);

// CSV columns: kind,count,per_100_tokens,metric,n
void write_robustness_csv(PerturbKind kind,
                          const std::vector<RobustnessPoint>& points,
                          const std::string& path);

}  // namespace specter
