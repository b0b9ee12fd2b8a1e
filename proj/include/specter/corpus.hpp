#pragma once

// Documents, datasets, splits, and the reference tokenizer.

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "specter/common.hpp"

namespace specter {

enum class Label { human, ai, unlabeled };

const char* label_name(Label l);
Label parse_label(std::string_view s);  // throws Error on unknown

struct Document {
  std::string id;
  std::string text;
  Label label = Label::unlabeled;
  std::string domain_tag;
  std::string source;
};

enum class Split { train, val, test };

const char* split_name(Split s);

struct Dataset {
  std::vector<Document> documents;
  // doc id -> split; only labeled documents are assigned
  std::unordered_map<std::string, Split> splits;

  std::optional<Split> split_of(const std::string& id) const;
  std::vector<const Document*> docs_in(Split s) const;
  size_t labeled_count() const;
};

enum class DatasetFormat { jsonl, text_dir };

// jsonl: one JSON object per line with fields id, text, label, domain_tag,
// source (label one of human|ai|unlabeled).  text_dir: <label>/<id>.txt with
// one directory per label at the top level; ids are the .txt paths relative
// to their label directory, must be unique across labels, and labeled files
// must be non-empty.
Dataset load_dataset(const std::string& path, DatasetFormat format);

void save_dataset_jsonl(const Dataset& d, const std::string& path);

struct SplitRatios {
  double train = 0.8;
  double val = 0.1;
  double test = 0.1;
};

// Stratified split: labeled docs are partitioned per label with a
// seed-deterministic shuffle; boundaries use cumulative rounding so the
// sizes are stable.  Unlabeled docs get no assignment.  Fewer than three
// labeled documents is an error, as are ratios that do not sum to 1.
Dataset split_dataset(Dataset d, SplitRatios ratios, uint64_t seed);

struct TokenSequence {
  std::vector<std::string> tokens;
  // [begin, end) byte offsets into the source text, one per token
  std::vector<std::pair<size_t, size_t>> spans;

  size_t size() const { return tokens.size(); }
  bool empty() const { return tokens.empty(); }
};

// Reference tokenizer: maximal ASCII letter runs, maximal digit runs, every
// other non-space character as a single token (one UTF-8 code point each;
// bytes >= 0x80 extend letter runs, so accented words stay whole).
// Whitespace separates tokens and is never emitted.
TokenSequence tokenize(std::string_view text);

// First n tokens (all of them when n >= size).
TokenSequence trim(const TokenSequence& ts, size_t n);

// Token count of each whitespace-delimited word, in order, computed from the
// token spans: a new word starts where the gap since the previous token
// contains whitespace.  Used by the length-based handcrafted features.
std::vector<int> word_token_lengths(std::string_view text,
                                    const TokenSequence& ts);

}  // namespace specter
