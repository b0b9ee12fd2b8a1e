#include "specter/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <unordered_map>

#include <json.hpp>

namespace fs = std::filesystem;
using nlohmann::json;
using ordered_json = nlohmann::ordered_json;

namespace specter {

const char* label_name(Label l) {
  switch (l) {
    case Label::human: return "human";
    case Label::ai: return "ai";
    case Label::unlabeled: return "unlabeled";
  }
  return "?";
}

Label parse_label(std::string_view s) {
  if (s == "human") return Label::human;
  if (s == "ai") return Label::ai;
  if (s == "unlabeled") return Label::unlabeled;
  throw Error("unknown label '" + std::string(s) +
              "' (expected human, ai, or unlabeled)");
}

const char* split_name(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "?";
}

std::optional<Split> Dataset::split_of(const std::string& id) const {
  auto it = splits.find(id);
  if (it == splits.end()) return std::nullopt;
  return it->second;
}

std::vector<const Document*> Dataset::docs_in(Split s) const {
  std::vector<const Document*> out;
  for (const auto& d : documents) {
    auto it = splits.find(d.id);
    if (it != splits.end() && it->second == s) out.push_back(&d);
  }
  return out;
}

size_t Dataset::labeled_count() const {
  size_t n = 0;
  for (const auto& d : documents)
    if (d.label != Label::unlabeled) ++n;
  return n;
}

namespace {

Dataset load_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path);
  Dataset ds;
  std::string line;
  size_t lineno = 0;
  std::unordered_map<std::string, size_t> seen;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw Error(path + ":" + std::to_string(lineno) + ": bad JSON: " + e.what());
    }
    if (!j.is_object())
      throw Error(path + ":" + std::to_string(lineno) + ": expected an object");
    for (const char* field : {"id", "text", "label"})
      if (!j.contains(field) || !j[field].is_string())
        throw Error(path + ":" + std::to_string(lineno) + ": missing string field '" +
                    field + "'");
    Document d;
    d.id = j["id"].get<std::string>();
    d.text = j["text"].get<std::string>();
    d.label = parse_label(j["label"].get<std::string>());
    if (j.contains("domain_tag")) d.domain_tag = j["domain_tag"].get<std::string>();
    if (j.contains("source")) d.source = j["source"].get<std::string>();
    if (d.id.empty())
      throw Error(path + ":" + std::to_string(lineno) + ": empty id");
    if (d.label != Label::unlabeled && d.text.empty())
      throw Error(path + ":" + std::to_string(lineno) + ": labeled document '" +
                  d.id + "' has empty text");
    auto [it, fresh] = seen.emplace(d.id, lineno);
    if (!fresh)
      throw Error(path + ":" + std::to_string(lineno) + ": duplicate id '" + d.id +
                  "' (first at line " + std::to_string(it->second) + ")");
    ds.documents.push_back(std::move(d));
  }
  return ds;
}

// Layout: <label>/<id>.txt, where <label> is human, ai, or unlabeled.
Dataset load_text_dir(const std::string& path) {
  if (!fs::is_directory(path)) throw Error(path + " is not a directory");
  std::vector<fs::path> label_dirs;
  for (const auto& entry : fs::directory_iterator(path)) {
    if (entry.is_directory()) {
      label_dirs.push_back(entry.path());
    } else if (entry.path().extension() == ".txt") {
      throw Error(path + ": expected <label>/<id>.txt layout, found " +
                  entry.path().filename().string() + " at the top level");
    }
  }
  std::sort(label_dirs.begin(), label_dirs.end());

  Dataset ds;
  std::unordered_map<std::string, std::string> seen;  // id -> label dir
  for (const auto& dir : label_dirs) {
    Label label = parse_label(dir.filename().string());
    std::vector<fs::path> files;
    for (const auto& entry : fs::recursive_directory_iterator(dir))
      if (entry.is_regular_file() && entry.path().extension() == ".txt")
        files.push_back(entry.path());
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
      Document d;
      fs::path rel = fs::relative(f, dir);
      rel.replace_extension();
      d.id = rel.generic_string();
      d.text = read_file(f);
      d.label = label;
      d.source = fs::absolute(f).generic_string();
      if (label != Label::unlabeled && d.text.empty())
        throw Error(f.string() + ": labeled document has empty text");
      auto [it, fresh] = seen.emplace(d.id, dir.filename().string());
      if (!fresh)
        throw Error("duplicate id \"" + d.id + "\" (in both " + it->second +
                    "/ and " + dir.filename().string() + "/)");
      ds.documents.push_back(std::move(d));
    }
  }
  if (ds.documents.empty()) throw Error("no .txt files under " + path);
  return ds;
}

}  // namespace

Dataset load_dataset(const std::string& path, DatasetFormat format) {
  switch (format) {
    case DatasetFormat::jsonl: return load_jsonl(path);
    case DatasetFormat::text_dir: return load_text_dir(path);
  }
  throw Error("bad dataset format");
}

void save_dataset_jsonl(const Dataset& d, const std::string& path) {
  std::string out;
  for (const auto& doc : d.documents) {
    ordered_json j;
    j["id"] = doc.id;
    j["text"] = doc.text;
    j["label"] = label_name(doc.label);
    j["domain_tag"] = doc.domain_tag;
    j["source"] = doc.source;
    out += j.dump();
    out += '\n';
  }
  write_file_atomic(path, out);
}

Dataset split_dataset(Dataset d, SplitRatios ratios, uint64_t seed) {
  double total = ratios.train + ratios.val + ratios.test;
  if (ratios.train <= 0 || ratios.val <= 0 || ratios.test <= 0 ||
      std::fabs(total - 1.0) > 1e-9)
    throw Error("split ratios must be positive and sum to 1");
  if (d.labeled_count() < 3)
    throw Error("need at least 3 labeled documents to split");

  d.splits.clear();
  // per-label index lists, in label order then document order
  for (Label lab : {Label::human, Label::ai}) {
    std::vector<size_t> idx;
    for (size_t i = 0; i < d.documents.size(); ++i)
      if (d.documents[i].label == lab) idx.push_back(i);
    if (idx.empty()) continue;
    // Fisher-Yates with our own bounded draws so the shuffle is identical
    // across standard libraries.
    std::mt19937_64 rng(seed ^ (lab == Label::ai ? 0x9e3779b97f4a7c15ull : 0));
    for (size_t i = idx.size(); i > 1; --i)
      std::swap(idx[i - 1], idx[bounded_rand(rng, i)]);
    size_t n = idx.size();
    auto b1 = static_cast<size_t>(std::llround(static_cast<double>(n) * ratios.train));
    auto b2 = static_cast<size_t>(
        std::llround(static_cast<double>(n) * (ratios.train + ratios.val)));
    if (b2 > n) b2 = n;
    if (b1 > b2) b1 = b2;
    for (size_t pos = 0; pos < n; ++pos) {
      Split s = pos < b1 ? Split::train : pos < b2 ? Split::val : Split::test;
      d.splits.emplace(d.documents[idx[pos]].id, s);
    }
  }
  return d;
}

namespace {

inline bool ascii_letter(unsigned char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z');
}
inline bool ascii_digit(unsigned char c) { return c >= '0' && c <= '9'; }
inline bool ascii_space(unsigned char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}
// letter-run class: ASCII letters plus any non-ASCII byte, so multibyte
// UTF-8 sequences stay inside one token
inline bool letterish(unsigned char c) { return ascii_letter(c) || c >= 0x80; }

size_t utf8_len(unsigned char lead) {
  if (lead < 0x80) return 1;
  if ((lead >> 5) == 0x6) return 2;
  if ((lead >> 4) == 0xe) return 3;
  if ((lead >> 3) == 0x1e) return 4;
  return 1;  // stray continuation byte: take it alone
}

}  // namespace

TokenSequence tokenize(std::string_view text) {
  TokenSequence ts;
  size_t i = 0, n = text.size();
  while (i < n) {
    unsigned char c = text[i];
    if (ascii_space(c)) {
      ++i;
      continue;
    }
    size_t begin = i;
    if (letterish(c)) {
      while (i < n && letterish(static_cast<unsigned char>(text[i])))
        i += utf8_len(static_cast<unsigned char>(text[i]));
      if (i > n) i = n;  // truncated multibyte tail
    } else if (ascii_digit(c)) {
      while (i < n && ascii_digit(static_cast<unsigned char>(text[i]))) ++i;
    } else {
      ++i;  // single punctuation mark
    }
    ts.tokens.emplace_back(text.substr(begin, i - begin));
    ts.spans.emplace_back(begin, i);
  }
  return ts;
}

TokenSequence trim(const TokenSequence& ts, size_t n) {
  if (n >= ts.size()) return ts;
  TokenSequence out;
  out.tokens.assign(ts.tokens.begin(), ts.tokens.begin() + n);
  out.spans.assign(ts.spans.begin(), ts.spans.begin() + n);
  return out;
}

std::vector<int> word_token_lengths(std::string_view text,
                                    const TokenSequence& ts) {
  std::vector<int> lens;
  size_t prev_end = 0;
  for (size_t t = 0; t < ts.size(); ++t) {
    auto [begin, end] = ts.spans[t];
    bool new_word = lens.empty();
    if (!new_word) {
      for (size_t i = prev_end; i < begin; ++i)
        if (ascii_space(static_cast<unsigned char>(text[i]))) {
          new_word = true;
          break;
        }
    }
    if (new_word)
      lens.push_back(1);
    else
      ++lens.back();
    prev_end = end;
  }
  return lens;
}

}  // namespace specter
