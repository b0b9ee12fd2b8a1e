#include "specter/perturb.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <random>
#include <sstream>

#include "specter/common.hpp"

namespace specter {

namespace {

constexpr const char* kKindNames[] = {
    "char_insert",     "char_delete",   "char_swap",
    "space_edit",      "case_flip",     "word_swap",
    "synonym_replace", "sentence_swap", "paragraph_swap",
    "external_transform"};

bool is_ws(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r'; }

bool is_alpha(char c) { return std::isalpha(static_cast<unsigned char>(c)); }
bool is_alnum(char c) { return std::isalnum(static_cast<unsigned char>(c)); }
bool is_upper(char c) { return std::isupper(static_cast<unsigned char>(c)); }
char to_lower(char c) {
  return static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
}
char to_upper(char c) {
  return static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
}

// Pick `count` sites uniformly without replacement, returned high-to-low so
// edits below a site never shift it.
std::vector<size_t> sample_sites(std::vector<size_t> sites, size_t count,
                                 std::mt19937_64& rng) {
  count = std::min(count, sites.size());
  for (size_t k = 0; k < count; ++k) {
    size_t j = k + bounded_rand(rng, sites.size() - k);
    std::swap(sites[k], sites[j]);
  }
  sites.resize(count);
  std::sort(sites.begin(), sites.end(), std::greater<size_t>());
  return sites;
}

std::vector<size_t> iota_sites(size_t n) {
  std::vector<size_t> s(n);
  for (size_t i = 0; i < n; ++i) s[i] = i;
  return s;
}

// Loss-free structural split: prefix + items[0] seps[0] items[1] ... == text.
struct Pieces {
  std::string prefix;
  std::vector<std::string> items;
  std::vector<std::string> seps;  // seps[i] follows items[i]

  std::string join() const {
    std::string out = prefix;
    for (size_t i = 0; i < items.size(); ++i) {
      out += items[i];
      out += seps[i];
    }
    return out;
  }
};

Pieces split_sentence_pieces(const std::string& t) {
  Pieces out;
  size_t n = t.size(), start = 0, i = 0;
  while (i < n) {
    char c = t[i];
    if (c == '.' || c == '!' || c == '?') {
      size_t j = i + 1;
      if (j < n && is_ws(t[j])) {
        size_t k = j;
        while (k < n && is_ws(t[k])) ++k;
        if (k < n && is_upper(t[k])) {
          out.items.push_back(t.substr(start, j - start));
          out.seps.push_back(t.substr(j, k - j));
          start = k;
          i = k;
          continue;
        }
      }
    }
    ++i;
  }
  if (start < n) {
    out.items.push_back(t.substr(start));
    out.seps.emplace_back();
  }
  return out;
}

Pieces split_paragraph_pieces(const std::string& t) {
  Pieces out;
  size_t n = t.size(), start = 0, i = 0;
  while (i < n) {
    if (t[i] == '\n') {
      size_t k = i;
      int newlines = 0;
      while (k < n && (t[k] == '\n' || t[k] == ' ' || t[k] == '\t' || t[k] == '\r')) {
        newlines += t[k] == '\n' ? 1 : 0;
        ++k;
      }
      if (newlines >= 2) {
        out.items.push_back(t.substr(start, i - start));
        out.seps.push_back(t.substr(i, k - i));
        start = k;
      }
      i = k;
      continue;
    }
    ++i;
  }
  out.items.push_back(t.substr(start));
  out.seps.emplace_back();
  return out;
}

Pieces split_word_pieces(const std::string& t) {
  Pieces out;
  size_t n = t.size(), i = 0;
  while (i < n && is_ws(t[i])) ++i;
  out.prefix = t.substr(0, i);
  while (i < n) {
    size_t w = i;
    while (w < n && !is_ws(t[w])) ++w;
    out.items.push_back(t.substr(i, w - i));
    size_t s = w;
    while (s < n && is_ws(t[s])) ++s;
    out.seps.push_back(t.substr(w, s - w));
    i = s;
  }
  return out;
}

// Alphanumeric core of a word, with any punctuation affixes kept aside.
void word_core(const std::string& w, size_t& b, size_t& e) {
  b = 0;
  e = w.size();
  while (b < e && !is_alnum(w[b])) ++b;
  while (e > b && !is_alnum(w[e - 1])) --e;
}

std::string lower_copy(const std::string& s) {
  std::string out = s;
  for (char& c : out) c = to_lower(c);
  return out;
}

// Swap adjacent items at sampled pair sites; only nonempty neighbours count.
std::string swap_adjacent(Pieces pieces, size_t count, std::mt19937_64& rng) {
  std::vector<size_t> sites;
  for (size_t i = 0; i + 1 < pieces.items.size(); ++i)
    if (!pieces.items[i].empty() && !pieces.items[i + 1].empty())
      sites.push_back(i);
  for (size_t i : sample_sites(std::move(sites), count, rng))
    std::swap(pieces.items[i], pieces.items[i + 1]);
  return pieces.join();
}

std::string run_external(const std::string& text, const std::string& command) {
  if (command.empty()) throw Error("external_transform requires a command");
  static std::atomic<uint64_t> counter{0};
  auto dir = std::filesystem::temp_directory_path();
  std::string base = "specter-ext-" + std::to_string(counter.fetch_add(1)) +
                     "-" + to_hex(fnv1a64(text));
  auto in = dir / (base + ".in");
  auto out = dir / (base + ".out");
  write_file_atomic(in, text);
  std::string cmd = command + " < '" + in.string() + "' > '" + out.string() + "'";
  int rc = std::system(cmd.c_str());
  std::error_code ec;
  if (rc != 0) {
    std::filesystem::remove(in, ec);
    std::filesystem::remove(out, ec);
    throw Error("external transform failed (status " + std::to_string(rc) + ")");
  }
  std::string result = read_file(out);
  std::filesystem::remove(in, ec);
  std::filesystem::remove(out, ec);
  return result;
}

}  // namespace

const char* perturb_kind_name(PerturbKind k) {
  return kKindNames[static_cast<size_t>(k)];
}

PerturbKind parse_perturb_kind(const std::string& name) {
  for (size_t i = 0; i < std::size(kKindNames); ++i)
    if (name == kKindNames[i]) return static_cast<PerturbKind>(i);
  throw Error("unknown perturbation kind '" + name + "'");
}

SynonymLexicon SynonymLexicon::load(const std::string& path) {
  SynonymLexicon lex;
  std::istringstream in(read_file(path));
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos)
      line.resize(hash);
    std::istringstream ls(line);
    std::vector<std::string> tokens;
    std::string tok;
    while (ls >> tok) tokens.push_back(lower_copy(tok));
    if (tokens.empty()) continue;
    if (tokens.size() < 2)
      throw Error("synonym line " + std::to_string(lineno) +
                  " needs a word and at least one synonym");
    const std::string& word = tokens[0];
    auto& syns = lex.entries[word];
    for (size_t i = 1; i < tokens.size(); ++i) {
      if (tokens[i] == word) continue;  // never map a word to itself
      if (std::find(syns.begin(), syns.end(), tokens[i]) == syns.end())
        syns.push_back(tokens[i]);
    }
    if (syns.empty())
      throw Error("word '" + word + "' maps only to itself (line " +
                  std::to_string(lineno) + ")");
  }
  return lex;
}

std::string perturb(const std::string& text, const Perturbation& p,
                    const SynonymLexicon* lexicon) {
  if (p.count == 0) return text;
  std::mt19937_64 rng(p.seed);
  std::string s = text;

  switch (p.kind) {
    case PerturbKind::char_insert: {
      for (size_t i : sample_sites(iota_sites(text.size() + 1), p.count, rng))
        s.insert(s.begin() + static_cast<ptrdiff_t>(i),
                 static_cast<char>('a' + bounded_rand(rng, 26)));
      return s;
    }
    case PerturbKind::char_delete: {
      for (size_t i : sample_sites(iota_sites(text.size()), p.count, rng))
        s.erase(i, 1);
      return s;
    }
    case PerturbKind::char_swap: {
      size_t pairs = text.size() < 2 ? 0 : text.size() - 1;
      for (size_t i : sample_sites(iota_sites(pairs), p.count, rng))
        std::swap(s[i], s[i + 1]);
      return s;
    }
    case PerturbKind::space_edit: {
      for (size_t i : sample_sites(iota_sites(text.size() + 1), p.count, rng)) {
        size_t pos = std::min(i, s.size());
        bool del = bounded_rand(rng, 2) == 1;
        char ins = bounded_rand(rng, 2) ? '\n' : ' ';
        if (del && pos < s.size() && is_ws(s[pos]))
          s.erase(pos, 1);
        else if (del && pos > 0 && is_ws(s[pos - 1]))
          s.erase(pos - 1, 1);
        else
          s.insert(pos, 1, ins);
      }
      return s;
    }
    case PerturbKind::case_flip: {
      std::vector<size_t> sites;
      for (size_t i = 0; i < text.size(); ++i)
        if (is_alpha(text[i])) sites.push_back(i);
      for (size_t i : sample_sites(std::move(sites), p.count, rng))
        s[i] = is_upper(s[i]) ? to_lower(s[i]) : to_upper(s[i]);
      return s;
    }
    case PerturbKind::word_swap:
      return swap_adjacent(split_word_pieces(text), p.count, rng);
    case PerturbKind::synonym_replace: {
      if (!lexicon) throw Error("synonym_replace requires a lexicon");
      Pieces pieces = split_word_pieces(text);
      std::vector<size_t> sites;
      for (size_t i = 0; i < pieces.items.size(); ++i) {
        size_t b, e;
        word_core(pieces.items[i], b, e);
        if (e > b &&
            lexicon->entries.count(lower_copy(pieces.items[i].substr(b, e - b))))
          sites.push_back(i);
      }
      for (size_t i : sample_sites(std::move(sites), p.count, rng)) {
        std::string& w = pieces.items[i];
        size_t b, e;
        word_core(w, b, e);
        std::string core = w.substr(b, e - b);
        const auto& syns = lexicon->entries.at(lower_copy(core));
        std::string pick = syns[bounded_rand(rng, syns.size())];
        if (is_upper(core[0])) pick[0] = to_upper(pick[0]);
        w = w.substr(0, b) + pick + w.substr(e);
      }
      return pieces.join();
    }
    case PerturbKind::sentence_swap:
      return swap_adjacent(split_sentence_pieces(text), p.count, rng);
    case PerturbKind::paragraph_swap:
      return swap_adjacent(split_paragraph_pieces(text), p.count, rng);
    case PerturbKind::external_transform:
      return run_external(text, p.command);
  }
  throw Error("unknown perturbation kind");
}

std::vector<std::string> split_sentences(const std::string& text) {
  return split_sentence_pieces(text).items;
}

std::vector<std::string> split_paragraphs(const std::string& text) {
  std::vector<std::string> items = split_paragraph_pieces(text).items;
  // drop empty edge blocks produced by leading/trailing blank lines
  std::vector<std::string> out;
  for (auto& s : items)
    if (!s.empty()) out.push_back(std::move(s));
  return out;
}

std::vector<RobustnessPoint> robustness_sweep(
    const DetectorArtifact& a, const ProviderSet& ps,
    const std::vector<const Document*>& docs, PerturbKind kind,
    const std::vector<size_t>& counts, const std::vector<uint64_t>& seeds,
    const SynonymLexicon* lexicon, const std::string& command, size_t jobs) {
  if (docs.empty()) throw Error("robustness sweep needs documents");
  if (counts.empty()) throw Error("robustness sweep needs counts");
  if (seeds.empty()) throw Error("robustness sweep needs seeds");
  for (const Document* d : docs)
    if (d->label != Label::ai)
      throw Error("robustness sweep expects ai-labeled documents");

  std::vector<double> tokens(docs.size());
  for (size_t i = 0; i < docs.size(); ++i)
    tokens[i] = static_cast<double>(std::max<size_t>(1, tokenize(docs[i]->text).size()));

  std::vector<RobustnessPoint> out;
  out.reserve(counts.size());
  for (size_t count : counts) {
    size_t runs = docs.size() * seeds.size();
    std::vector<int> flagged(runs, 0);
    parallel_for(runs, static_cast<int>(jobs), [&](size_t idx) {
      size_t si = idx / docs.size();
      size_t di = idx % docs.size();
      Perturbation p;
      p.kind = kind;
      p.count = count;
      p.seed = seeds[si];
      p.command = command;
      std::string text = perturb(docs[di]->text, p, lexicon);
      flagged[idx] =
          classify(a, ps, docs[di]->id, text).label == Label::ai ? 1 : 0;
    });
    RobustnessPoint pt;
    pt.count = count;
    double rate = 0.0;
    for (size_t i = 0; i < docs.size(); ++i)
      rate += 100.0 * static_cast<double>(count) / tokens[i];
    pt.per100 = rate / static_cast<double>(docs.size());
    size_t hits = 0;
    for (int f : flagged) hits += static_cast<size_t>(f);
    pt.metric = static_cast<double>(hits) / static_cast<double>(runs);
    pt.n = runs;
    out.push_back(pt);
  }
  return out;
}

void write_robustness_csv(PerturbKind kind,
                          const std::vector<RobustnessPoint>& points,
                          const std::string& path) {
  std::ostringstream out;
  out << "kind,count,per_100_tokens,metric,n\n";
  for (const RobustnessPoint& p : points)
    out << perturb_kind_name(kind) << ',' << p.count << ','
        << format_double(p.per100) << ',' << format_double(p.metric) << ','
        << p.n << '\n';
  write_file_atomic(path, out.str());
}

}  // namespace specter
