#include "storyweaver/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <cctype>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "storyweaver/errors.hpp"
#include "storyweaver/log.hpp"

namespace storyweaver {

Corpus::Corpus(std::vector<std::string> vocabulary, std::vector<Document> documents)
    : vocabulary_(std::move(vocabulary)), documents_(std::move(documents)) {
  std::unordered_set<std::string> seen_ids;
  doc_term_counts_.reserve(documents_.size());
  for (const auto& doc : documents_) {
    if (!seen_ids.insert(doc.id).second) throw ParameterError("duplicate document id: " + doc.id);
    if (doc.tokens.empty()) throw ParameterError("document has no tokens: " + doc.id);
    std::map<std::size_t, std::size_t> counts;
    for (std::size_t w : doc.tokens) {
      if (w >= vocabulary_.size()) {
        throw ParameterError("token index out of range in document " + doc.id);
      }
      ++counts[w];
    }
    total_tokens_ += doc.tokens.size();
    doc_term_counts_.push_back(std::move(counts));
  }
}

std::optional<std::size_t> Corpus::find(std::string_view id) const {
  for (std::size_t i = 0; i < documents_.size(); ++i) {
    if (documents_[i].id == id) return i;
  }
  return std::nullopt;
}

std::size_t Corpus::index_of(std::string_view id) const {
  if (auto i = find(id)) return *i;
  throw NotFoundError("unknown document id: " + std::string(id));
}

bool Corpus::shares_term(std::size_t a, std::size_t b) const {
  const auto& ca = doc_term_counts_.at(a);
  const auto& cb = doc_term_counts_.at(b);
  auto ia = ca.begin();
  auto ib = cb.begin();
  while (ia != ca.end() && ib != cb.end()) {
    if (ia->first == ib->first) return true;
    if (ia->first < ib->first) {
      ++ia;
    } else {
      ++ib;
    }
  }
  return false;
}

bool operator==(const Corpus& a, const Corpus& b) {
  if (a.vocabulary_ != b.vocabulary_ || a.documents_.size() != b.documents_.size()) return false;
  for (std::size_t i = 0; i < a.documents_.size(); ++i) {
    if (a.documents_[i].id != b.documents_[i].id) return false;
    if (a.documents_[i].tokens != b.documents_[i].tokens) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// Tokenization

bool is_stop_word(std::string_view word) {
  static const std::unordered_set<std::string_view> kStopWords = {
      "a",       "about",   "above",  "after",   "again",   "against", "all",     "am",
      "an",      "and",     "any",    "are",     "as",      "at",      "be",      "because",
      "been",    "before",  "being",  "below",   "between", "both",    "but",     "by",
      "can",     "could",   "did",    "do",      "does",    "doing",   "down",    "during",
      "each",    "few",     "for",    "from",    "further", "had",     "has",     "have",
      "having",  "he",      "her",    "here",    "hers",    "him",     "his",     "how",
      "if",      "in",      "into",   "is",      "it",      "its",     "itself",  "just",
      "me",      "might",   "more",   "most",    "must",    "my",      "no",      "nor",
      "not",     "of",      "off",    "on",      "once",    "only",    "or",      "other",
      "our",     "ours",    "out",    "over",    "own",     "same",    "shall",   "she",
      "should",  "so",      "some",   "such",    "than",    "that",    "the",     "their",
      "theirs",  "them",    "then",   "there",   "these",   "they",    "this",    "those",
      "through", "to",      "too",    "under",   "until",   "up",      "us",      "very",
      "was",     "we",      "were",   "what",    "when",    "where",   "which",   "while",
      "who",     "whom",    "why",    "will",    "with",    "would",   "you",     "your",
      "yours",   "also",    "may",    "into",    "upon",    "whose",   "yet",     "i"};
  return kStopWords.count(word) > 0;
}

std::vector<std::string> tokenize(std::string_view text, const TokenizerOptions& options) {
  std::vector<std::string> out;
  std::string current;
  auto flush = [&] {
    if (current.size() >= options.min_length &&
        !(options.remove_stop_words && is_stop_word(current))) {
      out.push_back(options.stemmer ? options.stemmer(current) : current);
    }
    current.clear();
  };
  for (char ch : text) {
    const auto uc = static_cast<unsigned char>(ch);
    if (std::isalnum(uc)) {
      current.push_back(static_cast<char>(std::tolower(uc)));
    } else {
      flush();
    }
  }
  flush();
  return out;
}

Corpus build_corpus(const std::vector<RawDocument>& raw, const TokenizerOptions& options) {
  std::vector<std::string> vocabulary;
  std::unordered_map<std::string, std::size_t> index;
  std::vector<Document> documents;
  for (const auto& r : raw) {
    auto words = tokenize(r.text, options);
    if (words.empty()) {
      warn("document '" + r.id + "' is empty after tokenization; skipped");
      continue;
    }
    Document doc{r.id, {}, r.text};
    doc.tokens.reserve(words.size());
    for (auto& w : words) {
      auto [it, inserted] = index.try_emplace(w, vocabulary.size());
      if (inserted) vocabulary.push_back(w);
      doc.tokens.push_back(it->second);
    }
    documents.push_back(std::move(doc));
  }
  return Corpus(std::move(vocabulary), std::move(documents));
}

namespace {

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestionError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<RawDocument> read_directory(const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".txt") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<RawDocument> raw;
  raw.reserve(files.size());
  for (const auto& f : files) raw.push_back({f.stem().string(), read_file(f)});
  return raw;
}

std::vector<RawDocument> read_jsonl(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw IngestionError("cannot read " + file.string());
  std::vector<RawDocument> raw;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      auto j = nlohmann::json::parse(line);
      raw.push_back({j.at("id").get<std::string>(), j.at("text").get<std::string>()});
    } catch (const nlohmann::json::exception& e) {
      throw IngestionError(file.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return raw;
}

}  // namespace

Corpus ingest(const std::filesystem::path& source, const TokenizerOptions& options) {
  std::error_code ec;
  std::vector<RawDocument> raw;
  if (std::filesystem::is_directory(source, ec)) {
    raw = read_directory(source);
  } else if (std::filesystem::is_regular_file(source, ec)) {
    raw = read_jsonl(source);
  } else {
    throw IngestionError("source not readable: " + source.string());
  }
  std::set<std::string> ids;
  for (const auto& r : raw) {
    if (!ids.insert(r.id).second) throw IngestionError("duplicate document id: " + r.id);
  }
  Corpus corpus = build_corpus(raw, options);
  if (corpus.size() < 2) {
    throw IngestionError("need at least 2 non-empty documents, found " +
                         std::to_string(corpus.size()));
  }
  return corpus;
}

// ---------------------------------------------------------------------------
// Gini filtering

double gini_coefficient(const std::vector<double>& values) {
  if (values.empty()) return 0.0;
  std::vector<double> sorted = values;
  std::sort(sorted.begin(), sorted.end());
  const double n = static_cast<double>(sorted.size());
  const double total = std::accumulate(sorted.begin(), sorted.end(), 0.0);
  if (total <= 0.0) return 0.0;
  // G = sum_i (2i - n - 1) x_(i) / (n * sum x), ranks 1-based.
  double weighted = 0.0;
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    weighted += (2.0 * static_cast<double>(i + 1) - n - 1.0) * sorted[i];
  }
  return weighted / (n * total);
}

Corpus gini_filter(const Corpus& corpus, double fraction, GiniDirection direction) {
  if (!(fraction >= 0.0) || fraction >= 1.0) {
    throw ParameterError("gini fraction must lie in [0, 1)");
  }
  if (corpus.size() == 0) throw ParameterError("gini_filter on an empty corpus");
  const std::size_t m = corpus.vocabulary_size();
  const auto to_remove = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(m)));
  if (to_remove == 0) return corpus;

  std::vector<double> gini(m);
  std::vector<double> column(corpus.size());
  for (std::size_t w = 0; w < m; ++w) {
    for (std::size_t d = 0; d < corpus.size(); ++d) {
      const auto& counts = corpus.term_counts(d);
      auto it = counts.find(w);
      column[d] = it == counts.end() ? 0.0 : static_cast<double>(it->second);
    }
    gini[w] = gini_coefficient(column);
  }
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return direction == GiniDirection::kRemoveUniform ? gini[a] < gini[b] : gini[a] > gini[b];
  });
  std::vector<bool> removed(m, false);
  for (std::size_t i = 0; i < to_remove; ++i) removed[order[i]] = true;

  std::vector<std::size_t> remap(m, m);
  std::vector<std::string> vocabulary;
  for (std::size_t w = 0; w < m; ++w) {
    if (removed[w]) continue;
    remap[w] = vocabulary.size();
    vocabulary.push_back(corpus.vocabulary()[w]);
  }
  std::vector<Document> documents;
  for (const auto& doc : corpus.documents()) {
    Document out{doc.id, {}, doc.raw_text};
    for (std::size_t w : doc.tokens) {
      if (!removed[w]) out.tokens.push_back(remap[w]);
    }
    if (out.tokens.empty()) {
      warn("document '" + doc.id + "' is empty after Gini filtering; dropped");
      continue;
    }
    documents.push_back(std::move(out));
  }
  return Corpus(std::move(vocabulary), std::move(documents));
}

// ---------------------------------------------------------------------------
// Synthetic corpora

namespace {

const std::vector<std::vector<std::string>>& walkthrough_themes() {
  static const std::vector<std::vector<std::string>> kThemes = {
      {"nation", "terror", "avert", "orange"},
      {"pilot", "flight", "visa", "school"},
      {"toxin", "subway", "vial", "attack"},
      {"wire", "account", "transfer", "cash"},
      {"ski", "tourist", "destination", "winter"},
      {"hotel", "lodge", "guest", "booking"},
      {"bank", "red", "truck", "aspen"},
      {"chemical", "factory", "recently", "hiring"},
      {"border", "port", "cargo", "container"},
  };
  return kThemes;
}

std::string noise_term(std::size_t doc, std::size_t k) {
  std::string name = "noise" + std::to_string(doc + 1);
  name.push_back(static_cast<char>('a' + (k % 26)));
  if (k >= 26) name += std::to_string(k / 26);
  return name;
}

}  // namespace

std::vector<std::vector<std::size_t>> random_mixing(std::size_t num_docs, std::size_t num_themes,
                                                    std::uint64_t seed) {
  if (num_themes == 0) throw ParameterError("num_themes must be positive");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, num_themes - 1);
  std::bernoulli_distribution two(0.5);
  std::vector<std::vector<std::size_t>> mixing(num_docs);
  for (auto& themes : mixing) {
    themes.push_back(pick(rng));
    if (num_themes > 1 && two(rng)) {
      std::size_t second = pick(rng);
      while (second == themes.front()) second = pick(rng);
      themes.push_back(second);
    }
  }
  return mixing;
}

SyntheticSpec toy_spec(std::uint64_t seed) {
  SyntheticSpec spec;
  spec.rng_seed = seed;
  spec.mixing = random_mixing(spec.num_docs, spec.num_themes, seed ^ 0x9e3779b97f4a7c15ULL);
  // Published documents, 1-based document and theme numbers.
  const std::vector<std::tuple<std::size_t, std::size_t, std::size_t>> planted = {
      {1, 5, 6}, {4, 5, 8}, {22, 1, 8}, {23, 1, 3}, {27, 1, 7}, {43, 5, 7}};
  for (auto [doc, p, q] : planted) spec.mixing[doc - 1] = {p - 1, q - 1};
  spec.theme_terms = walkthrough_themes();
  return spec;
}

Corpus generate_synthetic(const SyntheticSpec& spec) {
  if (spec.num_docs == 0 || spec.num_themes == 0 || spec.terms_per_theme == 0) {
    throw ParameterError("synthetic spec needs positive document, theme and term counts");
  }
  if (spec.mixing.size() != spec.num_docs) {
    throw ParameterError("mixing must list themes for every document");
  }
  if (!spec.theme_terms.empty()) {
    if (spec.theme_terms.size() != spec.num_themes) {
      throw ParameterError("theme_terms must name every theme");
    }
    for (const auto& terms : spec.theme_terms) {
      if (terms.size() != spec.terms_per_theme) {
        throw ParameterError("theme_terms entries must have terms_per_theme names");
      }
    }
  }
  for (const auto& themes : spec.mixing) {
    if (themes.empty() || themes.size() > 2) {
      throw ParameterError("each document mixes 1 or 2 themes");
    }
    for (std::size_t th : themes) {
      if (th >= spec.num_themes) throw ParameterError("theme index out of range");
    }
  }

  std::vector<std::string> vocabulary;
  vocabulary.reserve(spec.num_themes * spec.terms_per_theme +
                     spec.num_docs * spec.noise_terms_per_doc);
  for (std::size_t th = 0; th < spec.num_themes; ++th) {
    for (std::size_t k = 0; k < spec.terms_per_theme; ++k) {
      vocabulary.push_back(spec.theme_terms.empty()
                               ? "theme" + std::to_string(th + 1) + "term" + std::to_string(k + 1)
                               : spec.theme_terms[th][k]);
    }
  }
  const std::size_t noise_base = vocabulary.size();
  for (std::size_t d = 0; d < spec.num_docs; ++d) {
    for (std::size_t k = 0; k < spec.noise_terms_per_doc; ++k) vocabulary.push_back(noise_term(d, k));
  }
  {
    std::unordered_set<std::string> unique(vocabulary.begin(), vocabulary.end());
    if (unique.size() != vocabulary.size()) throw ParameterError("synthetic term names collide");
  }

  std::mt19937_64 rng(spec.rng_seed);
  std::uniform_int_distribution<std::size_t> pick_term(0, spec.terms_per_theme - 1);
  std::vector<Document> documents;
  documents.reserve(spec.num_docs);
  for (std::size_t d = 0; d < spec.num_docs; ++d) {
    Document doc;
    doc.id = "d" + std::to_string(d + 1);
    for (std::size_t th : spec.mixing[d]) {
      const std::size_t base = th * spec.terms_per_theme;
      if (spec.draws_per_theme == 0) {
        for (std::size_t k = 0; k < spec.terms_per_theme; ++k) doc.tokens.push_back(base + k);
      } else {
        for (std::size_t k = 0; k < spec.draws_per_theme; ++k) {
          doc.tokens.push_back(base + pick_term(rng));
        }
      }
    }
    for (std::size_t k = 0; k < spec.noise_terms_per_doc; ++k) {
      doc.tokens.push_back(noise_base + d * spec.noise_terms_per_doc + k);
    }
    std::shuffle(doc.tokens.begin(), doc.tokens.end(), rng);
    std::string text;
    for (std::size_t w : doc.tokens) {
      if (!text.empty()) text.push_back(' ');
      text += vocabulary[w];
    }
    doc.raw_text = std::move(text);
    documents.push_back(std::move(doc));
  }
  return Corpus(std::move(vocabulary), std::move(documents));
}

// ---------------------------------------------------------------------------
// Serialization

nlohmann::json corpus_to_json(const Corpus& corpus) {
  nlohmann::json docs = nlohmann::json::array();
  for (const auto& doc : corpus.documents()) {
    docs.push_back({{"id", doc.id}, {"tokens", doc.tokens}});
  }
  return {{"vocabulary", corpus.vocabulary()}, {"documents", std::move(docs)}};
}

Corpus corpus_from_json(const nlohmann::json& j) {
  try {
    auto vocabulary = j.at("vocabulary").get<std::vector<std::string>>();
    std::vector<Document> documents;
    for (const auto& d : j.at("documents")) {
      Document doc;
      doc.id = d.at("id").get<std::string>();
      doc.tokens = d.at("tokens").get<std::vector<std::size_t>>();
      std::string text;
      for (std::size_t w : doc.tokens) {
        if (w >= vocabulary.size()) throw IntegrityError("token index out of range in " + doc.id);
        if (!text.empty()) text.push_back(' ');
        text += vocabulary[w];
      }
      doc.raw_text = std::move(text);
      documents.push_back(std::move(doc));
    }
    return Corpus(std::move(vocabulary), std::move(documents));
  } catch (const nlohmann::json::exception& e) {
    throw IntegrityError(std::string("malformed corpus snapshot: ") + e.what());
  }
}

void write_text_dump(const Corpus& corpus, const std::filesystem::path& directory) {
  std::filesystem::create_directories(directory);
  for (const auto& doc : corpus.documents()) {
    std::ofstream out(directory / (doc.id + ".txt"));
    if (!out) throw IngestionError("cannot write into " + directory.string());
    for (std::size_t i = 0; i < doc.tokens.size(); ++i) {
      if (i) out << ' ';
      out << corpus.vocabulary()[doc.tokens[i]];
    }
    out << '\n';
  }
}

}  // namespace storyweaver
