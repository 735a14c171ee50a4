#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace storyweaver {

struct Document {
  std::string id;
  std::vector<std::size_t> tokens;  // vocabulary indices
  std::string raw_text;
};

// Immutable bag-of-words corpus with a dense vocabulary.
class Corpus {
 public:
  Corpus() = default;
  // Validates ids, token ranges and non-empty documents; derives term counts.
  Corpus(std::vector<std::string> vocabulary, std::vector<Document> documents);

  std::size_t size() const { return documents_.size(); }
  std::size_t vocabulary_size() const { return vocabulary_.size(); }
  std::size_t total_tokens() const { return total_tokens_; }

  const std::vector<Document>& documents() const { return documents_; }
  const Document& document(std::size_t index) const { return documents_.at(index); }
  const std::vector<std::string>& vocabulary() const { return vocabulary_; }

  // Term index -> occurrences in the given document.
  const std::map<std::size_t, std::size_t>& term_counts(std::size_t doc) const {
    return doc_term_counts_.at(doc);
  }

  std::optional<std::size_t> find(std::string_view id) const;
  std::size_t index_of(std::string_view id) const;  // throws NotFoundError

  bool shares_term(std::size_t a, std::size_t b) const;

  friend bool operator==(const Corpus& a, const Corpus& b);

 private:
  std::vector<std::string> vocabulary_;
  std::vector<Document> documents_;
  std::vector<std::map<std::size_t, std::size_t>> doc_term_counts_;
  std::size_t total_tokens_ = 0;
};

struct TokenizerOptions {
  std::size_t min_length = 2;
  bool remove_stop_words = true;
  // Optional stemming hook applied to every surviving token.
  std::function<std::string(const std::string&)> stemmer;
};

// Lowercases, splits on non-alphanumerics and drops short tokens and stop words.
std::vector<std::string> tokenize(std::string_view text, const TokenizerOptions& options = {});

bool is_stop_word(std::string_view word);

struct RawDocument {
  std::string id;
  std::string text;
};

// Builds a corpus from raw texts. Vocabulary order is first occurrence.
// Documents that tokenize to nothing are skipped with a warning.
Corpus build_corpus(const std::vector<RawDocument>& raw, const TokenizerOptions& options = {});

// Reads a directory of .txt files (sorted by filename, id = file stem) or a
// JSONL file with {"id", "text"} records. Throws IngestionError.
Corpus ingest(const std::filesystem::path& source, const TokenizerOptions& options = {});

enum class GiniDirection {
  kRemoveUniform,   // drop lowest-Gini (most evenly spread) terms first
  kRemoveConcentrated,
};

double gini_coefficient(const std::vector<double>& values);

// Removes floor(fraction * M) terms ranked by the Gini coefficient of their
// per-document counts, then re-indexes the vocabulary densely.
Corpus gini_filter(const Corpus& corpus, double fraction,
                   GiniDirection direction = GiniDirection::kRemoveUniform);

struct SyntheticSpec {
  std::size_t num_docs = 50;
  std::size_t num_themes = 9;
  std::size_t terms_per_theme = 4;
  std::size_t noise_terms_per_doc = 2;
  // One entry per document holding 1 or 2 theme indices (0-based).
  std::vector<std::vector<std::size_t>> mixing;
  // 0 includes every theme term once; otherwise terms are drawn with replacement.
  std::size_t draws_per_theme = 0;
  std::uint64_t rng_seed = 1;
  // Optional term names per theme; generated names are used when absent.
  std::vector<std::vector<std::string>> theme_terms;
};

Corpus generate_synthetic(const SyntheticSpec& spec);

// The 50-document, 9-theme corpus of the storytelling walkthrough. Documents
// d1, d4, d22, d23, d27 and d43 carry their published theme pairs; the rest
// are mixed at random from the seed.
SyntheticSpec toy_spec(std::uint64_t seed);

// Random 1-or-2 theme mixing for num_docs documents.
std::vector<std::vector<std::size_t>> random_mixing(std::size_t num_docs, std::size_t num_themes,
                                                    std::uint64_t seed);

nlohmann::json corpus_to_json(const Corpus& corpus);
Corpus corpus_from_json(const nlohmann::json& j);

// Writes one <id>.txt file per document with its tokens separated by spaces.
void write_text_dump(const Corpus& corpus, const std::filesystem::path& directory);

}  // namespace storyweaver
