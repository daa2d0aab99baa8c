#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <json.hpp>

namespace topicflow::corpus {

struct RawDocument {
  std::string id;
  std::string text;
  std::map<std::string, std::string> meta;
};

struct PreprocessConfig {
  std::vector<std::string> structural_phrases;
  std::vector<std::string> removal_terms;
  std::vector<std::string> collocations;
  std::unordered_set<std::string> stopwords;
  std::unordered_map<std::string, std::string> lemma_dictionary;
  std::size_t min_token_len = 3;
  char32_t join_char = U'_';

  // Throws Error{InvalidConfig} on min_token_len < 1, single-word
  // collocations or any entry containing uppercase characters.
  void validate() const;
};

struct ProcessedDocument {
  std::string id;
  std::vector<std::string> tokens;
};

class Vocabulary {
 public:
  Vocabulary() = default;
  // Sorts and deduplicates.
  explicit Vocabulary(std::vector<std::string> terms);

  std::size_t size() const noexcept { return terms_.size(); }
  const std::string& term(std::size_t i) const { return terms_.at(i); }
  const std::vector<std::string>& terms() const noexcept { return terms_; }
  std::optional<std::size_t> find(const std::string& term) const;

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) { return a.terms_ == b.terms_; }

 private:
  std::vector<std::string> terms_;
  std::unordered_map<std::string, std::size_t> index_;
};

struct Entry {
  std::uint32_t term;
  std::uint32_t count;
  friend bool operator==(const Entry&, const Entry&) = default;
};

// Sparse D x V count matrix in compressed-row form. Entries within a row are
// sorted by term index.
class DocTermMatrix {
 public:
  DocTermMatrix() = default;
  DocTermMatrix(std::vector<std::string> doc_ids, Vocabulary vocab,
                std::vector<std::vector<Entry>> rows);

  std::size_t num_docs() const noexcept { return doc_ids_.size(); }
  std::size_t num_terms() const noexcept { return vocab_.size(); }
  std::uint64_t total_tokens() const noexcept { return total_tokens_; }
  const std::vector<std::string>& doc_ids() const noexcept { return doc_ids_; }
  const Vocabulary& vocab() const noexcept { return vocab_; }

  std::span<const Entry> row(std::size_t d) const {
    return {entries_.data() + offsets_[d], offsets_[d + 1] - offsets_[d]};
  }
  std::uint64_t doc_length(std::size_t d) const { return doc_lengths_[d]; }
  std::uint32_t count(std::size_t d, std::size_t v) const;
  // Number of documents containing each term.
  std::vector<std::uint32_t> document_frequencies() const;
  std::size_t nnz() const noexcept { return entries_.size(); }

  // Rows `docs` (in that order) over the same vocabulary. Columns may become
  // empty; used for train/held-out splits, which must keep the vocabulary.
  DocTermMatrix select_rows(std::span<const std::size_t> docs) const;

  // Throws Error{InvalidDtm} if a row or column is empty.
  void check_invariants() const;

  friend bool operator==(const DocTermMatrix& a, const DocTermMatrix& b) {
    return a.doc_ids_ == b.doc_ids_ && a.vocab_ == b.vocab_ && a.offsets_ == b.offsets_ &&
           a.entries_ == b.entries_;
  }

 private:
  std::vector<std::string> doc_ids_;
  Vocabulary vocab_;
  std::vector<std::size_t> offsets_{0};
  std::vector<Entry> entries_;
  std::vector<std::uint64_t> doc_lengths_;
  std::uint64_t total_tokens_ = 0;
};

struct BuildResult {
  DocTermMatrix dtm;
  std::vector<std::string> dropped;  // ids of documents left without tokens
};

struct CorpusStats {
  std::size_t documents = 0;
  std::size_t terms = 0;
  std::uint64_t tokens = 0;
  std::uint64_t min_doc_length = 0;
  std::uint64_t max_doc_length = 0;
  double mean_doc_length = 0.0;
  double median_doc_length = 0.0;
};

std::vector<RawDocument> dedupe(std::span<const RawDocument> docs);
ProcessedDocument preprocess(const RawDocument& doc, const PreprocessConfig& config);
BuildResult build_dtm(std::span<const ProcessedDocument> docs);
CorpusStats corpus_stats(const DocTermMatrix& dtm);

// Digest key used by dedupe: lowercase, whitespace runs collapsed, trimmed.
std::string normalized_text(const std::string& text);

// ---- files -----------------------------------------------------------------

// One JSON object per line: {"id": ..., "text": ..., "meta": {...}}.
std::vector<RawDocument> read_corpus(const std::filesystem::path& path);
std::vector<RawDocument> parse_corpus(std::istream& in);

// Declarative JSON config. Relative data-file paths resolve against the
// config file's directory.
PreprocessConfig load_config(const std::filesystem::path& path);
PreprocessConfig parse_config(const nlohmann::json& j, const std::filesystem::path& base_dir);
// Fully expanded config (stopwords listed, lemma dictionary digested), the
// input to the run manifest's config digest.
nlohmann::json resolved_config(const PreprocessConfig& config);

std::unordered_set<std::string> read_word_list(const std::filesystem::path& path);
std::unordered_map<std::string, std::string> read_lemma_dictionary(const std::filesystem::path& path);

// Binary DTM container: "TFDTM\0\0\0" magic, u32 version, D, V, total tokens,
// vocabulary block, document-id block, triplet block. Little endian.
void write_dtm(const DocTermMatrix& dtm, std::ostream& out);
void write_dtm(const DocTermMatrix& dtm, const std::filesystem::path& path);
DocTermMatrix read_dtm(std::istream& in);
DocTermMatrix read_dtm(const std::filesystem::path& path);
// Inspection format: header comment lines, then "doc_id<TAB>term<TAB>count".
void export_dtm_text(const DocTermMatrix& dtm, std::ostream& out);

nlohmann::json stats_to_json(const CorpusStats& stats);

}  // namespace topicflow::corpus
