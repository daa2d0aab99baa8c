#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "topicflow/corpus.hpp"
#include "topicflow/inference.hpp"

namespace topicflow::diagnostics {

inline constexpr std::size_t kDefaultTopWords = 10;
inline constexpr double kDefaultFrexWeight = 0.7;
inline constexpr std::size_t kDefaultFoldInIterations = 100;

// Document completion protocol: a seeded fraction of documents is withheld
// from training; each withheld document's tokens are split (seeded) into an
// observed part, used to infer theta, and an evaluated part.
struct HeldoutSplit {
  double heldout_doc_fraction = 0.1;
  double word_split_fraction = 0.5;
  std::uint64_t seed = 0;

  void validate() const;  // Error{InvalidArgument} unless both fractions are in (0, 1)
};

struct HeldoutDoc {
  std::size_t doc_index;  // row in the original matrix
  std::vector<corpus::Entry> observed;
  std::vector<corpus::Entry> evaluated;
};

struct HeldoutSet {
  corpus::DocTermMatrix training;
  std::vector<std::size_t> training_docs;
  std::vector<HeldoutDoc> docs;
  std::vector<std::string> skipped;  // held-out documents with fewer than two tokens
};

struct HeldoutResult {
  double llpw = 0.0;
  std::uint64_t evaluated_tokens = 0;
  std::size_t documents = 0;
  std::vector<std::string> skipped;
};

// Throws Error{EmptyHeldout} when no held-out document has two or more tokens.
HeldoutSet make_heldout(const corpus::DocTermMatrix& dtm, const HeldoutSplit& split);

// Per-word log-likelihood of the evaluated halves under `model`.
HeldoutResult evaluate_heldout(const inference::TopicModel& model, const HeldoutSet& set,
                               std::size_t iterations, std::uint64_t seed);

// Fit on the training part with `hyper`, then evaluate.
HeldoutResult heldout_log_likelihood(const corpus::DocTermMatrix& dtm, const inference::Hyperparams& hyper,
                                     const HeldoutSplit& split);

// Per topic: sum over ordered top-word pairs l < m of
// log((D(v_m, v_l) + 1) / D(v_l)), with D counting documents.
std::vector<double> semantic_coherence(const inference::TopicModel& model, const corpus::DocTermMatrix& dtm,
                                       std::size_t top_n = kDefaultTopWords);

// Mean FREX over each topic's top words.
std::vector<double> exclusivity(const inference::TopicModel& model, std::size_t top_n = kDefaultTopWords,
                                double weight = kDefaultFrexWeight);

// Pearson dispersion of the counts around their expectations N_d q_{d,v},
// divided by sum_d (V_d - K) (clamped to at least 1).
double residual_dispersion(const inference::TopicModel& model, const corpus::DocTermMatrix& dtm);

struct DiagnosticsRow {
  std::size_t K = 0;
  double heldout_llpw = 0.0;
  double residual_dispersion = 0.0;
  double mean_coherence = 0.0;
  double mean_exclusivity = 0.0;
  double wall_time_ms = 0.0;

  friend bool operator==(const DiagnosticsRow&, const DiagnosticsRow&) = default;
};

struct TopicScores {
  std::size_t K = 0;
  std::vector<double> coherence;
  std::vector<double> exclusivity;

  friend bool operator==(const TopicScores&, const TopicScores&) = default;
};

struct Evaluation {
  DiagnosticsRow row;
  TopicScores topics;
};

// Diagnostics of one configuration: fit on the training part of `set`,
// held-out likelihood on the withheld part, residuals on the training
// matrix, coherence on the full matrix, exclusivity on phi alone.
Evaluation evaluate_configuration(const corpus::DocTermMatrix& dtm, const HeldoutSet& set,
                                  const inference::Hyperparams& hyper, bool record_timing = true);

struct SearchOptions {
  std::size_t threads = 1;
  bool record_timing = true;
};

struct SearchResult {
  std::vector<DiagnosticsRow> rows;   // ordered by K
  std::vector<TopicScores> topics;    // same order
};

// Seed of the fit for grid entry K.
std::uint64_t grid_seed(std::uint64_t base_seed, std::size_t K);

SearchResult search_k(const corpus::DocTermMatrix& dtm, std::span<const std::size_t> Ks,
                      const inference::Hyperparams& hyper_template, const HeldoutSplit& split,
                      const SearchOptions& options = {});

// ---- report tables --------------------------------------------------------------

enum class ReportFormat { Tsv, Csv };
ReportFormat parse_format(const std::string& name);

void write_diagnostics_table(std::span<const DiagnosticsRow> rows, std::ostream& out, ReportFormat format);
void write_topic_table(std::span<const TopicScores> topics, std::ostream& out, ReportFormat format);
std::vector<DiagnosticsRow> read_diagnostics_table(std::istream& in, ReportFormat format);
std::vector<TopicScores> read_topic_table(std::istream& in, ReportFormat format);

// Writes <stem>.diagnostics.<ext> and <stem>.topics.<ext>; returns both paths.
std::vector<std::filesystem::path> emit_report(std::span<const DiagnosticsRow> rows,
                                               std::span<const TopicScores> topics,
                                               const std::filesystem::path& stem, ReportFormat format);

}  // namespace topicflow::diagnostics
