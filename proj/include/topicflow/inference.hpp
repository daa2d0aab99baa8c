#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "topicflow/corpus.hpp"

namespace topicflow::inference {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class Init : std::uint32_t { Spectral = 0, Random = 1 };

std::string to_string(Init init);
Init parse_init(const std::string& name);

struct Hyperparams {
  std::size_t K = 10;
  std::optional<double> alpha;  // unset means 50 / K
  double eta = 0.01;
  std::size_t max_iterations = 1000;
  std::size_t burn_in = 200;
  Init init = Init::Spectral;
  std::uint64_t seed = 0;

  double resolved_alpha() const { return alpha.value_or(50.0 / static_cast<double>(K)); }
  // Copy with the default alpha written out.
  Hyperparams resolved() const;
  // Throws Error{InvalidHyperparams}.
  void validate() const;

  friend bool operator==(const Hyperparams&, const Hyperparams&) = default;
};

struct TopicModel {
  Hyperparams hyper;                // resolved
  Matrix phi;                       // K x V, rows sum to 1
  Matrix theta;                     // D x K, rows sum to 1
  std::vector<std::string> terms;   // vocabulary the columns of phi refer to
  std::string vocab_digest;
  std::vector<double> loglik_trace; // complete-data log-likelihood per sweep

  std::size_t num_topics() const { return static_cast<std::size_t>(phi.rows()); }
  std::size_t num_terms() const { return static_cast<std::size_t>(phi.cols()); }
  std::size_t num_docs() const { return static_cast<std::size_t>(theta.rows()); }
};

std::string vocabulary_digest(const corpus::Vocabulary& vocab);

// ---- anchor-word initialization ---------------------------------------------

// Expected word-pair co-occurrence: the mean over documents with at least two
// tokens of (c c^T - diag(c)) / (n (n - 1)). Dense V x V.
Matrix cooccurrence(const corpus::DocTermMatrix& dtm);

struct AnchorRecovery {
  std::vector<std::size_t> anchors;  // one word index per topic, in selection order
  Matrix phi;                        // K x V
};

// Anchor selection and recovery on a co-occurrence matrix. `candidates`, when
// non-empty, restricts which words may be chosen as anchors.
AnchorRecovery recover_topics(const Matrix& Q, std::size_t K, std::span<const bool> candidates = {});

struct SpectralOptions {
  // Words in fewer documents are not considered as anchors (falls back to all
  // words when fewer than K qualify).
  std::uint32_t min_anchor_doc_freq = 2;
};

Matrix spectral_init(const corpus::DocTermMatrix& dtm, std::size_t K, const SpectralOptions& opts = {});

// ---- Gibbs sampling -----------------------------------------------------------

TopicModel fit(const corpus::DocTermMatrix& dtm, const Hyperparams& hyper);

// Fold-in for an unseen document: Gibbs sweeps over its tokens with phi
// frozen; the second half of the sweeps are averaged.
std::vector<double> infer_theta(const TopicModel& model, std::span<const corpus::Entry> doc,
                                std::size_t iterations, std::uint64_t seed);

// ---- queries ---------------------------------------------------------------------

std::vector<std::size_t> top_word_indices(const TopicModel& model, std::size_t topic, std::size_t n);
std::vector<std::string> top_words(const TopicModel& model, std::size_t topic, std::size_t n);
std::vector<std::size_t> top_document_indices(const TopicModel& model, std::size_t topic, std::size_t n);
std::vector<std::string> top_documents(const TopicModel& model, std::size_t topic, std::size_t n,
                                       const corpus::DocTermMatrix& dtm);
std::vector<double> mean_topic_proportions(const TopicModel& model);

// Indices of `values` sorted descending, ties by ascending index.
std::vector<std::size_t> rank_descending(std::span<const double> values);

// Throws Error{ModelCorpusMismatch} unless the model was fitted on `dtm`'s
// vocabulary (and, when `check_docs`, has one theta row per document).
void check_compatible(const TopicModel& model, const corpus::DocTermMatrix& dtm, bool check_docs);

// ---- model container ---------------------------------------------------------------

void write_model(const TopicModel& model, std::ostream& out);
void write_model(const TopicModel& model, const std::filesystem::path& path);
TopicModel read_model(std::istream& in);
TopicModel read_model(const std::filesystem::path& path);

}  // namespace topicflow::inference
