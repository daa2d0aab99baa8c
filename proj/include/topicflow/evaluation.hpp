#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "topicflow/corpus.hpp"
#include "topicflow/inference.hpp"

namespace topicflow::evaluation {

inline constexpr int kSchemaVersion = 1;
inline constexpr std::size_t kWordOptions = 6;
inline constexpr std::size_t kTopicOptions = 4;
inline constexpr std::size_t kTopicOptionWords = 8;
inline constexpr double kThetaFloor = 1e-12;

// Short stable identifier of a fitted model: the first 16 hex digits of the
// SHA-256 of its serialized form.
std::string model_id(const inference::TopicModel& model);

struct WordIntrusionTask {
  std::string task_id;
  std::string model_id;
  std::size_t topic_id = 0;
  std::vector<std::string> options;
  std::size_t intruder_position = 0;
  std::uint64_t gen_seed = 0;

  friend bool operator==(const WordIntrusionTask&, const WordIntrusionTask&) = default;
};

struct TopicOption {
  std::size_t topic_id = 0;
  std::vector<std::string> words;

  friend bool operator==(const TopicOption&, const TopicOption&) = default;
};

struct TopicIntrusionTask {
  std::string task_id;
  std::string model_id;
  std::string doc_id;
  std::size_t doc_index = 0;  // theta row
  std::string snippet;
  std::vector<TopicOption> topic_options;
  std::size_t intruder_position = 0;
  std::uint64_t gen_seed = 0;

  friend bool operator==(const TopicIntrusionTask&, const TopicIntrusionTask&) = default;
};

struct IntruderRules {
  std::size_t top_words = 5;
  std::size_t min_target_rank = 50;  // 0-based rank in the target topic
  std::size_t donor_top = 10;        // must be among another topic's top words
};

// One task per topic, in topic order.
std::vector<WordIntrusionTask> gen_word_intrusion(const inference::TopicModel& model, std::uint64_t seed,
                                                  const IntruderRules& rules = {});

std::vector<TopicIntrusionTask> gen_topic_intrusion(const inference::TopicModel& model,
                                                    const corpus::DocTermMatrix& dtm,
                                                    std::span<const corpus::RawDocument> raw_docs,
                                                    std::size_t n_cases, std::uint64_t seed);

// Topics a document's intruder may be drawn from: theta ranks
// max(3, ceil(K/2)) .. K-1.
std::vector<std::size_t> intruder_pool(std::span<const double> theta_row);

// ---- responses and metrics ----------------------------------------------------

struct CoderResponse {
  std::string task_id;
  std::string coder_id;
  std::optional<std::size_t> choice;  // canonical option index; empty means SKIP
  std::string submitted_at;           // ISO 8601 UTC
  std::uint64_t shuffle_seed = 0;     // seed of the coder's display order

  bool skipped() const { return !choice.has_value(); }
  friend bool operator==(const CoderResponse&, const CoderResponse&) = default;
};

struct SessionMetrics {
  std::optional<double> model_precision;
  std::optional<double> topic_log_odds;
  std::size_t n_scored = 0;
  std::size_t n_skipped = 0;
};

// Throws UnknownTask, InvalidChoice or NoScoredResponses.
SessionMetrics model_precision(std::span<const WordIntrusionTask> tasks, std::span<const CoderResponse> responses);
SessionMetrics model_precision(std::span<const TopicIntrusionTask> tasks, std::span<const CoderResponse> responses);
SessionMetrics topic_log_odds(std::span<const TopicIntrusionTask> tasks, std::span<const CoderResponse> responses,
                              const inference::TopicModel& model);

// ---- per-coder display order -----------------------------------------------------

std::uint64_t coder_shuffle_seed(std::uint64_t gen_seed, const std::string& coder_id);
// display[i] is the canonical index of the option shown at position i.
std::vector<std::size_t> display_order(std::uint64_t shuffle_seed, std::size_t n_options);

// ---- labelling packets ------------------------------------------------------------

struct LabelDocument {
  std::string doc_id;
  double proportion = 0.0;
  std::string text;
};

struct LabelTopic {
  std::size_t topic_id = 0;
  double mean_proportion = 0.0;
  std::vector<std::string> words;
  std::vector<LabelDocument> documents;
  std::string label;
};

// Throws MissingDocument when a top document has no raw text.
std::vector<LabelTopic> label_export(const inference::TopicModel& model, const corpus::DocTermMatrix& dtm,
                                     std::span<const corpus::RawDocument> raw_docs, std::size_t n_topics = 10,
                                     std::size_t n_words = 5, std::size_t n_docs = 10);

void write_label_table(std::span<const LabelTopic> packet, std::ostream& out);

// ---- records ------------------------------------------------------------------------

nlohmann::json to_json(const WordIntrusionTask& t);
nlohmann::json to_json(const TopicIntrusionTask& t);
nlohmann::json to_json(const CoderResponse& r);
nlohmann::json to_json(const LabelTopic& t);
WordIntrusionTask word_task_from_json(const nlohmann::json& j);
TopicIntrusionTask topic_task_from_json(const nlohmann::json& j);
CoderResponse response_from_json(const nlohmann::json& j);
LabelTopic label_from_json(const nlohmann::json& j);

struct TaskSet {
  std::vector<WordIntrusionTask> word;
  std::vector<TopicIntrusionTask> topic;
};

// One record per line, each tagged with its kind and schema version.
void write_tasks(const TaskSet& tasks, std::ostream& out);
void write_tasks(const TaskSet& tasks, const std::filesystem::path& path);
TaskSet read_tasks(std::istream& in);
TaskSet read_tasks(const std::filesystem::path& path);

void write_labels(std::span<const LabelTopic> packet, std::ostream& out);
std::vector<LabelTopic> read_labels(std::istream& in);

}  // namespace topicflow::evaluation
