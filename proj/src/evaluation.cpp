#include "topicflow/evaluation.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <sstream>
#include <unordered_map>

#include "topicflow/digest.hpp"
#include "topicflow/error.hpp"
#include "topicflow/random.hpp"

namespace topicflow::evaluation {

using corpus::DocTermMatrix;
using corpus::RawDocument;
using inference::TopicModel;
using nlohmann::json;

namespace {

[[noreturn]] void fail(const std::string& code, const std::string& msg) {
  throw Error("evaluation", code, msg);
}

std::vector<double> phi_row(const TopicModel& m, std::size_t k) {
  const auto r = m.phi.row(static_cast<Eigen::Index>(k));
  return {r.begin(), r.end()};
}

std::vector<double> theta_row(const TopicModel& m, std::size_t d) {
  const auto r = m.theta.row(static_cast<Eigen::Index>(d));
  return {r.begin(), r.end()};
}

std::unordered_map<std::string, const RawDocument*> index_raw(std::span<const RawDocument> raw) {
  std::unordered_map<std::string, const RawDocument*> out;
  for (const auto& doc : raw) out.emplace(doc.id, &doc);
  return out;
}

const std::string& text_of(const std::unordered_map<std::string, const RawDocument*>& raw, const std::string& id) {
  auto it = raw.find(id);
  if (it == raw.end()) fail("MissingDocument", "no raw text for document '" + id + "'");
  return it->second->text;
}

struct Key {
  std::size_t intruder;
  std::size_t options;
};

template <typename Task>
std::unordered_map<std::string, Key> task_keys(std::span<const Task> tasks) {
  std::unordered_map<std::string, Key> keys;
  for (const auto& t : tasks) {
    if constexpr (std::is_same_v<Task, WordIntrusionTask>)
      keys[t.task_id] = {t.intruder_position, t.options.size()};
    else
      keys[t.task_id] = {t.intruder_position, t.topic_options.size()};
  }
  return keys;
}

template <typename Task>
SessionMetrics precision(std::span<const Task> tasks, std::span<const CoderResponse> responses) {
  const auto keys = task_keys(tasks);
  SessionMetrics m;
  std::size_t correct = 0;
  for (const auto& r : responses) {
    auto it = keys.find(r.task_id);
    if (it == keys.end()) fail("UnknownTask", "response for unknown task '" + r.task_id + "'");
    if (r.skipped()) {
      ++m.n_skipped;
      continue;
    }
    if (*r.choice >= it->second.options) fail("InvalidChoice", "choice out of range for task '" + r.task_id + "'");
    ++m.n_scored;
    if (*r.choice == it->second.intruder) ++correct;
  }
  if (m.n_scored == 0) fail("NoScoredResponses", "no scored responses");
  m.model_precision = static_cast<double>(correct) / static_cast<double>(m.n_scored);
  return m;
}

}  // namespace

std::string model_id(const TopicModel& model) {
  std::ostringstream out;
  inference::write_model(model, out);
  return sha256_hex(out.str()).substr(0, 16);
}

std::vector<WordIntrusionTask> gen_word_intrusion(const TopicModel& model, std::uint64_t seed,
                                                  const IntruderRules& rules) {
  const std::size_t K = model.num_topics(), V = model.num_terms();
  if (K < 2) fail("TooFewTopics", "word intrusion needs at least two topics");
  if (V < 20) fail("TooFewTerms", "word intrusion needs at least 20 terms");

  std::vector<std::vector<std::size_t>> order(K), rank(K, std::vector<std::size_t>(V));
  for (std::size_t k = 0; k < K; ++k) {
    order[k] = inference::rank_descending(phi_row(model, k));
    for (std::size_t r = 0; r < V; ++r) rank[k][order[k][r]] = r;
  }

  const std::string id = model_id(model);
  const std::uint64_t base = derive_seed(seed, "word-intrusion");
  std::vector<WordIntrusionTask> tasks;
  for (std::size_t k = 0; k < K; ++k) {
    std::vector<std::size_t> candidates;
    for (std::size_t v = 0; v < V; ++v) {
      if (rank[k][v] < rules.min_target_rank) continue;
      bool donor = false;
      for (std::size_t j = 0; j < K && !donor; ++j) donor = j != k && rank[j][v] < rules.donor_top;
      if (donor) candidates.push_back(v);
    }
    if (candidates.empty()) fail("NoValidIntruder", "no intruder word satisfies the rules for topic " + std::to_string(k));

    WordIntrusionTask t;
    t.task_id = id + ":word:" + std::to_string(k);
    t.model_id = id;
    t.topic_id = k;
    t.gen_seed = derive_seed(base, k);
    Rng rng(t.gen_seed);
    const std::size_t intruder = candidates[uniform_index(rng, candidates.size())];
    std::vector<std::size_t> words(order[k].begin(), order[k].begin() + static_cast<std::ptrdiff_t>(rules.top_words));
    words.push_back(intruder);
    shuffle(rng, std::span<std::size_t>(words));
    for (std::size_t i = 0; i < words.size(); ++i) {
      t.options.push_back(model.terms[words[i]]);
      if (words[i] == intruder) t.intruder_position = i;
    }
    tasks.push_back(std::move(t));
  }
  return tasks;
}

std::vector<std::size_t> intruder_pool(std::span<const double> theta_row) {
  const std::size_t K = theta_row.size();
  const auto ranked = inference::rank_descending(theta_row);
  const std::size_t first = std::max<std::size_t>(kTopicOptions - 1, (K + 1) / 2);
  if (first >= K) return {};
  return {ranked.begin() + static_cast<std::ptrdiff_t>(first), ranked.end()};
}

std::vector<TopicIntrusionTask> gen_topic_intrusion(const TopicModel& model, const DocTermMatrix& dtm,
                                                    std::span<const RawDocument> raw_docs, std::size_t n_cases,
                                                    std::uint64_t seed) {
  const std::size_t K = model.num_topics();
  if (K < kTopicOptions) fail("TooFewTopics", "topic intrusion needs at least four topics");
  inference::check_compatible(model, dtm, true);
  const std::size_t D = dtm.num_docs();
  if (n_cases > D) fail("TooFewDocs", "asked for " + std::to_string(n_cases) + " cases from " + std::to_string(D) + " documents");
  if (n_cases == 0) return {};

  const auto raw = index_raw(raw_docs);
  std::vector<std::size_t> docs(D);
  std::iota(docs.begin(), docs.end(), std::size_t{0});
  Rng pick(derive_seed(seed, "topic-intrusion-docs"));
  shuffle(pick, std::span<std::size_t>(docs));
  docs.resize(n_cases);

  const std::string id = model_id(model);
  const std::uint64_t base = derive_seed(seed, "topic-intrusion");
  std::vector<std::vector<std::string>> labels(K);
  for (std::size_t k = 0; k < K; ++k) labels[k] = inference::top_words(model, k, std::min(kTopicOptionWords, model.num_terms()));

  std::vector<TopicIntrusionTask> tasks;
  for (std::size_t i = 0; i < n_cases; ++i) {
    const std::size_t d = docs[i];
    TopicIntrusionTask t;
    t.task_id = id + ":topic:" + std::to_string(i);
    t.model_id = id;
    t.doc_index = d;
    t.doc_id = dtm.doc_ids()[d];
    t.snippet = text_of(raw, t.doc_id);
    t.gen_seed = derive_seed(base, i);
    Rng rng(t.gen_seed);

    const auto row = theta_row(model, d);
    const auto ranked = inference::rank_descending(row);
    const auto pool = intruder_pool(row);
    const std::size_t intruder = pool[uniform_index(rng, pool.size())];
    std::vector<std::size_t> topics(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(kTopicOptions - 1));
    topics.push_back(intruder);
    shuffle(rng, std::span<std::size_t>(topics));
    for (std::size_t j = 0; j < topics.size(); ++j) {
      t.topic_options.push_back({topics[j], labels[topics[j]]});
      if (topics[j] == intruder) t.intruder_position = j;
    }
    tasks.push_back(std::move(t));
  }
  return tasks;
}

SessionMetrics model_precision(std::span<const WordIntrusionTask> tasks, std::span<const CoderResponse> responses) {
  return precision(tasks, responses);
}

SessionMetrics model_precision(std::span<const TopicIntrusionTask> tasks, std::span<const CoderResponse> responses) {
  return precision(tasks, responses);
}

SessionMetrics topic_log_odds(std::span<const TopicIntrusionTask> tasks, std::span<const CoderResponse> responses,
                              const TopicModel& model) {
  std::unordered_map<std::string, const TopicIntrusionTask*> by_id;
  for (const auto& t : tasks) by_id[t.task_id] = &t;
  SessionMetrics m;
  double total = 0.0;
  for (const auto& r : responses) {
    auto it = by_id.find(r.task_id);
    if (it == by_id.end()) fail("UnknownTask", "response for unknown task '" + r.task_id + "'");
    const TopicIntrusionTask& t = *it->second;
    if (r.skipped()) {
      ++m.n_skipped;
      continue;
    }
    if (*r.choice >= t.topic_options.size()) fail("InvalidChoice", "choice out of range for task '" + r.task_id + "'");
    if (t.doc_index >= model.num_docs())
      fail("ModelCorpusMismatch", "task '" + t.task_id + "' refers to a document the model does not have");
    auto theta = [&](std::size_t option) {
      const std::size_t k = t.topic_options[option].topic_id;
      if (k >= model.num_topics()) fail("ModelCorpusMismatch", "task '" + t.task_id + "' refers to a missing topic");
      return std::max(model.theta(static_cast<Eigen::Index>(t.doc_index), static_cast<Eigen::Index>(k)), kThetaFloor);
    };
    total += std::log(theta(t.intruder_position)) - std::log(theta(*r.choice));
    ++m.n_scored;
  }
  if (m.n_scored == 0) fail("NoScoredResponses", "no scored responses");
  m.topic_log_odds = total / static_cast<double>(m.n_scored);
  return m;
}

std::uint64_t coder_shuffle_seed(std::uint64_t gen_seed, const std::string& coder_id) {
  return derive_seed(gen_seed, coder_id);
}

std::vector<std::size_t> display_order(std::uint64_t shuffle_seed, std::size_t n_options) {
  std::vector<std::size_t> order(n_options);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(shuffle_seed);
  shuffle(rng, std::span<std::size_t>(order));
  return order;
}

std::vector<LabelTopic> label_export(const TopicModel& model, const DocTermMatrix& dtm,
                                     std::span<const RawDocument> raw_docs, std::size_t n_topics, std::size_t n_words,
                                     std::size_t n_docs) {
  inference::check_compatible(model, dtm, true);
  const auto raw = index_raw(raw_docs);
  const auto mean = inference::mean_topic_proportions(model);
  const auto order = inference::rank_descending(mean);
  n_topics = std::min(n_topics, order.size());
  std::vector<LabelTopic> packet;
  for (std::size_t i = 0; i < n_topics; ++i) {
    const std::size_t k = order[i];
    LabelTopic t;
    t.topic_id = k;
    t.mean_proportion = mean[k];
    t.words = inference::top_words(model, k, std::min(n_words, model.num_terms()));
    for (std::size_t d : inference::top_document_indices(model, k, std::min(n_docs, model.num_docs()))) {
      const std::string& doc_id = dtm.doc_ids()[d];
      t.documents.push_back(
          {doc_id, model.theta(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(k)), text_of(raw, doc_id)});
    }
    packet.push_back(std::move(t));
  }
  return packet;
}

void write_label_table(std::span<const LabelTopic> packet, std::ostream& out) {
  char buf[64];
  for (std::size_t i = 0; i < packet.size(); ++i) {
    const auto& t = packet[i];
    std::snprintf(buf, sizeof buf, "%.4f", t.mean_proportion);
    out << "Topic " << t.topic_id << "  (rank " << i + 1 << ", mean proportion " << buf << ")\n";
    out << "  words: ";
    for (std::size_t w = 0; w < t.words.size(); ++w) out << (w ? ", " : "") << t.words[w];
    out << "\n  label: " << (t.label.empty() ? "________________" : t.label) << "\n";
    for (std::size_t d = 0; d < t.documents.size(); ++d) {
      std::snprintf(buf, sizeof buf, "%.4f", t.documents[d].proportion);
      out << "  " << d + 1 << ". [" << t.documents[d].doc_id << ", " << buf << "] " << t.documents[d].text << "\n";
    }
    out << "\n";
  }
}

// ---- records ------------------------------------------------------------------------

namespace {

json header(const char* kind) { return {{"kind", kind}, {"schema", kSchemaVersion}}; }

template <typename T>
T field(const json& j, const char* name) {
  if (!j.contains(name)) fail("CorruptInput", std::string("record lacks '") + name + "'");
  try {
    return j.at(name).get<T>();
  } catch (const json::exception&) {
    fail("CorruptInput", std::string("bad value for '") + name + "'");
  }
}

void expect_kind(const json& j, const std::string& kind) {
  if (!j.is_object()) fail("CorruptInput", "record is not an object");
  if (field<std::string>(j, "kind") != kind) fail("CorruptInput", "expected a " + kind + " record");
  if (field<int>(j, "schema") != kSchemaVersion)
    fail("CorruptInput", "unsupported schema version " + j.at("schema").dump());
}

}  // namespace

json to_json(const WordIntrusionTask& t) {
  json j = header("word_intrusion");
  j["task_id"] = t.task_id;
  j["model_id"] = t.model_id;
  j["topic_id"] = t.topic_id;
  j["options"] = t.options;
  j["intruder_position"] = t.intruder_position;
  j["gen_seed"] = t.gen_seed;
  return j;
}

json to_json(const TopicIntrusionTask& t) {
  json j = header("topic_intrusion");
  j["task_id"] = t.task_id;
  j["model_id"] = t.model_id;
  j["doc_id"] = t.doc_id;
  j["doc_index"] = t.doc_index;
  j["snippet"] = t.snippet;
  j["topic_options"] = json::array();
  for (const auto& o : t.topic_options) j["topic_options"].push_back({{"topic_id", o.topic_id}, {"words", o.words}});
  j["intruder_position"] = t.intruder_position;
  j["gen_seed"] = t.gen_seed;
  return j;
}

json to_json(const CoderResponse& r) {
  json j = header("response");
  j["task_id"] = r.task_id;
  j["coder_id"] = r.coder_id;
  j["choice"] = r.choice ? json(*r.choice) : json("SKIP");
  j["submitted_at"] = r.submitted_at;
  j["shuffle_seed"] = r.shuffle_seed;
  return j;
}

json to_json(const LabelTopic& t) {
  json j = header("label_topic");
  j["topic_id"] = t.topic_id;
  j["mean_proportion"] = t.mean_proportion;
  j["words"] = t.words;
  j["documents"] = json::array();
  for (const auto& d : t.documents)
    j["documents"].push_back({{"doc_id", d.doc_id}, {"proportion", d.proportion}, {"text", d.text}});
  j["label"] = t.label;
  return j;
}

WordIntrusionTask word_task_from_json(const json& j) {
  expect_kind(j, "word_intrusion");
  WordIntrusionTask t;
  t.task_id = field<std::string>(j, "task_id");
  t.model_id = field<std::string>(j, "model_id");
  t.topic_id = field<std::size_t>(j, "topic_id");
  t.options = field<std::vector<std::string>>(j, "options");
  t.intruder_position = field<std::size_t>(j, "intruder_position");
  t.gen_seed = field<std::uint64_t>(j, "gen_seed");
  if (t.options.size() != kWordOptions || t.intruder_position >= t.options.size())
    fail("CorruptInput", "malformed word intrusion task '" + t.task_id + "'");
  return t;
}

TopicIntrusionTask topic_task_from_json(const json& j) {
  expect_kind(j, "topic_intrusion");
  TopicIntrusionTask t;
  t.task_id = field<std::string>(j, "task_id");
  t.model_id = field<std::string>(j, "model_id");
  t.doc_id = field<std::string>(j, "doc_id");
  t.doc_index = field<std::size_t>(j, "doc_index");
  t.snippet = field<std::string>(j, "snippet");
  for (const auto& o : field<json>(j, "topic_options"))
    t.topic_options.push_back({field<std::size_t>(o, "topic_id"), field<std::vector<std::string>>(o, "words")});
  t.intruder_position = field<std::size_t>(j, "intruder_position");
  t.gen_seed = field<std::uint64_t>(j, "gen_seed");
  if (t.topic_options.size() != kTopicOptions || t.intruder_position >= t.topic_options.size())
    fail("CorruptInput", "malformed topic intrusion task '" + t.task_id + "'");
  return t;
}

CoderResponse response_from_json(const json& j) {
  expect_kind(j, "response");
  CoderResponse r;
  r.task_id = field<std::string>(j, "task_id");
  r.coder_id = field<std::string>(j, "coder_id");
  const json& c = field<json>(j, "choice");
  if (c.is_string() && c.get<std::string>() == "SKIP")
    r.choice.reset();
  else if (c.is_number_unsigned())
    r.choice = c.get<std::size_t>();
  else
    fail("CorruptInput", "choice must be an option index or \"SKIP\"");
  r.submitted_at = field<std::string>(j, "submitted_at");
  r.shuffle_seed = field<std::uint64_t>(j, "shuffle_seed");
  return r;
}

LabelTopic label_from_json(const json& j) {
  expect_kind(j, "label_topic");
  LabelTopic t;
  t.topic_id = field<std::size_t>(j, "topic_id");
  t.mean_proportion = field<double>(j, "mean_proportion");
  t.words = field<std::vector<std::string>>(j, "words");
  for (const auto& d : field<json>(j, "documents"))
    t.documents.push_back({field<std::string>(d, "doc_id"), field<double>(d, "proportion"), field<std::string>(d, "text")});
  t.label = field<std::string>(j, "label");
  return t;
}

namespace {

template <typename F>
void for_each_record(std::istream& in, F&& f) {
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error&) {
      fail("CorruptInput", "line " + std::to_string(n) + " is not valid JSON");
    }
    f(j);
  }
}

}  // namespace

void write_tasks(const TaskSet& tasks, std::ostream& out) {
  for (const auto& t : tasks.word) out << to_json(t).dump() << '\n';
  for (const auto& t : tasks.topic) out << to_json(t).dump() << '\n';
}

void write_tasks(const TaskSet& tasks, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail("IoError", "cannot write " + path.string());
  write_tasks(tasks, out);
  if (!out) fail("IoError", "write failed for " + path.string());
}

TaskSet read_tasks(std::istream& in) {
  TaskSet set;
  for_each_record(in, [&](const json& j) {
    const std::string kind = j.is_object() ? j.value("kind", "") : "";
    if (kind == "word_intrusion")
      set.word.push_back(word_task_from_json(j));
    else if (kind == "topic_intrusion")
      set.topic.push_back(topic_task_from_json(j));
    else
      fail("CorruptInput", "unknown record kind '" + kind + "'");
  });
  return set;
}

TaskSet read_tasks(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail("IoError", "cannot read " + path.string());
  return read_tasks(in);
}

void write_labels(std::span<const LabelTopic> packet, std::ostream& out) {
  for (const auto& t : packet) out << to_json(t).dump() << '\n';
}

std::vector<LabelTopic> read_labels(std::istream& in) {
  std::vector<LabelTopic> out;
  for_each_record(in, [&](const json& j) { out.push_back(label_from_json(j)); });
  return out;
}

}  // namespace topicflow::evaluation
