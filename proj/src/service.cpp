#include "topicflow/service.hpp"

#include <httplib.h>

#include <cstdlib>
#include <fstream>
#include <set>
#include <thread>

#include "topicflow/error.hpp"
#include "topicflow/manifest.hpp"
#include "topicflow/response_store.hpp"

namespace topicflow::harness {

using evaluation::CoderResponse;
using evaluation::TaskSet;
using nlohmann::json;

namespace {

[[noreturn]] void fail(const std::string& code, const std::string& msg) { throw Error("harness", code, msg); }

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  const std::filesystem::path path(p);
  return path.is_absolute() ? path : base / path;
}

json metrics_json(const evaluation::SessionMetrics& m) {
  json j;
  j["model_precision"] = m.model_precision ? json(*m.model_precision) : json(nullptr);
  if (m.topic_log_odds) j["topic_log_odds"] = *m.topic_log_odds;
  j["n_scored"] = m.n_scored;
  j["n_skipped"] = m.n_skipped;
  return j;
}

template <typename F>
evaluation::SessionMetrics scored_or_empty(std::span<const CoderResponse> responses, F&& score) {
  try {
    return score();
  } catch (const Error& e) {
    if (e.code() != "NoScoredResponses") throw;
    evaluation::SessionMetrics m;
    m.n_skipped = responses.size();
    return m;
  }
}

}  // namespace

ServiceConfig load_service_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail("IoError", "cannot read " + path.string());
  const auto base = path.parent_path();
  ServiceConfig config;
  try {
    const json j = json::parse(in);
    config.admin_token = j.value("admin_token", "");
    if (j.contains("ui_dir")) config.ui_dir = resolve(base, j.at("ui_dir").get<std::string>());
    for (const auto& s : j.at("sessions")) {
      SessionSpec spec;
      spec.id = s.at("id").get<std::string>();
      spec.tasks = resolve(base, s.at("tasks").get<std::string>());
      spec.model = resolve(base, s.at("model").get<std::string>());
      spec.responses = resolve(base, s.at("responses").get<std::string>());
      spec.coders = s.at("coders").get<std::map<std::string, std::string>>();
      if (spec.id.empty() || spec.coders.empty()) fail("InvalidConfig", "session needs an id and at least one coder");
      for (const auto& other : config.sessions)
        if (other.id == spec.id) fail("InvalidConfig", "duplicate session id '" + spec.id + "'");
      config.sessions.push_back(std::move(spec));
    }
  } catch (const json::exception& e) {
    fail("InvalidConfig", "malformed session config: " + std::string(e.what()));
  }
  if (const char* token = std::getenv("TOPICFLOW_ADMIN_TOKEN"); token && *token) config.admin_token = token;
  return config;
}

const SessionSpec& find_session(const ServiceConfig& config, const std::string& id) {
  for (const auto& s : config.sessions)
    if (s.id == id) return s;
  fail("UnknownSession", "no session '" + id + "'");
}

std::filesystem::path closed_marker(const SessionSpec& session) {
  auto p = session.responses;
  p += ".closed";
  return p;
}

bool is_closed(const SessionSpec& session) { return std::filesystem::exists(closed_marker(session)); }

void close_session(const SessionSpec& session) {
  if (is_closed(session)) return;
  std::ofstream out(closed_marker(session));
  out << utc_timestamp() << '\n';
  if (!out) fail("IoError", "cannot write " + closed_marker(session).string());
}

json compute_metrics(const TaskSet& tasks, std::span<const CoderResponse> responses,
                     const inference::TopicModel& model) {
  std::set<std::string> word_ids, topic_ids;
  for (const auto& t : tasks.word) word_ids.insert(t.task_id);
  for (const auto& t : tasks.topic) topic_ids.insert(t.task_id);
  std::vector<CoderResponse> word, topic;
  for (const auto& r : responses) {
    if (word_ids.count(r.task_id))
      word.push_back(r);
    else if (topic_ids.count(r.task_id))
      topic.push_back(r);
    else
      throw Error("evaluation", "UnknownTask", "response for unknown task '" + r.task_id + "'");
  }
  const auto w = scored_or_empty(word, [&] { return evaluation::model_precision(tasks.word, word); });
  auto t = scored_or_empty(topic, [&] { return evaluation::model_precision(tasks.topic, topic); });
  if (t.n_scored > 0) t.topic_log_odds = evaluation::topic_log_odds(tasks.topic, topic, model).topic_log_odds;

  json j;
  j["responses"] = responses.size();
  j["word_intrusion"] = metrics_json(w);
  j["topic_intrusion"] = metrics_json(t);
  if (!j["topic_intrusion"].contains("topic_log_odds")) j["topic_intrusion"]["topic_log_odds"] = nullptr;
  return j;
}

// ---- service ---------------------------------------------------------------------

namespace {

struct HttpError {
  int status;
  std::string code;
  std::string message;
};

struct TaskRef {
  bool word;
  std::size_t index;
};

struct Session {
  SessionSpec spec;
  TaskSet tasks;
  std::vector<TaskRef> order;  // word tasks, then topic tasks
  std::unordered_map<std::string, std::size_t> position;
  inference::TopicModel model;
  std::unique_ptr<ResponseStore> store;

  std::size_t size() const { return order.size(); }
  const std::string& task_id(std::size_t i) const {
    return order[i].word ? tasks.word[order[i].index].task_id : tasks.topic[order[i].index].task_id;
  }
  std::size_t option_count(std::size_t i) const {
    return order[i].word ? tasks.word[order[i].index].options.size() : tasks.topic[order[i].index].topic_options.size();
  }
  std::uint64_t gen_seed(std::size_t i) const {
    return order[i].word ? tasks.word[order[i].index].gen_seed : tasks.topic[order[i].index].gen_seed;
  }
};

std::string join(const std::vector<std::string>& words) {
  std::string out;
  for (std::size_t i = 0; i < words.size(); ++i) out += (i ? ", " : "") + words[i];
  return out;
}

}  // namespace

struct Service::Impl {
  ServiceConfig config;
  std::map<std::string, std::unique_ptr<Session>> sessions;
  httplib::Server server;
  std::thread thread;

  explicit Impl(ServiceConfig c) : config(std::move(c)) {
    for (const auto& spec : config.sessions) {
      auto s = std::make_unique<Session>();
      s->spec = spec;
      s->tasks = evaluation::read_tasks(spec.tasks);
      s->model = inference::read_model(spec.model);
      std::unordered_map<std::string, std::size_t> counts;
      for (std::size_t i = 0; i < s->tasks.word.size(); ++i) s->order.push_back({true, i});
      for (std::size_t i = 0; i < s->tasks.topic.size(); ++i) s->order.push_back({false, i});
      for (std::size_t i = 0; i < s->size(); ++i) {
        if (!s->position.emplace(s->task_id(i), i).second)
          fail("InvalidConfig", "duplicate task id '" + s->task_id(i) + "' in session '" + spec.id + "'");
        counts[s->task_id(i)] = s->option_count(i);
      }
      s->store = std::make_unique<ResponseStore>(spec.responses, std::move(counts));
      sessions.emplace(spec.id, std::move(s));
    }
    routes();
  }

  Session& session(const std::string& id) {
    auto it = sessions.find(id);
    if (it == sessions.end()) throw HttpError{404, "UnknownSession", "no session '" + id + "'"};
    return *it->second;
  }

  static std::string coder_of(const Session& s, const std::string& token) {
    if (token.empty()) throw HttpError{400, "MissingCoder", "coder token required"};
    auto it = s.spec.coders.find(token);
    if (it == s.spec.coders.end()) throw HttpError{403, "UnknownCoder", "unknown coder token"};
    return it->second;
  }

  static std::string query_coder(const Session& s, const httplib::Request& req) {
    return coder_of(s, req.has_param("coder") ? req.get_param_value("coder") : "");
  }

  static std::vector<std::size_t> order_for(const Session& s, std::size_t i, const std::string& coder) {
    return evaluation::display_order(evaluation::coder_shuffle_seed(s.gen_seed(i), coder), s.option_count(i));
  }

  static json progress(const Session& s, const std::string& coder) {
    std::size_t coded = 0;
    for (std::size_t i = 0; i < s.size(); ++i) coded += s.store->find(s.task_id(i), coder).has_value();
    return {{"coded", coded}, {"total", s.size()}};
  }

  static json present(const Session& s, std::size_t i, const std::string& coder) {
    const auto display = order_for(s, i, coder);
    json j;
    j["index"] = i;
    j["task_id"] = s.task_id(i);
    j["options"] = json::array();
    if (s.order[i].word) {
      const auto& t = s.tasks.word[s.order[i].index];
      j["kind"] = "word";
      j["prompt"] = "Which of the following is an intruder word?";
      for (std::size_t c : display) j["options"].push_back(t.options[c]);
    } else {
      const auto& t = s.tasks.topic[s.order[i].index];
      j["kind"] = "topic";
      j["prompt"] = "Which of the following is an intruder topic?";
      j["doc_id"] = t.doc_id;
      j["snippet"] = t.snippet;
      for (std::size_t c : display) j["options"].push_back(join(t.topic_options[c].words));
    }
    j["response"] = nullptr;
    if (auto r = s.store->find(s.task_id(i), coder)) {
      json choice = "SKIP";
      if (r->choice)
        for (std::size_t p = 0; p < display.size(); ++p)
          if (display[p] == *r->choice) choice = p;
      j["response"] = {{"choice", choice}, {"submitted_at", r->submitted_at}};
    }
    j["progress"] = progress(s, coder);
    return j;
  }

  template <typename F>
  static httplib::Server::Handler wrap(F&& f) {
    return [f = std::forward<F>(f)](const httplib::Request& req, httplib::Response& res) {
      int status = 200;
      json body;
      try {
        body = f(req, status);
      } catch (const HttpError& e) {
        status = e.status;
        body = {{"error", {{"code", e.code}, {"message", e.message}}}};
      } catch (const Error& e) {
        status = 500;
        body = {{"error", {{"code", e.code()}, {"message", e.what()}}}};
      }
      res.status = status;
      res.set_content(body.dump(), "application/json");
    };
  }

  void routes() {
    server.Get("/api/sessions", wrap([this](const httplib::Request&, int&) {
                 json list = json::array();
                 for (const auto& [id, s] : sessions)
                   list.push_back({{"id", id}, {"total", s->size()}, {"closed", is_closed(s->spec)}});
                 return json{{"sessions", list}};
               }));

    server.Get(R"(/api/sessions/([^/]+)/next)", wrap([this](const httplib::Request& req, int&) {
                 const Session& s = session(req.matches[1]);
                 const std::string coder = query_coder(s, req);
                 for (std::size_t i = 0; i < s.size(); ++i)
                   if (!s.store->find(s.task_id(i), coder)) return json{{"done", false}, {"task", present(s, i, coder)}};
                 return json{{"done", true}, {"progress", progress(s, coder)}};
               }));

    server.Get(R"(/api/sessions/([^/]+)/tasks/(\d+))", wrap([this](const httplib::Request& req, int&) {
                 const Session& s = session(req.matches[1]);
                 const std::string coder = query_coder(s, req);
                 const std::string raw = req.matches[2];
                 if (raw.size() > 9 || std::stoul(raw) >= s.size())
                   throw HttpError{404, "UnknownTask", "no task at index " + raw};
                 return present(s, std::stoul(raw), coder);
               }));

    server.Get(R"(/api/sessions/([^/]+)/status)", wrap([this](const httplib::Request& req, int&) {
                 const Session& s = session(req.matches[1]);
                 const std::string coder = query_coder(s, req);
                 json tasks = json::array();
                 for (std::size_t i = 0; i < s.size(); ++i) {
                   const auto r = s.store->find(s.task_id(i), coder);
                   tasks.push_back({{"index", i},
                                    {"task_id", s.task_id(i)},
                                    {"kind", s.order[i].word ? "word" : "topic"},
                                    {"coded", r.has_value()},
                                    {"skipped", r && r->skipped()}});
                 }
                 return json{{"tasks", tasks}, {"progress", progress(s, coder)}, {"closed", is_closed(s.spec)}};
               }));

    server.Get(R"(/api/sessions/([^/]+)/progress)", wrap([this](const httplib::Request& req, int&) {
                 const Session& s = session(req.matches[1]);
                 return progress(s, query_coder(s, req));
               }));

    server.Post(R"(/api/sessions/([^/]+)/responses)", wrap([this](const httplib::Request& req, int& status) {
                  Session& s = session(req.matches[1]);
                  json body;
                  try {
                    body = json::parse(req.body);
                  } catch (const json::parse_error&) {
                    throw HttpError{400, "MalformedRequest", "body is not valid JSON"};
                  }
                  if (!body.is_object() || !body.contains("task_id") || !body["task_id"].is_string() ||
                      !body.contains("coder") || !body["coder"].is_string() || !body.contains("choice"))
                    throw HttpError{400, "MalformedRequest", "expected task_id, coder and choice"};
                  const std::string coder = coder_of(s, body["coder"]);
                  if (is_closed(s.spec)) throw HttpError{409, "SessionClosed", "session is closed"};
                  const std::string task_id = body["task_id"];
                  auto pos = s.position.find(task_id);
                  if (pos == s.position.end()) throw HttpError{404, "UnknownTask", "no task '" + task_id + "'"};
                  const std::size_t i = pos->second;

                  CoderResponse r;
                  r.task_id = task_id;
                  r.coder_id = coder;
                  r.shuffle_seed = evaluation::coder_shuffle_seed(s.gen_seed(i), coder);
                  r.submitted_at = utc_timestamp();
                  const json& choice = body["choice"];
                  if (choice.is_string() && choice.get<std::string>() == "SKIP") {
                    r.choice.reset();
                  } else if (choice.is_number_unsigned() && choice.get<std::size_t>() < s.option_count(i)) {
                    r.choice = evaluation::display_order(r.shuffle_seed, s.option_count(i))[choice.get<std::size_t>()];
                  } else {
                    throw HttpError{400, "InvalidChoice", "choice must be an option index or \"SKIP\""};
                  }
                  try {
                    s.store->record(r);
                  } catch (const Error& e) {
                    if (e.code() == "DuplicateResponse") throw HttpError{409, e.code(), e.what()};
                    throw;
                  }
                  status = 201;
                  return json{{"stored", true}, {"task_id", task_id}, {"progress", progress(s, coder)}};
                }));

    server.Get(R"(/api/sessions/([^/]+)/metrics)", wrap([this](const httplib::Request& req, int&) {
                 const Session& s = session(req.matches[1]);
                 if (!is_closed(s.spec)) throw HttpError{409, "SessionOpen", "metrics are available after close"};
                 return compute_metrics(s.tasks, s.store->responses(), s.model);
               }));

    server.Post(R"(/api/sessions/([^/]+)/close)", wrap([this](const httplib::Request& req, int&) {
                  const Session& s = session(req.matches[1]);
                  const std::string token = req.get_header_value("X-Admin-Token");
                  if (config.admin_token.empty() || token != config.admin_token)
                    throw HttpError{403, "Forbidden", "admin token required"};
                  close_session(s.spec);
                  return json{{"closed", true}};
                }));

    if (!config.ui_dir.empty() && !server.set_mount_point("/", config.ui_dir.string()))
      fail("IoError", "ui directory " + config.ui_dir.string() + " does not exist");
  }
};

Service::Service(ServiceConfig config) : impl_(std::make_unique<Impl>(std::move(config))) {}

Service::~Service() { stop(); }

int Service::start(const std::string& host, int port) {
  int bound = port;
  if (port == 0)
    bound = impl_->server.bind_to_any_port(host);
  else if (!impl_->server.bind_to_port(host, port))
    bound = -1;
  if (bound < 0) fail("IoError", "cannot bind " + host + ":" + std::to_string(port));
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return bound;
}

void Service::listen(const std::string& host, int port) {
  if (!impl_->server.listen(host, port)) fail("IoError", "cannot listen on " + host + ":" + std::to_string(port));
}

void Service::stop() {
  if (!impl_) return;
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

}  // namespace topicflow::harness
