#include "topicflow/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>

#include "topicflow/corpus.hpp"
#include "topicflow/diagnostics.hpp"
#include "topicflow/error.hpp"
#include "topicflow/evaluation.hpp"
#include "topicflow/inference.hpp"
#include "topicflow/manifest.hpp"
#include "topicflow/response_store.hpp"
#include "topicflow/service.hpp"

namespace topicflow::harness {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

[[noreturn]] void fail(const std::string& code, const std::string& msg) { throw Error("harness", code, msg); }

struct HyperOptions {
  std::size_t K = 10;
  std::optional<double> alpha;
  double eta = 0.01;
  std::size_t iterations = 1000;
  std::size_t burn_in = 200;
  std::string init = "spectral";
  std::uint64_t seed = 0;

  void add(CLI::App& app, bool with_k) {
    if (with_k) app.add_option("--k", K, "Number of topics")->required();
    app.add_option("--alpha", alpha, "Document-topic prior (default 50/K)");
    app.add_option("--eta", eta, "Topic-word prior")->capture_default_str();
    app.add_option("--iterations", iterations, "Gibbs sweeps")->capture_default_str();
    app.add_option("--burn-in", burn_in, "Sweeps discarded before averaging")->capture_default_str();
    app.add_option("--init", init, "spectral or random")->capture_default_str();
    app.add_option("--seed", seed, "Base seed")->capture_default_str();
  }

  inference::Hyperparams get() const {
    inference::Hyperparams h;
    h.K = K;
    h.alpha = alpha;
    h.eta = eta;
    h.max_iterations = iterations;
    h.burn_in = burn_in;
    h.init = inference::parse_init(init);
    h.seed = seed;
    return h;
  }
};

struct SplitOptions {
  double heldout = 0.1;
  double word_split = 0.5;
  std::optional<std::uint64_t> seed;

  void add(CLI::App& app) {
    app.add_option("--heldout", heldout, "Fraction of documents held out")->capture_default_str();
    app.add_option("--word-split", word_split, "Observed fraction of each held-out document")->capture_default_str();
    app.add_option("--split-seed", seed, "Seed of the held-out split (default: --seed)");
  }

  diagnostics::HeldoutSplit get(std::uint64_t fallback) const { return {heldout, word_split, seed.value_or(fallback)}; }
};

json hyper_json(const inference::Hyperparams& h) {
  const auto r = h.resolved();
  return {{"K", r.K},
          {"alpha", r.resolved_alpha()},
          {"eta", r.eta},
          {"max_iterations", r.max_iterations},
          {"burn_in", r.burn_in},
          {"init", inference::to_string(r.init)},
          {"seed", r.seed}};
}

json split_json(const diagnostics::HeldoutSplit& s) {
  return {{"heldout_doc_fraction", s.heldout_doc_fraction},
          {"word_split_fraction", s.word_split_fraction},
          {"seed", s.seed}};
}

// Loads (or starts) the manifest, times one stage and writes it back.
class StageScope {
 public:
  StageScope(std::string name, const fs::path& manifest_path, bool fresh, bool timing)
      : path_(manifest_path), timing_(timing), start_(std::chrono::steady_clock::now()) {
    if (!fresh && fs::exists(path_)) manifest_ = read_manifest(path_);
    record_.name = std::move(name);
  }

  RunManifest& manifest() { return manifest_; }
  json& params() { return record_.params; }

  void commit() {
    if (timing_)
      record_.wall_time_ms =
          std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start_).count();
    manifest_.stages.push_back(record_);
    manifest_.created_at = utc_timestamp();
    write_manifest(manifest_, path_);
  }

 private:
  fs::path path_;
  bool timing_;
  std::chrono::steady_clock::time_point start_;
  RunManifest manifest_;
  StageRecord record_;
};

fs::path manifest_for(const std::string& flag, const fs::path& output) {
  if (!flag.empty()) return flag;
  return (output.has_parent_path() ? output.parent_path() : fs::path(".")) / "manifest.json";
}

std::string base(const fs::path& p) { return p.filename().string(); }

std::string env_or(const char* name, const std::string& fallback) {
  const char* v = std::getenv(name);
  return v && *v ? v : fallback;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Topic modelling pipeline: preprocessing, fitting, diagnostics and intrusion evaluation", "topicflow"};
  app.require_subcommand(1);
  app.failure_message(CLI::FailureMessage::help);

  std::string manifest_flag;
  bool no_timing = false;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--manifest", manifest_flag, "Run manifest to write (default: manifest.json beside the output)");
    sub->add_flag("--no-timing", no_timing, "Record zero wall times");
  };

  // prep
  std::string corpus_path, config_path, out_path, text_path, stats_path;
  auto* prep = app.add_subcommand("prep", "Corpus to document-term matrix");
  prep->add_option("--corpus", corpus_path, "JSONL corpus")->required();
  prep->add_option("--config", config_path, "Preprocessing config (JSON)")->required();
  prep->add_option("--out", out_path, "Output DTM file")->required();
  prep->add_option("--text", text_path, "Also export the DTM as text");
  prep->add_option("--stats", stats_path, "Write corpus statistics (JSON)");
  add_common(prep);

  // fit
  std::string dtm_path, model_path;
  HyperOptions hyper;
  auto* fit = app.add_subcommand("fit", "Fit a topic model");
  fit->add_option("--dtm", dtm_path, "DTM file")->required();
  fit->add_option("--out", out_path, "Output model file")->required();
  hyper.add(*fit, true);
  add_common(fit);

  // searchk
  std::vector<std::size_t> grid;
  SplitOptions split;
  std::size_t threads = 1;
  std::string format = "tsv";
  HyperOptions search_hyper;
  auto* searchk = app.add_subcommand("searchk", "Diagnostics over a grid of K");
  searchk->add_option("--dtm", dtm_path, "DTM file")->required();
  searchk->add_option("--k", grid, "Comma-separated K values")->required()->delimiter(',');
  searchk->add_option("--out", out_path, "Output stem; writes <stem>.diagnostics.<fmt> and <stem>.topics.<fmt>")
      ->required();
  searchk->add_option("--format", format, "tsv or csv")->capture_default_str();
  searchk->add_option("--threads", threads, "Grid entries fitted concurrently")->capture_default_str();
  search_hyper.add(*searchk, false);
  split.add(*searchk);
  add_common(searchk);

  // diagnose
  auto* diagnose = app.add_subcommand("diagnose", "Diagnostics of a fitted model");
  diagnose->add_option("--dtm", dtm_path, "DTM the model was fitted on")->required();
  diagnose->add_option("--model", model_path, "Model file")->required();
  diagnose->add_option("--out", out_path, "Output stem")->required();
  diagnose->add_option("--format", format, "tsv or csv")->capture_default_str();
  split.add(*diagnose);
  add_common(diagnose);

  // tasks
  std::size_t cases = 10;
  std::uint64_t task_seed = 0;
  auto* tasks = app.add_subcommand("tasks", "Generate word and topic intrusion tasks");
  tasks->add_option("--model", model_path, "Model file")->required();
  tasks->add_option("--dtm", dtm_path, "DTM the model was fitted on")->required();
  tasks->add_option("--corpus", corpus_path, "JSONL corpus with the document texts")->required();
  tasks->add_option("--out", out_path, "Output task file (JSONL)")->required();
  tasks->add_option("--cases", cases, "Topic intrusion cases")->capture_default_str();
  tasks->add_option("--seed", task_seed, "Generation seed")->capture_default_str();
  add_common(tasks);

  // labels
  std::size_t n_topics = 10, n_words = 5, n_docs = 10;
  auto* labels = app.add_subcommand("labels", "Export a labelling packet");
  labels->add_option("--model", model_path, "Model file")->required();
  labels->add_option("--dtm", dtm_path, "DTM the model was fitted on")->required();
  labels->add_option("--corpus", corpus_path, "JSONL corpus with the document texts")->required();
  labels->add_option("--out", out_path, "Output stem; writes <stem>.jsonl and <stem>.txt")->required();
  labels->add_option("--topics", n_topics, "Topics in the packet")->capture_default_str();
  labels->add_option("--words", n_words, "Words per topic")->capture_default_str();
  labels->add_option("--docs", n_docs, "Documents per topic")->capture_default_str();
  add_common(labels);

  // metrics
  std::string tasks_path, responses_path;
  auto* metrics = app.add_subcommand("metrics", "Score stored coder responses");
  metrics->add_option("--tasks", tasks_path, "Task file")->required();
  metrics->add_option("--responses", responses_path, "Response log")->required();
  metrics->add_option("--model", model_path, "Model file")->required();

  // serve
  std::string sessions_path, ui_dir;
  std::string host = env_or("TOPICFLOW_HOST", "127.0.0.1");
  int port = std::atoi(env_or("TOPICFLOW_PORT", "8080").c_str());
  auto* serve = app.add_subcommand("serve", "Run the coder service");
  serve->add_option("--config", sessions_path, "Session config (JSON)")->required();
  serve->add_option("--host", host, "Bind address (env TOPICFLOW_HOST)")->capture_default_str();
  serve->add_option("--port", port, "Port (env TOPICFLOW_PORT)")->capture_default_str();
  serve->add_option("--ui-dir", ui_dir, "Directory of UI assets to serve at /");

  // close
  std::string session_id;
  auto* close = app.add_subcommand("close", "Close a coding session");
  close->add_option("--config", sessions_path, "Session config (JSON)")->required();
  close->add_option("--session", session_id, "Session id")->required();

  // manifest
  std::string show_path = "manifest.json";
  auto* manifest = app.add_subcommand("manifest", "Print a run manifest");
  manifest->add_option("path", show_path, "Manifest file")->capture_default_str();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  try {
    if (const fs::path parent = fs::path(out_path).parent_path(); !out_path.empty() && !parent.empty())
      fs::create_directories(parent);
    if (*prep) {
      StageScope stage("prep", manifest_for(manifest_flag, out_path), true, !no_timing);
      const auto config = corpus::load_config(config_path);
      const auto raw = corpus::read_corpus(corpus_path);
      const auto unique = corpus::dedupe(raw);
      std::vector<corpus::ProcessedDocument> processed;
      processed.reserve(unique.size());
      for (const auto& doc : unique) processed.push_back(corpus::preprocess(doc, config));
      const auto built = corpus::build_dtm(processed);
      corpus::write_dtm(built.dtm, fs::path(out_path));
      if (!text_path.empty()) {
        std::ofstream text(text_path);
        corpus::export_dtm_text(built.dtm, text);
        if (!text) fail("IoError", "cannot write " + text_path);
      }
      const json stats = corpus::stats_to_json(corpus::corpus_stats(built.dtm));
      if (!stats_path.empty()) {
        std::ofstream s(stats_path);
        s << stats.dump(2) << '\n';
        if (!s) fail("IoError", "cannot write " + stats_path);
      }
      auto& m = stage.manifest();
      m.config["prep"] = corpus::resolved_config(config);
      m.add_file("corpus", corpus_path);
      m.add_file("prep_config", config_path);
      m.add_file("dtm", out_path);
      stage.params() = {{"corpus", base(corpus_path)},
                        {"config", base(config_path)},
                        {"out", base(out_path)},
                        {"documents_read", raw.size()},
                        {"duplicates_removed", raw.size() - unique.size()},
                        {"empty_dropped", built.dropped.size()},
                        {"stats", stats}};
      stage.commit();
      out << "wrote " << out_path << ": " << built.dtm.num_docs() << " documents, " << built.dtm.num_terms()
          << " terms, " << built.dtm.total_tokens() << " tokens (" << raw.size() - unique.size()
          << " duplicates, " << built.dropped.size() << " empty)\n";
    } else if (*fit) {
      StageScope stage("fit", manifest_for(manifest_flag, out_path), false, !no_timing);
      const auto dtm = corpus::read_dtm(fs::path(dtm_path));
      const auto h = hyper.get();
      const auto model = inference::fit(dtm, h);
      inference::write_model(model, fs::path(out_path));
      auto& m = stage.manifest();
      m.config["fit"] = hyper_json(h);
      m.seeds["fit"] = h.seed;
      m.add_file("dtm", dtm_path);
      m.add_file("model", out_path);
      stage.params() = {{"dtm", base(dtm_path)}, {"out", base(out_path)}, {"hyper", hyper_json(h)}};
      stage.commit();
      out << "wrote " << out_path << ": K=" << model.num_topics() << ", final log-likelihood "
          << model.loglik_trace.back() << "\n";
    } else if (*searchk) {
      StageScope stage("searchk", manifest_for(manifest_flag, out_path), false, !no_timing);
      const auto dtm = corpus::read_dtm(fs::path(dtm_path));
      const auto h = search_hyper.get();
      const auto s = split.get(h.seed);
      const auto fmt = diagnostics::parse_format(format);
      diagnostics::SearchOptions opts;
      opts.threads = threads;
      opts.record_timing = !no_timing;
      const auto result = diagnostics::search_k(dtm, grid, h, s, opts);
      const auto files = diagnostics::emit_report(result.rows, result.topics, out_path, fmt);
      auto& m = stage.manifest();
      json template_json = hyper_json(h);
      template_json.erase("K");
      if (!h.alpha) template_json["alpha"] = "50/K";
      std::vector<std::size_t> sorted = grid;
      std::sort(sorted.begin(), sorted.end());
      m.config["searchk"] = {{"grid", sorted}, {"hyper", template_json}, {"split", split_json(s)}};
      m.seeds["searchk"] = h.seed;
      m.seeds["searchk.split"] = s.seed;
      for (std::size_t K : sorted) m.seeds["searchk.K=" + std::to_string(K)] = diagnostics::grid_seed(h.seed, K);
      m.add_file("dtm", dtm_path);
      m.add_file("searchk_diagnostics", files[0]);
      m.add_file("searchk_topics", files[1]);
      stage.params() = {{"dtm", base(dtm_path)}, {"grid", sorted}, {"threads", threads}, {"format", format},
                        {"out", {base(files[0]), base(files[1])}}};
      stage.commit();
      diagnostics::write_diagnostics_table(result.rows, out, diagnostics::ReportFormat::Tsv);
    } else if (*diagnose) {
      StageScope stage("diagnose", manifest_for(manifest_flag, out_path), false, !no_timing);
      const auto start = std::chrono::steady_clock::now();
      const auto dtm = corpus::read_dtm(fs::path(dtm_path));
      const auto model = inference::read_model(fs::path(model_path));
      inference::check_compatible(model, dtm, true);
      const auto fmt = diagnostics::parse_format(format);
      const auto s = split.get(model.hyper.seed);
      const auto held = diagnostics::heldout_log_likelihood(dtm, model.hyper, s);
      const std::size_t top_n = std::min(diagnostics::kDefaultTopWords, model.num_terms());
      diagnostics::TopicScores topics{model.num_topics(), diagnostics::semantic_coherence(model, dtm, top_n),
                                      diagnostics::exclusivity(model, top_n)};
      diagnostics::DiagnosticsRow row;
      row.K = model.num_topics();
      row.heldout_llpw = held.llpw;
      row.residual_dispersion = diagnostics::residual_dispersion(model, dtm);
      for (double c : topics.coherence) row.mean_coherence += c / static_cast<double>(topics.coherence.size());
      for (double e : topics.exclusivity) row.mean_exclusivity += e / static_cast<double>(topics.exclusivity.size());
      if (!no_timing)
        row.wall_time_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
      const std::vector rows{row};
      const std::vector topic_rows{topics};
      const auto files = diagnostics::emit_report(rows, topic_rows, out_path, fmt);
      auto& m = stage.manifest();
      m.config["diagnose"] = {{"split", split_json(s)},
                              {"top_words", top_n},
                              {"frex_weight", diagnostics::kDefaultFrexWeight},
                              {"fold_in_iterations", diagnostics::kDefaultFoldInIterations}};
      m.seeds["diagnose.split"] = s.seed;
      m.add_file("dtm", dtm_path);
      m.add_file("model", model_path);
      m.add_file("diagnostics", files[0]);
      m.add_file("diagnostics_topics", files[1]);
      stage.params() = {{"dtm", base(dtm_path)}, {"model", base(model_path)}, {"format", format},
                        {"heldout_documents", held.documents}, {"heldout_tokens", held.evaluated_tokens},
                        {"out", {base(files[0]), base(files[1])}}};
      stage.commit();
      diagnostics::write_diagnostics_table(rows, out, diagnostics::ReportFormat::Tsv);
    } else if (*tasks) {
      StageScope stage("tasks", manifest_for(manifest_flag, out_path), false, !no_timing);
      const auto model = inference::read_model(fs::path(model_path));
      const auto dtm = corpus::read_dtm(fs::path(dtm_path));
      const auto raw = corpus::read_corpus(corpus_path);
      evaluation::TaskSet set;
      set.word = evaluation::gen_word_intrusion(model, task_seed);
      set.topic = evaluation::gen_topic_intrusion(model, dtm, raw, cases, task_seed);
      evaluation::write_tasks(set, fs::path(out_path));
      auto& m = stage.manifest();
      const evaluation::IntruderRules rules;
      m.config["tasks"] = {{"cases", cases},
                           {"seed", task_seed},
                           {"word_top", rules.top_words},
                           {"intruder_min_rank", rules.min_target_rank},
                           {"intruder_donor_top", rules.donor_top},
                           {"topic_option_words", evaluation::kTopicOptionWords}};
      m.seeds["tasks"] = task_seed;
      m.add_file("model", model_path);
      m.add_file("tasks", out_path);
      stage.params() = {{"model", base(model_path)}, {"dtm", base(dtm_path)}, {"corpus", base(corpus_path)},
                        {"out", base(out_path)}, {"word_tasks", set.word.size()}, {"topic_tasks", set.topic.size()}};
      stage.commit();
      out << "wrote " << out_path << ": " << set.word.size() << " word intrusion and " << set.topic.size()
          << " topic intrusion tasks\n";
    } else if (*labels) {
      const fs::path jsonl = out_path + ".jsonl", text = out_path + ".txt";
      StageScope stage("labels", manifest_for(manifest_flag, jsonl), false, !no_timing);
      const auto model = inference::read_model(fs::path(model_path));
      const auto dtm = corpus::read_dtm(fs::path(dtm_path));
      const auto raw = corpus::read_corpus(corpus_path);
      const auto packet = evaluation::label_export(model, dtm, raw, n_topics, n_words, n_docs);
      {
        std::ofstream j(jsonl), t(text);
        evaluation::write_labels(packet, j);
        evaluation::write_label_table(packet, t);
        if (!j || !t) fail("IoError", "cannot write label packet " + out_path);
      }
      auto& m = stage.manifest();
      m.config["labels"] = {{"topics", n_topics}, {"words", n_words}, {"docs", n_docs}};
      m.add_file("labels", jsonl);
      stage.params() = {{"model", base(model_path)}, {"out", {base(jsonl), base(text)}}, {"topics", packet.size()}};
      stage.commit();
      out << "wrote " << jsonl.string() << " and " << text.string() << ": " << packet.size() << " topics\n";
    } else if (*metrics) {
      const auto set = evaluation::read_tasks(fs::path(tasks_path));
      const auto model = inference::read_model(fs::path(model_path));
      const auto log = read_response_log(responses_path);
      if (!log.bad_lines.empty())
        err << "warning: ignored " << log.bad_lines.size() << " unreadable record(s) in " << responses_path << "\n";
      out << compute_metrics(set, log.responses, model).dump(2) << "\n";
    } else if (*serve) {
      auto config = load_service_config(sessions_path);
      if (!ui_dir.empty()) config.ui_dir = ui_dir;
      Service service(std::move(config));
      out << "listening on http://" << host << ":" << port << std::endl;
      service.listen(host, port);
    } else if (*close) {
      const auto config = load_service_config(sessions_path);
      close_session(find_session(config, session_id));
      out << "closed session " << session_id << "\n";
    } else if (*manifest) {
      out << to_json(read_manifest(show_path)).dump(2) << "\n";
    }
  } catch (const Error& e) {
    err << "error: module=" << e.module() << " code=" << e.code() << " message=" << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "error: module=harness code=Internal message=" << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace topicflow::harness
