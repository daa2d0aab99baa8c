#include "topicflow/diagnostics.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>

#include "topicflow/error.hpp"
#include "topicflow/random.hpp"

namespace topicflow::diagnostics {

using corpus::DocTermMatrix;
using corpus::Entry;
using inference::TopicModel;

namespace {

[[noreturn]] void fail(const std::string& code, const std::string& msg) {
  throw Error("diagnostics", code, msg);
}

std::vector<Entry> to_entries(std::vector<std::uint32_t> words) {
  std::sort(words.begin(), words.end());
  std::vector<Entry> out;
  for (std::uint32_t w : words) {
    if (!out.empty() && out.back().term == w)
      ++out.back().count;
    else
      out.push_back({w, 1});
  }
  return out;
}

// Sorted document lists per term.
std::vector<std::vector<std::uint32_t>> postings(const DocTermMatrix& dtm) {
  std::vector<std::vector<std::uint32_t>> lists(dtm.num_terms());
  for (std::size_t d = 0; d < dtm.num_docs(); ++d)
    for (const Entry& e : dtm.row(d)) lists[e.term].push_back(static_cast<std::uint32_t>(d));
  return lists;
}

std::size_t intersection_size(const std::vector<std::uint32_t>& a, const std::vector<std::uint32_t>& b) {
  std::size_t n = 0;
  auto i = a.begin(), j = b.begin();
  while (i != a.end() && j != b.end()) {
    if (*i < *j) {
      ++i;
    } else if (*j < *i) {
      ++j;
    } else {
      ++n;
      ++i;
      ++j;
    }
  }
  return n;
}

// Fraction of `sorted` that is <= x.
double ecdf(const std::vector<double>& sorted, double x) {
  return static_cast<double>(std::upper_bound(sorted.begin(), sorted.end(), x) - sorted.begin()) /
         static_cast<double>(sorted.size());
}

double mean(const std::vector<double>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

}  // namespace

void HeldoutSplit::validate() const {
  if (!(heldout_doc_fraction > 0.0 && heldout_doc_fraction < 1.0))
    fail("InvalidArgument", "heldout_doc_fraction must be in (0, 1)");
  if (!(word_split_fraction > 0.0 && word_split_fraction < 1.0))
    fail("InvalidArgument", "word_split_fraction must be in (0, 1)");
}

HeldoutSet make_heldout(const DocTermMatrix& dtm, const HeldoutSplit& split) {
  split.validate();
  const std::size_t D = dtm.num_docs();
  if (D < 2) fail("EmptyHeldout", "need at least two documents to hold one out");
  const auto wanted = static_cast<std::size_t>(std::llround(split.heldout_doc_fraction * static_cast<double>(D)));
  const std::size_t n_held = std::clamp<std::size_t>(wanted, 1, D - 1);

  std::vector<std::size_t> order(D);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng doc_rng(derive_seed(split.seed, "heldout-docs"));
  shuffle(doc_rng, std::span<std::size_t>(order));
  std::vector<std::size_t> held(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_held));
  std::vector<std::size_t> train(order.begin() + static_cast<std::ptrdiff_t>(n_held), order.end());
  std::sort(held.begin(), held.end());
  std::sort(train.begin(), train.end());

  HeldoutSet set;
  set.training = dtm.select_rows(train);
  set.training_docs = train;
  const std::uint64_t word_seed = derive_seed(split.seed, "heldout-words");
  for (std::size_t d : held) {
    std::vector<std::uint32_t> words;
    for (const Entry& e : dtm.row(d)) words.insert(words.end(), e.count, e.term);
    if (words.size() < 2) {
      set.skipped.push_back(dtm.doc_ids()[d]);
      continue;
    }
    Rng rng(derive_seed(word_seed, d));
    shuffle(rng, std::span<std::uint32_t>(words));
    const auto n = words.size();
    const auto n_obs = std::clamp<std::size_t>(
        static_cast<std::size_t>(std::llround(split.word_split_fraction * static_cast<double>(n))), 1, n - 1);
    HeldoutDoc doc{d, to_entries({words.begin(), words.begin() + static_cast<std::ptrdiff_t>(n_obs)}),
                   to_entries({words.begin() + static_cast<std::ptrdiff_t>(n_obs), words.end()})};
    set.docs.push_back(std::move(doc));
  }
  if (set.docs.empty()) fail("EmptyHeldout", "no held-out document has two or more tokens");
  return set;
}

HeldoutResult evaluate_heldout(const TopicModel& model, const HeldoutSet& set, std::size_t iterations,
                               std::uint64_t seed) {
  if (set.docs.empty()) fail("EmptyHeldout", "held-out set is empty");
  HeldoutResult r;
  r.skipped = set.skipped;
  const std::size_t K = model.num_topics();
  double total = 0.0;
  for (const HeldoutDoc& doc : set.docs) {
    const auto theta = inference::infer_theta(model, doc.observed, iterations, derive_seed(seed, doc.doc_index));
    for (const Entry& e : doc.evaluated) {
      double p = 0.0;
      for (std::size_t k = 0; k < K; ++k) p += theta[k] * model.phi(k, e.term);
      total += static_cast<double>(e.count) * std::log(p);
      r.evaluated_tokens += e.count;
    }
    ++r.documents;
  }
  r.llpw = total / static_cast<double>(r.evaluated_tokens);
  return r;
}

HeldoutResult heldout_log_likelihood(const DocTermMatrix& dtm, const inference::Hyperparams& hyper,
                                     const HeldoutSplit& split) {
  const HeldoutSet set = make_heldout(dtm, split);
  const TopicModel model = inference::fit(set.training, hyper);
  return evaluate_heldout(model, set, kDefaultFoldInIterations, derive_seed(hyper.seed, "heldout-fold-in"));
}

std::vector<double> semantic_coherence(const TopicModel& model, const DocTermMatrix& dtm, std::size_t top_n) {
  inference::check_compatible(model, dtm, false);
  if (top_n < 1 || top_n > model.num_terms()) fail("InvalidArgument", "top word count must be in [1, V]");
  const auto lists = postings(dtm);
  std::vector<double> scores(model.num_topics(), 0.0);
  for (std::size_t k = 0; k < model.num_topics(); ++k) {
    const auto top = inference::top_word_indices(model, k, top_n);
    for (std::size_t v : top)
      if (lists[v].empty()) fail("TopWordAbsent", "top word '" + model.terms[v] + "' occurs in no document");
    double s = 0.0;
    for (std::size_t m = 1; m < top.size(); ++m)
      for (std::size_t l = 0; l < m; ++l) {
        const double joint = static_cast<double>(intersection_size(lists[top[m]], lists[top[l]]));
        s += std::log((joint + 1.0) / static_cast<double>(lists[top[l]].size()));
      }
    scores[k] = s;
  }
  return scores;
}

std::vector<double> exclusivity(const TopicModel& model, std::size_t top_n, double weight) {
  const std::size_t K = model.num_topics(), V = model.num_terms();
  if (K < 2) fail("SingleTopic", "exclusivity needs at least two topics");
  if (top_n < 1 || top_n > V) fail("InvalidArgument", "top word count must be in [1, V]");
  if (!(weight >= 0.0 && weight <= 1.0)) fail("InvalidArgument", "FREX weight must be in [0, 1]");

  const Eigen::RowVectorXd column_mass = model.phi.colwise().sum();
  std::vector<double> scores(K);
  for (std::size_t k = 0; k < K; ++k) {
    std::vector<double> share(V), freq(V);
    for (std::size_t v = 0; v < V; ++v) {
      freq[v] = model.phi(k, v);
      share[v] = column_mass(v) > 0 ? model.phi(k, v) / column_mass(v) : 0.0;
    }
    std::vector<double> share_sorted = share, freq_sorted = freq;
    std::sort(share_sorted.begin(), share_sorted.end());
    std::sort(freq_sorted.begin(), freq_sorted.end());
    double total = 0.0;
    const auto top = inference::top_word_indices(model, k, top_n);
    for (std::size_t v : top)
      total += 1.0 / (weight / ecdf(share_sorted, share[v]) + (1.0 - weight) / ecdf(freq_sorted, freq[v]));
    scores[k] = total / static_cast<double>(top.size());
  }
  return scores;
}

double residual_dispersion(const TopicModel& model, const DocTermMatrix& dtm) {
  inference::check_compatible(model, dtm, true);
  const std::size_t K = model.num_topics(), V = model.num_terms();
  double chi2 = 0.0;
  double df = 0.0;
  Eigen::RowVectorXd q(V);
  std::vector<double> counts(V);
  for (std::size_t d = 0; d < dtm.num_docs(); ++d) {
    q = model.theta.row(static_cast<Eigen::Index>(d)) * model.phi;
    std::fill(counts.begin(), counts.end(), 0.0);
    for (const Entry& e : dtm.row(d)) counts[e.term] = e.count;
    const double N = static_cast<double>(dtm.doc_length(d));
    for (std::size_t v = 0; v < V; ++v) {
      if (!(q(v) > 0)) continue;
      const double expected = N * q(v);
      const double r = counts[v] - expected;
      chi2 += r * r / expected;
    }
    df += static_cast<double>(dtm.row(d).size()) - static_cast<double>(K);
  }
  return chi2 / std::max(df, 1.0);
}

Evaluation evaluate_configuration(const DocTermMatrix& dtm, const HeldoutSet& set,
                                  const inference::Hyperparams& hyper, bool record_timing) {
  const auto start = std::chrono::steady_clock::now();
  const TopicModel model = inference::fit(set.training, hyper);
  const HeldoutResult held =
      evaluate_heldout(model, set, kDefaultFoldInIterations, derive_seed(hyper.seed, "heldout-fold-in"));
  const std::size_t top_n = std::min(kDefaultTopWords, model.num_terms());
  Evaluation ev;
  ev.topics.K = hyper.K;
  ev.topics.coherence = semantic_coherence(model, dtm, top_n);
  ev.topics.exclusivity = exclusivity(model, top_n, kDefaultFrexWeight);
  ev.row.K = hyper.K;
  ev.row.heldout_llpw = held.llpw;
  ev.row.residual_dispersion = residual_dispersion(model, set.training);
  ev.row.mean_coherence = mean(ev.topics.coherence);
  ev.row.mean_exclusivity = mean(ev.topics.exclusivity);
  if (record_timing)
    ev.row.wall_time_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  return ev;
}

std::uint64_t grid_seed(std::uint64_t base_seed, std::size_t K) { return derive_seed(base_seed, K); }

SearchResult search_k(const DocTermMatrix& dtm, std::span<const std::size_t> Ks,
                      const inference::Hyperparams& hyper_template, const HeldoutSplit& split,
                      const SearchOptions& options) {
  if (Ks.empty()) fail("InvalidArgument", "K grid is empty");
  for (std::size_t K : Ks)
    if (K < 2) fail("InvalidArgument", "every K in the grid must be >= 2");
  std::vector<std::size_t> grid(Ks.begin(), Ks.end());
  std::sort(grid.begin(), grid.end());

  const HeldoutSet set = make_heldout(dtm, split);
  std::vector<Evaluation> results(grid.size());
  std::vector<std::exception_ptr> errors(grid.size());
  auto run = [&](std::size_t i) {
    inference::Hyperparams h = hyper_template;
    h.K = grid[i];
    h.alpha = hyper_template.alpha;  // unset stays unset: 50/K per grid entry
    h.seed = grid_seed(hyper_template.seed, grid[i]);
    try {
      results[i] = evaluate_configuration(dtm, set, h, options.record_timing);
    } catch (const Error& e) {
      errors[i] = std::make_exception_ptr(
          Error(e.module(), e.code(), "K=" + std::to_string(grid[i]) + ": " + e.what()));
    } catch (...) {
      errors[i] = std::current_exception();
    }
  };

  const std::size_t workers = std::clamp<std::size_t>(options.threads, 1, grid.size());
  if (workers == 1) {
    for (std::size_t i = 0; i < grid.size(); ++i) run(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < workers; ++t)
      pool.emplace_back([&] {
        for (std::size_t i; (i = next.fetch_add(1)) < grid.size();) run(i);
      });
    for (auto& th : pool) th.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);

  SearchResult out;
  for (auto& r : results) {
    out.rows.push_back(r.row);
    out.topics.push_back(std::move(r.topics));
  }
  return out;
}

// ---- tables ------------------------------------------------------------------------

namespace {

char delimiter(ReportFormat f) { return f == ReportFormat::Csv ? ',' : '\t'; }

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<std::string> split_line(const std::string& line, char delim) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(line);
  while (std::getline(in, cur, delim)) out.push_back(cur);
  if (!line.empty() && line.back() == delim) out.emplace_back();
  return out;
}

double parse_num(const std::string& s) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size()) fail("CorruptReport", "not a number: '" + s + "'");
  return v;
}

std::size_t parse_count(const std::string& s) {
  const double v = parse_num(s);
  if (v < 0 || v != std::floor(v)) fail("CorruptReport", "not a count: '" + s + "'");
  return static_cast<std::size_t>(v);
}

const std::vector<std::string> kDiagnosticsHeader{"K", "heldout_llpw", "residual_dispersion",
                                                  "mean_coherence", "mean_exclusivity", "wall_time_ms"};
const std::vector<std::string> kTopicHeader{"K", "topic", "coherence", "exclusivity"};

void write_header(std::ostream& out, const std::vector<std::string>& cols, char delim) {
  for (std::size_t i = 0; i < cols.size(); ++i) out << (i ? std::string(1, delim) : "") << cols[i];
  out << '\n';
}

std::vector<std::vector<std::string>> read_rows(std::istream& in, const std::vector<std::string>& header,
                                                char delim) {
  std::string line;
  if (!std::getline(in, line) || split_line(line, delim) != header) fail("CorruptReport", "unexpected header");
  std::vector<std::vector<std::string>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto cells = split_line(line, delim);
    if (cells.size() != header.size()) fail("CorruptReport", "wrong column count in '" + line + "'");
    rows.push_back(std::move(cells));
  }
  return rows;
}

}  // namespace

ReportFormat parse_format(const std::string& name) {
  if (name == "tsv") return ReportFormat::Tsv;
  if (name == "csv") return ReportFormat::Csv;
  fail("InvalidArgument", "unknown report format '" + name + "'");
}

void write_diagnostics_table(std::span<const DiagnosticsRow> rows, std::ostream& out, ReportFormat format) {
  const char d = delimiter(format);
  write_header(out, kDiagnosticsHeader, d);
  for (const auto& r : rows)
    out << r.K << d << num(r.heldout_llpw) << d << num(r.residual_dispersion) << d << num(r.mean_coherence) << d
        << num(r.mean_exclusivity) << d << num(r.wall_time_ms) << '\n';
}

void write_topic_table(std::span<const TopicScores> topics, std::ostream& out, ReportFormat format) {
  const char d = delimiter(format);
  write_header(out, kTopicHeader, d);
  for (const auto& t : topics)
    for (std::size_t k = 0; k < t.coherence.size(); ++k)
      out << t.K << d << k << d << num(t.coherence[k]) << d << num(t.exclusivity.at(k)) << '\n';
}

std::vector<DiagnosticsRow> read_diagnostics_table(std::istream& in, ReportFormat format) {
  std::vector<DiagnosticsRow> rows;
  for (const auto& c : read_rows(in, kDiagnosticsHeader, delimiter(format)))
    rows.push_back({parse_count(c[0]), parse_num(c[1]), parse_num(c[2]), parse_num(c[3]), parse_num(c[4]),
                    parse_num(c[5])});
  return rows;
}

std::vector<TopicScores> read_topic_table(std::istream& in, ReportFormat format) {
  std::vector<TopicScores> out;
  for (const auto& c : read_rows(in, kTopicHeader, delimiter(format))) {
    const std::size_t K = parse_count(c[0]), topic = parse_count(c[1]);
    if (out.empty() || out.back().K != K) out.push_back({K, {}, {}});
    if (topic != out.back().coherence.size()) fail("CorruptReport", "topic rows out of order");
    out.back().coherence.push_back(parse_num(c[2]));
    out.back().exclusivity.push_back(parse_num(c[3]));
  }
  return out;
}

std::vector<std::filesystem::path> emit_report(std::span<const DiagnosticsRow> rows,
                                               std::span<const TopicScores> topics,
                                               const std::filesystem::path& stem, ReportFormat format) {
  if (rows.empty()) fail("InvalidArgument", "no diagnostics rows to report");
  const std::string ext = format == ReportFormat::Csv ? "csv" : "tsv";
  const std::filesystem::path diag = stem.string() + ".diagnostics." + ext;
  const std::filesystem::path topic = stem.string() + ".topics." + ext;
  {
    std::ofstream out(diag, std::ios::trunc);
    if (!out) fail("IoError", "cannot write " + diag.string());
    write_diagnostics_table(rows, out, format);
    if (!out) fail("IoError", "write failed for " + diag.string());
  }
  {
    std::ofstream out(topic, std::ios::trunc);
    if (!out) fail("IoError", "cannot write " + topic.string());
    write_topic_table(topics, out, format);
    if (!out) fail("IoError", "write failed for " + topic.string());
  }
  return {diag, topic};
}

}  // namespace topicflow::diagnostics
