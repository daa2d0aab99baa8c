#include "topicflow/inference.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "binary_io.hpp"
#include "topicflow/digest.hpp"
#include "topicflow/error.hpp"
#include "topicflow/random.hpp"

namespace topicflow::inference {
namespace {

[[noreturn]] void fail(const std::string& code, const std::string& msg) {
  throw Error("inference", code, msg);
}

// lgamma without the global signgam write, so fits may run on several threads.
double log_gamma(double x) {
#if defined(__GLIBC__)
  int sign = 0;
  return lgamma_r(x, &sign);
#else
  return std::lgamma(x);
#endif
}

struct Tokens {
  std::vector<std::uint32_t> word;
  std::vector<std::size_t> offsets{0};  // per document
};

Tokens expand(const corpus::DocTermMatrix& dtm) {
  Tokens t;
  t.word.reserve(dtm.total_tokens());
  for (std::size_t d = 0; d < dtm.num_docs(); ++d) {
    for (const auto& e : dtm.row(d)) t.word.insert(t.word.end(), e.count, e.term);
    t.offsets.push_back(t.word.size());
  }
  return t;
}

void normalize_rows(Matrix& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) m.row(r) /= m.row(r).sum();
}

}  // namespace

std::string to_string(Init init) { return init == Init::Spectral ? "spectral" : "random"; }

Init parse_init(const std::string& name) {
  if (name == "spectral" || name == "Spectral") return Init::Spectral;
  if (name == "random" || name == "Random") return Init::Random;
  fail("InvalidHyperparams", "unknown initialization '" + name + "'");
}

Hyperparams Hyperparams::resolved() const {
  Hyperparams h = *this;
  h.alpha = resolved_alpha();
  return h;
}

void Hyperparams::validate() const {
  if (K < 1) fail("InvalidHyperparams", "K must be >= 1");
  if (!(resolved_alpha() > 0) || !std::isfinite(resolved_alpha())) fail("InvalidHyperparams", "alpha must be > 0");
  if (!(eta > 0) || !std::isfinite(eta)) fail("InvalidHyperparams", "eta must be > 0");
  if (max_iterations < 1) fail("InvalidHyperparams", "max_iterations must be >= 1");
  if (burn_in >= max_iterations) fail("InvalidHyperparams", "burn_in must be < max_iterations");
}

std::string vocabulary_digest(const corpus::Vocabulary& vocab) {
  std::string blob;
  for (const auto& t : vocab.terms()) {
    blob += t;
    blob += '\n';
  }
  return sha256_hex(blob);
}

// Collapsed Gibbs sampler (Griffiths & Steyvers 2004). Each document owns an
// RNG stream, derive_seed(derive_seed(seed, "gibbs"), d), used both for its
// initial assignments and for every sweep.
TopicModel fit(const corpus::DocTermMatrix& dtm, const Hyperparams& hyper_in) {
  hyper_in.validate();
  if (dtm.num_docs() == 0 || dtm.total_tokens() == 0) fail("EmptyCorpus", "nothing to fit");
  const Hyperparams hyper = hyper_in.resolved();
  const std::size_t K = hyper.K, V = dtm.num_terms(), D = dtm.num_docs();
  const double alpha = *hyper.alpha, eta = hyper.eta, Veta = static_cast<double>(V) * eta;

  const Tokens tokens = expand(dtm);
  std::vector<std::uint32_t> z(tokens.word.size());
  std::vector<std::int64_t> n_wk(V * K, 0), n_dk(D * K, 0), n_k(K, 0);

  const std::uint64_t chain_seed = derive_seed(hyper.seed, "gibbs");
  std::vector<Rng> streams;
  streams.reserve(D);
  for (std::size_t d = 0; d < D; ++d) streams.emplace_back(derive_seed(chain_seed, d));

  std::vector<double> weights(K);
  Matrix init_phi;
  if (hyper.init == Init::Spectral && K > 1) init_phi = spectral_init(dtm, K);
  for (std::size_t d = 0; d < D; ++d) {
    Rng& rng = streams[d];
    for (std::size_t i = tokens.offsets[d]; i < tokens.offsets[d + 1]; ++i) {
      const std::uint32_t w = tokens.word[i];
      std::uint32_t k = 0;
      if (K > 1) {
        if (hyper.init == Init::Spectral) {
          for (std::size_t j = 0; j < K; ++j) weights[j] = init_phi(j, w);
          k = static_cast<std::uint32_t>(sample_discrete(rng, weights));
        } else {
          k = static_cast<std::uint32_t>(uniform_index(rng, K));
        }
      }
      z[i] = k;
      ++n_wk[w * K + k];
      ++n_dk[d * K + k];
      ++n_k[k];
    }
  }

  const double lg_alpha = log_gamma(alpha), lg_eta = log_gamma(eta);
  const double lg_Kalpha = log_gamma(static_cast<double>(K) * alpha), lg_Veta = log_gamma(Veta);
  auto log_likelihood = [&] {
    double ll = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
      ll += lg_Veta - log_gamma(static_cast<double>(n_k[k]) + Veta);
      for (std::size_t w = 0; w < V; ++w) {
        const auto c = n_wk[w * K + k];
        if (c) ll += log_gamma(static_cast<double>(c) + eta) - lg_eta;
      }
    }
    for (std::size_t d = 0; d < D; ++d) {
      const auto len = static_cast<double>(tokens.offsets[d + 1] - tokens.offsets[d]);
      ll += lg_Kalpha - log_gamma(len + static_cast<double>(K) * alpha);
      for (std::size_t k = 0; k < K; ++k) {
        const auto c = n_dk[d * K + k];
        if (c) ll += log_gamma(static_cast<double>(c) + alpha) - lg_alpha;
      }
    }
    return ll;
  };

  std::vector<double> sum_wk(V * K, 0.0), sum_dk(D * K, 0.0);
  std::size_t samples = 0;
  TopicModel model;
  model.loglik_trace.reserve(hyper.max_iterations);

  for (std::size_t sweep = 1; sweep <= hyper.max_iterations; ++sweep) {
    if (K > 1) {
      for (std::size_t d = 0; d < D; ++d) {
        Rng& rng = streams[d];
        std::int64_t* doc = &n_dk[d * K];
        for (std::size_t i = tokens.offsets[d]; i < tokens.offsets[d + 1]; ++i) {
          const std::uint32_t w = tokens.word[i];
          std::int64_t* word = &n_wk[w * K];
          std::uint32_t k = z[i];
          --word[k];
          --doc[k];
          --n_k[k];
          double total = 0.0;
          for (std::size_t j = 0; j < K; ++j) {
            total += (static_cast<double>(doc[j]) + alpha) * (static_cast<double>(word[j]) + eta) /
                     (static_cast<double>(n_k[j]) + Veta);
            weights[j] = total;
          }
          const double u = uniform01(rng) * total;
          k = static_cast<std::uint32_t>(std::upper_bound(weights.begin(), weights.end(), u) - weights.begin());
          if (k >= K) k = static_cast<std::uint32_t>(K - 1);
          z[i] = k;
          ++word[k];
          ++doc[k];
          ++n_k[k];
        }
      }
    }
    model.loglik_trace.push_back(log_likelihood());
    if (sweep > hyper.burn_in) {
      for (std::size_t i = 0; i < sum_wk.size(); ++i) sum_wk[i] += static_cast<double>(n_wk[i]);
      for (std::size_t i = 0; i < sum_dk.size(); ++i) sum_dk[i] += static_cast<double>(n_dk[i]);
      ++samples;
    }
  }

  const double inv = 1.0 / static_cast<double>(samples);
  model.hyper = hyper;
  model.phi.resize(static_cast<Eigen::Index>(K), static_cast<Eigen::Index>(V));
  for (std::size_t k = 0; k < K; ++k)
    for (std::size_t w = 0; w < V; ++w) model.phi(k, w) = sum_wk[w * K + k] * inv + eta;
  model.theta.resize(static_cast<Eigen::Index>(D), static_cast<Eigen::Index>(K));
  for (std::size_t d = 0; d < D; ++d)
    for (std::size_t k = 0; k < K; ++k) model.theta(d, k) = sum_dk[d * K + k] * inv + alpha;
  normalize_rows(model.phi);
  normalize_rows(model.theta);
  model.terms = dtm.vocab().terms();
  model.vocab_digest = vocabulary_digest(dtm.vocab());
  return model;
}

std::vector<double> infer_theta(const TopicModel& model, std::span<const corpus::Entry> doc,
                                std::size_t iterations, std::uint64_t seed) {
  const std::size_t K = model.num_topics();
  const double alpha = model.hyper.resolved_alpha();
  std::vector<std::uint32_t> words;
  for (const auto& e : doc) {
    if (e.term >= model.num_terms()) fail("InvalidArgument", "term index outside the model vocabulary");
    words.insert(words.end(), e.count, e.term);
  }
  if (words.empty()) fail("EmptyDocument", "document has no tokens");
  if (iterations < 2) iterations = 2;

  Rng rng(seed);
  std::vector<double> weights(K);
  std::vector<std::uint32_t> z(words.size());
  std::vector<double> n(K, 0.0), acc(K, 0.0);
  for (std::size_t i = 0; i < words.size(); ++i) {
    for (std::size_t k = 0; k < K; ++k) weights[k] = model.phi(k, words[i]);
    z[i] = static_cast<std::uint32_t>(sample_discrete(rng, weights));
    n[z[i]] += 1.0;
  }
  const std::size_t burn = iterations / 2;
  for (std::size_t it = 0; it < iterations; ++it) {
    for (std::size_t i = 0; i < words.size(); ++i) {
      n[z[i]] -= 1.0;
      for (std::size_t k = 0; k < K; ++k) weights[k] = (n[k] + alpha) * model.phi(k, words[i]);
      z[i] = static_cast<std::uint32_t>(sample_discrete(rng, weights));
      n[z[i]] += 1.0;
    }
    if (it >= burn)
      for (std::size_t k = 0; k < K; ++k) acc[k] += n[k];
  }
  const double samples = static_cast<double>(iterations - burn);
  std::vector<double> theta(K);
  double total = 0.0;
  for (std::size_t k = 0; k < K; ++k) total += theta[k] = acc[k] / samples + alpha;
  for (double& t : theta) t /= total;
  return theta;
}

std::vector<std::size_t> rank_descending(std::span<const double> values) {
  std::vector<std::size_t> idx(values.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return values[a] > values[b]; });
  return idx;
}

namespace {
void check_topic(const TopicModel& model, std::size_t topic) {
  if (topic >= model.num_topics())
    fail("TopicOutOfRange", "topic " + std::to_string(topic) + " outside [0, " +
                                std::to_string(model.num_topics()) + ")");
}
}  // namespace

std::vector<std::size_t> top_word_indices(const TopicModel& model, std::size_t topic, std::size_t n) {
  check_topic(model, topic);
  std::vector<double> row(model.phi.row(static_cast<Eigen::Index>(topic)).begin(),
                          model.phi.row(static_cast<Eigen::Index>(topic)).end());
  auto idx = rank_descending(row);
  idx.resize(std::min(n, idx.size()));
  return idx;
}

std::vector<std::string> top_words(const TopicModel& model, std::size_t topic, std::size_t n) {
  std::vector<std::string> out;
  for (std::size_t v : top_word_indices(model, topic, n)) out.push_back(model.terms.at(v));
  return out;
}

std::vector<std::size_t> top_document_indices(const TopicModel& model, std::size_t topic, std::size_t n) {
  check_topic(model, topic);
  std::vector<double> col(model.num_docs());
  for (std::size_t d = 0; d < col.size(); ++d) col[d] = model.theta(d, topic);
  auto idx = rank_descending(col);
  idx.resize(std::min(n, idx.size()));
  return idx;
}

std::vector<std::string> top_documents(const TopicModel& model, std::size_t topic, std::size_t n,
                                       const corpus::DocTermMatrix& dtm) {
  check_compatible(model, dtm, true);
  std::vector<std::string> out;
  for (std::size_t d : top_document_indices(model, topic, n)) out.push_back(dtm.doc_ids()[d]);
  return out;
}

std::vector<double> mean_topic_proportions(const TopicModel& model) {
  std::vector<double> mean(model.num_topics(), 0.0);
  if (model.num_docs() == 0) return mean;
  for (std::size_t d = 0; d < model.num_docs(); ++d)
    for (std::size_t k = 0; k < mean.size(); ++k) mean[k] += model.theta(d, k);
  for (double& m : mean) m /= static_cast<double>(model.num_docs());
  return mean;
}

void check_compatible(const TopicModel& model, const corpus::DocTermMatrix& dtm, bool check_docs) {
  if (model.vocab_digest != vocabulary_digest(dtm.vocab()))
    fail("ModelCorpusMismatch", "model vocabulary digest does not match the document-term matrix");
  if (check_docs && model.num_docs() != dtm.num_docs())
    fail("ModelCorpusMismatch", "model has " + std::to_string(model.num_docs()) + " documents, matrix has " +
                                    std::to_string(dtm.num_docs()));
}

// ---- container ------------------------------------------------------------------

namespace {
constexpr std::string_view kModelMagic{"TFMODEL\0", 8};
constexpr std::uint32_t kModelVersion = 1;
}  // namespace

void write_model(const TopicModel& m, std::ostream& out) {
  out.write(kModelMagic.data(), kModelMagic.size());
  binio::put_u32(out, kModelVersion);
  const Hyperparams h = m.hyper.resolved();
  binio::put_u64(out, h.K);
  binio::put_f64(out, *h.alpha);
  binio::put_f64(out, h.eta);
  binio::put_u64(out, h.max_iterations);
  binio::put_u64(out, h.burn_in);
  binio::put_u32(out, static_cast<std::uint32_t>(h.init));
  binio::put_u64(out, h.seed);
  binio::put_str(out, m.vocab_digest);
  binio::put_u64(out, m.num_terms());
  for (const auto& t : m.terms) binio::put_str(out, t);
  binio::put_u64(out, m.num_docs());
  for (Eigen::Index i = 0; i < m.phi.size(); ++i) binio::put_f64(out, m.phi.data()[i]);
  for (Eigen::Index i = 0; i < m.theta.size(); ++i) binio::put_f64(out, m.theta.data()[i]);
  binio::put_u64(out, m.loglik_trace.size());
  for (double v : m.loglik_trace) binio::put_f64(out, v);
}

void write_model(const TopicModel& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail("IoError", "cannot write " + path.string());
  write_model(model, out);
  if (!out) fail("IoError", "write failed for " + path.string());
}

TopicModel read_model(std::istream& in) {
  binio::Reader r(in, "model");
  r.expect_magic(kModelMagic);
  if (r.u32() != kModelVersion) r.fail("unsupported version");
  TopicModel m;
  m.hyper.K = r.u64();
  m.hyper.alpha = r.f64();
  m.hyper.eta = r.f64();
  m.hyper.max_iterations = r.u64();
  m.hyper.burn_in = r.u64();
  const std::uint32_t init = r.u32();
  if (init > 1) r.fail("unknown initialization");
  m.hyper.init = static_cast<Init>(init);
  m.hyper.seed = r.u64();
  m.vocab_digest = r.str();
  const std::uint64_t V = r.u64();
  if (m.hyper.K == 0 || m.hyper.K > (1u << 16) || V > (1u << 26)) r.fail("dimensions out of range");
  m.terms.resize(V);
  for (auto& t : m.terms) t = r.str();
  const std::uint64_t D = r.u64();
  if (D > (1u << 28)) r.fail("dimensions out of range");
  m.phi.resize(static_cast<Eigen::Index>(m.hyper.K), static_cast<Eigen::Index>(V));
  for (Eigen::Index i = 0; i < m.phi.size(); ++i) m.phi.data()[i] = r.f64();
  m.theta.resize(static_cast<Eigen::Index>(D), static_cast<Eigen::Index>(m.hyper.K));
  for (Eigen::Index i = 0; i < m.theta.size(); ++i) m.theta.data()[i] = r.f64();
  const std::uint64_t n = r.u64();
  if (n > (1u << 28)) r.fail("trace length out of range");
  m.loglik_trace.resize(n);
  for (double& v : m.loglik_trace) v = r.f64();
  return m;
}

TopicModel read_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail("IoError", "cannot open " + path.string());
  return read_model(in);
}

}  // namespace topicflow::inference
