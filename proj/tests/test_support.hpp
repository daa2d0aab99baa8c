#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "topicflow/corpus.hpp"
#include "topicflow/error.hpp"
#include "topicflow/inference.hpp"
#include "topicflow/random.hpp"

namespace testing {

using topicflow::Rng;
using topicflow::corpus::DocTermMatrix;
using topicflow::corpus::Entry;
using topicflow::corpus::Vocabulary;
using topicflow::inference::Matrix;
using topicflow::inference::TopicModel;

inline std::string term_name(std::size_t v) {
  std::string s = std::to_string(v);
  return "w" + std::string(4 - std::min<std::size_t>(4, s.size()), '0') + s;
}

// Dense counts -> DTM with terms w0000, w0001, ... (already sorted).
inline DocTermMatrix make_dtm(const std::vector<std::vector<std::uint32_t>>& counts) {
  const std::size_t V = counts.empty() ? 0 : counts.front().size();
  std::vector<std::string> terms, ids;
  for (std::size_t v = 0; v < V; ++v) terms.push_back(term_name(v));
  std::vector<std::vector<Entry>> rows;
  for (std::size_t d = 0; d < counts.size(); ++d) {
    ids.push_back("doc" + std::to_string(d));
    std::vector<Entry> row;
    for (std::size_t v = 0; v < V; ++v)
      if (counts[d][v]) row.push_back({static_cast<std::uint32_t>(v), counts[d][v]});
    rows.push_back(row);
  }
  return DocTermMatrix(ids, Vocabulary(terms), rows);
}

inline std::vector<std::string> terms_for(std::size_t V) {
  std::vector<std::string> t;
  for (std::size_t v = 0; v < V; ++v) t.push_back(term_name(v));
  return t;
}

// Hand-built model over the synthetic vocabulary of make_dtm.
inline TopicModel make_model(const Matrix& phi, const Matrix& theta, double alpha = 0.1) {
  TopicModel m;
  m.hyper.K = static_cast<std::size_t>(phi.rows());
  m.hyper.alpha = alpha;
  m.phi = phi;
  m.theta = theta;
  m.terms = terms_for(static_cast<std::size_t>(phi.cols()));
  m.vocab_digest = topicflow::inference::vocabulary_digest(Vocabulary(m.terms));
  return m;
}

// Gamma(shape, 1) by Marsaglia-Tsang on the raw engine, for test-side
// generative sampling independent of the library's samplers.
inline double gamma_draw(Rng& rng, double shape) {
  if (shape < 1.0) {
    const double u = topicflow::uniform01(rng);
    return gamma_draw(rng, shape + 1.0) * std::pow(u > 0 ? u : 1e-300, 1.0 / shape);
  }
  const double d = shape - 1.0 / 3.0, c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x, v;
    do {
      // Box-Muller normal.
      const double u1 = std::max(topicflow::uniform01(rng), 1e-300), u2 = topicflow::uniform01(rng);
      x = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = std::max(topicflow::uniform01(rng), 1e-300);
    if (std::log(u) < 0.5 * x * x + d - d * v + d * std::log(v)) return d * v;
  }
}

inline std::vector<double> dirichlet_draw(Rng& rng, std::size_t n, double concentration) {
  std::vector<double> out(n);
  double total = 0.0;
  for (double& x : out) total += x = gamma_draw(rng, concentration);
  if (!(total > 0)) {
    out.assign(n, 0.0);
    out[topicflow::uniform_index(rng, n)] = 1.0;
    return out;
  }
  for (double& x : out) x /= total;
  return out;
}

inline std::size_t categorical_draw(Rng& rng, const std::vector<double>& p) {
  double u = topicflow::uniform01(rng);
  for (std::size_t i = 0; i < p.size(); ++i) {
    u -= p[i];
    if (u < 0) return i;
  }
  return p.size() - 1;
}

struct SyntheticLda {
  Matrix phi;    // K x V
  Matrix theta;  // D x K
  DocTermMatrix dtm;
};

// Corpus drawn from the LDA generative process with sparse symmetric priors.
// Like a real matrix, the vocabulary holds only terms that occur; phi is
// restricted to those columns and renormalized.
inline SyntheticLda generate_lda(std::size_t K, std::size_t V, std::size_t D, std::size_t doc_len,
                                 double alpha, double eta, std::uint64_t seed) {
  Rng rng(seed);
  SyntheticLda s;
  s.phi.resize(static_cast<Eigen::Index>(K), static_cast<Eigen::Index>(V));
  s.theta.resize(static_cast<Eigen::Index>(D), static_cast<Eigen::Index>(K));
  std::vector<std::vector<double>> topics;
  for (std::size_t k = 0; k < K; ++k) {
    topics.push_back(dirichlet_draw(rng, V, eta));
    for (std::size_t v = 0; v < V; ++v) s.phi(k, v) = topics[k][v];
  }
  std::vector<std::vector<std::uint32_t>> counts(D, std::vector<std::uint32_t>(V, 0));
  for (std::size_t d = 0; d < D; ++d) {
    auto th = dirichlet_draw(rng, K, alpha);
    for (std::size_t k = 0; k < K; ++k) s.theta(d, k) = th[k];
    for (std::size_t n = 0; n < doc_len; ++n) ++counts[d][categorical_draw(rng, topics[categorical_draw(rng, th)])];
  }
  std::vector<Eigen::Index> kept;
  for (std::size_t v = 0; v < V; ++v) {
    bool used = false;
    for (const auto& row : counts) used |= row[v] > 0;
    if (used) kept.push_back(static_cast<Eigen::Index>(v));
  }
  Matrix phi(static_cast<Eigen::Index>(K), static_cast<Eigen::Index>(kept.size()));
  for (std::size_t j = 0; j < kept.size(); ++j) phi.col(static_cast<Eigen::Index>(j)) = s.phi.col(kept[j]);
  for (Eigen::Index k = 0; k < phi.rows(); ++k) phi.row(k) /= phi.row(k).sum();
  s.phi = phi;
  for (auto& row : counts) {
    std::vector<std::uint32_t> compact;
    for (Eigen::Index v : kept) compact.push_back(row[static_cast<std::size_t>(v)]);
    row = std::move(compact);
  }
  s.dtm = make_dtm(counts);
  return s;
}

// Greedy one-to-one matching of recovered rows to true rows by smallest
// total-variation distance; returns the mean matched distance.
inline double matched_mean_tv(const Matrix& truth, const Matrix& est) {
  const auto K = static_cast<std::size_t>(truth.rows());
  std::vector<std::tuple<double, std::size_t, std::size_t>> pairs;
  for (std::size_t a = 0; a < K; ++a)
    for (std::size_t b = 0; b < static_cast<std::size_t>(est.rows()); ++b)
      pairs.emplace_back(0.5 * (truth.row(a) - est.row(b)).cwiseAbs().sum(), a, b);
  std::sort(pairs.begin(), pairs.end());
  std::vector<bool> used_a(K), used_b(static_cast<std::size_t>(est.rows()));
  double total = 0.0;
  std::size_t matched = 0;
  for (auto [dist, a, b] : pairs) {
    if (used_a[a] || used_b[b]) continue;
    used_a[a] = used_b[b] = true;
    total += dist;
    ++matched;
  }
  return total / static_cast<double>(matched);
}

template <typename F>
std::string error_code(F&& fn) {
  try {
    fn();
  } catch (const topicflow::Error& e) {
    return e.code();
  }
  return "";
}

}  // namespace testing
