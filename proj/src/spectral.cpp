// Anchor-word recovery of topic-word distributions from the word
// co-occurrence matrix (Arora et al. 2013, "A Practical Algorithm for Topic
// Modeling with Provable Guarantees").

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <memory>
#include <vector>

#include "topicflow/error.hpp"
#include "topicflow/inference.hpp"

namespace topicflow::inference {
namespace {

using Vector = Eigen::VectorXd;

[[noreturn]] void fail(const std::string& code, const std::string& msg) {
  throw Error("inference", code, msg);
}

// min  x'Gx - 2h'x  subject to  x >= 0, sum(x) = 1.
// Primal active-set method started from the barycentre; exact up to the
// conditioning of G, which is positive definite for distinct anchors.
Vector simplex_least_squares(const Matrix& G, const Vector& h) {
  const Eigen::Index K = G.rows();
  Vector x = Vector::Constant(K, 1.0 / static_cast<double>(K));
  std::vector<bool> at_bound(static_cast<std::size_t>(K), false);
  constexpr double kTol = 1e-14;

  for (int iter = 0; iter < 50 * K + 100; ++iter) {
    std::vector<Eigen::Index> free;
    for (Eigen::Index i = 0; i < K; ++i)
      if (!at_bound[static_cast<std::size_t>(i)]) free.push_back(i);
    const auto F = static_cast<Eigen::Index>(free.size());

    // KKT system of the equality-constrained subproblem on the free set.
    Matrix kkt = Matrix::Zero(F + 1, F + 1);
    Vector rhs(F + 1);
    for (Eigen::Index a = 0; a < F; ++a) {
      for (Eigen::Index b = 0; b < F; ++b) kkt(a, b) = G(free[a], free[b]);
      kkt(a, F) = 1.0;
      kkt(F, a) = 1.0;
      rhs(a) = h(free[a]);
    }
    rhs(F) = 1.0;
    const Vector sol = kkt.fullPivLu().solve(rhs);

    Vector target = Vector::Zero(K);
    for (Eigen::Index a = 0; a < F; ++a) target(free[a]) = sol(a);

    bool feasible = true;
    for (Eigen::Index a = 0; a < F; ++a)
      if (target(free[a]) < -kTol) feasible = false;

    if (feasible) {
      x = target.cwiseMax(0.0);
      x /= x.sum();
      // Multipliers of the active bounds: G x - h + nu = mu >= 0.
      const double nu = sol(F);
      const Vector grad = G * x - h;
      Eigen::Index release = -1;
      double most_negative = -1e-12;
      for (Eigen::Index i = 0; i < K; ++i) {
        if (!at_bound[static_cast<std::size_t>(i)]) continue;
        const double mu = grad(i) + nu;
        if (mu < most_negative) {
          most_negative = mu;
          release = i;
        }
      }
      if (release < 0) return x;
      at_bound[static_cast<std::size_t>(release)] = false;
      continue;
    }

    // Step toward the subproblem optimum until the first variable hits zero.
    double step = 1.0;
    Eigen::Index blocking = -1;
    for (Eigen::Index a = 0; a < F; ++a) {
      const Eigen::Index i = free[a];
      if (target(i) < x(i) && target(i) < 0.0) {
        const double s = x(i) / (x(i) - target(i));
        if (s < step) {
          step = s;
          blocking = i;
        }
      }
    }
    x += step * (target - x);
    if (blocking >= 0) {
      x(blocking) = 0.0;
      at_bound[static_cast<std::size_t>(blocking)] = true;
    }
  }
  return x;
}

}  // namespace

Matrix cooccurrence(const corpus::DocTermMatrix& dtm) {
  const auto V = static_cast<Eigen::Index>(dtm.num_terms());
  Matrix Q = Matrix::Zero(V, V);
  std::size_t used = 0;
  for (std::size_t d = 0; d < dtm.num_docs(); ++d) {
    const double n = static_cast<double>(dtm.doc_length(d));
    if (n < 2) continue;
    ++used;
    const double norm = 1.0 / (n * (n - 1.0));
    const auto row = dtm.row(d);
    for (const auto& a : row) {
      for (const auto& b : row) {
        const double ca = a.count, cb = b.count;
        Q(a.term, b.term) += (a.term == b.term ? ca * (ca - 1.0) : ca * cb) * norm;
      }
    }
  }
  if (used == 0) fail("RankDeficient", "no document has two or more tokens");
  Q /= static_cast<double>(used);
  return Q;
}

AnchorRecovery recover_topics(const Matrix& Q, std::size_t K, std::span<const bool> candidates) {
  const auto V = static_cast<std::size_t>(Q.rows());
  if (Q.cols() != Q.rows()) fail("InvalidArgument", "co-occurrence matrix must be square");
  if (K == 0 || K > V) fail("RankDeficient", "need 1 <= K <= V");
  if (!candidates.empty() && candidates.size() != V) fail("InvalidArgument", "candidate mask size != V");

  const Vector p = Q.rowwise().sum();
  Matrix Qbar = Q;
  for (std::size_t i = 0; i < V; ++i)
    if (p(i) > 0) Qbar.row(i) /= p(i);

  // Greedy farthest-point selection with Gram-Schmidt deflation of the rows.
  Matrix residual = Qbar;
  std::vector<bool> eligible(V);
  for (std::size_t i = 0; i < V; ++i) eligible[i] = p(i) > 0 && (candidates.empty() || candidates[i]);
  std::vector<std::size_t> anchors;
  double first_norm = 0.0;
  for (std::size_t k = 0; k < K; ++k) {
    std::size_t best = V;
    double best_norm = -1.0;
    for (std::size_t i = 0; i < V; ++i) {
      if (!eligible[i]) continue;
      const double n2 = residual.row(i).squaredNorm();
      if (n2 > best_norm) {
        best_norm = n2;
        best = i;
      }
    }
    if (k == 0) first_norm = best_norm;
    if (best == V || !(best_norm > 1e-20 * std::max(first_norm, 1e-300)))
      fail("RankDeficient", "only " + std::to_string(k) + " distinct anchor rows available for K=" +
                                std::to_string(K));
    anchors.push_back(best);
    eligible[best] = false;
    const Eigen::RowVectorXd basis = residual.row(best) / std::sqrt(best_norm);
    const Vector proj = residual * basis.transpose();
    residual -= proj * basis;
  }

  // Each word's row as a convex combination of the anchor rows.
  Matrix S(K, V);
  for (std::size_t k = 0; k < K; ++k) S.row(k) = Qbar.row(anchors[k]);
  const Matrix G = S * S.transpose();
  Matrix A = Matrix::Zero(V, K);  // A(i,k) = p(i) * P(topic k | word i)
  for (std::size_t i = 0; i < V; ++i) {
    if (!(p(i) > 0)) continue;
    const Vector h = S * Qbar.row(i).transpose();
    A.row(i) = p(i) * simplex_least_squares(G, h).transpose();
  }

  AnchorRecovery out;
  out.anchors = anchors;
  out.phi = A.transpose();
  for (std::size_t k = 0; k < K; ++k) {
    const double s = out.phi.row(k).sum();
    if (!(s > 0)) fail("RankDeficient", "recovered topic has no mass");
    out.phi.row(k) /= s;
  }
  return out;
}

Matrix spectral_init(const corpus::DocTermMatrix& dtm, std::size_t K, const SpectralOptions& opts) {
  const std::size_t V = dtm.num_terms();
  if (K == 0 || K > V) fail("RankDeficient", "need 1 <= K <= V");
  if (K == 1) {
    Matrix phi = Matrix::Zero(1, V);
    for (std::size_t d = 0; d < dtm.num_docs(); ++d)
      for (const auto& e : dtm.row(d)) phi(0, e.term) += e.count;
    phi /= phi.sum();
    return phi;
  }
  const auto df = dtm.document_frequencies();
  auto mask = std::make_unique<bool[]>(V);
  std::size_t eligible = 0;
  for (std::size_t v = 0; v < V; ++v) {
    mask[v] = df[v] >= opts.min_anchor_doc_freq;
    eligible += mask[v] ? 1 : 0;
  }
  std::span<const bool> candidates;
  if (eligible >= K) candidates = {mask.get(), V};
  return recover_topics(cooccurrence(dtm), K, candidates).phi;
}

}  // namespace topicflow::inference
