#include <doctest.h>

#include <set>
#include <sstream>

#include "test_support.hpp"
#include "topicflow/inference.hpp"

using namespace topicflow;
using namespace topicflow::inference;
using namespace testing;

namespace {

// E[theta theta^T] under Dirichlet(a): off-diagonal a_i a_j / (s (s+1)),
// diagonal a_i (a_i + 1) / (s (s+1)).
Matrix dirichlet_second_moment(const std::vector<double>& a) {
  const double s = std::accumulate(a.begin(), a.end(), 0.0);
  Matrix R(a.size(), a.size());
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < a.size(); ++j) R(i, j) = a[i] * (a[j] + (i == j ? 1.0 : 0.0)) / (s * (s + 1.0));
  return R;
}

DocTermMatrix two_block_corpus(std::uint64_t seed) {
  Rng rng(seed);
  const std::size_t V = 20, D = 40, N = 50;
  std::vector<std::vector<std::uint32_t>> counts(D, std::vector<std::uint32_t>(V, 0));
  for (std::size_t d = 0; d < D; ++d) {
    const std::size_t base = d < D / 2 ? 0 : 10;
    for (std::size_t n = 0; n < N; ++n) ++counts[d][base + uniform_index(rng, 10)];
  }
  return make_dtm(counts);
}

Hyperparams quick(std::size_t K, std::uint64_t seed, Init init = Init::Spectral) {
  Hyperparams h;
  h.K = K;
  h.max_iterations = 300;
  h.burn_in = 100;
  h.seed = seed;
  h.init = init;
  return h;
}

std::string serialize(const TopicModel& m) {
  std::ostringstream out;
  write_model(m, out);
  return out.str();
}

}  // namespace

TEST_CASE("spectral recovery of a planted separable model") {
  // Topic k has anchor word k; words 3..5 are shared.
  Matrix phi(3, 6);
  phi << 0.40, 0.00, 0.00, 0.30, 0.20, 0.10,  //
      0.00, 0.25, 0.00, 0.25, 0.10, 0.40,     //
      0.00, 0.00, 0.50, 0.05, 0.35, 0.10;
  const Matrix R = dirichlet_second_moment({0.5, 0.3, 0.2});
  const Matrix Q = phi.transpose() * R * phi;  // exact expected co-occurrence

  const auto rec = recover_topics(Q, 3);
  CHECK(std::set<std::size_t>(rec.anchors.begin(), rec.anchors.end()) == std::set<std::size_t>{0, 1, 2});
  double max_err = 0.0;
  for (std::size_t j = 0; j < 3; ++j) {
    const std::size_t topic = rec.anchors[j];  // anchor word k belongs to topic k
    max_err = std::max(max_err, (rec.phi.row(j) - phi.row(topic)).cwiseAbs().maxCoeff());
  }
  CHECK(max_err <= 1e-6);
}

TEST_CASE("spectral init degenerate cases") {
  SUBCASE("K = 1 gives corpus term frequencies") {
    auto dtm = make_dtm({{2, 1, 0}, {0, 1, 4}});
    Matrix phi = spectral_init(dtm, 1);
    CHECK(phi(0, 0) == doctest::Approx(2.0 / 8));
    CHECK(phi(0, 1) == doctest::Approx(2.0 / 8));
    CHECK(phi(0, 2) == doctest::Approx(4.0 / 8));
  }
  SUBCASE("K = V with one repeated word per document") {
    auto dtm = make_dtm({{3, 0, 0, 0}, {0, 3, 0, 0}, {0, 0, 3, 0}, {0, 0, 0, 3}});
    const auto rec = recover_topics(cooccurrence(dtm), 4);
    CHECK(std::set<std::size_t>(rec.anchors.begin(), rec.anchors.end()) == std::set<std::size_t>{0, 1, 2, 3});
    for (std::size_t j = 0; j < 4; ++j) CHECK(rec.phi(j, rec.anchors[j]) == doctest::Approx(1.0));
  }
  SUBCASE("too few distinct rows") {
    // Rows 0 and 1 coincide; only two distinct rows exist.
    Matrix Q(3, 3);
    Q << 1, 1, 0, 1, 1, 0, 0, 0, 2;
    CHECK(error_code([&] { recover_topics(Q / Q.sum(), 3); }) == "RankDeficient");
    auto dtm = make_dtm({{1, 1, 0}, {2, 2, 0}, {0, 0, 3}});
    CHECK(error_code([&] { spectral_init(dtm, 4); }) == "RankDeficient");
  }
}

TEST_CASE("fit with a single topic") {
  auto dtm = make_dtm({{2, 1, 0}, {0, 1, 1}});
  Hyperparams h = quick(1, 3);
  auto m = fit(dtm, h);
  CHECK(m.theta.rows() == 2);
  for (Eigen::Index d = 0; d < 2; ++d) CHECK(m.theta(d, 0) == 1.0);
  const double eta = h.eta, N = 5, V = 3;
  CHECK(m.phi(0, 0) == doctest::Approx((2 + eta) / (N + V * eta)).epsilon(1e-12));
  CHECK(m.phi(0, 1) == doctest::Approx((2 + eta) / (N + V * eta)).epsilon(1e-12));
  CHECK(m.phi(0, 2) == doctest::Approx((1 + eta) / (N + V * eta)).epsilon(1e-12));
}

TEST_CASE("fit is deterministic per seed") {
  auto dtm = two_block_corpus(5);
  for (Init init : {Init::Spectral, Init::Random}) {
    auto a = fit(dtm, quick(3, 42, init));
    auto b = fit(dtm, quick(3, 42, init));
    CHECK(serialize(a) == serialize(b));
    CHECK(a.loglik_trace == b.loglik_trace);
    auto c = fit(dtm, quick(3, 43, init));
    CHECK(serialize(a) != serialize(c));
  }
}

TEST_CASE("fit separates a two-block corpus") {
  auto dtm = two_block_corpus(9);
  for (Init init : {Init::Spectral, Init::Random}) {
    auto m = fit(dtm, quick(2, 17, init));
    // Greedy matching: topic whose block-A mass is larger is the A topic.
    auto block_mass = [&](std::size_t k, std::size_t base) { return m.phi.row(k).segment(base, 10).sum(); };
    const std::size_t a_topic = block_mass(0, 0) >= block_mass(1, 0) ? 0 : 1;
    CHECK(block_mass(a_topic, 0) >= 0.95);
    CHECK(block_mass(1 - a_topic, 10) >= 0.95);
  }
}

TEST_CASE("fit normalization and likelihood invariants") {
  auto dtm = two_block_corpus(21);
  Hyperparams h = quick(4, 8, Init::Random);
  h.max_iterations = 400;
  h.burn_in = 200;
  auto m = fit(dtm, h);
  CHECK(m.phi.rows() == 4);
  CHECK(m.phi.cols() == 20);
  CHECK(m.theta.rows() == 40);
  for (Eigen::Index k = 0; k < m.phi.rows(); ++k) CHECK(std::abs(m.phi.row(k).sum() - 1.0) <= 1e-9);
  for (Eigen::Index d = 0; d < m.theta.rows(); ++d) CHECK(std::abs(m.theta.row(d).sum() - 1.0) <= 1e-9);
  CHECK(m.phi.minCoeff() >= 0.0);
  CHECK(m.theta.minCoeff() >= 0.0);
  REQUIRE(m.loglik_trace.size() == 400);
  for (double ll : m.loglik_trace) CHECK(std::isfinite(ll));

  // Monotone trend over burn-in: first vs last 100 recorded sweeps.
  auto mean = [&](std::size_t from) {
    return std::accumulate(m.loglik_trace.begin() + from, m.loglik_trace.begin() + from + 100, 0.0) / 100.0;
  };
  CHECK(mean(100) >= mean(0));
}

TEST_CASE("fit rejects invalid input") {
  auto dtm = make_dtm({{1, 1}});
  Hyperparams h = quick(2, 1);
  h.burn_in = h.max_iterations;
  CHECK(error_code([&] { fit(dtm, h); }) == "InvalidHyperparams");
  h = quick(0, 1);
  CHECK(error_code([&] { fit(dtm, h); }) == "InvalidHyperparams");
  h = quick(2, 1);
  h.alpha = -1.0;
  CHECK(error_code([&] { fit(dtm, h); }) == "InvalidHyperparams");
  h = quick(2, 1);
  h.eta = 0.0;
  CHECK(error_code([&] { fit(dtm, h); }) == "InvalidHyperparams");
  CHECK(error_code([&] { fit(DocTermMatrix{}, quick(2, 1)); }) == "EmptyCorpus");
  CHECK(quick(4, 0).resolved_alpha() == 12.5);
}

TEST_CASE("infer_theta folds in unseen documents") {
  SUBCASE("single topic") {
    Matrix phi(1, 2);
    phi << 0.5, 0.5;
    auto m = make_model(phi, Matrix::Ones(1, 1));
    std::vector<Entry> doc{{0, 2}};
    auto th = infer_theta(m, doc, 20, 1);
    REQUIRE(th.size() == 1);
    CHECK(th[0] == 1.0);
  }
  SUBCASE("disjoint supports") {
    Matrix phi(2, 2);
    phi << 1.0, 0.0, 0.0, 1.0;
    const double alpha = 0.1;
    auto m = make_model(phi, Matrix::Constant(1, 2, 0.5), alpha);
    std::vector<Entry> doc{{0, 3}};
    auto th = infer_theta(m, doc, 50, 99);
    CHECK(th[1] == doctest::Approx(alpha / (3 + 2 * alpha)).epsilon(1e-12));
    CHECK(th[0] == doctest::Approx(1.0 - alpha / (3 + 2 * alpha)).epsilon(1e-12));
  }
  SUBCASE("empty document") {
    Matrix phi(1, 2);
    phi << 0.5, 0.5;
    auto m = make_model(phi, Matrix::Ones(1, 1));
    CHECK(error_code([&] { infer_theta(m, {}, 10, 1); }) == "EmptyDocument");
  }
}

TEST_CASE("top words and documents") {
  Matrix phi(2, 3);
  phi << 0.5, 0.3, 0.2,  //
      0.2, 0.4, 0.4;
  Matrix theta(3, 2);
  theta << 0.9, 0.1, 0.1, 0.9, 0.5, 0.5;
  auto m = make_model(phi, theta);
  CHECK(top_words(m, 0, 0).empty());
  CHECK(top_words(m, 0, 2) == std::vector<std::string>{term_name(0), term_name(1)});
  CHECK(top_word_indices(m, 1, 3) == std::vector<std::size_t>{1, 2, 0});  // tie broken by index
  CHECK(top_words(m, 0, 10).size() == 3);
  CHECK(error_code([&] { top_words(m, 2, 1); }) == "TopicOutOfRange");

  auto dtm = make_dtm({{1, 0, 0}, {0, 1, 0}, {0, 0, 1}});
  CHECK(top_documents(m, 0, 2, dtm) == std::vector<std::string>{"doc0", "doc2"});
  CHECK(error_code([&] { top_documents(m, 5, 2, dtm); }) == "TopicOutOfRange");

  auto single = make_model(phi, Matrix::Constant(1, 2, 0.5));
  CHECK(top_documents(single, 1, 10, make_dtm({{1, 1, 1}})) == std::vector<std::string>{"doc0"});
}

TEST_CASE("mean topic proportions") {
  Matrix phi = Matrix::Constant(2, 2, 0.5);
  CHECK(mean_topic_proportions(make_model(phi, Matrix::Constant(3, 2, 0.5))) == std::vector<double>{0.5, 0.5});
  Matrix theta(2, 2);
  theta << 0.8, 0.2, 0.4, 0.6;
  auto mean = mean_topic_proportions(make_model(phi, theta));
  CHECK(mean[0] == doctest::Approx(0.6));
  CHECK(mean[1] == doctest::Approx(0.4));

  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t D = 1 + uniform_index(rng, 30), K = 1 + uniform_index(rng, 8);
    Matrix th(D, K);
    for (std::size_t d = 0; d < D; ++d) {
      auto row = dirichlet_draw(rng, K, 0.5);
      for (std::size_t k = 0; k < K; ++k) th(d, k) = row[k];
    }
    auto mp = mean_topic_proportions(make_model(Matrix::Constant(K, 2, 0.5), th));
    CHECK(std::abs(std::accumulate(mp.begin(), mp.end(), 0.0) - 1.0) <= 1e-9);
  }
}

TEST_CASE("label permutation covariance") {
  auto dtm = two_block_corpus(33);
  auto m = fit(dtm, quick(3, 4));
  const std::vector<std::size_t> perm{2, 0, 1};  // new topic j = old topic perm[j]
  TopicModel p = m;
  for (std::size_t j = 0; j < 3; ++j) {
    p.phi.row(j) = m.phi.row(perm[j]);
    p.theta.col(j) = m.theta.col(perm[j]);
  }
  for (std::size_t j = 0; j < 3; ++j) {
    CHECK(top_words(p, j, 5) == top_words(m, perm[j], 5));
    CHECK(top_documents(p, j, 5, dtm) == top_documents(m, perm[j], 5, dtm));
  }
}

TEST_CASE("model container round trip") {
  auto dtm = two_block_corpus(2);
  auto m = fit(dtm, quick(2, 6));
  const std::string bytes = serialize(m);
  std::istringstream in(bytes);
  auto back = read_model(in);
  CHECK(serialize(back) == bytes);
  CHECK(back.hyper == m.hyper);
  CHECK(back.phi == m.phi);
  CHECK(back.theta == m.theta);
  CHECK(back.terms == m.terms);
  CHECK_NOTHROW(check_compatible(back, dtm, true));

  std::istringstream truncated(bytes.substr(0, bytes.size() / 2));
  CHECK(error_code([&] { read_model(truncated); }) == "CorruptFile");
  CHECK(error_code([&] { check_compatible(m, make_dtm({{1, 1}}), false); }) == "ModelCorpusMismatch");
}
