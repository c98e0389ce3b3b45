#include <catch2/catch_amalgamated.hpp>

#include "impsim/contrastive.hpp"
#include "impsim/rng.hpp"

using namespace impsim;

TEST_CASE("cosine basics", "[contrastive]") {
  std::vector<double> v{1.0, 2.0, -3.0};
  CHECK(cosine(v, v) == Catch::Approx(1.0).epsilon(1e-12));
  CHECK(cosine({1, 0}, {0, 1}) == 0.0);
  std::vector<double> nv{-1.0, -2.0, 3.0};
  CHECK(cosine(v, nv) == Catch::Approx(-1.0).epsilon(1e-12));
}

TEST_CASE("cosine scale invariance and zero-norm guard", "[contrastive]") {
  Rng rng(12);
  for (int t = 0; t < 50; ++t) {
    std::vector<double> q(5), k(5);
    for (auto& x : q) x = rng.normal();
    for (auto& x : k) x = rng.normal();
    double alpha = std::exp(rng.uniform(-3, 3));
    std::vector<double> qs = q;
    for (auto& x : qs) x *= alpha;
    CHECK(std::abs(cosine(qs, k) - cosine(q, k)) < 1e-12);
  }
  CHECK_THROWS_AS(cosine({0, 0, 0}, {1, 0, 0}), ValidationError);
  CHECK_THROWS_AS(cosine({1e-20, 0, 0}, {1, 0, 0}), ValidationError);  // below the 1e-12 norm guard

  // a naive sum-of-squares norm overflows at this scale
  std::vector<double> huge{1e150, -2e150, 3e150};
  std::vector<double> small{1e-10, 2e-10, -1e-10};
  CHECK(std::isfinite(cosine(huge, small)));
  CHECK(cosine(huge, huge) == Catch::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("info_nce closed forms", "[contrastive]") {
  SECTION("identical embeddings, N=2: ln 2") {
    Tensor q({2, 3}, {1, 2, 3, 1, 2, 3});
    InfoNceResult r = info_nce(q, q);
    CHECK(r.loss == Catch::Approx(std::log(2.0)).margin(1e-9));
  }

  SECTION("cosine extremes s+=1, s-=-1, N=2: ln(1 + e^-2)") {
    // q0 = k0 = e0, q1 = k1 = -e0 gives s(q_i,k_i)=1, s(q_i,k_j)=-1
    Tensor q({2, 2}, {1, 0, -1, 0});
    InfoNceResult r = info_nce(q, q);
    CHECK(r.loss == Catch::Approx(std::log(1.0 + std::exp(-2.0))).margin(1e-9));
  }

  SECTION("N < 2 is an error") {
    Tensor q({1, 3}, {1, 2, 3});
    CHECK_THROWS_AS(info_nce(q, q), ValidationError);
  }
}

TEST_CASE("info_nce row shift invariance", "[contrastive]") {
  // Softmax shift invariance on the similarity rows: verified through the
  // loss by checking the equivalent direct sum over reported similarities.
  Rng rng(9);
  Tensor q({4, 6}), k({4, 6});
  for (auto& v : q.data()) v = rng.normal();
  for (auto& v : k.data()) v = rng.normal();
  InfoNceResult r = info_nce(q, k);

  double shifted_loss = 0.0;
  for (std::size_t i = 0; i < 4; ++i) {
    const double shift = 7.5;  // same additive shift within the row
    double denom = 0.0;
    double mx = -1e300;
    for (std::size_t j = 0; j < 4; ++j) mx = std::max(mx, r.similarities[i][j] + shift);
    for (std::size_t j = 0; j < 4; ++j) denom += std::exp(r.similarities[i][j] + shift - mx);
    shifted_loss += std::log(denom) + mx - (r.similarities[i][i] + shift);
  }
  shifted_loss /= 4.0;
  CHECK(std::abs(shifted_loss - r.loss) < 1e-9);
}

TEST_CASE("info_nce is nonnegative and equals ln N on uniform rows", "[contrastive]") {
  Rng rng(21);
  for (std::size_t n : {2u, 3u, 8u}) {
    // all embeddings identical: every similarity equal
    std::vector<double> row{0.3, -1.2, 0.7};
    Tensor q({n, 3});
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t c = 0; c < 3; ++c) q.at(i, c) = row[c];
    }
    InfoNceResult r = info_nce(q, q);
    CHECK(r.loss == Catch::Approx(std::log(static_cast<double>(n))).margin(1e-9));
  }
  for (int t = 0; t < 20; ++t) {
    Tensor q({4, 5}), k({4, 5});
    for (auto& v : q.data()) v = rng.normal();
    for (auto& v : k.data()) v = rng.normal();
    CHECK(info_nce(q, k).loss >= 0.0);
  }
}

TEST_CASE("info_nce stays finite for arbitrary vector scales", "[contrastive]") {
  Tensor q({2, 3}, {1e150, -2e150, 5e149, 1e-9, 3e-9, -2e-9});
  Tensor k({2, 3}, {4e-10, 1e-10, -3e-10, 2e130, 1e130, 9e129});
  InfoNceResult r = info_nce(q, k);
  CHECK(std::isfinite(r.loss));
  for (double v : r.grad_q.data()) CHECK(std::isfinite(v));
  for (double v : r.grad_k.data()) CHECK(std::isfinite(v));
}

TEST_CASE("optional temperature divides similarities", "[contrastive]") {
  Tensor q({2, 2}, {1, 0, -1, 0});
  InfoNceResult hot = info_nce(q, q, 0.5);
  // s+ = 2, s- = -2 after dividing by 0.5
  CHECK(hot.loss == Catch::Approx(std::log(1.0 + std::exp(-4.0))).margin(1e-9));
}
