#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <random>

#include "oracles.hpp"
#include "trex/common.hpp"
#include "trex/mixture.hpp"

using namespace trex;

namespace {

LanguageIndex make_index(std::size_t k) {
  std::vector<std::string> tags;
  for (std::size_t i = 0; i < k; ++i) tags.push_back("lang" + std::to_string(i));
  return LanguageIndex(tags);
}

bool on_simplex(const Mixture& w) {
  double sum = 0.0;
  for (double wi : w.weights()) {
    if (wi < 0.0) return false;
    sum += wi;
  }
  return std::abs(sum - 1.0) <= 1e-9;
}

}  // namespace

TEST_CASE("mixture renormalizes then asserts invariants") {
  Mixture w({2.0, 1.0, 1.0});
  CHECK(w[0] == doctest::Approx(0.5));
  CHECK(on_simplex(w));
  CHECK_THROWS_AS(Mixture({1.0, -0.1}), ValidationError);
  CHECK_THROWS_AS(Mixture({0.0, 0.0}), ValidationError);
  CHECK_THROWS_AS(Mixture({}), ValidationError);
}

TEST_CASE("language index rejects duplicates") {
  CHECK_THROWS_AS(LanguageIndex({"a", "b", "a"}), ValidationError);
  auto index = make_index(3);
  CHECK(index.find("lang1") == 1);
  CHECK(!index.find("nope"));
}

TEST_CASE("mixture json round trip, any key order, 6 decimals") {
  auto index = make_index(3);
  Mixture w({0.5, 0.3, 0.2});
  const std::string text = w.to_json(index);
  CHECK(text == R"({"lang0": 0.500000, "lang1": 0.300000, "lang2": 0.200000})");
  auto back = Mixture::from_json(R"({"lang2": 2, "lang0": 5, "lang1": 3})", index);
  CHECK(back[0] == doctest::Approx(0.5));
  CHECK(back[2] == doctest::Approx(0.2));
  CHECK_THROWS_AS(Mixture::from_json(R"({"bogus": 1})", index), ValidationError);
  CHECK_THROWS_AS(Mixture::from_json("[1,2]", index), ParseError);
}

TEST_CASE("sample_mixtures yields valid simplex points") {
  auto index = make_index(3);
  auto ms = sample_mixtures(index, {1, 1, 1}, {1.0, true, 7}, 1);
  REQUIRE(ms.size() == 1);
  CHECK(on_simplex(ms[0]));
}

TEST_CASE("sample_mixtures is deterministic per seed") {
  auto index = make_index(4);
  DirichletConfig cfg{1.0, true, 99};
  auto a = sample_mixtures(index, {4, 3, 2, 1}, cfg, 20);
  auto b = sample_mixtures(index, {4, 3, 2, 1}, cfg, 20);
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t j = 0; j < 4; ++j) CHECK(a[i][j] == b[i][j]);
  }
}

TEST_CASE("size-weighted dirichlet mean matches byte proportions") {
  // Dirichlet mean for sizes [3,1] is 3/4; Monte-Carlo estimate.
  auto index = make_index(2);
  auto ms = sample_mixtures(index, {3, 1}, {1.0, true, 42}, 100000);
  double mean = 0.0;
  for (const auto& w : ms) mean += w[0];
  mean /= static_cast<double>(ms.size());
  CHECK(mean > 0.74);
  CHECK(mean < 0.76);
}

TEST_CASE("sample_mixtures input validation") {
  auto index = make_index(2);
  CHECK_THROWS_AS(sample_mixtures(index, {1, 0}, {1.0, true, 0}, 5),
                  ValidationError);
  CHECK_THROWS_AS(sample_mixtures(index, {1, -2}, {1.0, true, 0}, 5),
                  ValidationError);
  CHECK_THROWS_AS(sample_mixtures(index, {1, 1}, {0.0, true, 0}, 5),
                  ValidationError);
}

TEST_CASE("paper-size sampling budget: 512 mixtures over 19 languages") {
  auto index = make_index(19);
  std::vector<double> sizes(19);
  for (std::size_t i = 0; i < 19; ++i) sizes[i] = 1e9 * static_cast<double>(i + 1);
  auto ms = sample_mixtures(index, sizes, {1.0, true, 3}, 512);
  CHECK(ms.size() == 512);
  for (const auto& w : ms) CHECK(on_simplex(w));
}

TEST_CASE("candidate stream: count, validity, determinism") {
  auto index = make_index(5);
  std::vector<double> sizes{5, 4, 3, 2, 1};
  CandidateStream a(index, sizes, 100000, 11);
  CandidateStream b(index, sizes, 100000, 11);
  std::size_t total = 0;
  for (std::size_t c = 0; c < a.chunk_count(); ++c) {
    auto ca = a.chunk(c);
    auto cb = b.chunk(c);
    REQUIRE(ca.size() == cb.size());
    for (std::size_t i = 0; i < ca.size(); ++i) {
      CHECK(ca[i].first == cb[i].first);
      CHECK(on_simplex(ca[i].second));
      for (std::size_t j = 0; j < 5; ++j) {
        CHECK(ca[i].second[j] == cb[i].second[j]);
      }
    }
    total += ca.size();
  }
  CHECK(total == 100000);
}

TEST_CASE("candidate stream chunks are independent of read order") {
  auto index = make_index(3);
  CandidateStream s(index, {1, 2, 3}, 30000, 5);
  auto late = s.chunk(2);
  auto early = s.chunk(2);
  REQUIRE(late.size() == early.size());
  for (std::size_t i = 0; i < late.size(); ++i) {
    CHECK(late[i].second[0] == early[i].second[0]);
  }
}

TEST_CASE("mixture entropy: extremes and known values") {
  CHECK(mixture_entropy(Mixture::uniform(19)) == doctest::Approx(1.0));
  CHECK(mixture_entropy(Mixture({1.0, 0.0, 0.0})) == doctest::Approx(0.0));
  // Two equal weights out of four: H = log 2 / log 4 = 0.5.
  CHECK(mixture_entropy(Mixture({0.5, 0.5, 0.0, 0.0})) == doctest::Approx(0.5));
}

TEST_CASE("entropy is permutation invariant") {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 50; ++trial) {
    auto w = trex::testing::random_simplex_point(rng, 6);
    Mixture a(w);
    std::shuffle(w.begin(), w.end(), rng);
    Mixture b(w);
    CHECK(mixture_entropy(a) == doctest::Approx(mixture_entropy(b)).epsilon(1e-12));
  }
}

TEST_CASE("uniform strictly maximizes entropy") {
  std::mt19937_64 rng(23);
  const double uniform_h = mixture_entropy(Mixture::uniform(7));
  for (int trial = 0; trial < 1000; ++trial) {
    auto w = trex::testing::random_simplex_point(rng, 7);
    Mixture m(w);
    bool is_uniform = true;
    for (double wi : m.weights()) {
      if (std::abs(wi - 1.0 / 7.0) > 1e-9) is_uniform = false;
    }
    if (!is_uniform) CHECK(mixture_entropy(m) < uniform_h);
  }
}
