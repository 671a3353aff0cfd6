#include <doctest.h>

#include "oracles.hpp"
#include "tsembed/dtw.hpp"

#include <cmath>

using namespace tsembed;

namespace {

std::vector<double> random_values(std::size_t n, Rng &rng) {
  std::normal_distribution<double> g;
  std::vector<double> v(n);
  for (auto &x : v)
    x = g(rng);
  return v;
}

} // namespace

TEST_CASE("dtw examples") {
  std::vector<double> x{0.3, -1.0, 2.0, 0.5};
  CHECK(dtw_distance(x, x) == 0.0);
  CHECK(dtw_distance(std::vector<double>{0.0}, std::vector<double>{1.0, 1.0}) == 2.0);
  CHECK(oracle::dtw_brute_force({0.0}, {1.0, 1.0}) == 2.0);
  CHECK(dtw_distance(std::vector<double>{0, 1, 2}, std::vector<double>{0, 0, 1, 2, 2}) == 0.0);
  CHECK_THROWS_AS(dtw_distance(std::vector<double>{}, x), std::invalid_argument);
}

TEST_CASE("dtw matches brute-force path enumeration") {
  Rng rng(17);
  std::uniform_int_distribution<int> len(1, 6);
  for (int trial = 0; trial < 300; ++trial) {
    auto a = random_values(len(rng), rng);
    auto b = random_values(len(rng), rng);
    const double dp = dtw_distance(a, b);
    CHECK(dp == doctest::Approx(oracle::dtw_brute_force(a, b)).epsilon(1e-12));
    CHECK(dp == dtw_distance(b, a));
    CHECK(dp >= 0.0);
  }
}

TEST_CASE("dtw bounded by the diagonal path and monotone in the window") {
  Rng rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    auto a = random_values(20, rng);
    auto b = random_values(20, rng);
    double diag = 0.0;
    for (std::size_t t = 0; t < 20; ++t)
      diag += (a[t] - b[t]) * (a[t] - b[t]);
    CHECK(dtw_distance(a, b) <= diag);
    CHECK(dtw_distance(a, b, DtwConfig{0}) == doctest::Approx(diag).epsilon(1e-12));
    double last = dtw_distance(a, b, DtwConfig{0});
    for (std::size_t w = 1; w <= 20; ++w) {
      const double d = dtw_distance(a, b, DtwConfig{w});
      CHECK(d <= last);
      last = d;
    }
    CHECK(last == dtw_distance(a, b));
  }
}

TEST_CASE("dtw band that admits no path") {
  std::vector<double> a(10, 0.0), b(4, 1.0);
  CHECK_THROWS_AS(dtw_distance(a, b, DtwConfig{5}), std::invalid_argument);
  CHECK_NOTHROW(dtw_distance(a, b, DtwConfig{6}));
}

TEST_CASE("1-NN classification") {
  Rng rng(8);
  std::vector<TimeSeries> train, test;
  for (int i = 0; i < 6; ++i)
    train.push_back({random_values(8, rng), i % 3});
  for (int i = 0; i < 10; ++i)
    test.push_back({random_values(3 + i % 6, rng), i % 3});

  auto r = dtw_1nn_classify(train, test);
  std::size_t wrong = 0;
  for (std::size_t q = 0; q < test.size(); ++q) {
    std::size_t best = 0;
    double bd = oracle::dtw_brute_force(test[q].values, train[0].values);
    for (std::size_t j = 1; j < train.size(); ++j) {
      const double d = oracle::dtw_brute_force(test[q].values, train[j].values);
      if (d < bd - 1e-12) {
        bd = d;
        best = j;
      }
    }
    CHECK(r.neighbors[q] == best);
    CHECK(r.predictions[q] == *train[best].label);
    wrong += r.predictions[q] != *test[q].label;
  }
  CHECK(r.error_rate == static_cast<double>(wrong) / test.size());

  std::vector<TimeSeries> copy{train[4]};
  copy[0].label = 2;
  auto exact = dtw_1nn_classify(train, copy);
  CHECK(exact.neighbors[0] == 4);
  CHECK(exact.predictions[0] == *train[4].label);

  // ties go to the lowest training index
  std::vector<TimeSeries> twins{{{1, 2, 3}, 0}, {{1, 2, 3}, 1}};
  CHECK(dtw_1nn_classify(twins, {{{1, 2, 3}, 1}}).predictions[0] == 0);

  CHECK_THROWS(dtw_1nn_classify({}, test));
}

TEST_CASE("distance matrix CSV") {
  Matrix d(2, 3);
  d.data = {0, 1.5, 2, 3, 4, 0.25};
  CHECK(distance_matrix_csv(d) == "0,1.5,2\n3,4,0.25\n");
}
