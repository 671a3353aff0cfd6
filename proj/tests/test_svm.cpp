#include <doctest.h>

#include "oracles.hpp"
#include "tsembed/svm.hpp"

#include <cmath>
#include <numeric>

using namespace tsembed;

namespace {

/// n points per class around centers spaced `sep` apart on a line in 2-D.
void blobs(int classes, int n, double sep, std::uint64_t seed, FeatureRows &x,
           std::vector<int> &y) {
  Rng rng(seed);
  std::normal_distribution<double> g;
  for (int c = 0; c < classes; ++c)
    for (int i = 0; i < n; ++i) {
      x.push_back({c * sep + g(rng), g(rng)});
      y.push_back(c);
    }
}

double dual_objective(const Matrix &K, const std::vector<int> &y, const std::vector<double> &a) {
  double obj = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    obj -= a[i];
    for (std::size_t j = 0; j < a.size(); ++j)
      obj += 0.5 * a[i] * a[j] * y[i] * y[j] * K(i, j);
  }
  return obj;
}

} // namespace

TEST_CASE("rbf_kernel") {
  std::vector<double> x{0.5, -1.0}, y{1e6, 0.0};
  CHECK(rbf_kernel(x, x, 3.0) == 1.0);
  CHECK(rbf_kernel(x, y, 1.0) == 0.0);
  CHECK(rbf_kernel(std::vector<double>{0.0}, std::vector<double>{1.0}, 1.0) ==
        doctest::Approx(0.367879).epsilon(1e-6));
  CHECK_THROWS_AS(rbf_kernel(x, std::vector<double>{1.0}, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(rbf_kernel(x, x, 0.0), std::invalid_argument);
}

TEST_CASE("kernel matrix is symmetric positive semidefinite") {
  Rng rng(2);
  std::normal_distribution<double> g;
  for (int trial = 0; trial < 10; ++trial) {
    FeatureRows x(25, std::vector<double>(4));
    for (auto &r : x)
      for (auto &v : r)
        v = g(rng);
    x[3] = x[7]; // a duplicate makes K singular
    for (double gamma : {1e-3, 0.1, 10.0}) {
      auto K = rbf_kernel_matrix(x, gamma);
      for (std::size_t i = 0; i < K.rows; ++i)
        for (std::size_t j = 0; j < K.cols; ++j)
          CHECK(K(i, j) == K(j, i));
      CHECK(oracle::cholesky_ok(K, 1e-8));
    }
  }
}

TEST_CASE("two-point SMO against the closed-form dual") {
  for (double gamma : {0.5, 1.0, 2.0}) {
    FeatureRows x{{0.0}, {1.0}};
    std::vector<int> y{1, -1};
    auto m = smo_train(x, y, 1e6, gamma, 1e-9);
    const double alpha = 1.0 / (1.0 - std::exp(-gamma));
    REQUIRE(m.dual_coefs.size() == 2);
    CHECK(m.dual_coefs[0] == doctest::Approx(alpha).epsilon(1e-6));
    CHECK(m.dual_coefs[1] == doctest::Approx(-alpha).epsilon(1e-6));
    CHECK(std::abs(m.bias) < 1e-6);
    CHECK(decision_value(m, std::vector<double>{0.0}) > 0.0);
    CHECK(decision_value(m, std::vector<double>{1.0}) < 0.0);
    CHECK(std::abs(decision_value(m, std::vector<double>{0.5})) < 1e-6);
    CHECK(decision_value(m, std::vector<double>{0.49}) > 0.0);
    CHECK(decision_value(m, std::vector<double>{0.51}) < 0.0);
  }
}

TEST_CASE("XOR is separable with an RBF kernel") {
  FeatureRows x{{0, 0}, {1, 1}, {0, 1}, {1, 0}};
  std::vector<int> y{1, 1, -1, -1};
  auto m = smo_train(x, y, 1000.0, 1.0);
  for (std::size_t i = 0; i < 4; ++i)
    CHECK((decision_value(m, x[i]) > 0) == (y[i] > 0));
  auto K = rbf_kernel_matrix(x, 1.0);
  CHECK(m.objective == doctest::Approx(oracle::svm_dual_optimum(K, y, 1000.0)).epsilon(1e-3));
}

TEST_CASE("SMO on random problems: constraints, KKT and the exact optimum") {
  Rng rng(31);
  std::normal_distribution<double> g;
  std::uniform_int_distribution<int> coin(0, 1);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 8;
    FeatureRows x(n, std::vector<double>(2));
    std::vector<int> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      x[i] = {g(rng), g(rng)};
      y[i] = i < 2 ? (i == 0 ? 1 : -1) : (coin(rng) ? 1 : -1);
    }
    const double C = trial % 2 ? 1.0 : 10.0;
    const double gamma = 0.5;
    auto K = rbf_kernel_matrix(x, gamma);
    auto sol = smo_solve(K, y, C, 1e-3);
    CHECK(sol.converged);

    double eq = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      CHECK(sol.alpha[i] >= 0.0);
      CHECK(sol.alpha[i] <= C);
      eq += sol.alpha[i] * y[i];
    }
    CHECK(std::abs(eq) < 1e-6);

    const double best = oracle::svm_dual_optimum(K, y, C);
    CHECK(sol.objective == doctest::Approx(dual_objective(K, y, sol.alpha)).epsilon(1e-10));
    CHECK(sol.objective - best <= 1e-3);
    CHECK(sol.objective >= best - 1e-9);

    auto m = smo_train(x, y, C, gamma, 1e-3);
    for (std::size_t i = 0; i < n; ++i) {
      const double yf = y[i] * decision_value(m, x[i]);
      if (sol.alpha[i] <= 0.0)
        CHECK(yf >= 1.0 - 1e-3);
      else if (sol.alpha[i] >= C)
        CHECK(yf <= 1.0 + 1e-3);
      else
        CHECK(std::abs(yf - 1.0) <= 1e-3);
    }
  }
}

TEST_CASE("duplicating every training point keeps the decision function") {
  FeatureRows x;
  std::vector<int> labels;
  blobs(2, 15, 2.0, 4, x, labels);
  std::vector<int> y;
  for (int l : labels)
    y.push_back(l == 0 ? 1 : -1);
  auto once = smo_train(x, y, 1.0, 0.5, 1e-6);
  FeatureRows x2 = x;
  x2.insert(x2.end(), x.begin(), x.end());
  std::vector<int> y2 = y;
  y2.insert(y2.end(), y.begin(), y.end());
  // Each copy carries half the weight, so C halves to keep the same problem.
  auto twice = smo_train(x2, y2, 0.5, 0.5, 1e-6);
  for (double a = -2; a <= 4; a += 0.5)
    for (double b = -2; b <= 2; b += 0.5) {
      std::vector<double> p{a, b};
      CHECK(decision_value(twice, p) == doctest::Approx(decision_value(once, p)).epsilon(1e-4).scale(1.0));
    }
}

TEST_CASE("single-class input is rejected") {
  FeatureRows x{{0}, {1}};
  CHECK_THROWS_AS(smo_train(x, {1, 1}, 1.0, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(smo_train(x, {1, 0}, 1.0, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(ovo_train(x, {0, 0}, 1.0, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(ovo_train(x, {0, 2}, 1.0, 1.0), std::invalid_argument);
}

TEST_CASE("one-vs-one") {
  SUBCASE("two classes reduce to one binary machine") {
    FeatureRows x;
    std::vector<int> labels;
    blobs(2, 20, 1.5, 7, x, labels);
    auto m = ovo_train(x, labels, 1.0, 0.5);
    REQUIRE(m.machines.size() == 1);
    std::vector<int> y;
    for (int l : labels)
      y.push_back(l == 0 ? 1 : -1);
    auto b = smo_train(x, y, 1.0, 0.5);
    CHECK(m.machines[0].dual_coefs == b.dual_coefs);
    CHECK(m.machines[0].bias == b.bias);
    std::size_t wrong = 0;
    for (std::size_t i = 0; i < x.size(); ++i)
      wrong += (decision_value(b, x[i]) > 0) != (y[i] > 0);
    CHECK(evaluate(m, x, labels) == static_cast<double>(wrong) / x.size());
  }

  SUBCASE("three separated blobs") {
    FeatureRows x, xt;
    std::vector<int> y, yt;
    blobs(3, 30, 6.0, 1, x, y);
    blobs(3, 50, 6.0, 2, xt, yt);
    auto m = ovo_train(x, y, 1.0, 0.1);
    CHECK(m.machines.size() == 3);
    CHECK(evaluate(m, xt, yt) < 0.05);

    // training order does not matter
    std::vector<std::size_t> perm(x.size());
    std::iota(perm.begin(), perm.end(), 0);
    Rng rng(5);
    std::shuffle(perm.begin(), perm.end(), rng);
    FeatureRows xp;
    std::vector<int> yp;
    for (auto i : perm) {
      xp.push_back(x[i]);
      yp.push_back(y[i]);
    }
    auto mp = ovo_train(xp, yp, 1.0, 0.1, 1e-6);
    auto mo = ovo_train(x, y, 1.0, 0.1, 1e-6);
    CHECK(ovo_predict_all(mp, xt) == ovo_predict_all(mo, xt));

    auto back = svm_model_from_json(svm_model_json(m));
    CHECK(ovo_predict_all(back, xt) == ovo_predict_all(m, xt));
    CHECK(back.pairs == m.pairs);
    CHECK_THROWS_AS(svm_model_from_json(R"({"format":"other"})"), ParseError);
  }

  SUBCASE("vote ties go to the lowest class id") {
    // three machines each voting for a different class: 0 beats 1, 1 beats 2, 2 beats 0
    SvmModel m;
    m.num_classes = 3;
    m.pairs = {{0, 1}, {0, 2}, {1, 2}};
    auto constant = [](double b) {
      BinarySvm s;
      s.bias = b;
      return s;
    };
    m.machines = {constant(1.0), constant(-1.0), constant(1.0)};
    CHECK(ovo_predict(m, std::vector<double>{0.0}) == 0);
    m.machines = {constant(-1.0), constant(-1.0), constant(1.0)};
    CHECK(ovo_predict(m, std::vector<double>{0.0}) == 1);
  }
}

TEST_CASE("error_rate") {
  std::vector<int> labels{0, 1, 2, 0, 1, 2};
  CHECK(error_rate(labels, labels) == 0.0);
  CHECK(error_rate(std::vector<int>(6, 1), labels) == doctest::Approx(2.0 / 3.0));
  std::vector<int> some{0, 2, 2, 1, 1, 0};
  std::size_t right = 0;
  for (std::size_t i = 0; i < 6; ++i)
    right += some[i] == labels[i];
  CHECK(error_rate(some, labels) + right / 6.0 == 1.0);
  CHECK_THROWS(error_rate({0}, labels));
}

TEST_CASE("stratified folds") {
  std::vector<int> labels;
  for (int c = 0; c < 3; ++c)
    for (int i = 0; i < 11; ++i)
      labels.push_back(c);
  auto f = stratified_folds(labels, 5, 3);
  for (int c = 0; c < 3; ++c) {
    std::vector<int> per(5, 0);
    for (std::size_t i = 0; i < labels.size(); ++i)
      if (labels[i] == c)
        ++per[f[i]];
    CHECK(*std::max_element(per.begin(), per.end()) - *std::min_element(per.begin(), per.end()) <= 1);
  }
  CHECK(stratified_folds(labels, 5, 3) == f);
  CHECK(stratified_folds(labels, 5, 4) != f);

  std::vector<int> small{0, 0, 0, 1, 1, 1, 1};
  int used = 0;
  auto g = stratified_folds(small, 5, 1, &used);
  CHECK(used == 3);
  CHECK(*std::max_element(g.begin(), g.end()) == 2);
  CHECK_THROWS(stratified_folds({0, 1, 1}, 5, 1));
}

TEST_CASE("grid search") {
  FeatureRows x;
  std::vector<int> y;
  blobs(3, 10, 3.0, 9, x, y);
  auto fold_of = stratified_folds(y, 5, 2);
  auto r = grid_search_cv_with_folds(x, y, fold_of);
  CHECK(r.c_grid == std::vector<double>{1e-3, 1e-2, 1e-1, 1, 10, 100, 1000});
  CHECK(r.cv_error.rows == 7);
  CHECK(r.cv_error.cols == 7);
  CHECK(r.folds == 5);

  // argmin with ties to smaller C, then smaller gamma
  double best = 2.0;
  std::size_t bc = 0, bg = 0;
  for (std::size_t c = 0; c < 7; ++c)
    for (std::size_t g = 0; g < 7; ++g)
      if (r.cv_error(c, g) < best) {
        best = r.cv_error(c, g);
        bc = c;
        bg = g;
      }
  CHECK(r.best_C == r.c_grid[bc]);
  CHECK(r.best_gamma == r.gamma_grid[bg]);

  // one cell recomputed from independently trained fold models
  const std::size_t ci = 4, gi = 2;
  double sum = 0.0;
  for (int f = 0; f < 5; ++f) {
    FeatureRows tr, te;
    std::vector<int> ytr, yte;
    for (std::size_t i = 0; i < x.size(); ++i)
      if (fold_of[i] == f) {
        te.push_back(x[i]);
        yte.push_back(y[i]);
      } else {
        tr.push_back(x[i]);
        ytr.push_back(y[i]);
      }
    sum += evaluate(ovo_train(tr, ytr, r.c_grid[ci], r.gamma_grid[gi]), te, yte);
  }
  CHECK(r.cv_error(ci, gi) == doctest::Approx(sum / 5.0).epsilon(1e-12));

  // permuting instances together with their folds leaves the table alone
  std::vector<std::size_t> perm(x.size());
  std::iota(perm.begin(), perm.end(), 0);
  std::reverse(perm.begin(), perm.end());
  FeatureRows xp;
  std::vector<int> yp, fp;
  for (auto i : perm) {
    xp.push_back(x[i]);
    yp.push_back(y[i]);
    fp.push_back(fold_of[i]);
  }
  auto rp = grid_search_cv_with_folds(xp, yp, fp);
  for (std::size_t k = 0; k < r.cv_error.data.size(); ++k)
    CHECK(rp.cv_error.data[k] == doctest::Approx(r.cv_error.data[k]).epsilon(1e-12));

  auto serial = grid_search_cv_with_folds(x, y, fold_of, decade_grid(), decade_grid(), false);
  CHECK(serial.cv_error == r.cv_error);

  // a single zero-error cell is selected
  FeatureRows xs;
  std::vector<int> ys;
  blobs(3, 10, 12.0, 9, xs, ys);
  auto one = grid_search_cv_with_folds(xs, ys, fold_of, {1.0}, {1e3, 0.1});
  CHECK(one.cv_error(0, 0) > 0.0);
  CHECK(one.cv_error(0, 1) == 0.0);
  CHECK(one.best_gamma == 0.1);
}

TEST_CASE("standardizer") {
  FeatureRows x{{1, 5}, {3, 5}, {5, 5}};
  auto s = Standardizer::fit(x);
  auto z = s.apply(x);
  CHECK(z[0][0] == doctest::Approx(-1.224745).epsilon(1e-6));
  CHECK(z[2][0] == doctest::Approx(1.224745).epsilon(1e-6));
  CHECK(z[1][1] == 0.0);
}
