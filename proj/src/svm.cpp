#include "tsembed/svm.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <map>
#include <stdexcept>

namespace tsembed {

namespace {

double sqdist(std::span<const double> x, std::span<const double> y) {
  double s = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double d = x[k] - y[k];
    s += d * d;
  }
  return s;
}

void check_rows(const FeatureRows &x) {
  if (x.empty())
    return;
  const auto dim = x.front().size();
  for (auto &r : x)
    if (r.size() != dim)
      throw std::invalid_argument("feature rows have inconsistent dimensions");
}

constexpr double kTau = 1e-12;

} // namespace

double rbf_kernel(std::span<const double> x, std::span<const double> y, double gamma) {
  if (x.size() != y.size())
    throw std::invalid_argument("rbf_kernel: dimension mismatch");
  if (!(gamma > 0.0))
    throw std::invalid_argument("rbf_kernel: gamma must be positive");
  return std::exp(-gamma * sqdist(x, y));
}

Matrix squared_distances(const FeatureRows &x) {
  check_rows(x);
  const std::size_t n = x.size();
  Matrix d(n, n);
  const auto sn = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(dynamic, 8)
  for (std::ptrdiff_t i = 0; i < sn; ++i)
    for (std::size_t j = 0; j < n; ++j)
      d(i, j) = sqdist(x[i], x[j]);
  return d;
}

Matrix squared_distances_reference(const FeatureRows &x) {
  check_rows(x);
  const std::size_t n = x.size();
  Matrix d(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      d(i, j) = sqdist(x[i], x[j]);
  return d;
}

Matrix cross_squared_distances(const FeatureRows &a, const FeatureRows &b) {
  check_rows(a);
  check_rows(b);
  if (!a.empty() && !b.empty() && a.front().size() != b.front().size())
    throw std::invalid_argument("cross_squared_distances: dimension mismatch");
  Matrix d(a.size(), b.size());
  const auto sn = static_cast<std::ptrdiff_t>(a.size());
#pragma omp parallel for schedule(dynamic, 8)
  for (std::ptrdiff_t i = 0; i < sn; ++i)
    for (std::size_t j = 0; j < b.size(); ++j)
      d(i, j) = sqdist(a[i], b[j]);
  return d;
}

Matrix rbf_kernel_matrix(const FeatureRows &x, double gamma) {
  if (!(gamma > 0.0))
    throw std::invalid_argument("rbf_kernel_matrix: gamma must be positive");
  Matrix k = squared_distances(x);
  const auto n = static_cast<std::ptrdiff_t>(k.data.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i)
    k.data[i] = std::exp(-gamma * k.data[i]);
  return k;
}

Matrix rbf_kernel_matrix_reference(const FeatureRows &x, double gamma) {
  if (!(gamma > 0.0))
    throw std::invalid_argument("rbf_kernel_matrix: gamma must be positive");
  Matrix k = squared_distances_reference(x);
  for (auto &v : k.data)
    v = std::exp(-gamma * v);
  return k;
}

SmoSolution smo_solve(const Matrix &kernel, const std::vector<int> &y, double C, double tol,
                      const std::vector<std::size_t> &index) {
  const std::size_t n = index.empty() ? kernel.rows : index.size();
  if (y.size() != n)
    throw std::invalid_argument("smo_solve: label count does not match the problem size");
  if (!(C > 0.0))
    throw std::invalid_argument("smo_solve: C must be positive");
  bool has_pos = false, has_neg = false;
  for (int v : y) {
    if (v == 1)
      has_pos = true;
    else if (v == -1)
      has_neg = true;
    else
      throw std::invalid_argument("smo_solve: labels must be +1 or -1");
  }
  if (!has_pos || !has_neg)
    throw std::invalid_argument("smo_solve: both classes are required");

  auto K = [&](std::size_t a, std::size_t b) {
    return index.empty() ? kernel(a, b) : kernel(index[a], index[b]);
  };

  SmoSolution s;
  s.alpha.assign(n, 0.0);
  s.gradient.assign(n, -1.0);
  auto &alpha = s.alpha;
  auto &G = s.gradient;
  const std::size_t max_iter = std::max<std::size_t>(1'000'000, 100 * n);

  auto up = [&](std::size_t t) { return (y[t] == 1 && alpha[t] < C) || (y[t] == -1 && alpha[t] > 0); };
  auto low = [&](std::size_t t) { return (y[t] == 1 && alpha[t] > 0) || (y[t] == -1 && alpha[t] < C); };

  while (s.iterations < max_iter) {
    double gmax = -std::numeric_limits<double>::infinity();
    double gmin = std::numeric_limits<double>::infinity();
    std::size_t i = n, j = n;
    for (std::size_t t = 0; t < n; ++t) {
      const double v = -y[t] * G[t];
      if (up(t) && v > gmax) {
        gmax = v;
        i = t;
      }
      if (low(t) && v < gmin) {
        gmin = v;
        j = t;
      }
    }
    if (i == n || j == n || gmax - gmin < tol) {
      s.converged = true;
      break;
    }
    ++s.iterations;

    const double Kii = K(i, i), Kjj = K(j, j), Kij = K(i, j);
    const double old_ai = alpha[i], old_aj = alpha[j];
    if (y[i] != y[j]) {
      double quad = Kii + Kjj + 2.0 * Kij * y[i] * y[j];
      if (quad <= 0)
        quad = kTau;
      const double delta = (-G[i] - G[j]) / quad;
      const double diff = alpha[i] - alpha[j];
      alpha[i] += delta;
      alpha[j] += delta;
      if (diff > 0) {
        if (alpha[j] < 0) {
          alpha[j] = 0;
          alpha[i] = diff;
        }
      } else if (alpha[i] < 0) {
        alpha[i] = 0;
        alpha[j] = -diff;
      }
      if (diff > 0) {
        if (alpha[i] > C) {
          alpha[i] = C;
          alpha[j] = C - diff;
        }
      } else if (alpha[j] > C) {
        alpha[j] = C;
        alpha[i] = C + diff;
      }
    } else {
      double quad = Kii + Kjj - 2.0 * Kij;
      if (quad <= 0)
        quad = kTau;
      const double delta = (G[i] - G[j]) / quad;
      const double sum = alpha[i] + alpha[j];
      alpha[i] -= delta;
      alpha[j] += delta;
      if (sum > C) {
        if (alpha[i] > C) {
          alpha[i] = C;
          alpha[j] = sum - C;
        }
      } else if (alpha[j] < 0) {
        alpha[j] = 0;
        alpha[i] = sum;
      }
      if (sum > C) {
        if (alpha[j] > C) {
          alpha[j] = C;
          alpha[i] = sum - C;
        }
      } else if (alpha[i] < 0) {
        alpha[i] = 0;
        alpha[j] = sum;
      }
    }
    const double dai = alpha[i] - old_ai;
    const double daj = alpha[j] - old_aj;
    for (std::size_t t = 0; t < n; ++t)
      G[t] += y[t] * (y[i] * K(t, i) * dai + y[j] * K(t, j) * daj);
  }

  // bias from free vectors, or the midpoint of the feasible interval
  double ub = std::numeric_limits<double>::infinity();
  double lb = -std::numeric_limits<double>::infinity();
  double free_sum = 0.0;
  std::size_t n_free = 0;
  for (std::size_t t = 0; t < n; ++t) {
    const double yg = y[t] * G[t];
    if (alpha[t] >= C) {
      if (y[t] == -1)
        ub = std::min(ub, yg);
      else
        lb = std::max(lb, yg);
    } else if (alpha[t] <= 0) {
      if (y[t] == 1)
        ub = std::min(ub, yg);
      else
        lb = std::max(lb, yg);
    } else {
      ++n_free;
      free_sum += yg;
    }
  }
  const double rho = n_free > 0 ? free_sum / static_cast<double>(n_free) : (ub + lb) / 2.0;
  s.bias = -rho;

  double obj = 0.0;
  for (std::size_t t = 0; t < n; ++t)
    obj += alpha[t] * (G[t] - 1.0);
  s.objective = 0.5 * obj;
  return s;
}

BinarySvm smo_train(const FeatureRows &x, const std::vector<int> &y, double C, double gamma,
                    double tol) {
  if (x.size() != y.size())
    throw std::invalid_argument("smo_train: row/label count mismatch");
  check_rows(x);
  auto K = rbf_kernel_matrix(x, gamma);
  auto sol = smo_solve(K, y, C, tol);
  BinarySvm m;
  m.bias = sol.bias;
  m.gamma = gamma;
  m.C = C;
  m.objective = sol.objective;
  for (std::size_t t = 0; t < x.size(); ++t)
    if (sol.alpha[t] > 0.0) {
      m.support_vectors.push_back(x[t]);
      m.dual_coefs.push_back(sol.alpha[t] * y[t]);
    }
  return m;
}

double decision_value(const BinarySvm &m, std::span<const double> x) {
  double f = 0.0;
  for (std::size_t k = 0; k < m.support_vectors.size(); ++k)
    f += m.dual_coefs[k] * std::exp(-m.gamma * sqdist(m.support_vectors[k], x));
  return f + m.bias;
}

namespace {

int class_count(const std::vector<int> &labels) {
  int k = 0;
  for (int l : labels) {
    if (l < 0)
      throw std::invalid_argument("class labels must be non-negative");
    k = std::max(k, l + 1);
  }
  return k;
}

// One-vs-one over rows `train` of a precomputed kernel; votes for rows `test`.
std::vector<int> ovo_fit_predict(const Matrix &K, const std::vector<int> &labels,
                                 const std::vector<std::size_t> &train,
                                 const std::vector<std::size_t> &test, int num_classes, double C,
                                 double tol) {
  std::vector<std::vector<std::size_t>> members(num_classes);
  for (auto t : train)
    members[labels[t]].push_back(t);
  std::vector<std::vector<int>> votes(test.size(), std::vector<int>(num_classes, 0));
  std::vector<std::size_t> sub;
  std::vector<int> y;
  for (int a = 0; a < num_classes; ++a)
    for (int b = a + 1; b < num_classes; ++b) {
      sub.clear();
      y.clear();
      for (auto t : train)
        if (labels[t] == a || labels[t] == b) {
          sub.push_back(t);
          y.push_back(labels[t] == a ? 1 : -1);
        }
      auto sol = smo_solve(K, y, C, tol, sub);
      for (std::size_t q = 0; q < test.size(); ++q) {
        double f = 0.0;
        for (std::size_t k = 0; k < sub.size(); ++k)
          if (sol.alpha[k] > 0.0)
            f += sol.alpha[k] * y[k] * K(sub[k], test[q]);
        f += sol.bias;
        ++votes[q][f > 0.0 ? a : b];
      }
    }
  std::vector<int> pred(test.size());
  for (std::size_t q = 0; q < test.size(); ++q)
    pred[q] = static_cast<int>(std::max_element(votes[q].begin(), votes[q].end()) - votes[q].begin());
  return pred;
}

} // namespace

SvmModel ovo_train(const FeatureRows &x, const std::vector<int> &labels, double C, double gamma,
                   double tol) {
  if (x.size() != labels.size())
    throw std::invalid_argument("ovo_train: row/label count mismatch");
  const int k = class_count(labels);
  if (k < 2)
    throw std::invalid_argument("ovo_train: at least two classes are required");
  std::vector<std::size_t> counts(k, 0);
  for (int l : labels)
    ++counts[l];
  for (int c = 0; c < k; ++c)
    if (counts[c] == 0)
      throw std::invalid_argument("ovo_train: class " + std::to_string(c) + " has no instances");
  check_rows(x);

  auto K = rbf_kernel_matrix(x, gamma);
  SvmModel m;
  m.num_classes = k;
  m.C = C;
  m.gamma = gamma;
  std::vector<std::size_t> sub;
  std::vector<int> y;
  for (int a = 0; a < k; ++a)
    for (int b = a + 1; b < k; ++b) {
      sub.clear();
      y.clear();
      for (std::size_t t = 0; t < labels.size(); ++t)
        if (labels[t] == a || labels[t] == b) {
          sub.push_back(t);
          y.push_back(labels[t] == a ? 1 : -1);
        }
      auto sol = smo_solve(K, y, C, tol, sub);
      BinarySvm bm;
      bm.bias = sol.bias;
      bm.gamma = gamma;
      bm.C = C;
      bm.objective = sol.objective;
      for (std::size_t q = 0; q < sub.size(); ++q)
        if (sol.alpha[q] > 0.0) {
          bm.support_vectors.push_back(x[sub[q]]);
          bm.dual_coefs.push_back(sol.alpha[q] * y[q]);
        }
      m.pairs.emplace_back(a, b);
      m.machines.push_back(std::move(bm));
    }
  return m;
}

int ovo_predict(const SvmModel &model, std::span<const double> x) {
  std::vector<int> votes(model.num_classes, 0);
  for (std::size_t p = 0; p < model.pairs.size(); ++p) {
    const auto [a, b] = model.pairs[p];
    ++votes[decision_value(model.machines[p], x) > 0.0 ? a : b];
  }
  return static_cast<int>(std::max_element(votes.begin(), votes.end()) - votes.begin());
}

std::vector<int> ovo_predict_all(const SvmModel &model, const FeatureRows &x) {
  std::vector<int> out(x.size());
  const auto n = static_cast<std::ptrdiff_t>(x.size());
#pragma omp parallel for schedule(dynamic, 8)
  for (std::ptrdiff_t i = 0; i < n; ++i)
    out[i] = ovo_predict(model, x[i]);
  return out;
}

double error_rate(const std::vector<int> &predicted, const std::vector<int> &labels) {
  if (predicted.size() != labels.size())
    throw std::invalid_argument("error_rate: size mismatch");
  if (labels.empty())
    return 0.0;
  std::size_t wrong = 0;
  for (std::size_t i = 0; i < labels.size(); ++i)
    wrong += predicted[i] != labels[i];
  return static_cast<double>(wrong) / static_cast<double>(labels.size());
}

double evaluate(const SvmModel &model, const FeatureRows &x, const std::vector<int> &labels) {
  return error_rate(ovo_predict_all(model, x), labels);
}

std::vector<double> decade_grid() { return {1e-3, 1e-2, 1e-1, 1.0, 1e1, 1e2, 1e3}; }

std::vector<int> stratified_folds(const std::vector<int> &labels, int folds, std::uint64_t seed,
                                  int *folds_used) {
  if (labels.empty())
    throw std::invalid_argument("stratified_folds: no instances");
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i)
    by_class[labels[i]].push_back(i);
  std::size_t smallest = labels.size();
  for (auto &[c, idx] : by_class)
    smallest = std::min(smallest, idx.size());
  if (smallest < 2)
    throw std::invalid_argument("stratified_folds: every class needs at least 2 instances");
  int k = folds;
  if (smallest < static_cast<std::size_t>(folds)) {
    k = static_cast<int>(smallest);
    std::cerr << "warning: smallest class has " << smallest << " instances; using " << k
              << " folds instead of " << folds << "\n";
  }
  if (k < 2)
    throw std::invalid_argument("stratified_folds: at least 2 folds are required");
  std::vector<int> fold(labels.size(), 0);
  Rng rng(seed);
  for (auto &[c, idx] : by_class) {
    std::shuffle(idx.begin(), idx.end(), rng);
    for (std::size_t r = 0; r < idx.size(); ++r)
      fold[idx[r]] = static_cast<int>(r % static_cast<std::size_t>(k));
  }
  if (folds_used)
    *folds_used = k;
  return fold;
}

GridSearchResult grid_search_cv_with_folds(const FeatureRows &x, const std::vector<int> &labels,
                                           const std::vector<int> &fold_of,
                                           const std::vector<double> &c_grid,
                                           const std::vector<double> &gamma_grid, bool parallel) {
  if (x.size() != labels.size() || fold_of.size() != labels.size())
    throw std::invalid_argument("grid_search_cv: size mismatch");
  if (c_grid.empty() || gamma_grid.empty())
    throw std::invalid_argument("grid_search_cv: empty grid");
  check_rows(x);
  const int num_classes = class_count(labels);
  const int folds = *std::max_element(fold_of.begin(), fold_of.end()) + 1;

  std::vector<std::vector<std::size_t>> fold_train(folds), fold_test(folds);
  for (std::size_t i = 0; i < labels.size(); ++i)
    for (int f = 0; f < folds; ++f)
      (fold_of[i] == f ? fold_test[f] : fold_train[f]).push_back(i);

  GridSearchResult r;
  r.c_grid = c_grid;
  r.gamma_grid = gamma_grid;
  r.folds = folds;
  r.fold_of = fold_of;
  r.cv_error = Matrix(c_grid.size(), gamma_grid.size());

  const Matrix D = parallel ? squared_distances(x) : squared_distances_reference(x);
  Matrix K(D.rows, D.cols);
  std::vector<double> fold_err(c_grid.size() * folds);
  for (std::size_t g = 0; g < gamma_grid.size(); ++g) {
    for (std::size_t i = 0; i < D.data.size(); ++i)
      K.data[i] = std::exp(-gamma_grid[g] * D.data[i]);
    const auto tasks = static_cast<std::ptrdiff_t>(fold_err.size());
    std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic, 1) if (parallel)
    for (std::ptrdiff_t task = 0; task < tasks; ++task) {
      const auto ci = static_cast<std::size_t>(task) / folds;
      const auto f = static_cast<int>(task % folds);
      try {
        auto pred = ovo_fit_predict(K, labels, fold_train[f], fold_test[f], num_classes,
                                    c_grid[ci], 1e-3);
        std::size_t wrong = 0;
        for (std::size_t q = 0; q < pred.size(); ++q)
          wrong += pred[q] != labels[fold_test[f][q]];
        fold_err[task] = static_cast<double>(wrong) / static_cast<double>(pred.size());
      } catch (...) {
#pragma omp critical
        failure = std::current_exception();
      }
    }
    if (failure)
      std::rethrow_exception(failure);
    for (std::size_t ci = 0; ci < c_grid.size(); ++ci) {
      double s = 0.0;
      for (int f = 0; f < folds; ++f)
        s += fold_err[ci * folds + f];
      r.cv_error(ci, g) = s / folds;
    }
  }

  double best = std::numeric_limits<double>::infinity();
  for (std::size_t ci = 0; ci < c_grid.size(); ++ci)
    for (std::size_t g = 0; g < gamma_grid.size(); ++g)
      if (r.cv_error(ci, g) < best) {
        best = r.cv_error(ci, g);
        r.best_C = c_grid[ci];
        r.best_gamma = gamma_grid[g];
      }
  return r;
}

GridSearchResult grid_search_cv(const FeatureRows &x, const std::vector<int> &labels, int folds,
                                std::uint64_t seed, const std::vector<double> &c_grid,
                                const std::vector<double> &gamma_grid) {
  auto fold_of = stratified_folds(labels, folds, seed);
  return grid_search_cv_with_folds(x, labels, fold_of, c_grid, gamma_grid);
}

Standardizer Standardizer::fit(const FeatureRows &x) {
  Standardizer s;
  if (x.empty())
    return s;
  const std::size_t d = x.front().size();
  s.mean.assign(d, 0.0);
  s.scale.assign(d, 0.0);
  for (auto &r : x)
    for (std::size_t k = 0; k < d; ++k)
      s.mean[k] += r[k];
  for (auto &m : s.mean)
    m /= static_cast<double>(x.size());
  for (auto &r : x)
    for (std::size_t k = 0; k < d; ++k)
      s.scale[k] += (r[k] - s.mean[k]) * (r[k] - s.mean[k]);
  for (auto &v : s.scale) {
    v = std::sqrt(v / static_cast<double>(x.size()));
    if (v < 1e-12)
      v = 1.0;
  }
  return s;
}

FeatureRows Standardizer::apply(const FeatureRows &x) const {
  FeatureRows out = x;
  for (auto &r : out)
    for (std::size_t k = 0; k < r.size() && k < mean.size(); ++k)
      r[k] = (r[k] - mean[k]) / scale[k];
  return out;
}

std::string svm_model_json(const SvmModel &m) {
  nlohmann::json j;
  j["format"] = "tsembed-svm";
  j["version"] = 1;
  j["num_classes"] = m.num_classes;
  j["C"] = m.C;
  j["gamma"] = m.gamma;
  j["machines"] = nlohmann::json::array();
  for (std::size_t p = 0; p < m.machines.size(); ++p) {
    auto &b = m.machines[p];
    j["machines"].push_back({{"pair", {m.pairs[p].first, m.pairs[p].second}},
                             {"bias", b.bias},
                             {"objective", b.objective},
                             {"dual_coefs", b.dual_coefs},
                             {"support_vectors", b.support_vectors}});
  }
  return j.dump();
}

SvmModel svm_model_from_json(const std::string &text) {
  auto j = nlohmann::json::parse(text);
  if (j.value("format", "") != "tsembed-svm" || j.value("version", 0) != 1)
    throw ParseError("not a tsembed SVM model");
  SvmModel m;
  m.num_classes = j.at("num_classes").get<int>();
  m.C = j.at("C").get<double>();
  m.gamma = j.at("gamma").get<double>();
  for (auto &e : j.at("machines")) {
    BinarySvm b;
    b.bias = e.at("bias").get<double>();
    b.objective = e.at("objective").get<double>();
    b.dual_coefs = e.at("dual_coefs").get<std::vector<double>>();
    b.support_vectors = e.at("support_vectors").get<FeatureRows>();
    b.C = m.C;
    b.gamma = m.gamma;
    m.pairs.emplace_back(e.at("pair")[0].get<int>(), e.at("pair")[1].get<int>());
    m.machines.push_back(std::move(b));
  }
  return m;
}

} // namespace tsembed
