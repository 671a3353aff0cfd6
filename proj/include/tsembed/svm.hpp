#pragma once

#include "tsembed/common.hpp"

#include <span>
#include <string>
#include <vector>

namespace tsembed {

using FeatureRows = std::vector<std::vector<double>>;

/// exp(-gamma * ||x - y||^2)
double rbf_kernel(std::span<const double> x, std::span<const double> y, double gamma);

/// Pairwise squared Euclidean distances between rows.
Matrix squared_distances(const FeatureRows &x);
Matrix squared_distances_reference(const FeatureRows &x);
/// Squared distances between every row of `a` and every row of `b`.
Matrix cross_squared_distances(const FeatureRows &a, const FeatureRows &b);

Matrix rbf_kernel_matrix(const FeatureRows &x, double gamma);
Matrix rbf_kernel_matrix_reference(const FeatureRows &x, double gamma);

/// Solution of min 1/2 a'Qa - e'a s.t. y'a = 0, 0 <= a <= C with
/// Q_ij = y_i y_j K_ij. Decision function f(x) = sum a_i y_i K(x_i, x) + bias.
struct SmoSolution {
  std::vector<double> alpha;
  std::vector<double> gradient; // Qa - e
  double bias = 0.0;
  double objective = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
};

/// SMO on a precomputed kernel restricted to `index` (all rows when empty),
/// choosing the maximal KKT-violating pair each step. Stops when the
/// violation gap drops below tol.
SmoSolution smo_solve(const Matrix &kernel, const std::vector<int> &y, double C, double tol = 1e-3,
                      const std::vector<std::size_t> &index = {});

struct BinarySvm {
  FeatureRows support_vectors;
  std::vector<double> dual_coefs; // alpha_i * y_i
  double bias = 0.0;
  double gamma = 1.0;
  double C = 1.0;
  double objective = 0.0;
};

/// y must contain both +1 and -1.
BinarySvm smo_train(const FeatureRows &x, const std::vector<int> &y, double C, double gamma,
                    double tol = 1e-3);
double decision_value(const BinarySvm &m, std::span<const double> x);

/// One-vs-one ensemble. Pair (a, b) with a < b votes a when its decision
/// value is positive.
struct SvmModel {
  int num_classes = 0;
  double C = 1.0;
  double gamma = 1.0;
  std::vector<std::pair<int, int>> pairs;
  std::vector<BinarySvm> machines;
};

/// Labels must be 0..k-1 with every class present, k >= 2.
SvmModel ovo_train(const FeatureRows &x, const std::vector<int> &labels, double C, double gamma,
                   double tol = 1e-3);
/// Majority vote, ties to the lowest class id.
int ovo_predict(const SvmModel &model, std::span<const double> x);
std::vector<int> ovo_predict_all(const SvmModel &model, const FeatureRows &x);

/// Fraction of rows whose prediction differs from `labels`.
double evaluate(const SvmModel &model, const FeatureRows &x, const std::vector<int> &labels);
double error_rate(const std::vector<int> &predicted, const std::vector<int> &labels);

/// 10^-3 .. 10^3, one point per decade.
std::vector<double> decade_grid();

/// Stratified fold ids: each class is shuffled with `seed` and dealt
/// round-robin. Folds shrink (minimum 2, with a warning on stderr) when a
/// class is smaller than the fold count.
std::vector<int> stratified_folds(const std::vector<int> &labels, int folds, std::uint64_t seed,
                                  int *folds_used = nullptr);

struct GridSearchResult {
  double best_C = 0.0;
  double best_gamma = 0.0;
  std::vector<double> c_grid;
  std::vector<double> gamma_grid;
  Matrix cv_error; // rows: C, cols: gamma; mean fold error
  int folds = 0;
  std::vector<int> fold_of;
};

GridSearchResult grid_search_cv(const FeatureRows &x, const std::vector<int> &labels, int folds,
                                std::uint64_t seed, const std::vector<double> &c_grid = decade_grid(),
                                const std::vector<double> &gamma_grid = decade_grid());
/// Same search with a caller-supplied fold assignment.
GridSearchResult grid_search_cv_with_folds(const FeatureRows &x, const std::vector<int> &labels,
                                           const std::vector<int> &fold_of,
                                           const std::vector<double> &c_grid = decade_grid(),
                                           const std::vector<double> &gamma_grid = decade_grid(),
                                           bool parallel = true);

/// Per-dimension standardization fitted on training rows.
struct Standardizer {
  std::vector<double> mean, scale;
  static Standardizer fit(const FeatureRows &x);
  FeatureRows apply(const FeatureRows &x) const;
};

std::string svm_model_json(const SvmModel &m);
SvmModel svm_model_from_json(const std::string &text);

} // namespace tsembed
