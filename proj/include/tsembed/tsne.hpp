#pragma once

#include "tsembed/common.hpp"
#include "tsembed/svm.hpp"

#include <string>
#include <vector>

namespace tsembed {

struct TsneConfig {
  double perplexity = 30.0;
  std::size_t iterations = 1000;
  double learning_rate = 200.0;
  double momentum = 0.5;
  double final_momentum = 0.8;
  std::size_t momentum_switch = 250;
  double exaggeration = 12.0;
  std::size_t exaggeration_iters = 250;
  std::uint64_t seed = 1;
  bool parallel = true;
};

struct Affinities {
  Matrix conditional;               // row i: p_{j|i}
  Matrix joint;                     // symmetrized, sums to 1
  std::vector<double> beta;         // 1 / (2 sigma_i^2)
  std::vector<double> entropy_bits; // Shannon entropy of each conditional row
  std::vector<bool> converged;
};

/// Per-row bandwidth search so that 2^H(P_i) matches the perplexity.
/// `distances` holds squared distances with a zero diagonal. Rows that do
/// not converge in 100 bisection steps become uniform (warning on stderr).
Affinities perplexity_calibrate(const Matrix &distances, double perplexity, bool parallel = true);

/// KL(P || Q) gradient for the Student-t output kernel. Writes the N x 2
/// gradient and returns KL(P || Q) for the unexaggerated P.
double tsne_gradient(const Matrix &joint, const Matrix &coords, double exaggeration, Matrix &grad);
double tsne_gradient_reference(const Matrix &joint, const Matrix &coords, double exaggeration,
                               Matrix &grad);

struct TsneResult {
  Matrix coords;          // N x 2, centered
  std::vector<double> kl; // KL before each update, plus one after the last
  Affinities affinities;
};

TsneResult tsne_embed(const FeatureRows &x, const TsneConfig &cfg = {});

std::string scatter_csv(const Matrix &coords, const std::vector<std::string> &labels);
std::string scatter_svg(const Matrix &coords, const std::vector<std::string> &labels);

/// Writes <stem>.csv (x,y,label) and <stem>.svg (one color per label, legend).
void emit_scatter(const Matrix &coords, const std::vector<std::string> &labels,
                  const std::string &stem);

} // namespace tsembed
