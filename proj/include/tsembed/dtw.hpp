#pragma once

#include "tsembed/common.hpp"
#include "tsembed/dataio.hpp"

#include <optional>
#include <span>
#include <vector>

namespace tsembed {

struct DtwConfig {
  /// Sakoe-Chiba radius |i - j| <= window; unset means unconstrained.
  std::optional<std::size_t> window;
};

/// Minimum cumulative squared point cost over monotone warping paths
/// (no final square root).
double dtw_distance(std::span<const double> a, std::span<const double> b,
                    const DtwConfig &cfg = {});
double dtw_distance(const TimeSeries &a, const TimeSeries &b, const DtwConfig &cfg = {});

/// test x train distance matrix.
Matrix dtw_distance_matrix(const std::vector<TimeSeries> &test,
                           const std::vector<TimeSeries> &train, const DtwConfig &cfg = {});
Matrix dtw_distance_matrix_reference(const std::vector<TimeSeries> &test,
                                     const std::vector<TimeSeries> &train,
                                     const DtwConfig &cfg = {});

struct NnResult {
  std::vector<int> predictions;
  std::vector<std::size_t> neighbors;
  double error_rate = 0.0;
};

/// 1-NN over a precomputed test x train distance matrix; ties go to the
/// lowest training index.
NnResult nearest_neighbor_classify(const Matrix &distances, const std::vector<TimeSeries> &train,
                                   const std::vector<TimeSeries> &test);

NnResult dtw_1nn_classify(const std::vector<TimeSeries> &train,
                          const std::vector<TimeSeries> &test, const DtwConfig &cfg = {});

std::string distance_matrix_csv(const Matrix &d);

} // namespace tsembed
