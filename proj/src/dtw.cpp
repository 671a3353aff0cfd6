#include "tsembed/dtw.hpp"

#include <algorithm>
#include <charconv>
#include <limits>
#include <stdexcept>

namespace tsembed {

double dtw_distance(std::span<const double> a, std::span<const double> b, const DtwConfig &cfg) {
  if (a.empty() || b.empty())
    throw std::invalid_argument("dtw_distance: series must be non-empty");
  // Evaluate with the shorter series along the columns so the row buffer is small;
  // the recurrence is symmetric so the result does not change.
  if (b.size() > a.size())
    std::swap(a, b);
  const std::size_t n = a.size();
  const std::size_t m = b.size();
  const std::size_t w = cfg.window.value_or(std::max(n, m));
  if (n - m > w)
    throw std::invalid_argument("dtw_distance: window " + std::to_string(w) +
                                " admits no warping path for lengths " + std::to_string(n) +
                                " and " + std::to_string(m));

  constexpr double inf = std::numeric_limits<double>::infinity();
  thread_local std::vector<double> prev, cur;
  prev.assign(m + 1, inf);
  cur.assign(m + 1, inf);
  prev[0] = 0.0;
  for (std::size_t i = 1; i <= n; ++i) {
    const std::size_t lo = i > w ? i - w : 1;
    const std::size_t hi = std::min(m, i + w);
    std::fill(cur.begin(), cur.end(), inf);
    const double ai = a[i - 1];
    for (std::size_t j = lo; j <= hi; ++j) {
      const double d = ai - b[j - 1];
      const double best = std::min({prev[j], cur[j - 1], prev[j - 1]});
      cur[j] = d * d + best;
    }
    std::swap(prev, cur);
  }
  return prev[m];
}

double dtw_distance(const TimeSeries &a, const TimeSeries &b, const DtwConfig &cfg) {
  return dtw_distance(std::span<const double>(a.values), std::span<const double>(b.values), cfg);
}

Matrix dtw_distance_matrix(const std::vector<TimeSeries> &test,
                           const std::vector<TimeSeries> &train, const DtwConfig &cfg) {
  Matrix d(test.size(), train.size());
  const auto n = static_cast<std::ptrdiff_t>(test.size());
  std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic, 1)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    try {
      for (std::size_t j = 0; j < train.size(); ++j)
        d(i, j) = dtw_distance(test[i], train[j], cfg);
    } catch (...) {
#pragma omp critical
      failure = std::current_exception();
    }
  }
  if (failure)
    std::rethrow_exception(failure);
  return d;
}

Matrix dtw_distance_matrix_reference(const std::vector<TimeSeries> &test,
                                     const std::vector<TimeSeries> &train, const DtwConfig &cfg) {
  Matrix d(test.size(), train.size());
  for (std::size_t i = 0; i < test.size(); ++i)
    for (std::size_t j = 0; j < train.size(); ++j)
      d(i, j) = dtw_distance(test[i], train[j], cfg);
  return d;
}

NnResult nearest_neighbor_classify(const Matrix &distances, const std::vector<TimeSeries> &train,
                                   const std::vector<TimeSeries> &test) {
  if (train.empty())
    throw std::invalid_argument("1-NN: empty training set");
  if (distances.rows != test.size() || distances.cols != train.size())
    throw std::invalid_argument("1-NN: distance matrix shape mismatch");
  NnResult r;
  std::size_t wrong = 0;
  for (std::size_t i = 0; i < test.size(); ++i) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < train.size(); ++j)
      if (distances(i, j) < distances(i, best))
        best = j;
    const int pred = train[best].label.value_or(-1);
    r.neighbors.push_back(best);
    r.predictions.push_back(pred);
    if (!test[i].label || *test[i].label != pred)
      ++wrong;
  }
  r.error_rate = test.empty() ? 0.0 : static_cast<double>(wrong) / static_cast<double>(test.size());
  return r;
}

NnResult dtw_1nn_classify(const std::vector<TimeSeries> &train,
                          const std::vector<TimeSeries> &test, const DtwConfig &cfg) {
  if (train.empty())
    throw std::invalid_argument("dtw_1nn_classify: empty training set");
  return nearest_neighbor_classify(dtw_distance_matrix(test, train, cfg), train, test);
}

std::string distance_matrix_csv(const Matrix &d) {
  std::string out;
  char buf[32];
  for (std::size_t i = 0; i < d.rows; ++i) {
    for (std::size_t j = 0; j < d.cols; ++j) {
      if (j)
        out += ',';
      auto [p, ec] = std::to_chars(buf, buf + sizeof buf, d(i, j));
      out.append(buf, p);
    }
    out += '\n';
  }
  return out;
}

} // namespace tsembed
