#include "tsembed/tsne.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <limits>
#include <map>
#include <numbers>
#include <stdexcept>

namespace tsembed {

namespace {

struct RowFit {
  double beta;
  double entropy_bits;
  bool converged;
};

// Fills p with the Gaussian conditional for row i at the calibrated bandwidth.
RowFit calibrate_row(const Matrix &d, std::size_t i, double perplexity, std::span<double> p) {
  const std::size_t n = d.rows;
  const double target = std::log2(perplexity);
  double dmin = std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < n; ++j)
    if (j != i)
      dmin = std::min(dmin, d(i, j));

  double beta = 1.0;
  double lo = 0.0;
  double hi = std::numeric_limits<double>::infinity();
  double h_bits = 0.0;
  auto evaluate = [&](double b) {
    double sum = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      p[j] = j == i ? 0.0 : std::exp(-b * (d(i, j) - dmin));
      sum += p[j];
    }
    double h = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      p[j] /= sum;
      if (p[j] > 0.0)
        h -= p[j] * std::log2(p[j]);
    }
    return h;
  };
  for (int step = 0; step < 100; ++step) {
    h_bits = evaluate(beta);
    if (std::abs(std::exp2(h_bits) - perplexity) < 1e-5 * perplexity)
      return {beta, h_bits, true};
    if (h_bits > target) {
      lo = beta;
      beta = std::isinf(hi) ? beta * 2.0 : 0.5 * (beta + hi);
    } else {
      hi = beta;
      beta = 0.5 * (beta + lo);
    }
  }
  for (std::size_t j = 0; j < n; ++j)
    p[j] = j == i ? 0.0 : 1.0 / static_cast<double>(n - 1);
  return {0.0, std::log2(static_cast<double>(n - 1)), false};
}

} // namespace

Affinities perplexity_calibrate(const Matrix &distances, double perplexity, bool parallel) {
  const std::size_t n = distances.rows;
  if (distances.cols != n)
    throw std::invalid_argument("perplexity_calibrate: distance matrix must be square");
  if (n < 3)
    throw std::invalid_argument("perplexity_calibrate: need at least 3 points");
  if (!(perplexity > 1.0 && perplexity < static_cast<double>(n)))
    throw std::invalid_argument("perplexity must lie strictly between 1 and N");

  Affinities a;
  a.conditional = Matrix(n, n);
  a.beta.resize(n);
  a.entropy_bits.resize(n);
  std::vector<char> ok(n, 0);
  const auto sn = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(dynamic, 8) if (parallel)
  for (std::ptrdiff_t i = 0; i < sn; ++i) {
    auto fit = calibrate_row(distances, i, perplexity, a.conditional.row(i));
    a.beta[i] = fit.beta;
    a.entropy_bits[i] = fit.entropy_bits;
    ok[i] = fit.converged;
  }
  a.converged.assign(ok.begin(), ok.end());
  const auto failed = std::count(ok.begin(), ok.end(), 0);
  if (failed > 0)
    std::cerr << "warning: perplexity search did not converge for " << failed
              << " row(s); using uniform affinities there\n";

  a.joint = Matrix(n, n);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      a.joint(i, j) = a.conditional(i, j) + a.conditional(j, i);
      total += a.joint(i, j);
    }
  for (auto &v : a.joint.data)
    v /= total;
  return a;
}

namespace {

// Student-t numerators and per-row sums; returns Z.
double student_t(const Matrix &y, Matrix &num, std::vector<double> &row_sum, bool parallel) {
  const std::size_t n = y.rows;
  num = Matrix(n, n);
  row_sum.assign(n, 0.0);
  const auto sn = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(static) if (parallel)
  for (std::ptrdiff_t i = 0; i < sn; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (static_cast<std::size_t>(i) == j)
        continue;
      const double dx = y(i, 0) - y(j, 0);
      const double dy = y(i, 1) - y(j, 1);
      const double q = 1.0 / (1.0 + dx * dx + dy * dy);
      num(i, j) = q;
      s += q;
    }
    row_sum[i] = s;
  }
  double z = 0.0;
  for (double s : row_sum)
    z += s;
  return z;
}

double gradient_impl(const Matrix &p, const Matrix &y, double exaggeration, Matrix &grad,
                     bool parallel) {
  const std::size_t n = y.rows;
  if (p.rows != n || p.cols != n || y.cols != 2)
    throw std::invalid_argument("tsne_gradient: shape mismatch");
  Matrix num;
  std::vector<double> row_sum;
  const double z = student_t(y, num, row_sum, parallel);
  grad = Matrix(n, 2);
  std::vector<double> kl_row(n, 0.0);
  const auto sn = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(static) if (parallel)
  for (std::ptrdiff_t i = 0; i < sn; ++i) {
    double gx = 0.0, gy = 0.0, kl = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (static_cast<std::size_t>(i) == j)
        continue;
      const double q = num(i, j) / z;
      const double pij = p(i, j);
      const double mult = (exaggeration * pij - q) * num(i, j);
      gx += mult * (y(i, 0) - y(j, 0));
      gy += mult * (y(i, 1) - y(j, 1));
      if (pij > 0.0)
        kl += pij * std::log(pij / q);
    }
    grad(i, 0) = 4.0 * gx;
    grad(i, 1) = 4.0 * gy;
    kl_row[i] = kl;
  }
  double kl = 0.0;
  for (double v : kl_row)
    kl += v;
  return kl;
}

void center(Matrix &y) {
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < y.rows; ++i) {
    mx += y(i, 0);
    my += y(i, 1);
  }
  mx /= static_cast<double>(y.rows);
  my /= static_cast<double>(y.rows);
  for (std::size_t i = 0; i < y.rows; ++i) {
    y(i, 0) -= mx;
    y(i, 1) -= my;
  }
}

} // namespace

double tsne_gradient(const Matrix &joint, const Matrix &coords, double exaggeration, Matrix &grad) {
  return gradient_impl(joint, coords, exaggeration, grad, true);
}

double tsne_gradient_reference(const Matrix &joint, const Matrix &coords, double exaggeration,
                               Matrix &grad) {
  return gradient_impl(joint, coords, exaggeration, grad, false);
}

TsneResult tsne_embed(const FeatureRows &x, const TsneConfig &cfg) {
  const std::size_t n = x.size();
  if (n < 3)
    throw std::invalid_argument("tsne_embed: need at least 3 points");
  if (cfg.iterations < 1)
    throw std::invalid_argument("tsne_embed: iterations must be >= 1");
  const Matrix d = cfg.parallel ? squared_distances(x) : squared_distances_reference(x);

  TsneResult r;
  r.affinities = perplexity_calibrate(d, cfg.perplexity, cfg.parallel);
  const Matrix &p = r.affinities.joint;

  Rng rng(cfg.seed);
  std::normal_distribution<double> init(0.0, 1e-4);
  Matrix y(n, 2);
  for (auto &v : y.data)
    v = init(rng);
  Matrix update(n, 2), gains(n, 2, 1.0), grad;

  for (std::size_t it = 0; it < cfg.iterations; ++it) {
    const double exag = it < cfg.exaggeration_iters ? cfg.exaggeration : 1.0;
    const double momentum = it < cfg.momentum_switch ? cfg.momentum : cfg.final_momentum;
    r.kl.push_back(gradient_impl(p, y, exag, grad, cfg.parallel));
    for (std::size_t k = 0; k < y.data.size(); ++k) {
      const bool same_sign = (grad.data[k] > 0.0) == (update.data[k] > 0.0);
      gains.data[k] = same_sign ? gains.data[k] * 0.8 : gains.data[k] + 0.2;
      gains.data[k] = std::max(gains.data[k], 0.01);
      update.data[k] = momentum * update.data[k] - cfg.learning_rate * gains.data[k] * grad.data[k];
      y.data[k] += update.data[k];
    }
    center(y);
  }
  r.kl.push_back(gradient_impl(p, y, 1.0, grad, cfg.parallel));
  r.coords = std::move(y);
  return r;
}

namespace {

std::vector<std::string> distinct_labels(const std::vector<std::string> &labels) {
  std::vector<std::string> out;
  for (auto &l : labels)
    if (std::find(out.begin(), out.end(), l) == out.end())
      out.push_back(l);
  std::sort(out.begin(), out.end());
  return out;
}

std::string xml_escape(const std::string &s) {
  std::string o;
  for (char c : s) {
    switch (c) {
    case '&': o += "&amp;"; break;
    case '<': o += "&lt;"; break;
    case '>': o += "&gt;"; break;
    case '"': o += "&quot;"; break;
    default: o += c;
    }
  }
  return o;
}

} // namespace

std::string scatter_csv(const Matrix &coords, const std::vector<std::string> &labels) {
  if (coords.rows != labels.size())
    throw std::invalid_argument("scatter: coordinate/label count mismatch");
  std::string out = "x,y,label\n";
  char buf[96];
  for (std::size_t i = 0; i < coords.rows; ++i) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,", coords(i, 0), coords(i, 1));
    out += buf;
    out += labels[i];
    out += '\n';
  }
  return out;
}

std::string scatter_svg(const Matrix &coords, const std::vector<std::string> &labels) {
  if (coords.rows != labels.size())
    throw std::invalid_argument("scatter: coordinate/label count mismatch");
  static const char *palette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                                  "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
  const auto classes = distinct_labels(labels);
  std::map<std::string, std::size_t> color;
  for (std::size_t k = 0; k < classes.size(); ++k)
    color[classes[k]] = k % std::size(palette);

  double xmin = 0, xmax = 1, ymin = 0, ymax = 1;
  if (coords.rows > 0) {
    xmin = xmax = coords(0, 0);
    ymin = ymax = coords(0, 1);
    for (std::size_t i = 0; i < coords.rows; ++i) {
      xmin = std::min(xmin, coords(i, 0));
      xmax = std::max(xmax, coords(i, 0));
      ymin = std::min(ymin, coords(i, 1));
      ymax = std::max(ymax, coords(i, 1));
    }
  }
  const double plot = 560.0, margin = 20.0, legend_w = 160.0;
  const double sx = plot / std::max(xmax - xmin, 1e-12);
  const double sy = plot / std::max(ymax - ymin, 1e-12);

  std::string out;
  char buf[256];
  std::snprintf(buf, sizeof buf,
                "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%d\" height=\"%d\">\n",
                static_cast<int>(plot + 2 * margin + legend_w), static_cast<int>(plot + 2 * margin));
  out += buf;
  out += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  for (std::size_t i = 0; i < coords.rows; ++i) {
    std::snprintf(buf, sizeof buf, "<circle cx=\"%.2f\" cy=\"%.2f\" r=\"3\" fill=\"%s\"/>\n",
                  margin + (coords(i, 0) - xmin) * sx, margin + (ymax - coords(i, 1)) * sy,
                  palette[color[labels[i]]]);
    out += buf;
  }
  out += "<g class=\"legend\">\n";
  for (std::size_t k = 0; k < classes.size(); ++k) {
    const double ly = margin + 18.0 * static_cast<double>(k);
    std::snprintf(buf, sizeof buf,
                  "<g class=\"legend-entry\"><rect x=\"%.0f\" y=\"%.0f\" width=\"10\" "
                  "height=\"10\" fill=\"%s\"/><text x=\"%.0f\" y=\"%.0f\" font-size=\"12\">",
                  plot + 2 * margin, ly, palette[k % std::size(palette)], plot + 2 * margin + 16,
                  ly + 10);
    out += buf;
    out += xml_escape(classes[k]);
    out += "</text></g>\n";
  }
  out += "</g>\n</svg>\n";
  return out;
}

void emit_scatter(const Matrix &coords, const std::vector<std::string> &labels,
                  const std::string &stem) {
  write_file(stem + ".csv", scatter_csv(coords, labels));
  write_file(stem + ".svg", scatter_svg(coords, labels));
}

} // namespace tsembed
