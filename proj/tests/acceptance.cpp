// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fail.

#include "oracles.hpp"
#include "tsembed/harness.hpp"
#include "tsembed/parallel.hpp"
#include "tsembed/tsne.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>

using namespace tsembed;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::vector<double> gaussian(std::size_t n, Rng &rng) {
  std::normal_distribution<double> g;
  std::vector<double> v(n);
  for (auto &x : v)
    x = g(rng);
  return v;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

Outcome gradient_correctness() {
  double worst = 0.0;
  for (std::uint64_t seed : {1, 2, 3}) {
    SaeModel model = make_sae(uniform_architecture(2, 3), seed);
    Rng rng(derive_rng(seed, {7}));
    const auto series = gaussian(5, rng);
    SaeModel grads = zeros_like(model);
    SeriesTrace trace, scratch;
    sae_forward(model, series, Mode::train, 0.0, nullptr, trace);
    sae_backward(model, series, trace, grads);
    auto params = tensors(model);
    auto g = tensors(grads);
    for (std::size_t k = 0; k < params.size(); ++k)
      for (std::size_t i = 0; i < params[k].size(); ++i) {
        const double fd = oracle::central_difference(&params[k][i], 1e-5, [&] {
          return sae_forward(model, series, Mode::infer, 0.0, nullptr, scratch);
        });
        worst = std::max(worst, oracle::relative_error(g[k][i], fd));
      }
  }
  return {worst < 1e-4, "max relative error " + fmt(worst)};
}

Outcome memorization() {
  Rng rng(11);
  TimeSeries s{gaussian(30, rng), {}};
  s = znormalize(s);
  TrainConfig cfg;
  cfg.max_iterations = 2000;
  cfg.eval_every = 100;
  cfg.batch_size = 1;
  cfg.dropout_rate = 0.0;
  auto r = train({s}, {}, uniform_architecture(1, 16), cfg);
  const double loss = validation_loss(r.model, {s});
  return {loss < 1e-2, "per-point loss " + fmt(loss) + " at best iteration " +
                           std::to_string(r.best_iteration)};
}

Outcome dtw_oracle() {
  Rng rng(5);
  std::uniform_int_distribution<int> len(1, 6);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  int mismatches = 0;
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> a(len(rng)), b(len(rng));
    for (auto &v : a)
      v = u(rng);
    for (auto &v : b)
      v = u(rng);
    if (dtw_distance(a, b) != oracle::dtw_brute_force(a, b))
      ++mismatches;
  }
  return {mismatches == 0, std::to_string(mismatches) + " of 200 pairs differ"};
}

Dataset synthetic_control() {
  return load_ucr_dataset(std::string(TSEMBED_DATA_DIR) + "/SyntheticControl");
}

Outcome dtw_synthetic_control() {
  set_worker_threads(1);
  auto ds = synthetic_control();
  auto r = dtw_1nn_classify(znormalize_all(ds.train), znormalize_all(ds.test));
  set_worker_threads(0);
  return {r.error_rate <= 0.05, "test error " + fmt(r.error_rate)};
}

Outcome sae_synthetic_control() {
  auto ds = synthetic_control();
  int good = 0;
  std::string errs;
  for (std::uint64_t seed : {1, 2, 3}) {
    CompareOptions o;
    o.methods = {"SAE-C"};
    o.sae_arch = uniform_architecture(2, 32);
    o.sae_train.max_iterations = 2000;
    o.sae_train.eval_every = 100;
    o.sae_train.seed = seed;
    const double e = run_compare(ds, nullptr, o).find("SAE-C")->error_rate;
    good += e <= 0.10;
    errs += (errs.empty() ? "" : ", ") + fmt(e);
  }
  return {good >= 2, "test errors " + errs + " (" + std::to_string(good) + "/3 within 0.10)"};
}

Outcome reduced_labels() {
  // Encoder pre-trained on a separate unlabeled synthetic corpus.
  auto pre = make_synthetic(8, 40, 60, 0.1, 1001);
  auto corpus = znormalize_all(pre.train);
  for (auto &s : znormalize_all(pre.test))
    corpus.push_back(s);
  for (auto &s : corpus)
    s.label.reset();
  TrainConfig cfg;
  cfg.max_iterations = 1000;
  cfg.eval_every = 100;
  const auto timenet = train(corpus, {}, uniform_architecture(2, 16), cfg).model;

  double full = 0.0, reduced = 0.0;
  for (std::uint64_t seed : {1, 2, 3}) {
    auto ds = make_synthetic(3, 100, 60, 0.1, seed);
    CompareOptions o;
    o.methods = {"TN-C", "TN-C_2/3"};
    o.reduced_seeds = {seed};
    auto r = run_compare(ds, &timenet, o);
    full += r.find("TN-C")->error_rate / 3.0;
    reduced += r.find("TN-C_2/3")->error_rate / 3.0;
  }
  return {reduced - full <= 0.05,
          "mean error full " + fmt(full) + ", 2/3 labels " + fmt(reduced)};
}

Outcome smo_correctness() {
  Rng rng(77);
  std::normal_distribution<double> g;
  std::uniform_int_distribution<int> coin(0, 1);
  double worst_gap = 0.0, worst_kkt = 0.0;
  for (int trial = 0; trial < 5; ++trial) {
    const std::size_t n = 8;
    FeatureRows x(n, std::vector<double>(2));
    std::vector<int> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      x[i] = {g(rng), g(rng)};
      y[i] = i < 2 ? (i == 0 ? 1 : -1) : (coin(rng) ? 1 : -1);
    }
    const double C = 1.0, gamma = 0.5;
    auto m = smo_train(x, y, C, gamma, 1e-3);
    auto sol = smo_solve(rbf_kernel_matrix(x, gamma), y, C, 1e-3);
    worst_gap = std::max(worst_gap, std::abs(m.objective -
                                             oracle::svm_dual_optimum(rbf_kernel_matrix(x, gamma), y, C)));
    for (std::size_t i = 0; i < n; ++i) {
      const double yf = y[i] * decision_value(m, x[i]);
      double v = 0.0;
      if (sol.alpha[i] <= 0.0)
        v = std::max(0.0, 1.0 - yf);
      else if (sol.alpha[i] >= C)
        v = std::max(0.0, yf - 1.0);
      else
        v = std::abs(yf - 1.0);
      worst_kkt = std::max(worst_kkt, v);
    }
  }
  return {worst_gap <= 1e-3 && worst_kkt <= 1e-3,
          "objective gap " + fmt(worst_gap) + ", KKT violation " + fmt(worst_kkt)};
}

Outcome complexity() {
  auto model = make_sae(uniform_architecture(3, 60), 1);
  auto r = bench_scaling(model, {64, 128, 256, 512}, 5);
  std::string times;
  for (auto &row : r.rows)
    times += (times.empty() ? "" : "/") + fmt(row.seconds);
  return {r.fit.r2 >= 0.95, "R2 " + fmt(r.fit.r2) + ", seconds " + times};
}

Outcome tsne_sanity() {
  Rng rng(3);
  std::normal_distribution<double> g;
  FeatureRows x;
  for (int b = 0; b < 2; ++b)
    for (int i = 0; i < 40; ++i) {
      std::vector<double> row(5);
      for (auto &v : row)
        v = g(rng);
      row[0] += 10.0 * b;
      x.push_back(row);
    }
  TsneConfig cfg;
  cfg.perplexity = 10.0;
  auto r = tsne_embed(x, cfg);
  std::vector<oracle::Point> a, b;
  for (std::size_t i = 0; i < x.size(); ++i)
    (i < 40 ? a : b).push_back({r.coords(i, 0), r.coords(i, 1)});
  const bool disjoint = oracle::hulls_disjoint(oracle::convex_hull(a), oracle::convex_hull(b));
  double worst_h = 0.0;
  for (double h : r.affinities.entropy_bits)
    worst_h = std::max(worst_h, std::abs(h - std::log2(cfg.perplexity)) / std::log2(cfg.perplexity));
  const double min_kl = *std::min_element(r.kl.begin(), r.kl.end());
  return {disjoint && worst_h <= 1e-4 && min_kl >= 0.0,
          std::string("hulls ") + (disjoint ? "disjoint" : "overlap") + ", entropy rel error " +
              fmt(worst_h) + ", min KL " + fmt(min_kl)};
}

Outcome determinism() {
  set_worker_threads(1);
  auto ds = make_synthetic(3, 20, 40, 0.1, 4);
  auto tr = znormalize_all(ds.train);
  TrainConfig cfg;
  cfg.max_iterations = 60;
  cfg.eval_every = 20;
  cfg.batch_size = 8;
  cfg.parallel = false;
  auto run = [&] { return train(tr, {}, uniform_architecture(2, 8), cfg).model; };
  auto m1 = run(), m2 = run();
  const bool ckpt = serialize_checkpoint(m1) == serialize_checkpoint(m2);
  auto e1 = embed_split(m1, tr), e2 = embed_split(m2, tr);
  const bool emb = e1.x == e2.x;
  const bool folds = stratified_folds(e1.y, 5, 9) == stratified_folds(e2.y, 5, 9);
  TsneConfig tc;
  tc.perplexity = 8;
  tc.iterations = 400;
  tc.parallel = false;
  const bool coords = tsne_embed(e1.x, tc).coords == tsne_embed(e2.x, tc).coords;
  set_worker_threads(0);
  return {ckpt && emb && folds && coords,
          std::string("checkpoint ") + (ckpt ? "same" : "differs") + ", embeddings " +
              (emb ? "same" : "differ") + ", folds " + (folds ? "same" : "differ") +
              ", t-SNE " + (coords ? "same" : "differs")};
}

struct Criterion {
  int id;
  std::string name;
  double limit_seconds; // 0 means no runtime bound
  std::function<Outcome()> run;
};

} // namespace

int main() {
  const std::vector<Criterion> criteria{
      {1, "gradient correctness", 10, gradient_correctness},
      {2, "memorization", 120, memorization},
      {3, "DTW oracle equivalence", 5, dtw_oracle},
      {4, "DTW-C on SyntheticControl", 300, dtw_synthetic_control},
      {5, "SAE-C on SyntheticControl", 2700, sae_synthetic_control},
      {6, "reduced-label robustness", 0, reduced_labels},
      {7, "SMO correctness", 0, smo_correctness},
      {8, "embedding cost linear in T", 0, complexity},
      {9, "t-SNE sanity", 0, tsne_sanity},
      {10, "determinism", 0, determinism},
  };
  int failed = 0;
  for (const auto &c : criteria) {
    const auto t0 = Clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception &e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = seconds_since(t0);
    std::string detail = o.detail + "; " + fmt(secs) + " s";
    if (c.limit_seconds > 0 && secs >= c.limit_seconds) {
      o.pass = false;
      detail += " exceeds " + fmt(c.limit_seconds) + " s";
    }
    failed += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << " " << c.id << " " << c.name << ": " << detail
              << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
