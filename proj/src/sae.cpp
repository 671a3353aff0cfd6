#include "tsembed/sae.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <stdexcept>

namespace tsembed {

std::size_t Architecture::embedding_dim() const {
  std::size_t c = 0;
  for (auto u : units)
    c += u;
  return c;
}

void Architecture::validate() const {
  if (units.empty())
    throw std::invalid_argument("architecture needs at least one layer");
  for (auto u : units)
    if (u == 0)
      throw std::invalid_argument("every layer needs at least one unit");
}

Architecture uniform_architecture(std::size_t layers, std::size_t units, bool use_bias) {
  return Architecture{std::vector<std::size_t>(layers, units), use_bias};
}

std::size_t SaeModel::parameter_count() const {
  std::size_t n = 0;
  for (auto s : tensors(*this))
    n += s.size();
  return n;
}

SaeModel make_sae(const Architecture &arch, std::uint64_t seed) {
  arch.validate();
  Rng rng(seed);
  SaeModel m;
  m.arch = arch;
  for (auto *stack : {&m.encoder, &m.decoder}) {
    std::size_t in = 1;
    for (auto units : arch.units) {
      stack->push_back(make_gru_layer(in, units, arch.use_bias, rng));
      in = units;
    }
  }
  const std::size_t top = arch.units.back();
  const double a = std::sqrt(6.0 / static_cast<double>(top + 1));
  std::uniform_real_distribution<double> dist(-a, a);
  m.head_w.resize(top);
  for (auto &w : m.head_w)
    w = dist(rng);
  m.head_b = 0.0;
  return m;
}

SaeModel zeros_like(const SaeModel &m) {
  SaeModel z;
  z.arch = m.arch;
  for (auto &l : m.encoder)
    z.encoder.push_back(zeros_like(l));
  for (auto &l : m.decoder)
    z.decoder.push_back(zeros_like(l));
  z.head_w.assign(m.head_w.size(), 0.0);
  z.head_b = 0.0;
  return z;
}

namespace {

template <class Model, class Span>
std::vector<Span> collect_tensors(Model &m) {
  std::vector<Span> out;
  auto add_stack = [&](auto &stack) {
    for (auto &l : stack) {
      out.emplace_back(l.w_r.data);
      out.emplace_back(l.w_u.data);
      out.emplace_back(l.w_p.data);
      if (l.has_bias()) {
        out.emplace_back(l.b_r);
        out.emplace_back(l.b_u);
        out.emplace_back(l.b_p);
      }
    }
  };
  add_stack(m.encoder);
  add_stack(m.decoder);
  out.emplace_back(m.head_w);
  out.emplace_back(&m.head_b, 1);
  return out;
}

double head(const SaeModel &model, std::span<const double> h) {
  double y = model.head_b;
  for (std::size_t i = 0; i < h.size(); ++i)
    y += model.head_w[i] * h[i];
  return y;
}

} // namespace

std::vector<std::span<double>> tensors(SaeModel &m) {
  return collect_tensors<SaeModel, std::span<double>>(m);
}

std::vector<std::span<const double>> tensors(const SaeModel &m) {
  return collect_tensors<const SaeModel, std::span<const double>>(m);
}

std::vector<double> decode(const SaeModel &model, const HiddenState &init, std::size_t steps) {
  if (steps == 0)
    throw std::invalid_argument("decode: steps must be positive");
  StackTrace trace;
  trace.reset(model.decoder, steps, init, Mode::infer);
  std::vector<double> out(steps);
  const std::size_t top = model.decoder.size() - 1;
  for (std::size_t t = 0; t < steps; ++t) {
    stack_step(model.decoder, t, 0.0, Mode::infer, 0.0, nullptr, trace);
    out[t] = head(model, trace.layers[top].h.row(t + 1));
  }
  return out;
}

double reconstruction_loss(std::span<const double> recon, const TimeSeries &target) {
  const std::size_t T = target.values.size();
  if (recon.size() != T)
    throw std::invalid_argument("reconstruction_loss: length mismatch");
  double e = 0.0;
  for (std::size_t t = 0; t < T; ++t) {
    const double diff = recon[t] - target.values[T - 1 - t];
    e += diff * diff;
  }
  return e;
}

double sae_forward(const SaeModel &model, std::span<const double> series, Mode mode,
                   double dropout_rate, Rng *rng, SeriesTrace &trace) {
  const std::size_t T = series.size();
  stack_forward(model.encoder, series, HiddenState::zeros(model.encoder), mode, dropout_rate, rng,
                trace.encoder);
  trace.decoder.reset(model.decoder, T, trace.encoder.final_state(), mode);
  trace.recon.resize(T);
  const std::size_t top = model.decoder.size() - 1;
  double e = 0.0;
  for (std::size_t t = 0; t < T; ++t) {
    stack_step(model.decoder, t, 0.0, mode, dropout_rate, rng, trace.decoder);
    trace.recon[t] = head(model, trace.decoder.layers[top].h.row(t + 1));
    const double diff = trace.recon[t] - series[T - 1 - t];
    e += diff * diff;
  }
  trace.loss = e;
  return e;
}

void sae_backward(const SaeModel &model, std::span<const double> series, const SeriesTrace &trace,
                  SaeModel &grads, double loss_scale) {
  const std::size_t T = series.size();
  if (!trace.encoder.recorded || !trace.decoder.recorded || trace.decoder.steps != T ||
      trace.recon.size() != T)
    throw std::invalid_argument("sae_backward: missing forward trace for this series");
  const std::size_t top = model.decoder.size() - 1;
  const std::size_t c_top = model.decoder[top].units;
  Matrix dtop(T, c_top);
  for (std::size_t t = 0; t < T; ++t) {
    const double dy = 2.0 * (trace.recon[t] - series[T - 1 - t]) * loss_scale;
    auto h = trace.decoder.layers[top].h.row(t + 1);
    auto row = dtop.row(t);
    for (std::size_t i = 0; i < c_top; ++i) {
      grads.head_w[i] += dy * h[i];
      row[i] = dy * model.head_w[i];
    }
    grads.head_b += dy;
  }
  auto d_init = stack_backward(model.decoder, trace.decoder, dtop, HiddenState{}, grads.decoder);
  stack_backward(model.encoder, trace.encoder, Matrix{}, d_init, grads.encoder);
}

namespace {

void add_into(SaeModel &dst, const SaeModel &src) {
  auto d = tensors(dst);
  auto s = tensors(src);
  for (std::size_t k = 0; k < d.size(); ++k)
    for (std::size_t i = 0; i < d[k].size(); ++i)
      d[k][i] += s[k][i];
}

void set_zero(SaeModel &m) {
  for (auto s : tensors(m))
    std::fill(s.begin(), s.end(), 0.0);
}

struct SlotBuffers {
  std::vector<SeriesTrace> traces;
  std::vector<SaeModel> grads;
  std::vector<double> losses;
};

SlotBuffers &slot_buffers(const SaeModel &model, std::size_t n) {
  thread_local SlotBuffers buf;
  buf.traces.resize(n);
  buf.losses.assign(n, 0.0);
  if (!buf.grads.empty() && !(buf.grads.front().arch == model.arch))
    buf.grads.clear();
  while (buf.grads.size() < n)
    buf.grads.push_back(zeros_like(model));
  return buf;
}

void one_slot(const SaeModel &model, std::span<const double> series, const BatchSpec &spec,
              std::size_t slot, SeriesTrace &trace, SaeModel &g, double &loss) {
  auto rng = derive_rng(spec.seed, {spec.step, slot});
  set_zero(g);
  loss = sae_forward(model, series, spec.mode, spec.dropout_rate, &rng, trace);
  sae_backward(model, series, trace, g, spec.loss_scale);
}

double reduce_slots(SlotBuffers &buf, std::size_t n, SaeModel &grads) {
  set_zero(grads);
  double e = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    add_into(grads, buf.grads[i]);
    e += buf.losses[i];
  }
  return e;
}

void check_batch(const SaeModel &model, const std::vector<std::span<const double>> &batch,
                 const SaeModel &grads) {
  if (batch.empty())
    throw std::invalid_argument("batch_gradient: empty batch");
  for (auto &s : batch)
    if (s.empty())
      throw std::invalid_argument("batch_gradient: empty series in batch");
  if (!(grads.arch == model.arch))
    throw std::invalid_argument("batch_gradient: gradient buffer has a different architecture");
}

} // namespace

double batch_gradient(const SaeModel &model, const std::vector<std::span<const double>> &batch,
                      const BatchSpec &spec, SaeModel &grads) {
  check_batch(model, batch, grads);
  const std::size_t n = batch.size();
  auto &buf = slot_buffers(model, n);
  const auto sn = static_cast<std::ptrdiff_t>(n);
  std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic, 1)
  for (std::ptrdiff_t i = 0; i < sn; ++i) {
    const auto slot = static_cast<std::size_t>(i);
    try {
      one_slot(model, batch[slot], spec, slot, buf.traces[slot], buf.grads[slot], buf.losses[slot]);
    } catch (...) {
#pragma omp critical
      failure = std::current_exception();
    }
  }
  if (failure)
    std::rethrow_exception(failure);
  return reduce_slots(buf, n, grads);
}

double batch_gradient_reference(const SaeModel &model,
                                const std::vector<std::span<const double>> &batch,
                                const BatchSpec &spec, SaeModel &grads) {
  check_batch(model, batch, grads);
  const std::size_t n = batch.size();
  auto &buf = slot_buffers(model, n);
  for (std::size_t slot = 0; slot < n; ++slot)
    one_slot(model, batch[slot], spec, slot, buf.traces[slot], buf.grads[slot], buf.losses[slot]);
  return reduce_slots(buf, n, grads);
}

void adam_step(SaeModel &params, const SaeModel &grads, AdamState &state, double learning_rate,
               const AdamConfig &adam) {
  auto p = tensors(params);
  auto g = tensors(grads);
  if (p.size() != g.size())
    throw std::invalid_argument("adam_step: parameter/gradient mismatch");
  if (state.m.empty()) {
    for (auto s : p) {
      state.m.emplace_back(s.size(), 0.0);
      state.v.emplace_back(s.size(), 0.0);
    }
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(adam.beta1, t);
  const double c2 = 1.0 - std::pow(adam.beta2, t);
  for (std::size_t k = 0; k < p.size(); ++k) {
    auto &m = state.m[k];
    auto &v = state.v[k];
    for (std::size_t i = 0; i < p[k].size(); ++i) {
      const double gi = g[k][i];
      m[i] = adam.beta1 * m[i] + (1.0 - adam.beta1) * gi;
      v[i] = adam.beta2 * v[i] + (1.0 - adam.beta2) * gi * gi;
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      p[k][i] -= learning_rate * mhat / (std::sqrt(vhat) + adam.epsilon);
    }
  }
}

double clip_global_norm(SaeModel &grads, double max_norm) {
  double sq = 0.0;
  for (auto s : tensors(grads))
    for (double v : s)
      sq += v * v;
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double scale = max_norm / norm;
    for (auto s : tensors(grads))
      for (auto &v : s)
        v *= scale;
  }
  return norm;
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0))
    throw std::invalid_argument("learning_rate must be positive");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0))
    throw std::invalid_argument("dropout_rate must be in [0, 1)");
  if (batch_size == 0)
    throw std::invalid_argument("batch_size must be positive");
  if (eval_every == 0)
    throw std::invalid_argument("eval_every must be positive");
}

double validation_loss(const SaeModel &model, const std::vector<TimeSeries> &series) {
  if (series.empty())
    throw std::invalid_argument("validation_loss: no series");
  std::vector<double> losses(series.size());
  const auto n = static_cast<std::ptrdiff_t>(series.size());
#pragma omp parallel for schedule(dynamic, 4)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    thread_local SeriesTrace trace;
    losses[i] = sae_forward(model, series[i].values, Mode::infer, 0.0, nullptr, trace);
  }
  double e = 0.0;
  std::size_t points = 0;
  for (std::size_t i = 0; i < series.size(); ++i) {
    e += losses[i];
    points += series[i].values.size();
  }
  return e / static_cast<double>(points);
}

TrainResult train(const std::vector<TimeSeries> &train_series,
                  const std::vector<TimeSeries> &val_series, const Architecture &arch,
                  const TrainConfig &config) {
  config.validate();
  arch.validate();
  if (train_series.empty())
    throw std::invalid_argument("train: empty training corpus");
  for (auto &s : train_series)
    if (s.values.empty())
      throw std::invalid_argument("train: empty series in corpus");
  const auto &val = val_series.empty() ? train_series : val_series;

  std::map<std::size_t, std::vector<std::size_t>> buckets;
  for (std::size_t i = 0; i < train_series.size(); ++i)
    buckets[train_series[i].values.size()].push_back(i);

  TrainResult result;
  result.model = make_sae(arch, config.seed);
  SaeModel model = result.model;
  SaeModel grads = zeros_like(model);
  AdamState adam;
  result.best_val_loss = std::numeric_limits<double>::infinity();

  std::uniform_int_distribution<std::size_t> pick(0, train_series.size() - 1);
  std::vector<std::size_t> chosen;
  std::vector<std::span<const double>> batch;
  double window_loss = 0.0;
  std::size_t window_n = 0;

  for (std::size_t it = 1; it <= config.max_iterations; ++it) {
    auto rng = derive_rng(config.seed, {0x6261746368ULL, it});
    const auto &bucket = buckets.at(train_series[pick(rng)].values.size());
    chosen = bucket;
    if (bucket.size() > config.batch_size) {
      for (std::size_t k = 0; k < config.batch_size; ++k) {
        std::uniform_int_distribution<std::size_t> j(k, chosen.size() - 1);
        std::swap(chosen[k], chosen[j(rng)]);
      }
      chosen.resize(config.batch_size);
    }
    batch.clear();
    std::size_t points = 0;
    for (auto idx : chosen) {
      batch.emplace_back(train_series[idx].values);
      points += train_series[idx].values.size();
    }

    BatchSpec spec{Mode::train, config.dropout_rate, config.seed, it, 1.0};
    const double e = config.parallel ? batch_gradient(model, batch, spec, grads)
                                     : batch_gradient_reference(model, batch, spec, grads);
    if (!std::isfinite(e))
      throw std::runtime_error("train: loss diverged at iteration " + std::to_string(it));
    clip_global_norm(grads, config.clip_norm);
    adam_step(model, grads, adam, config.learning_rate, config.adam);

    const double per_point = e / static_cast<double>(points);
    result.batch_losses.push_back(per_point);
    window_loss += per_point;
    ++window_n;

    if (it % config.eval_every == 0 || it == config.max_iterations) {
      const double v = validation_loss(model, val);
      result.history.push_back({it, window_loss / static_cast<double>(window_n), v});
      window_loss = 0.0;
      window_n = 0;
      if (v < result.best_val_loss) {
        result.best_val_loss = v;
        result.best_iteration = it;
        result.model = model;
      }
    }
  }
  if (config.max_iterations == 0) {
    result.best_val_loss = validation_loss(model, val);
    result.history.push_back({0, result.best_val_loss, result.best_val_loss});
  }
  result.final_model = std::move(model);
  return result;
}

TrainResult train(const Corpus &train_corpus, const Corpus &val_corpus, const Architecture &arch,
                  const TrainConfig &config) {
  if (train_corpus.empty())
    throw std::invalid_argument("train: empty training corpus");
  auto tr = znormalize_all(train_corpus.all_series());
  auto va = znormalize_all(val_corpus.all_series());
  return train(tr, va, arch, config);
}

std::string history_csv(const std::vector<HistoryRow> &history) {
  std::string out = "iteration,train_loss_per_point,val_loss_per_point\n";
  char buf[128];
  for (auto &h : history) {
    std::snprintf(buf, sizeof buf, "%zu,%.10g,%.10g\n", h.iteration, h.train_loss_per_point,
                  h.val_loss_per_point);
    out += buf;
  }
  return out;
}

std::string LayerSelector::to_string() const {
  return layer ? std::to_string(*layer) : std::string("all");
}

LayerSelector LayerSelector::parse(const std::string &s) {
  if (s == "all")
    return all();
  std::size_t pos = 0;
  long v = -1;
  try {
    v = std::stol(s, &pos);
  } catch (const std::exception &) {
    pos = 0;
  }
  if (pos != s.size() || v < 1)
    throw std::invalid_argument("layer selector must be 'all' or a 1-based layer index: " + s);
  return only(static_cast<std::size_t>(v));
}

Embedding embed(const SaeModel &model, const TimeSeries &series, LayerSelector selector) {
  if (selector.layer && (*selector.layer < 1 || *selector.layer > model.encoder.size()))
    throw std::out_of_range("embed: layer " + std::to_string(*selector.layer) +
                            " out of range 1.." + std::to_string(model.encoder.size()));
  thread_local StackTrace trace;
  stack_forward(model.encoder, series.values, HiddenState::zeros(model.encoder), Mode::infer, 0.0,
                nullptr, trace);
  Embedding e;
  e.selector = selector;
  const std::size_t T = trace.steps;
  for (std::size_t l = 0; l < trace.layers.size(); ++l) {
    if (selector.layer && *selector.layer != l + 1)
      continue;
    auto row = trace.layers[l].h.row(T);
    e.values.insert(e.values.end(), row.begin(), row.end());
  }
  return e;
}

std::vector<Embedding> embed_all(const SaeModel &model, const std::vector<TimeSeries> &series,
                                 LayerSelector selector) {
  if (selector.layer && (*selector.layer < 1 || *selector.layer > model.encoder.size()))
    throw std::out_of_range("embed: layer index out of range");
  std::vector<Embedding> out(series.size());
  const auto n = static_cast<std::ptrdiff_t>(series.size());
  std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic, 4)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    try {
      out[i] = embed(model, series[i], selector);
    } catch (...) {
#pragma omp critical
      failure = std::current_exception();
    }
  }
  if (failure)
    std::rethrow_exception(failure);
  return out;
}

std::vector<Embedding> embed_all_reference(const SaeModel &model,
                                           const std::vector<TimeSeries> &series,
                                           LayerSelector selector) {
  std::vector<Embedding> out;
  out.reserve(series.size());
  for (auto &s : series)
    out.push_back(embed(model, s, selector));
  return out;
}

} // namespace tsembed
