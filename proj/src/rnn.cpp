#include "tsembed/rnn.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace tsembed {

namespace {

inline double sigmoid(double a) { return 1.0 / (1.0 + std::exp(-a)); }

// Preactivation W[i,:] . [xd, h] (+ b[i]) for all rows i.
void affine(const Matrix &w, const std::vector<double> &b, std::span<const double> xd,
            std::span<const double> h, std::span<double> out) {
  const std::size_t d = xd.size();
  const std::size_t c = h.size();
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double *row = w.data.data() + i * w.cols;
    double acc = b.empty() ? 0.0 : b[i];
    for (std::size_t j = 0; j < d; ++j)
      acc += row[j] * xd[j];
    const double *rec = row + d;
    for (std::size_t k = 0; k < c; ++k)
      acc += rec[k] * h[k];
    out[i] = acc;
  }
}

struct StepScratch {
  std::vector<double> xd, rh, a;
  std::vector<double> da_r, da_u, da_p, drh, dxd;
};

StepScratch &scratch() {
  thread_local StepScratch s;
  return s;
}

// Forward transition writing gate values and the new state into caller rows.
void step_into(const GruLayerParams &p, std::span<const double> h_prev, std::span<const double> x,
               std::span<const double> mask, std::span<double> r, std::span<double> u,
               std::span<double> cand, std::span<double> h) {
  auto &s = scratch();
  const std::size_t c = p.units;
  s.xd.assign(x.begin(), x.end());
  if (!mask.empty())
    for (std::size_t j = 0; j < s.xd.size(); ++j)
      s.xd[j] *= mask[j];

  affine(p.w_r, p.b_r, s.xd, h_prev, r);
  affine(p.w_u, p.b_u, s.xd, h_prev, u);
  for (std::size_t i = 0; i < c; ++i) {
    r[i] = sigmoid(r[i]);
    u[i] = sigmoid(u[i]);
  }
  s.rh.resize(c);
  for (std::size_t i = 0; i < c; ++i)
    s.rh[i] = r[i] * h_prev[i];
  affine(p.w_p, p.b_p, s.xd, s.rh, cand);
  for (std::size_t i = 0; i < c; ++i) {
    cand[i] = std::tanh(cand[i]);
    h[i] = (1.0 - u[i]) * h_prev[i] + u[i] * cand[i];
  }
}

void check_dims(const GruLayerParams &p, std::size_t h_dim, std::size_t x_dim, std::size_t m_dim) {
  if (h_dim != p.units)
    throw std::invalid_argument("gru_step: state has " + std::to_string(h_dim) + " entries, layer has " +
                                std::to_string(p.units) + " units");
  if (x_dim != p.input_dim)
    throw std::invalid_argument("gru_step: input has " + std::to_string(x_dim) +
                                " entries, layer expects " + std::to_string(p.input_dim));
  if (m_dim != 0 && m_dim != p.input_dim)
    throw std::invalid_argument("gru_step: dropout mask size does not match input");
}

// dW[i, :] += da[i] * [xd, hv]
void outer_acc(Matrix &dw, std::span<const double> da, std::span<const double> xd,
               std::span<const double> hv) {
  const std::size_t d = xd.size();
  for (std::size_t i = 0; i < da.size(); ++i) {
    const double g = da[i];
    double *row = dw.data.data() + i * dw.cols;
    for (std::size_t j = 0; j < d; ++j)
      row[j] += g * xd[j];
    double *rec = row + d;
    for (std::size_t k = 0; k < hv.size(); ++k)
      rec[k] += g * hv[k];
  }
}

// dxd += W[:, :d]^T da ; dh += W[:, d:]^T da
void transpose_acc(const Matrix &w, std::span<const double> da, std::span<double> dxd,
                   std::span<double> dh) {
  const std::size_t d = dxd.size();
  for (std::size_t i = 0; i < da.size(); ++i) {
    const double g = da[i];
    const double *row = w.data.data() + i * w.cols;
    for (std::size_t j = 0; j < d; ++j)
      dxd[j] += row[j] * g;
    const double *rec = row + d;
    for (std::size_t k = 0; k < dh.size(); ++k)
      dh[k] += rec[k] * g;
  }
}

// Backward through one transition. dh_prev and dx are overwritten.
void step_backward(const GruLayerParams &p, std::span<const double> x, std::span<const double> mask,
                   std::span<const double> h_prev, std::span<const double> r,
                   std::span<const double> u, std::span<const double> cand,
                   std::span<const double> dh, GruLayerParams &g, std::span<double> dh_prev,
                   std::span<double> dx) {
  auto &s = scratch();
  const std::size_t c = p.units;
  const std::size_t d = p.input_dim;
  s.xd.assign(x.begin(), x.end());
  if (!mask.empty())
    for (std::size_t j = 0; j < d; ++j)
      s.xd[j] *= mask[j];
  s.rh.resize(c);
  for (std::size_t i = 0; i < c; ++i)
    s.rh[i] = r[i] * h_prev[i];

  s.da_p.resize(c);
  s.da_u.resize(c);
  for (std::size_t i = 0; i < c; ++i) {
    s.da_p[i] = dh[i] * u[i] * (1.0 - cand[i] * cand[i]);
    s.da_u[i] = dh[i] * (cand[i] - h_prev[i]) * u[i] * (1.0 - u[i]);
    dh_prev[i] = dh[i] * (1.0 - u[i]);
  }

  s.dxd.assign(d, 0.0);
  s.drh.assign(c, 0.0);
  outer_acc(g.w_p, s.da_p, s.xd, s.rh);
  transpose_acc(p.w_p, s.da_p, s.dxd, s.drh);

  s.da_r.resize(c);
  for (std::size_t i = 0; i < c; ++i) {
    dh_prev[i] += s.drh[i] * r[i];
    s.da_r[i] = s.drh[i] * h_prev[i] * r[i] * (1.0 - r[i]);
  }

  outer_acc(g.w_u, s.da_u, s.xd, h_prev);
  outer_acc(g.w_r, s.da_r, s.xd, h_prev);
  transpose_acc(p.w_u, s.da_u, s.dxd, dh_prev);
  transpose_acc(p.w_r, s.da_r, s.dxd, dh_prev);

  if (p.has_bias())
    for (std::size_t i = 0; i < c; ++i) {
      g.b_r[i] += s.da_r[i];
      g.b_u[i] += s.da_u[i];
      g.b_p[i] += s.da_p[i];
    }

  for (std::size_t j = 0; j < d; ++j)
    dx[j] = mask.empty() ? s.dxd[j] : s.dxd[j] * mask[j];
}

} // namespace

void GruLayerParams::validate() const {
  const std::size_t cols = input_dim + units;
  for (const Matrix *m : {&w_r, &w_u, &w_p}) {
    if (m->rows != units || m->cols != cols || m->data.size() != units * cols)
      throw std::invalid_argument("GRU gate matrix has the wrong shape");
    for (double v : m->data)
      if (!std::isfinite(v))
        throw std::invalid_argument("GRU weights must be finite");
  }
  if (has_bias() && (b_r.size() != units || b_u.size() != units || b_p.size() != units))
    throw std::invalid_argument("GRU bias vectors have the wrong size");
}

GruLayerParams make_gru_layer(std::size_t input_dim, std::size_t units, bool bias, Rng &rng) {
  if (input_dim == 0 || units == 0)
    throw std::invalid_argument("make_gru_layer: dimensions must be positive");
  GruLayerParams p;
  p.input_dim = input_dim;
  p.units = units;
  const std::size_t fan_in = input_dim + units;
  const double a = std::sqrt(6.0 / static_cast<double>(fan_in + units));
  std::uniform_real_distribution<double> dist(-a, a);
  for (Matrix *m : {&p.w_r, &p.w_u, &p.w_p}) {
    *m = Matrix(units, fan_in);
    for (auto &v : m->data)
      v = dist(rng);
  }
  if (bias) {
    p.b_r.assign(units, 0.0);
    p.b_u.assign(units, 0.0);
    p.b_p.assign(units, 0.0);
  }
  return p;
}

GruLayerParams zeros_like(const GruLayerParams &p) {
  GruLayerParams z;
  z.input_dim = p.input_dim;
  z.units = p.units;
  z.w_r = Matrix(p.w_r.rows, p.w_r.cols);
  z.w_u = Matrix(p.w_u.rows, p.w_u.cols);
  z.w_p = Matrix(p.w_p.rows, p.w_p.cols);
  z.b_r.assign(p.b_r.size(), 0.0);
  z.b_u.assign(p.b_u.size(), 0.0);
  z.b_p.assign(p.b_p.size(), 0.0);
  return z;
}

HiddenState HiddenState::zeros(const std::vector<GruLayerParams> &layers) {
  HiddenState s;
  for (auto &l : layers)
    s.per_layer.emplace_back(l.units, 0.0);
  return s;
}

std::vector<double> HiddenState::concat() const {
  std::vector<double> out;
  for (auto &v : per_layer)
    out.insert(out.end(), v.begin(), v.end());
  return out;
}

std::vector<double> sample_mask(std::size_t dim, double rate, Rng &rng) {
  if (!(rate >= 0.0 && rate < 1.0))
    throw std::invalid_argument("sample_mask: rate must be in [0, 1)");
  std::vector<double> mask(dim, 1.0);
  if (rate == 0.0)
    return mask;
  const double keep = 1.0 / (1.0 - rate);
  std::bernoulli_distribution drop(rate);
  for (auto &m : mask)
    m = drop(rng) ? 0.0 : keep;
  return mask;
}

std::vector<double> gru_step(const GruLayerParams &params, std::span<const double> h_prev,
                             std::span<const double> x, std::span<const double> mask) {
  check_dims(params, h_prev.size(), x.size(), mask.size());
  const std::size_t c = params.units;
  std::vector<double> r(c), u(c), cand(c), h(c);
  step_into(params, h_prev, x, mask, r, u, cand, h);
  return h;
}

void StackTrace::reset(const std::vector<GruLayerParams> &params, std::size_t n_steps,
                       const HiddenState &init, Mode mode) {
  if (init.per_layer.size() != params.size())
    throw std::invalid_argument("initial state depth does not match the stack");
  layers.resize(params.size());
  steps = n_steps;
  for (std::size_t l = 0; l < params.size(); ++l) {
    const auto &p = params[l];
    auto &lt = layers[l];
    if (init.per_layer[l].size() != p.units)
      throw std::invalid_argument("initial state width does not match layer units");
    auto shape = [](Matrix &m, std::size_t r, std::size_t c) {
      m.rows = r;
      m.cols = c;
      m.data.resize(r * c);
    };
    shape(lt.x, n_steps, p.input_dim);
    shape(lt.mask, mode == Mode::train ? n_steps : 0, mode == Mode::train ? p.input_dim : 0);
    shape(lt.h, n_steps + 1, p.units);
    shape(lt.r, n_steps, p.units);
    shape(lt.u, n_steps, p.units);
    shape(lt.p, n_steps, p.units);
    std::copy(init.per_layer[l].begin(), init.per_layer[l].end(), lt.h.data.begin());
  }
  recorded = true;
}

HiddenState StackTrace::state_at(std::size_t t) const {
  HiddenState s;
  for (auto &lt : layers) {
    auto row = lt.h.row(t);
    s.per_layer.emplace_back(row.begin(), row.end());
  }
  return s;
}

void stack_step(const std::vector<GruLayerParams> &layers, std::size_t t, double input, Mode mode,
                double dropout_rate, Rng *rng, StackTrace &trace) {
  const bool train = mode == Mode::train;
  if (train && dropout_rate > 0.0 && rng == nullptr)
    throw std::invalid_argument("stack_step: train mode with dropout needs a generator");
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto &p = layers[l];
    auto &lt = trace.layers[l];
    auto x = lt.x.row(t);
    if (l == 0)
      x[0] = input;
    else {
      auto below = trace.layers[l - 1].h.row(t + 1);
      std::copy(below.begin(), below.end(), x.begin());
    }
    std::span<const double> mask;
    if (train) {
      auto m = lt.mask.row(t);
      if (dropout_rate > 0.0) {
        auto drawn = sample_mask(p.input_dim, dropout_rate, *rng);
        std::copy(drawn.begin(), drawn.end(), m.begin());
      } else {
        std::fill(m.begin(), m.end(), 1.0);
      }
      mask = m;
    }
    step_into(p, lt.h.row(t), x, mask, lt.r.row(t), lt.u.row(t), lt.p.row(t), lt.h.row(t + 1));
  }
}

void stack_forward(const std::vector<GruLayerParams> &layers, std::span<const double> inputs,
                   const HiddenState &init, Mode mode, double dropout_rate, Rng *rng,
                   StackTrace &trace) {
  if (layers.empty())
    throw std::invalid_argument("stack_forward: no layers");
  if (inputs.empty())
    throw std::invalid_argument("stack_forward: empty series");
  if (layers.front().input_dim != 1)
    throw std::invalid_argument("stack_forward: first layer must take a scalar input");
  for (std::size_t l = 1; l < layers.size(); ++l)
    if (layers[l].input_dim != layers[l - 1].units)
      throw std::invalid_argument("stack_forward: layer input does not match the layer below");
  trace.reset(layers, inputs.size(), init, mode);
  for (std::size_t t = 0; t < inputs.size(); ++t)
    stack_step(layers, t, inputs[t], mode, dropout_rate, rng, trace);
}

StackForward stack_forward(const std::vector<GruLayerParams> &layers, const TimeSeries &series,
                           Mode mode, double dropout_rate, Rng *rng) {
  StackForward out;
  stack_forward(layers, series.values, HiddenState::zeros(layers), mode, dropout_rate, rng,
                out.trace);
  out.final = out.trace.final_state();
  return out;
}

HiddenState stack_backward(const std::vector<GruLayerParams> &layers, const StackTrace &trace,
                           const Matrix &dh_top, const HiddenState &dh_final,
                           std::vector<GruLayerParams> &grads) {
  if (!trace.recorded || trace.layers.size() != layers.size())
    throw std::invalid_argument("stack_backward: missing or mismatched forward trace");
  if (grads.size() != layers.size())
    throw std::invalid_argument("stack_backward: gradient stack has the wrong depth");
  const std::size_t L = layers.size();
  const std::size_t T = trace.steps;
  if (!dh_top.data.empty() && (dh_top.rows != T || dh_top.cols != layers.back().units))
    throw std::invalid_argument("stack_backward: top-layer gradient has the wrong shape");

  // carry[l]: gradient w.r.t. h_t^l flowing back from step t+1
  std::vector<std::vector<double>> carry(L);
  for (std::size_t l = 0; l < L; ++l) {
    if (!dh_final.per_layer.empty())
      carry[l] = dh_final.per_layer[l];
    else
      carry[l].assign(layers[l].units, 0.0);
  }
  std::vector<double> dh, dh_prev, dx, from_above;
  for (std::size_t t = T; t-- > 0;) {
    from_above.clear();
    for (std::size_t l = L; l-- > 0;) {
      const auto &p = layers[l];
      const auto &lt = trace.layers[l];
      dh = carry[l];
      if (l == L - 1 && !dh_top.data.empty()) {
        auto top = dh_top.row(t);
        for (std::size_t i = 0; i < dh.size(); ++i)
          dh[i] += top[i];
      }
      if (!from_above.empty())
        for (std::size_t i = 0; i < dh.size(); ++i)
          dh[i] += from_above[i];
      dh_prev.resize(p.units);
      dx.resize(p.input_dim);
      std::span<const double> mask;
      if (!lt.mask.data.empty())
        mask = lt.mask.row(t);
      step_backward(p, lt.x.row(t), mask, lt.h.row(t), lt.r.row(t), lt.u.row(t), lt.p.row(t), dh,
                    grads[l], dh_prev, dx);
      carry[l] = dh_prev;
      from_above = dx;
    }
  }
  return HiddenState{std::move(carry)};
}

} // namespace tsembed
