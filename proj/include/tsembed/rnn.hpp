#pragma once

#include "tsembed/common.hpp"
#include "tsembed/dataio.hpp"

#include <span>
#include <vector>

namespace tsembed {

/// One GRU hidden layer. Each gate matrix is units x (input_dim + units),
/// the input columns first. Bias vectors are empty unless the architecture
/// enables them.
struct GruLayerParams {
  std::size_t input_dim = 0;
  std::size_t units = 0;
  Matrix w_r, w_u, w_p;
  std::vector<double> b_r, b_u, b_p;

  bool has_bias() const { return !b_r.empty(); }
  void validate() const;
  bool operator==(const GruLayerParams &) const = default;
};

/// Glorot-uniform weights, zero biases.
GruLayerParams make_gru_layer(std::size_t input_dim, std::size_t units, bool bias, Rng &rng);
GruLayerParams zeros_like(const GruLayerParams &p);

struct HiddenState {
  std::vector<std::vector<double>> per_layer;

  static HiddenState zeros(const std::vector<GruLayerParams> &layers);
  /// Layers concatenated bottom to top.
  std::vector<double> concat() const;
  bool operator==(const HiddenState &) const = default;
};

enum class Mode { train, infer };

/// Inverted-dropout mask: each entry is 0 with probability `rate`, else
/// 1/(1-rate). rate must be in [0, 1).
std::vector<double> sample_mask(std::size_t dim, double rate, Rng &rng);

/// Single GRU transition. Dropout (if `mask` is non-empty) touches the
/// non-recurrent input only.
std::vector<double> gru_step(const GruLayerParams &params, std::span<const double> h_prev,
                             std::span<const double> x, std::span<const double> mask = {});

/// Per-layer record of a stack unroll. `h` has steps+1 rows with row 0 the
/// initial state; the remaining matrices have one row per step.
struct LayerTrace {
  Matrix x;    // raw input
  Matrix mask; // empty in infer mode
  Matrix h;
  Matrix r, u, p;
};

struct StackTrace {
  std::vector<LayerTrace> layers;
  std::size_t steps = 0;
  bool recorded = false;

  /// Sizes the trace for `steps` steps and writes `init` into row 0 of h.
  void reset(const std::vector<GruLayerParams> &layers, std::size_t steps,
             const HiddenState &init, Mode mode);
  HiddenState state_at(std::size_t t) const;
  HiddenState final_state() const { return state_at(steps); }
};

/// Advances every layer by one step, reading row t of h and writing row t+1.
/// `input` is the scalar fed to layer 1. In train mode fresh masks are drawn
/// from `rng` for each layer input.
void stack_step(const std::vector<GruLayerParams> &layers, std::size_t t, double input, Mode mode,
                double dropout_rate, Rng *rng, StackTrace &trace);

struct StackForward {
  HiddenState final;
  StackTrace trace;
};

/// Runs the stack over a series from zero initial states.
StackForward stack_forward(const std::vector<GruLayerParams> &layers, const TimeSeries &series,
                           Mode mode, double dropout_rate, Rng *rng);
void stack_forward(const std::vector<GruLayerParams> &layers, std::span<const double> inputs,
                   const HiddenState &init, Mode mode, double dropout_rate, Rng *rng,
                   StackTrace &trace);

/// BPTT through a recorded unroll. `dh_top` (steps x units of the top layer,
/// or empty) holds loss gradients w.r.t. the top layer's states at steps
/// 1..T; `dh_final` (or empty) w.r.t. the final states. Gradients accumulate
/// into `grads`; the gradient w.r.t. the initial states is returned.
HiddenState stack_backward(const std::vector<GruLayerParams> &layers, const StackTrace &trace,
                           const Matrix &dh_top, const HiddenState &dh_final,
                           std::vector<GruLayerParams> &grads);

} // namespace tsembed
