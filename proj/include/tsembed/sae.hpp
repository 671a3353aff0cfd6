#pragma once

#include "tsembed/common.hpp"
#include "tsembed/dataio.hpp"
#include "tsembed/rnn.hpp"

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace tsembed {

struct Architecture {
  std::vector<std::size_t> units; // c^l per layer, bottom to top
  bool use_bias = false;

  std::size_t num_layers() const { return units.size(); }
  std::size_t embedding_dim() const;
  void validate() const;
  bool operator==(const Architecture &) const = default;
};

/// Uniform-width stack, e.g. uniform(3, 60) for the 180-dim reference encoder.
Architecture uniform_architecture(std::size_t layers, std::size_t units, bool use_bias = false);

/// Encoder/decoder GRU stacks of identical shape plus the linear output head
/// applied to the decoder's top layer.
struct SaeModel {
  Architecture arch;
  std::vector<GruLayerParams> encoder;
  std::vector<GruLayerParams> decoder;
  std::vector<double> head_w;
  double head_b = 0.0;

  std::size_t parameter_count() const;
  bool operator==(const SaeModel &) const = default;
};

SaeModel make_sae(const Architecture &arch, std::uint64_t seed);
SaeModel zeros_like(const SaeModel &m);

/// Every parameter tensor in a fixed order (encoder, decoder, head, bias).
std::vector<std::span<double>> tensors(SaeModel &m);
std::vector<std::span<const double>> tensors(const SaeModel &m);

/// Unrolls the decoder from `init` for `steps` steps with a zero input at
/// every step; returns head(h_t^L) for t = 1..steps. Inference mode.
std::vector<double> decode(const SaeModel &model, const HiddenState &init, std::size_t steps);

/// Sum of squared differences between `recon` and the target series reversed.
double reconstruction_loss(std::span<const double> recon, const TimeSeries &target);

/// Forward record of one series through encoder and decoder.
struct SeriesTrace {
  StackTrace encoder;
  StackTrace decoder;
  std::vector<double> recon;
  double loss = 0.0;
};

/// Encodes, decodes and scores one series, keeping everything BPTT needs.
double sae_forward(const SaeModel &model, std::span<const double> series, Mode mode,
                   double dropout_rate, Rng *rng, SeriesTrace &trace);

/// Accumulates loss_scale * dE/dtheta for one recorded series into `grads`.
void sae_backward(const SaeModel &model, std::span<const double> series, const SeriesTrace &trace,
                  SaeModel &grads, double loss_scale = 1.0);

struct BatchSpec {
  Mode mode = Mode::train;
  double dropout_rate = 0.0;
  std::uint64_t seed = 0;      // dropout stream for slot i is derive_rng(seed, {step, i})
  std::uint64_t step = 0;
  double loss_scale = 1.0;
};

/// Batch loss E and its gradient. Per-series gradients are reduced in batch
/// order, so both variants give bit-identical results for any thread count.
double batch_gradient(const SaeModel &model, const std::vector<std::span<const double>> &batch,
                      const BatchSpec &spec, SaeModel &grads);
double batch_gradient_reference(const SaeModel &model,
                                const std::vector<std::span<const double>> &batch,
                                const BatchSpec &spec, SaeModel &grads);

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  std::vector<std::vector<double>> m, v;
  std::uint64_t step = 0;
};

void adam_step(SaeModel &params, const SaeModel &grads, AdamState &state, double learning_rate,
               const AdamConfig &adam);

/// Rescales `grads` to have global L2 norm at most max_norm; returns the
/// norm before clipping.
double clip_global_norm(SaeModel &grads, double max_norm);

struct TrainConfig {
  double learning_rate = 0.006;
  std::size_t batch_size = 32;
  double dropout_rate = 0.4;
  std::size_t max_iterations = 1000;
  std::size_t eval_every = 50;
  std::uint64_t seed = 1;
  AdamConfig adam;
  double clip_norm = 10.0; // 0 disables clipping
  bool parallel = true;

  void validate() const;
};

struct HistoryRow {
  std::size_t iteration;
  double train_loss_per_point;
  double val_loss_per_point;
};

struct TrainResult {
  SaeModel model; // checkpoint with the lowest validation error
  std::size_t best_iteration = 0;
  double best_val_loss = 0.0;
  SaeModel final_model;
  std::vector<HistoryRow> history;
  std::vector<double> batch_losses; // per-point loss of every iteration
};

/// Trains on already-normalized series. Batches come from one length bucket;
/// the bucket is chosen by drawing a series uniformly from all of them.
/// Without validation series the training series double as validation.
TrainResult train(const std::vector<TimeSeries> &train_series,
                  const std::vector<TimeSeries> &val_series, const Architecture &arch,
                  const TrainConfig &config);

/// Corpus entry point: z-normalizes every train and test series of every
/// dataset first.
TrainResult train(const Corpus &train_corpus, const Corpus &val_corpus, const Architecture &arch,
                  const TrainConfig &config);

/// Mean squared reconstruction error per point, inference mode.
double validation_loss(const SaeModel &model, const std::vector<TimeSeries> &series);

std::string history_csv(const std::vector<HistoryRow> &history);

/// Which encoder layers contribute to an embedding. 1-based layer index,
/// or every layer when unset.
struct LayerSelector {
  std::optional<std::size_t> layer;

  static LayerSelector all() { return {}; }
  static LayerSelector only(std::size_t l) { return {l}; }
  std::string to_string() const;
  static LayerSelector parse(const std::string &s);
  bool operator==(const LayerSelector &) const = default;
};

struct Embedding {
  std::vector<double> values;
  LayerSelector selector;
};

/// Final encoder state(s) of an already-normalized series, inference mode.
Embedding embed(const SaeModel &model, const TimeSeries &series,
                LayerSelector selector = LayerSelector::all());
std::vector<Embedding> embed_all(const SaeModel &model, const std::vector<TimeSeries> &series,
                                 LayerSelector selector = LayerSelector::all());
std::vector<Embedding> embed_all_reference(const SaeModel &model,
                                           const std::vector<TimeSeries> &series,
                                           LayerSelector selector = LayerSelector::all());

// Binary checkpoint: magic, version, architecture header, named row-major
// float64 tensors, FNV-1a trailer over everything before it.
std::string serialize_checkpoint(const SaeModel &model);
SaeModel deserialize_checkpoint(std::string_view bytes,
                                const std::optional<Architecture> &expected = std::nullopt);
void save_checkpoint(const SaeModel &model, const std::string &path);
SaeModel load_checkpoint(const std::string &path,
                         const std::optional<Architecture> &expected = std::nullopt);

} // namespace tsembed
