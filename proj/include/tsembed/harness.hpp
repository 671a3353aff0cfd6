#pragma once

#include "tsembed/dataio.hpp"
#include "tsembed/dtw.hpp"
#include "tsembed/sae.hpp"
#include "tsembed/svm.hpp"

#include <json.hpp>

#include <optional>
#include <set>
#include <string>
#include <vector>

namespace tsembed {

inline constexpr const char *kVersion = "0.1.0";

struct MethodRow {
  std::string method;
  double error_rate = 0.0;
  std::string config_digest;
  std::vector<std::uint64_t> seeds;
  std::vector<double> seed_errors; // one per seed for averaged rows
  double wall_seconds = 0.0;
  double best_C = 0.0;
  double best_gamma = 0.0;

  bool operator==(const MethodRow &) const = default;
};

struct ExperimentReport {
  std::string dataset;
  std::vector<MethodRow> rows;

  const MethodRow *find(const std::string &method) const;
  bool operator==(const ExperimentReport &) const = default;
};

nlohmann::json to_json(const ExperimentReport &r);
ExperimentReport report_from_json(const nlohmann::json &j);
std::string report_table(const ExperimentReport &r);

/// Labeled embedding rows as used by the SVM stage.
struct EmbeddedSplit {
  FeatureRows x;
  std::vector<int> y;
};
EmbeddedSplit embed_split(const SaeModel &model, const std::vector<TimeSeries> &normalized,
                          LayerSelector selector = LayerSelector::all());

struct SvmRun {
  GridSearchResult search;
  SvmModel model;
  std::vector<int> predictions;
  double error_rate = 0.0;
};

/// Grid-searches (C, gamma) with stratified CV on the training rows only,
/// refits on all training rows and scores the test rows.
SvmRun svm_pipeline(const EmbeddedSplit &train, const EmbeddedSplit &test, std::uint64_t cv_seed,
                    int folds = 5, bool standardize = false);

struct CompareOptions {
  std::set<std::string> methods{"TN-C", "SAE-C", "DTW-C", "TN-C_2/3", "TN-C_Li"};
  std::uint64_t cv_seed = 1;
  std::vector<std::uint64_t> reduced_seeds{1, 2, 3};
  int folds = 5;
  bool standardize = false;
  DtwConfig dtw;
  Architecture sae_arch = uniform_architecture(2, 32);
  TrainConfig sae_train;
};

/// Runs the requested comparison rows on one dataset. TN-C rows need
/// `timenet`. Only train-split labels reach any fitting or CV step.
ExperimentReport run_compare(const Dataset &dataset, const SaeModel *timenet,
                             const CompareOptions &opts);

struct ScalingRow {
  std::size_t length;
  double seconds; // min over repeats
};

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
};
LinearFit fit_line(const std::vector<double> &x, const std::vector<double> &y);

struct ScalingReport {
  std::vector<ScalingRow> rows;
  LinearFit fit;
  std::vector<std::string> warnings;
};

/// Times embedding extraction on synthetic input for each length.
ScalingReport bench_scaling(const SaeModel &model, const std::vector<std::size_t> &lengths,
                            std::size_t repeats, std::size_t series_per_length = 16,
                            std::uint64_t seed = 1);

/// Wall time (min over repeats) to embed `count` random series of length T.
double time_embedding(const SaeModel &model, std::size_t length, std::size_t repeats,
                      std::size_t count, std::uint64_t seed);

// Embedding CSV: header `label,split,e1..ec`, one row per instance.
std::string embedding_csv(const EmbeddedSplit &train, const EmbeddedSplit &test);
struct EmbeddingTable {
  EmbeddedSplit train, test;
};
EmbeddingTable parse_embedding_csv(std::string_view text);

/// Writes config.json, config_digest.txt and versions.txt into `dir`;
/// returns the digest of the canonical config dump.
std::string write_run_metadata(const std::string &dir, const nlohmann::json &config);
std::string config_digest(const nlohmann::json &config);

} // namespace tsembed
