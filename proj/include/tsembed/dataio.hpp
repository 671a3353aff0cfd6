#pragma once

#include "tsembed/common.hpp"

#include <optional>
#include <string>
#include <vector>

namespace tsembed {

/// One univariate series. Labels are contiguous 0-based class ids once loaded.
struct TimeSeries {
  std::vector<double> values;
  std::optional<int> label;

  std::size_t length() const { return values.size(); }
  bool operator==(const TimeSeries &) const = default;
};

struct Dataset {
  std::string name;
  std::vector<TimeSeries> train;
  std::vector<TimeSeries> test;
  int num_classes = 0;
  std::size_t series_length = 0;
};

enum class CorpusRole { train, validation };

struct Corpus {
  std::vector<Dataset> datasets;
  CorpusRole role = CorpusRole::train;

  /// Every train and test series of every dataset, in dataset order.
  std::vector<TimeSeries> all_series() const;
  bool empty() const;
};

inline constexpr std::size_t kDefaultLengthCap = 512;

// UCR text format: one series per line, class label first, delimiter comma or
// whitespace (detected from the first record).
std::vector<TimeSeries> parse_ucr_text(std::string_view text);
std::vector<TimeSeries> parse_ucr(const std::string &path);
std::string to_ucr_text(const std::vector<TimeSeries> &series);
void write_ucr(const std::vector<TimeSeries> &series, const std::string &path);

/// Loads <dir>/<Name>_TRAIN* and <dir>/<Name>_TEST*. Labels are remapped
/// jointly over both splits so ids agree between them.
Dataset load_ucr_dataset(const std::string &dir, std::size_t length_cap = kDefaultLengthCap);

/// Writes a dataset back out as <dir>/<name>_TRAIN.tsv and _TEST.tsv.
void save_ucr_dataset(const Dataset &ds, const std::string &dir);

struct Manifest {
  Corpus train;
  Corpus validation;
};

/// Manifest lines are `train:<dir>` or `val:<dir>`; `#` starts a comment.
/// Relative paths resolve against the manifest's directory.
Manifest load_manifest(const std::string &path, std::size_t length_cap = kDefaultLengthCap);

/// Zero mean, unit population variance. Near-constant input (std < 1e-12)
/// maps to all zeros.
TimeSeries znormalize(const TimeSeries &series);
std::vector<TimeSeries> znormalize_all(const std::vector<TimeSeries> &series);

/// Labeled synthetic dataset built from distinct waveform families, split
/// 50/50 per class. Deterministic for a fixed seed.
Dataset make_synthetic(int num_classes, int per_class, int length, double noise,
                       std::uint64_t seed);

/// Class-balanced subsample keeping ceil(fraction * n_c) items per class
/// (at least one). Output keeps input order.
std::vector<TimeSeries> stratified_subsample(const std::vector<TimeSeries> &train,
                                             double fraction, std::uint64_t seed);

} // namespace tsembed
