#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mixreg/net.hpp"

namespace mixreg {

struct LabeledData {
  Matrix inputs;
  std::vector<int> labels;
  std::size_t num_classes = 0;

  std::size_t size() const { return labels.size(); }
};

struct Dataset {
  std::string name;
  std::size_t num_classes = 0;
  LabeledData train;
  LabeledData validation;
};

/// Read an IDX image/label pair (MNIST distribution format). Pixels are
/// scaled by 1/255 and then standardized with the dataset's global mean and
/// standard deviation (a zero deviation leaves the centered values as is).
LabeledData load_idx(const std::string& images_path, const std::string& labels_path);

/// Parse in-memory IDX blobs; `load_idx` reads the files and calls this.
LabeledData parse_idx(std::span<const unsigned char> images, std::span<const unsigned char> labels);

/// Shift and scale all entries to zero mean and unit variance.
void standardize(Matrix& inputs);

/// Deterministic shuffled split into train / validation.
Dataset split_dataset(const LabeledData& data, double train_fraction, std::uint64_t seed,
                      std::string name = {});

/// First `per_class` examples of each class after a seeded shuffle.
LabeledData subsample_per_class(const LabeledData& data, std::size_t per_class, std::uint64_t seed);

LabeledData take_rows(const LabeledData& data, std::span<const std::size_t> rows);

/// Fraction of the most frequent label.
double majority_fraction(std::span<const int> labels, std::size_t num_classes);

/// Synthetic stand-in for a source/target digit pair. Each class has a
/// prototype image in [0, 1]^dim; samples add Gaussian noise and clip. The
/// target domain moves every prototype toward a fresh random image by
/// `shift` and uses its own noise level.
struct SynthParams {
  std::size_t num_classes = 10;
  std::size_t dim = 24;
  std::size_t source_per_class = 500;
  std::size_t target_per_class = 100;
  std::size_t target_val_per_class = 100;
  double shift = 0.5;
  double source_noise = 0.3;
  double target_noise = 0.3;
  double val_fraction = 0.1;  // source validation share
};

struct SynthPair {
  Dataset source;
  Dataset target;
  Matrix source_prototypes;  // num_classes x dim
  Matrix target_prototypes;
};

SynthPair synth_digits(const SynthParams& params, std::uint64_t seed);

}  // namespace mixreg
