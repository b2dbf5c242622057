#include "mixreg/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numeric>
#include <random>

#include "mixreg/errors.hpp"
#include "mixreg/random.hpp"

namespace mixreg {

namespace {

constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

std::uint32_t read_be32(std::span<const unsigned char> bytes, std::size_t offset) {
  return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
         (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

std::vector<unsigned char> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  return std::vector<unsigned char>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void require_size(std::span<const unsigned char> bytes, std::size_t expected, const char* what) {
  if (bytes.size() < expected) {
    throw FormatError(std::string(what) + " is truncated: expected " + std::to_string(expected) +
                      " bytes, got " + std::to_string(bytes.size()));
  }
}

}  // namespace

LabeledData parse_idx(std::span<const unsigned char> images, std::span<const unsigned char> labels) {
  require_size(images, 16, "IDX image file");
  require_size(labels, 8, "IDX label file");
  if (read_be32(images, 0) != kIdxImagesMagic) throw FormatError("bad IDX image magic number");
  if (read_be32(labels, 0) != kIdxLabelsMagic) throw FormatError("bad IDX label magic number");

  const std::size_t n = read_be32(images, 4);
  const std::size_t rows = read_be32(images, 8);
  const std::size_t cols = read_be32(images, 12);
  const std::size_t dim = rows * cols;
  const std::size_t n_labels = read_be32(labels, 4);
  require_size(images, 16 + n * dim, "IDX image file");
  require_size(labels, 8 + n_labels, "IDX label file");
  if (n != n_labels) {
    throw ConsistencyError("IDX image count " + std::to_string(n) + " does not match label count " +
                           std::to_string(n_labels));
  }

  LabeledData data;
  data.inputs = Matrix(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(dim));
  const unsigned char* px = images.data() + 16;
  for (std::size_t i = 0; i < n * dim; ++i) data.inputs.data()[i] = static_cast<double>(px[i]) / 255.0;
  data.labels.resize(n);
  int max_label = -1;
  for (std::size_t i = 0; i < n; ++i) {
    data.labels[i] = labels[8 + i];
    max_label = std::max(max_label, data.labels[i]);
  }
  data.num_classes = std::max<std::size_t>(10, static_cast<std::size_t>(max_label + 1));
  standardize(data.inputs);
  return data;
}

LabeledData load_idx(const std::string& images_path, const std::string& labels_path) {
  const auto images = read_file(images_path);
  const auto labels = read_file(labels_path);
  return parse_idx(images, labels);
}

void standardize(Matrix& inputs) {
  if (inputs.size() == 0) return;
  const double mean = inputs.mean();
  inputs.array() -= mean;
  const double sd = std::sqrt(inputs.squaredNorm() / static_cast<double>(inputs.size()));
  if (sd > 0.0) inputs /= sd;
}

LabeledData take_rows(const LabeledData& data, std::span<const std::size_t> rows) {
  LabeledData out;
  out.num_classes = data.num_classes;
  out.inputs = Matrix(static_cast<Eigen::Index>(rows.size()), data.inputs.cols());
  out.labels.reserve(rows.size());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    out.inputs.row(static_cast<Eigen::Index>(k)) = data.inputs.row(static_cast<Eigen::Index>(rows[k]));
    out.labels.push_back(data.labels[rows[k]]);
  }
  return out;
}

Dataset split_dataset(const LabeledData& data, double train_fraction, std::uint64_t seed, std::string name) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw ConfigError("train fraction must lie in (0, 1)");
  const std::size_t n = data.size();
  const auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(n)));
  if (n_train == 0 || n_train == n) throw ConfigError("split leaves an empty partition");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  auto engine = make_engine(StreamKey{seed, 0x5b1});
  std::shuffle(order.begin(), order.end(), engine);
  Dataset ds;
  ds.name = std::move(name);
  ds.num_classes = data.num_classes;
  ds.train = take_rows(data, std::span(order).first(n_train));
  ds.validation = take_rows(data, std::span(order).subspan(n_train));
  return ds;
}

LabeledData subsample_per_class(const LabeledData& data, std::size_t per_class, std::uint64_t seed) {
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  auto engine = make_engine(StreamKey{seed, 0x5ab});
  std::shuffle(order.begin(), order.end(), engine);
  std::vector<std::size_t> count(data.num_classes, 0);
  std::vector<std::size_t> keep;
  for (std::size_t i : order) {
    const auto c = static_cast<std::size_t>(data.labels[i]);
    if (count[c] < per_class) {
      ++count[c];
      keep.push_back(i);
    }
  }
  std::sort(keep.begin(), keep.end());
  return take_rows(data, keep);
}

double majority_fraction(std::span<const int> labels, std::size_t num_classes) {
  if (labels.empty()) return 0.0;
  std::vector<std::size_t> count(num_classes, 0);
  for (int y : labels) ++count.at(static_cast<std::size_t>(y));
  return static_cast<double>(*std::max_element(count.begin(), count.end())) /
         static_cast<double>(labels.size());
}

namespace {

LabeledData draw_samples(const Matrix& prototypes, std::size_t per_class, double noise, std::mt19937_64& engine) {
  const auto classes = static_cast<std::size_t>(prototypes.rows());
  const auto dim = prototypes.cols();
  std::normal_distribution<double> normal(0.0, 1.0);
  LabeledData data;
  data.num_classes = classes;
  data.inputs = Matrix(static_cast<Eigen::Index>(classes * per_class), dim);
  // Interleave classes so contiguous slices stay balanced.
  std::size_t row = 0;
  for (std::size_t k = 0; k < per_class; ++k) {
    for (std::size_t c = 0; c < classes; ++c, ++row) {
      for (Eigen::Index j = 0; j < dim; ++j) {
        const double v = prototypes(static_cast<Eigen::Index>(c), j) + noise * normal(engine);
        data.inputs(static_cast<Eigen::Index>(row), j) = std::clamp(v, 0.0, 1.0);
      }
      data.labels.push_back(static_cast<int>(c));
    }
  }
  return data;
}

}  // namespace

SynthPair synth_digits(const SynthParams& params, std::uint64_t seed) {
  if (params.num_classes < 2 || params.dim == 0) throw ConfigError("synthetic data needs >= 2 classes and dim >= 1");
  if (params.source_per_class == 0 || params.target_per_class == 0 || params.target_val_per_class == 0) {
    throw ConfigError("synthetic sample counts must be positive");
  }
  const auto classes = static_cast<Eigen::Index>(params.num_classes);
  const auto dim = static_cast<Eigen::Index>(params.dim);

  auto proto_engine = make_engine(StreamKey{seed, 0x9a0});
  SynthPair pair;
  pair.source_prototypes = Matrix(classes, dim);
  pair.target_prototypes = Matrix(classes, dim);
  for (Eigen::Index c = 0; c < classes; ++c)
    for (Eigen::Index j = 0; j < dim; ++j) pair.source_prototypes(c, j) = uniform01(proto_engine);
  for (Eigen::Index c = 0; c < classes; ++c)
    for (Eigen::Index j = 0; j < dim; ++j) {
      const double fresh = uniform01(proto_engine);
      pair.target_prototypes(c, j) = params.shift == 0.0
                                         ? pair.source_prototypes(c, j)
                                         : (1.0 - params.shift) * pair.source_prototypes(c, j) + params.shift * fresh;
    }

  auto source_engine = make_engine(StreamKey{seed, 0x5c0});
  LabeledData source = draw_samples(pair.source_prototypes, params.source_per_class, params.source_noise, source_engine);
  standardize(source.inputs);
  pair.source = split_dataset(source, 1.0 - params.val_fraction, seed, "synthetic-source");

  auto target_engine = make_engine(StreamKey{seed, 0x7a0});
  LabeledData target =
      draw_samples(pair.target_prototypes, params.target_per_class + params.target_val_per_class,
                   params.target_noise, target_engine);
  standardize(target.inputs);
  // draw_samples interleaves classes, so the leading rows are class balanced.
  const std::size_t n_train = params.target_per_class * params.num_classes;
  std::vector<std::size_t> train_rows(n_train), val_rows(target.size() - n_train);
  std::iota(train_rows.begin(), train_rows.end(), std::size_t{0});
  std::iota(val_rows.begin(), val_rows.end(), n_train);
  pair.target.name = "synthetic-target";
  pair.target.num_classes = params.num_classes;
  pair.target.train = take_rows(target, train_rows);
  pair.target.validation = take_rows(target, val_rows);
  return pair;
}

}  // namespace mixreg
