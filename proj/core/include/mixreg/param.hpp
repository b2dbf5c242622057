#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <vector>

namespace mixreg {

enum class ParamCategory : unsigned char { weight, bias, norm };

/// Shape of one dense layer as seen by the flat parameter store.
struct LayerShape {
  std::size_t out_dim = 0;
  std::size_t in_dim = 0;
  bool has_bias = false;
  std::size_t norm_len = 0;  // gain + shift entries of a normalization after this layer
};

/// Resolved placement of one layer inside the flat vector. Storage order per
/// layer is: weights (out_dim x in_dim, row-major), bias, normalization.
struct LayerDesc {
  std::size_t id = 0;
  std::size_t out_dim = 0;
  std::size_t in_dim = 0;
  std::size_t weight_offset = 0;
  std::size_t bias_offset = 0;
  std::size_t bias_len = 0;
  std::size_t norm_offset = 0;
  std::size_t norm_len = 0;

  std::size_t weight_len() const { return out_dim * in_dim; }
  std::size_t end() const { return norm_offset + norm_len; }
  std::size_t weight_index(std::size_t row, std::size_t col) const {
    return weight_offset + row * in_dim + col;
  }
};

/// Segmentation metadata for a flat parameter vector.
///
/// Each layer's weight matrix is split by source (input) neuron: segment j of
/// a layer holds the out_dim entries of column j, i.e. every connection
/// leaving source neuron j. Biases and normalization parameters are never part
/// of a neuron segment.
class ParamLayout {
 public:
  static std::shared_ptr<const ParamLayout> create(const std::vector<LayerShape>& shapes);

  /// A single weight-only layer with one source neuron per entry
  /// (out_dim = 1, in_dim = n). Used for plain vectors.
  static std::shared_ptr<const ParamLayout> flat(std::size_t n);

  std::size_t total_len() const { return total_len_; }
  std::size_t num_layers() const { return layers_.size(); }
  const std::vector<LayerDesc>& layers() const { return layers_; }
  const LayerDesc& layer(std::size_t id) const;

  ParamCategory category(std::size_t index) const;
  std::size_t layer_of(std::size_t index) const;

  /// Index sets of the connections outgoing from each source neuron of a layer.
  const std::vector<std::vector<std::size_t>>& neuron_segments(std::size_t layer_id) const;

  bool operator==(const ParamLayout& other) const;

 private:
  ParamLayout() = default;

  std::vector<LayerDesc> layers_;
  std::vector<std::vector<std::vector<std::size_t>>> segments_;
  std::size_t total_len_ = 0;
};

/// Flat double-precision parameter vector bound to a layout.
class ParamVector {
 public:
  ParamVector() = default;
  explicit ParamVector(std::shared_ptr<const ParamLayout> layout);
  ParamVector(std::shared_ptr<const ParamLayout> layout, std::vector<double> values);

  /// Vector over a ParamLayout::flat layout.
  static ParamVector flat(std::vector<double> values);

  std::size_t size() const { return values_.size(); }
  double operator[](std::size_t i) const { return values_[i]; }
  double& operator[](std::size_t i) { return values_[i]; }

  std::span<const double> values() const { return values_; }
  std::span<double> values() { return values_; }

  const ParamLayout& layout() const { return *layout_; }
  const std::shared_ptr<const ParamLayout>& layout_ptr() const { return layout_; }

  bool same_layout(const ParamVector& other) const;

  /// Throws NumericError naming the first non-finite index.
  void check_finite() const;

 private:
  std::shared_ptr<const ParamLayout> layout_;
  std::vector<double> values_;
};

/// Throws DimensionError unless both vectors share a layout.
void require_same_layout(const ParamVector& a, const ParamVector& b, const char* what);

/// Sum of squared differences.
double deviation_norm_sq(const ParamVector& w, const ParamVector& u);

/// Entries of w whose indices are NOT in `excluded` (the complement of the
/// index set), in index order.
std::vector<double> restrict(const ParamVector& w, std::span<const std::size_t> excluded);

/// Every parameter index belonging to the given layers.
std::vector<std::size_t> layer_indices(const ParamLayout& layout,
                                       std::span<const std::size_t> layer_ids);

ParamVector add(const ParamVector& a, const ParamVector& b);
ParamVector subtract(const ParamVector& a, const ParamVector& b);
ParamVector scale(const ParamVector& a, double s);
ParamVector hadamard(const ParamVector& a, const ParamVector& b);

/// Copy of `base` with the entries of the listed layers taken from `source`.
ParamVector splice_layers(const ParamVector& base, const ParamVector& source,
                          std::span<const std::size_t> layer_ids);

}  // namespace mixreg
