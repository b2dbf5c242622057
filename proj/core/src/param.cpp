#include "mixreg/param.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "mixreg/errors.hpp"

namespace mixreg {

std::shared_ptr<const ParamLayout> ParamLayout::create(const std::vector<LayerShape>& shapes) {
  auto layout = std::shared_ptr<ParamLayout>(new ParamLayout());
  std::size_t offset = 0;
  for (std::size_t id = 0; id < shapes.size(); ++id) {
    const LayerShape& s = shapes[id];
    if (s.out_dim == 0 || s.in_dim == 0) {
      throw ConfigError("layer " + std::to_string(id) + " has an empty weight matrix");
    }
    LayerDesc d;
    d.id = id;
    d.out_dim = s.out_dim;
    d.in_dim = s.in_dim;
    d.weight_offset = offset;
    offset += d.weight_len();
    d.bias_offset = offset;
    d.bias_len = s.has_bias ? s.out_dim : 0;
    offset += d.bias_len;
    d.norm_offset = offset;
    d.norm_len = s.norm_len;
    offset += d.norm_len;
    layout->layers_.push_back(d);

    std::vector<std::vector<std::size_t>> segs(d.in_dim);
    for (std::size_t col = 0; col < d.in_dim; ++col) {
      segs[col].reserve(d.out_dim);
      for (std::size_t row = 0; row < d.out_dim; ++row) segs[col].push_back(d.weight_index(row, col));
    }
    layout->segments_.push_back(std::move(segs));
  }
  layout->total_len_ = offset;
  return layout;
}

std::shared_ptr<const ParamLayout> ParamLayout::flat(std::size_t n) {
  if (n == 0) {
    auto layout = std::shared_ptr<ParamLayout>(new ParamLayout());
    return layout;
  }
  return create({LayerShape{1, n, false, 0}});
}

const LayerDesc& ParamLayout::layer(std::size_t id) const {
  if (id >= layers_.size()) throw IndexError("layer id " + std::to_string(id) + " out of range");
  return layers_[id];
}

std::size_t ParamLayout::layer_of(std::size_t index) const {
  if (index >= total_len_) throw IndexError("parameter index " + std::to_string(index) + " out of range");
  auto it = std::upper_bound(layers_.begin(), layers_.end(), index,
                             [](std::size_t i, const LayerDesc& d) { return i < d.end(); });
  return it->id;
}

ParamCategory ParamLayout::category(std::size_t index) const {
  const LayerDesc& d = layers_[layer_of(index)];
  if (index < d.bias_offset) return ParamCategory::weight;
  if (index < d.norm_offset) return ParamCategory::bias;
  return ParamCategory::norm;
}

const std::vector<std::vector<std::size_t>>& ParamLayout::neuron_segments(std::size_t layer_id) const {
  if (layer_id >= segments_.size()) throw IndexError("layer id " + std::to_string(layer_id) + " out of range");
  return segments_[layer_id];
}

bool ParamLayout::operator==(const ParamLayout& other) const {
  if (total_len_ != other.total_len_ || layers_.size() != other.layers_.size()) return false;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const LayerDesc& a = layers_[i];
    const LayerDesc& b = other.layers_[i];
    if (a.out_dim != b.out_dim || a.in_dim != b.in_dim || a.bias_len != b.bias_len ||
        a.norm_len != b.norm_len)
      return false;
  }
  return true;
}

ParamVector::ParamVector(std::shared_ptr<const ParamLayout> layout)
    : layout_(std::move(layout)), values_(layout_->total_len(), 0.0) {}

ParamVector::ParamVector(std::shared_ptr<const ParamLayout> layout, std::vector<double> values)
    : layout_(std::move(layout)), values_(std::move(values)) {
  if (values_.size() != layout_->total_len()) {
    throw DimensionError("parameter vector has " + std::to_string(values_.size()) +
                         " entries, layout expects " + std::to_string(layout_->total_len()));
  }
  check_finite();
}

ParamVector ParamVector::flat(std::vector<double> values) {
  auto layout = ParamLayout::flat(values.size());
  return ParamVector(std::move(layout), std::move(values));
}

bool ParamVector::same_layout(const ParamVector& other) const {
  if (layout_ == other.layout_) return true;
  if (!layout_ || !other.layout_) return false;
  return *layout_ == *other.layout_;
}

void ParamVector::check_finite() const {
  for (std::size_t i = 0; i < values_.size(); ++i) {
    if (!std::isfinite(values_[i])) {
      throw NumericError("non-finite parameter at index " + std::to_string(i));
    }
  }
}

void require_same_layout(const ParamVector& a, const ParamVector& b, const char* what) {
  if (!a.same_layout(b)) {
    throw DimensionError(std::string(what) + ": layout mismatch (" + std::to_string(a.size()) +
                         " vs " + std::to_string(b.size()) + " entries)");
  }
}

double deviation_norm_sq(const ParamVector& w, const ParamVector& u) {
  require_same_layout(w, u, "deviation_norm_sq");
  double acc = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    const double d = w[i] - u[i];
    acc += d * d;
  }
  return acc;
}

std::vector<double> restrict(const ParamVector& w, std::span<const std::size_t> excluded) {
  std::vector<char> drop(w.size(), 0);
  for (std::size_t i : excluded) {
    if (i >= w.size()) throw IndexError("selector index " + std::to_string(i) + " out of range");
    drop[i] = 1;
  }
  std::vector<double> out;
  out.reserve(w.size());
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (!drop[i]) out.push_back(w[i]);
  }
  return out;
}

std::vector<std::size_t> layer_indices(const ParamLayout& layout,
                                       std::span<const std::size_t> layer_ids) {
  std::vector<std::size_t> out;
  for (std::size_t id : layer_ids) {
    const LayerDesc& d = layout.layer(id);
    for (std::size_t i = d.weight_offset; i < d.end(); ++i) out.push_back(i);
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

namespace {

template <typename Op>
ParamVector elementwise(const ParamVector& a, const ParamVector& b, const char* what, Op op) {
  require_same_layout(a, b, what);
  ParamVector out(a.layout_ptr());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = op(a[i], b[i]);
  return out;
}

}  // namespace

ParamVector add(const ParamVector& a, const ParamVector& b) {
  return elementwise(a, b, "add", [](double x, double y) { return x + y; });
}

ParamVector subtract(const ParamVector& a, const ParamVector& b) {
  return elementwise(a, b, "subtract", [](double x, double y) { return x - y; });
}

ParamVector hadamard(const ParamVector& a, const ParamVector& b) {
  return elementwise(a, b, "hadamard", [](double x, double y) { return x * y; });
}

ParamVector scale(const ParamVector& a, double s) {
  ParamVector out(a.layout_ptr());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * s;
  return out;
}

ParamVector splice_layers(const ParamVector& base, const ParamVector& source,
                          std::span<const std::size_t> layer_ids) {
  require_same_layout(base, source, "splice_layers");
  ParamVector out = base;
  for (std::size_t i : layer_indices(base.layout(), layer_ids)) out[i] = source[i];
  return out;
}

}  // namespace mixreg
