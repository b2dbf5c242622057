#pragma once

#include <Eigen/Core>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "mixreg/param.hpp"

namespace mixreg {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class Activation { relu, identity };
enum class HeadKind { softmax_xent, mse };

struct HiddenLayer {
  std::size_t width = 0;
  Activation activation = Activation::relu;
  bool layer_norm = false;
};

/// Fully connected network: hidden layers (affine, activation, optional layer
/// normalization after the activation) followed by an affine output head.
struct NetworkSpec {
  std::size_t input_dim = 0;
  std::vector<HiddenLayer> hidden;
  HeadKind head = HeadKind::softmax_xent;
  std::size_t output_dim = 0;  // classes for softmax_xent, target width for mse

  void validate() const;
  std::size_t num_layers() const { return hidden.size() + 1; }
  std::size_t output_layer() const { return hidden.size(); }
  std::vector<LayerShape> layer_shapes() const;
  std::shared_ptr<const ParamLayout> make_layout() const;

  bool operator==(const NetworkSpec& other) const;

  /// ReLU + layer-norm classifier, e.g. mlp(784, {300, 100}, 10).
  static NetworkSpec mlp(std::size_t input_dim, const std::vector<std::size_t>& widths,
                         std::size_t num_classes, bool layer_norm = true);
};

/// A dense mini-batch. Classification heads read `labels`, regression heads
/// read `targets` (n x output_dim).
struct Batch {
  Matrix inputs;
  std::vector<int> labels;
  Matrix targets;

  std::size_t size() const { return static_cast<std::size_t>(inputs.rows()); }
};

inline constexpr double kLayerNormEpsilon = 1e-5;
inline constexpr double kInitWeightStd = 0.02;

/// Weights ~ N(0, weight_std^2), biases 0, normalization gains 1 and shifts 0.
ParamVector init_params(const NetworkSpec& spec, std::uint64_t seed,
                        double weight_std = kInitWeightStd);

/// Re-draw the weights (N(0, weight_std^2)) and zero the bias of one layer.
void reinit_layer(const NetworkSpec& spec, ParamVector& w, std::size_t layer_id, std::uint64_t seed,
                  double weight_std = kInitWeightStd);

/// Intermediate values of one forward pass.
struct ForwardTrace {
  std::vector<Matrix> layer_inputs;    // input of each layer (n x in_dim)
  std::vector<Matrix> pre_activation;  // affine output of each layer
  std::vector<Matrix> normalized;      // hidden layers with layer norm: rows before gain/shift
  std::vector<Eigen::VectorXd> inv_std;
  Matrix output;                       // probabilities (softmax head) or raw outputs (mse head)
};

ForwardTrace forward_trace(const NetworkSpec& spec, const ParamVector& w, const Matrix& inputs);

/// Probabilities (softmax head) or predictions (mse head), n x output_dim.
Matrix forward(const NetworkSpec& spec, const ParamVector& w, const Matrix& inputs);

struct LossGrad {
  double loss = 0.0;
  ParamVector grad;
};

/// Mean per-example loss and its exact gradient. Per-example losses are
/// -log p_y (softmax head) and 0.5 * ||y_hat - y||^2 (mse head).
LossGrad loss_and_grad(const NetworkSpec& spec, const ParamVector& w, const Batch& batch);

double loss_only(const NetworkSpec& spec, const ParamVector& w, const Batch& batch);

/// Fraction of rows whose arg-max prediction equals the label.
double accuracy(const NetworkSpec& spec, const ParamVector& w, const Matrix& inputs,
                std::span<const int> labels);

// ---------------------------------------------------------------------------
// Finite-difference verification

struct GradCheckOptions {
  std::size_t min_coords = 200;
  std::uint64_t seed = 0x5eed;
  // Relative error is |a - n| / max(|a|, |n|, floor).
  double floor = 1e-4;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  std::size_t coords_checked = 0;
};

/// At least `min_coords` distinct indices (all of them if fewer exist), with
/// every (layer, category) pair of the layout represented.
std::vector<std::size_t> sample_check_coords(const ParamLayout& layout, std::size_t min_coords,
                                             std::uint64_t seed);

/// Compare `analytic` against central differences of `objective` at w.
GradCheckReport compare_with_finite_differences(
    const std::function<double(const ParamVector&)>& objective, const ParamVector& w,
    const ParamVector& analytic, std::span<const std::size_t> coords, double h, double floor);

GradCheckReport grad_check(const NetworkSpec& spec, const ParamVector& w, const Batch& batch,
                           double h, const GradCheckOptions& options = {});

}  // namespace mixreg
