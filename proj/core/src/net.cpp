#include "mixreg/net.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "mixreg/errors.hpp"
#include "mixreg/random.hpp"

namespace mixreg {

namespace {

using ConstMatMap = Eigen::Map<const Matrix>;
using MatMap = Eigen::Map<Matrix>;
using ConstVecMap = Eigen::Map<const Eigen::VectorXd>;
using VecMap = Eigen::Map<Eigen::VectorXd>;

ConstMatMap weights_of(const ParamVector& w, const LayerDesc& d) {
  return ConstMatMap(w.values().data() + d.weight_offset, static_cast<Eigen::Index>(d.out_dim),
                     static_cast<Eigen::Index>(d.in_dim));
}

ConstVecMap bias_of(const ParamVector& w, const LayerDesc& d) {
  return ConstVecMap(w.values().data() + d.bias_offset, static_cast<Eigen::Index>(d.bias_len));
}

void require_finite(const Matrix& m, std::size_t layer) {
  if (!m.allFinite()) throw NumericError("non-finite activation in layer " + std::to_string(layer));
}

void require_layout(const NetworkSpec& spec, const ParamVector& w) {
  const auto shapes = spec.layer_shapes();
  const ParamLayout& layout = w.layout();
  bool ok = layout.num_layers() == shapes.size();
  for (std::size_t i = 0; ok && i < shapes.size(); ++i) {
    const LayerDesc& d = layout.layers()[i];
    ok = d.out_dim == shapes[i].out_dim && d.in_dim == shapes[i].in_dim &&
         d.bias_len == (shapes[i].has_bias ? shapes[i].out_dim : 0) && d.norm_len == shapes[i].norm_len;
  }
  if (!ok) throw DimensionError("parameter layout does not match the network spec");
}

}  // namespace

void NetworkSpec::validate() const {
  if (input_dim == 0) throw ConfigError("input_dim must be >= 1");
  if (output_dim == 0) throw ConfigError("output_dim must be >= 1");
  for (std::size_t i = 0; i < hidden.size(); ++i) {
    if (hidden[i].width == 0) throw ConfigError("hidden layer " + std::to_string(i) + " has width 0");
  }
  if (head == HeadKind::softmax_xent && output_dim < 2) {
    throw ConfigError("softmax head needs at least 2 classes");
  }
}

std::vector<LayerShape> NetworkSpec::layer_shapes() const {
  std::vector<LayerShape> shapes;
  std::size_t in = input_dim;
  for (const HiddenLayer& h : hidden) {
    shapes.push_back(LayerShape{h.width, in, true, h.layer_norm ? 2 * h.width : 0});
    in = h.width;
  }
  shapes.push_back(LayerShape{output_dim, in, true, 0});
  return shapes;
}

std::shared_ptr<const ParamLayout> NetworkSpec::make_layout() const {
  validate();
  return ParamLayout::create(layer_shapes());
}

bool NetworkSpec::operator==(const NetworkSpec& other) const {
  if (input_dim != other.input_dim || head != other.head || output_dim != other.output_dim ||
      hidden.size() != other.hidden.size())
    return false;
  for (std::size_t i = 0; i < hidden.size(); ++i) {
    if (hidden[i].width != other.hidden[i].width || hidden[i].activation != other.hidden[i].activation ||
        hidden[i].layer_norm != other.hidden[i].layer_norm)
      return false;
  }
  return true;
}

NetworkSpec NetworkSpec::mlp(std::size_t input_dim, const std::vector<std::size_t>& widths,
                             std::size_t num_classes, bool layer_norm) {
  NetworkSpec spec;
  spec.input_dim = input_dim;
  for (std::size_t w : widths) spec.hidden.push_back(HiddenLayer{w, Activation::relu, layer_norm});
  spec.head = HeadKind::softmax_xent;
  spec.output_dim = num_classes;
  return spec;
}

ParamVector init_params(const NetworkSpec& spec, std::uint64_t seed, double weight_std) {
  auto layout = spec.make_layout();
  ParamVector w(layout);
  for (const LayerDesc& d : layout->layers()) reinit_layer(spec, w, d.id, seed, weight_std);
  return w;
}

void reinit_layer(const NetworkSpec& spec, ParamVector& w, std::size_t layer_id, std::uint64_t seed,
                  double weight_std) {
  require_layout(spec, w);
  const LayerDesc& d = w.layout().layer(layer_id);
  auto engine = make_engine(StreamKey{seed, 0x1417}, layer_id);
  std::normal_distribution<double> normal(0.0, weight_std);
  for (std::size_t i = d.weight_offset; i < d.bias_offset; ++i) w[i] = normal(engine);
  for (std::size_t i = d.bias_offset; i < d.norm_offset; ++i) w[i] = 0.0;
  // gains then shifts
  const std::size_t half = d.norm_len / 2;
  for (std::size_t k = 0; k < d.norm_len; ++k) w[d.norm_offset + k] = k < half ? 1.0 : 0.0;
}

ForwardTrace forward_trace(const NetworkSpec& spec, const ParamVector& w, const Matrix& inputs) {
  require_layout(spec, w);
  if (static_cast<std::size_t>(inputs.cols()) != spec.input_dim) {
    throw DimensionError("batch has " + std::to_string(inputs.cols()) + " input columns, network expects " +
                         std::to_string(spec.input_dim));
  }
  const ParamLayout& layout = w.layout();
  const auto n = inputs.rows();
  ForwardTrace trace;
  trace.normalized.resize(spec.hidden.size());
  trace.inv_std.resize(spec.hidden.size());

  Matrix a = inputs;
  for (std::size_t k = 0; k < layout.num_layers(); ++k) {
    const LayerDesc& d = layout.layers()[k];
    trace.layer_inputs.push_back(a);
    Matrix z = a * weights_of(w, d).transpose();
    z.rowwise() += bias_of(w, d).transpose();
    require_finite(z, k);
    trace.pre_activation.push_back(z);
    if (k == spec.output_layer()) {
      a = std::move(z);
      break;
    }
    const HiddenLayer& h = spec.hidden[k];
    Matrix act = h.activation == Activation::relu ? Matrix(z.cwiseMax(0.0)) : z;
    if (h.layer_norm) {
      const auto width = static_cast<double>(d.out_dim);
      Eigen::VectorXd mean = act.rowwise().sum() / width;
      act.colwise() -= mean;
      Eigen::VectorXd var = act.rowwise().squaredNorm() / width;
      Eigen::VectorXd inv = (var.array() + kLayerNormEpsilon).rsqrt().matrix();
      for (Eigen::Index r = 0; r < n; ++r) act.row(r) *= inv(r);
      trace.normalized[k] = act;
      trace.inv_std[k] = inv;
      const ConstVecMap gain(w.values().data() + d.norm_offset, static_cast<Eigen::Index>(d.out_dim));
      const ConstVecMap shift(w.values().data() + d.norm_offset + d.out_dim,
                              static_cast<Eigen::Index>(d.out_dim));
      act = act.array().rowwise() * gain.transpose().array();
      act.rowwise() += shift.transpose();
    }
    require_finite(act, k);
    a = std::move(act);
  }

  if (spec.head == HeadKind::softmax_xent) {
    Matrix p = a;
    for (Eigen::Index r = 0; r < n; ++r) {
      const double m = p.row(r).maxCoeff();
      p.row(r) = (p.row(r).array() - m).exp();
      p.row(r) /= p.row(r).sum();
    }
    trace.output = std::move(p);
  } else {
    trace.output = std::move(a);
  }
  return trace;
}

Matrix forward(const NetworkSpec& spec, const ParamVector& w, const Matrix& inputs) {
  return forward_trace(spec, w, inputs).output;
}

namespace {

void check_targets(const NetworkSpec& spec, const Batch& batch) {
  const std::size_t n = batch.size();
  if (n == 0) throw DimensionError("empty batch");
  if (spec.head == HeadKind::softmax_xent) {
    if (batch.labels.size() != n) throw DimensionError("label count does not match batch size");
    for (int y : batch.labels) {
      if (y < 0 || static_cast<std::size_t>(y) >= spec.output_dim) {
        throw DimensionError("label " + std::to_string(y) + " out of range");
      }
    }
  } else if (static_cast<std::size_t>(batch.targets.rows()) != n ||
             static_cast<std::size_t>(batch.targets.cols()) != spec.output_dim) {
    throw DimensionError("regression targets do not match batch/output shape");
  }
}

// Mean loss from the output logits / predictions of the last affine layer.
double head_loss(const NetworkSpec& spec, const Matrix& logits, const Batch& batch) {
  const auto n = logits.rows();
  double total = 0.0;
  if (spec.head == HeadKind::softmax_xent) {
    for (Eigen::Index r = 0; r < n; ++r) {
      const double m = logits.row(r).maxCoeff();
      const double lse = m + std::log((logits.row(r).array() - m).exp().sum());
      total += lse - logits(r, batch.labels[static_cast<std::size_t>(r)]);
    }
  } else {
    total = 0.5 * (logits - batch.targets).squaredNorm();
  }
  return total / static_cast<double>(n);
}

}  // namespace

double loss_only(const NetworkSpec& spec, const ParamVector& w, const Batch& batch) {
  check_targets(spec, batch);
  const ForwardTrace trace = forward_trace(spec, w, batch.inputs);
  return head_loss(spec, trace.pre_activation.back(), batch);
}

LossGrad loss_and_grad(const NetworkSpec& spec, const ParamVector& w, const Batch& batch) {
  check_targets(spec, batch);
  const ForwardTrace trace = forward_trace(spec, w, batch.inputs);
  const ParamLayout& layout = w.layout();
  const auto n = static_cast<Eigen::Index>(batch.size());
  const double inv_n = 1.0 / static_cast<double>(n);

  LossGrad out;
  out.loss = head_loss(spec, trace.pre_activation.back(), batch);
  out.grad = ParamVector(w.layout_ptr());

  // Gradient w.r.t. the output layer's affine output.
  Matrix dz;
  if (spec.head == HeadKind::softmax_xent) {
    dz = trace.output;
    for (Eigen::Index r = 0; r < n; ++r) dz(r, batch.labels[static_cast<std::size_t>(r)]) -= 1.0;
  } else {
    dz = trace.output - batch.targets;
  }
  dz *= inv_n;

  for (std::size_t k = layout.num_layers(); k-- > 0;) {
    const LayerDesc& d = layout.layers()[k];
    if (k != spec.output_layer()) {
      // dz currently holds the gradient w.r.t. this hidden layer's output.
      const HiddenLayer& h = spec.hidden[k];
      if (h.layer_norm) {
        const Matrix& xhat = trace.normalized[k];
        const ConstVecMap gain(w.values().data() + d.norm_offset, static_cast<Eigen::Index>(d.out_dim));
        VecMap dgain(out.grad.values().data() + d.norm_offset, static_cast<Eigen::Index>(d.out_dim));
        VecMap dshift(out.grad.values().data() + d.norm_offset + d.out_dim,
                      static_cast<Eigen::Index>(d.out_dim));
        dgain = (dz.array() * xhat.array()).colwise().sum().transpose();
        dshift = dz.colwise().sum().transpose();
        Matrix dxhat = dz.array().rowwise() * gain.transpose().array();
        const double width = static_cast<double>(d.out_dim);
        for (Eigen::Index r = 0; r < n; ++r) {
          const double mean_d = dxhat.row(r).sum() / width;
          const double mean_dx = dxhat.row(r).dot(xhat.row(r)) / width;
          dxhat.row(r) = trace.inv_std[k](r) *
                         (dxhat.row(r).array() - mean_d - xhat.row(r).array() * mean_dx).matrix();
        }
        dz = std::move(dxhat);
      }
      if (h.activation == Activation::relu) {
        dz = (trace.pre_activation[k].array() > 0.0).select(dz, 0.0);
      }
    }
    MatMap dw(out.grad.values().data() + d.weight_offset, static_cast<Eigen::Index>(d.out_dim),
              static_cast<Eigen::Index>(d.in_dim));
    dw.noalias() = dz.transpose() * trace.layer_inputs[k];
    VecMap db(out.grad.values().data() + d.bias_offset, static_cast<Eigen::Index>(d.bias_len));
    db = dz.colwise().sum().transpose();
    if (k > 0) {
      Matrix da = dz * weights_of(w, d);
      dz = std::move(da);
    }
  }
  return out;
}

double accuracy(const NetworkSpec& spec, const ParamVector& w, const Matrix& inputs,
                std::span<const int> labels) {
  if (static_cast<std::size_t>(inputs.rows()) != labels.size()) {
    throw DimensionError("label count does not match input rows");
  }
  if (labels.empty()) return 0.0;
  const Matrix out = forward(spec, w, inputs);
  std::size_t correct = 0;
  for (Eigen::Index r = 0; r < out.rows(); ++r) {
    Eigen::Index best = 0;
    out.row(r).maxCoeff(&best);
    if (best == labels[static_cast<std::size_t>(r)]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(labels.size());
}

std::vector<std::size_t> sample_check_coords(const ParamLayout& layout, std::size_t min_coords,
                                             std::uint64_t seed) {
  const std::size_t total = layout.total_len();
  std::vector<std::size_t> all(total);
  std::iota(all.begin(), all.end(), std::size_t{0});
  if (total <= min_coords) return all;

  auto engine = make_engine(StreamKey{seed, 0xc0de});
  std::vector<std::size_t> picked;
  std::vector<char> taken(total, 0);
  auto take = [&](std::size_t i) {
    if (!taken[i]) {
      taken[i] = 1;
      picked.push_back(i);
    }
  };
  // One random representative of every (layer, category) block.
  for (const LayerDesc& d : layout.layers()) {
    const std::pair<std::size_t, std::size_t> blocks[] = {
        {d.weight_offset, d.bias_offset}, {d.bias_offset, d.norm_offset}, {d.norm_offset, d.end()}};
    for (auto [lo, hi] : blocks) {
      if (hi > lo) take(lo + static_cast<std::size_t>(uniform01(engine) * static_cast<double>(hi - lo)));
    }
  }
  std::shuffle(all.begin(), all.end(), engine);
  for (std::size_t i : all) {
    if (picked.size() >= min_coords) break;
    take(i);
  }
  std::sort(picked.begin(), picked.end());
  return picked;
}

GradCheckReport compare_with_finite_differences(
    const std::function<double(const ParamVector&)>& objective, const ParamVector& w,
    const ParamVector& analytic, std::span<const std::size_t> coords, double h, double floor) {
  if (!(h > 0.0)) throw ConfigError("finite-difference step must be positive");
  require_same_layout(w, analytic, "compare_with_finite_differences");
  GradCheckReport report;
  ParamVector probe = w;
  for (std::size_t i : coords) {
    const double orig = probe[i];
    probe[i] = orig + h;
    const double up = objective(probe);
    probe[i] = orig - h;
    const double down = objective(probe);
    probe[i] = orig;
    const double numeric = (up - down) / (2.0 * h);
    const double a = analytic[i];
    const double denom = std::max({std::abs(a), std::abs(numeric), floor});
    const double err = std::abs(a - numeric) / denom;
    if (report.coords_checked == 0 || err > report.max_rel_error) {
      report.max_rel_error = err;
      report.worst_index = i;
    }
    ++report.coords_checked;
  }
  return report;
}

GradCheckReport grad_check(const NetworkSpec& spec, const ParamVector& w, const Batch& batch, double h,
                           const GradCheckOptions& options) {
  const LossGrad lg = loss_and_grad(spec, w, batch);
  const auto coords = sample_check_coords(w.layout(), options.min_coords, options.seed);
  return compare_with_finite_differences(
      [&](const ParamVector& v) { return loss_only(spec, v, batch); }, w, lg.grad, coords, h,
      options.floor);
}

}  // namespace mixreg
