#include "mixreg/theory.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <random>
#include <sstream>

#include "mixreg/errors.hpp"
#include "mixreg/random.hpp"

namespace mixreg {

namespace {

// Neumaier compensated summation.
struct CompensatedSum {
  double sum = 0.0;
  double carry = 0.0;

  void add(double x) {
    const double t = sum + x;
    if (std::abs(sum) >= std::abs(x)) {
      carry += (sum - t) + x;
    } else {
      carry += (x - t) + sum;
    }
    sum = t;
  }
  double value() const { return sum + carry; }
};

void require_bernoulli(const MixPolicy& policy) {
  if (!policy.distribution.is_bernoulli()) {
    throw ConfigError("exact enumeration needs a Bernoulli mask law");
  }
}

// Calls fn(probability, mask) for every joint outcome of the policy's units.
template <typename Fn>
void for_each_outcome(const MixPolicy& policy, const std::shared_ptr<const ParamLayout>& layout, Fn&& fn) {
  require_bernoulli(policy);
  const auto units = mask_units(policy, *layout);
  if (units.size() > kMaxEnumeratedUnits) {
    throw CapacityError("enumeration over " + std::to_string(units.size()) + " mask units exceeds the limit of " +
                        std::to_string(kMaxEnumeratedUnits));
  }
  const double keep = policy.distribution.mean();
  const double drop = policy.distribution.drop_prob();
  MaskVector mask = base_mask(policy, layout);
  const std::uint64_t outcomes = std::uint64_t{1} << units.size();
  for (std::uint64_t bits = 0; bits < outcomes; ++bits) {
    double prob = 1.0;
    for (std::size_t k = 0; k < units.size(); ++k) {
      const bool kept = (bits >> k) & 1U;
      prob *= kept ? keep : drop;
      for (std::size_t i : units[k].indices) mask.values[i] = kept ? 1.0 : 0.0;
    }
    if (prob == 0.0) continue;
    fn(prob, mask);
  }
}

void require_dims(const QuadraticLoss& quad, const ParamVector& w, const MixPolicy& policy) {
  if (w.size() != quad.dim()) throw DimensionError("parameter length does not match the quadratic");
  policy.validate(w.layout());
}

// d_U^T A_UU d_U summed over the policy's mask units.
double within_unit_form(const QuadraticLoss& quad, const ParamVector& w, const MixPolicy& policy) {
  const Matrix& a = quad.hessian();
  double acc = 0.0;
  for (const MaskUnit& unit : mask_units(policy, w.layout())) {
    for (std::size_t i : unit.indices) {
      const double di = w[i] - policy.anchor[i];
      for (std::size_t j : unit.indices) {
        acc += a(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) * di * (w[j] - policy.anchor[j]);
      }
    }
  }
  return acc;
}

}  // namespace

// ---------------------------------------------------------------------------

std::vector<double> symmetric_eigenvalues(const Matrix& a_in, double tol) {
  const auto n = a_in.rows();
  if (a_in.cols() != n) throw DimensionError("eigenvalues need a square matrix");
  Matrix a = a_in;
  const double scale = std::max(a.norm(), 1e-300);
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = i + 1; j < n; ++j) off += a(i, j) * a(i, j);
    if (std::sqrt(off) <= tol * scale) break;
    for (Eigen::Index p = 0; p < n; ++p) {
      for (Eigen::Index q = p + 1; q < n; ++q) {
        if (a(p, q) == 0.0) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (Eigen::Index k = 0; k < n; ++k) {
          const double akp = a(k, p);
          const double akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (Eigen::Index k = 0; k < n; ++k) {
          const double apk = a(p, k);
          const double aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
      }
    }
  }
  std::vector<double> eig(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) eig[static_cast<std::size_t>(i)] = a(i, i);
  std::sort(eig.begin(), eig.end());
  return eig;
}

QuadraticLoss::QuadraticLoss(Matrix a, std::vector<double> minimizer)
    : a_(std::move(a)), minimizer_(std::move(minimizer)) {
  const auto d = static_cast<Eigen::Index>(minimizer_.size());
  if (a_.rows() != d || a_.cols() != d) throw DimensionError("Hessian shape does not match minimizer length");
  if ((a_ - a_.transpose()).cwiseAbs().maxCoeff() > 1e-12) throw ConfigError("Hessian is not symmetric");
  m_ = d > 0 ? symmetric_eigenvalues(a_).front() : 0.0;
  if (!(m_ > 0.0)) throw ConfigError("Hessian is not positive definite");
}

double QuadraticLoss::value(const ParamVector& w) const {
  if (w.size() != dim()) throw DimensionError("parameter length does not match the quadratic");
  double acc = 0.0;
  for (std::size_t i = 0; i < dim(); ++i) {
    const double di = w[i] - minimizer_[i];
    double row = 0.0;
    for (std::size_t j = 0; j < dim(); ++j) {
      row += a_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) * (w[j] - minimizer_[j]);
    }
    acc += di * row;
  }
  return 0.5 * acc;
}

LossGrad QuadraticLoss::loss_and_grad(const ParamVector& w) const {
  LossGrad out;
  out.loss = value(w);
  out.grad = ParamVector(w.layout_ptr());
  for (std::size_t i = 0; i < dim(); ++i) {
    double row = 0.0;
    for (std::size_t j = 0; j < dim(); ++j) {
      row += a_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) * (w[j] - minimizer_[j]);
    }
    out.grad[i] = row;
  }
  return out;
}

QuadraticLoss random_quadratic(std::size_t d, std::uint64_t seed, bool isotropic) {
  auto engine = make_engine(StreamKey{seed, 0x9a});
  std::vector<double> w_star(d);
  for (double& x : w_star) x = 2.0 * uniform01(engine) - 1.0;
  const auto n = static_cast<Eigen::Index>(d);
  Matrix a(n, n);
  if (isotropic) {
    const double m = 0.25 + uniform01(engine);
    a = m * Matrix::Identity(n, n);
  } else {
    Matrix b(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < n; ++j) b(i, j) = 2.0 * uniform01(engine) - 1.0;
    a = b.transpose() * b / static_cast<double>(d) + 0.1 * Matrix::Identity(n, n);
    a = 0.5 * (a + a.transpose()).eval();
  }
  return QuadraticLoss(std::move(a), std::move(w_star));
}

double enum_expected_loss(const std::function<double(const ParamVector&)>& loss, const ParamVector& w,
                          const MixPolicy& policy) {
  policy.validate(w.layout());
  const double mu = policy.distribution.mean();
  CompensatedSum total;
  for_each_outcome(policy, w.layout_ptr(), [&](double prob, const MaskVector& mask) {
    total.add(prob * loss(phi_mix(w, policy.anchor, mask, mu)));
  });
  return total.value();
}

ExpectedLoss expected_loss(const std::function<double(const ParamVector&)>& loss, const ParamVector& w,
                           const MixPolicy& policy, std::size_t samples, std::uint64_t seed) {
  policy.validate(w.layout());
  if (policy.distribution.is_bernoulli() &&
      mask_units(policy, w.layout()).size() <= kMaxEnumeratedUnits) {
    return ExpectedLoss{enum_expected_loss(loss, w, policy), 0.0, true};
  }
  if (samples < 2) throw ConfigError("Monte Carlo estimate needs at least 2 samples");
  const double mu = policy.distribution.mean();
  double mean = 0.0;
  double m2 = 0.0;
  for (std::size_t s = 0; s < samples; ++s) {
    const MaskVector mask = sample_mask(policy, w.layout_ptr(), StreamKey{seed, s});
    const double x = loss(phi_mix(w, policy.anchor, mask, mu));
    const double delta = x - mean;
    mean += delta / static_cast<double>(s + 1);
    m2 += delta * (x - mean);
  }
  const double var = m2 / static_cast<double>(samples - 1);
  return ExpectedLoss{mean, std::sqrt(var / static_cast<double>(samples)), false};
}

double quadratic_expected_loss(const QuadraticLoss& quad, const ParamVector& w, const MixPolicy& policy) {
  require_dims(quad, w, policy);
  return quad.value(w) + 0.5 * policy.distribution.noise_ratio() * within_unit_form(quad, w, policy);
}

std::vector<double> quadratic_expected_minimizer(const QuadraticLoss& quad, const MixPolicy& policy) {
  const auto n = static_cast<Eigen::Index>(quad.dim());
  if (policy.anchor.size() != quad.dim()) throw DimensionError("anchor length does not match the quadratic");
  const Matrix& a = quad.hessian();
  Matrix block = Matrix::Zero(n, n);
  for (const MaskUnit& unit : mask_units(policy, policy.anchor.layout())) {
    for (std::size_t i : unit.indices)
      for (std::size_t j : unit.indices) {
        const auto ii = static_cast<Eigen::Index>(i);
        const auto jj = static_cast<Eigen::Index>(j);
        block(ii, jj) = a(ii, jj);
      }
  }
  const double rho = policy.distribution.noise_ratio();
  Eigen::VectorXd w_star(n);
  Eigen::VectorXd u(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    w_star(i) = quad.minimizer()[static_cast<std::size_t>(i)];
    u(i) = policy.anchor[static_cast<std::size_t>(i)];
  }
  const Matrix lhs = a + rho * block;
  const Eigen::VectorXd rhs = a * w_star + rho * block * u;
  const Eigen::VectorXd sol = lhs.ldlt().solve(rhs);
  return std::vector<double>(sol.data(), sol.data() + n);
}

BoundReport check_lower_bound(const QuadraticLoss& quad, const ParamVector& w, const MixPolicy& policy) {
  require_dims(quad, w, policy);
  BoundReport r;
  r.m = quad.strong_convexity();
  r.loss_at_w = quad.value(w);
  r.lhs = quadratic_expected_loss(quad, w, policy);
  const MaskVector active = base_mask(policy, w.layout_ptr());
  double dev = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (!active.active[i]) continue;
    const double d = w[i] - policy.anchor[i];
    dev += d * d;
  }
  r.rhs = r.loss_at_w + 0.5 * r.m * policy.distribution.noise_ratio() * dev;
  r.slack = r.lhs - r.rhs;
  r.holds = r.slack >= -1e-12;
  return r;
}

PhiMoments enum_phi_moments(const ParamVector& w, const MixPolicy& policy) {
  policy.validate(w.layout());
  const double mu = policy.distribution.mean();
  const std::size_t d = w.size();
  std::vector<CompensatedSum> mean(d);
  CompensatedSum second;
  std::vector<std::pair<double, ParamVector>> outcomes;
  for_each_outcome(policy, w.layout_ptr(), [&](double prob, const MaskVector& mask) {
    ParamVector phi = phi_mix(w, policy.anchor, mask, mu);
    double sq = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      mean[i].add(prob * phi[i]);
      const double diff = phi[i] - w[i];
      sq += diff * diff;
    }
    second.add(prob * sq);
    outcomes.emplace_back(prob, std::move(phi));
  });

  PhiMoments out;
  out.mean.resize(d);
  for (std::size_t i = 0; i < d; ++i) out.mean[i] = mean[i].value();
  out.second_moment = second.value();
  const auto n = static_cast<Eigen::Index>(d);
  out.covariance = Matrix::Zero(n, n);
  for (const auto& [prob, phi] : outcomes) {
    for (std::size_t i = 0; i < d; ++i) {
      const double ci = phi[i] - out.mean[i];
      if (ci == 0.0) continue;
      for (std::size_t j = 0; j < d; ++j) {
        out.covariance(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) +=
            prob * ci * (phi[j] - out.mean[j]);
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

RegressionProblem RegressionProblem::synthesize(std::size_t n, double noise_std, std::uint64_t seed) {
  auto engine = make_engine(StreamKey{seed, 0x1d});
  std::normal_distribution<double> normal(0.0, 1.0);
  RegressionProblem prob;
  prob.noise_std = noise_std;
  prob.w_true = {normal(engine), normal(engine)};
  prob.x = Matrix(static_cast<Eigen::Index>(n), 2);
  prob.y.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double xi = 2.0 * uniform01(engine) - 1.0;
    const auto r = static_cast<Eigen::Index>(i);
    prob.x(r, 0) = xi;
    prob.x(r, 1) = 1.0;
    prob.y[i] = prob.w_true[0] * xi + prob.w_true[1] + noise_std * normal(engine);
  }
  return prob;
}

namespace {

struct NormalEquations {
  Matrix gram;           // X^T X / n
  Eigen::VectorXd xty;   // X^T y / n
  Eigen::VectorXd col_sq;  // c_i
};

NormalEquations normal_equations(const RegressionProblem& prob) {
  const auto n = prob.x.rows();
  if (n == 0 || static_cast<std::size_t>(n) != prob.y.size()) {
    throw DimensionError("design rows do not match observation count");
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  const Eigen::Map<const Eigen::VectorXd> y(prob.y.data(), n);
  NormalEquations ne;
  ne.gram = prob.x.transpose() * prob.x * inv_n;
  ne.xty = prob.x.transpose() * y * inv_n;
  ne.col_sq = ne.gram.diagonal();
  return ne;
}

void check_mix_prob(double p) {
  if (!(p >= 0.0 && p < 1.0)) throw ConfigError("mix probability must lie in [0, 1)");
}

}  // namespace

std::vector<double> ls_mixout_solve(const RegressionProblem& prob, const std::vector<double>& u, double p) {
  check_mix_prob(p);
  const auto d = prob.x.cols();
  if (static_cast<Eigen::Index>(u.size()) != d) throw DimensionError("anchor length does not match design");
  const NormalEquations ne = normal_equations(prob);
  const double rho = p / (1.0 - p);
  const Eigen::Map<const Eigen::VectorXd> uv(u.data(), d);
  const Matrix lhs = ne.gram + Matrix(rho * ne.col_sq.asDiagonal());
  const Eigen::VectorXd rhs = ne.xty + rho * ne.col_sq.cwiseProduct(uv);
  Eigen::ColPivHouseholderQR<Matrix> qr(lhs);
  qr.setThreshold(1e-12);
  if (qr.rank() < d) throw RankError("mixout normal equations are singular");
  const Eigen::VectorXd sol = qr.solve(rhs);
  return std::vector<double>(sol.data(), sol.data() + d);
}

std::vector<double> ls_mixout_sgd(const RegressionProblem& prob, const std::vector<double>& u, double p,
                                  const SgdOptions& options) {
  check_mix_prob(p);
  const auto d = static_cast<std::size_t>(prob.x.cols());
  if (u.size() != d) throw DimensionError("anchor length does not match design");
  const NormalEquations ne = normal_equations(prob);
  const double keep = 1.0 - p;
  // Retained entries are scaled by 1/keep, so the mean-square stable step
  // shrinks like keep^2.
  const double lr = options.lr * keep * keep;

  // The full-batch gradient of 0.5 * mean((X phi - y)^2) at phi is
  // gram * phi - xty; only the mask is random.
  auto engine = make_engine(StreamKey{options.seed, 0x56d});
  std::vector<double> gram(d * d), xty(d);
  for (std::size_t i = 0; i < d; ++i) {
    xty[i] = ne.xty(static_cast<Eigen::Index>(i));
    for (std::size_t j = 0; j < d; ++j) gram[i * d + j] = ne.gram(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
  }
  const double inv_keep = 1.0 / keep;
  // Each 64-bit draw supplies two 32-bit uniforms, compared against an
  // integer threshold so the mask draw is branch free.
  const auto threshold = static_cast<std::uint64_t>(std::ceil(keep * 0x1.0p32));
  std::vector<double> w(u);
  std::vector<double> phi(d), scale(d), sum(d, 0.0);
  double* wp = w.data();
  double* php = phi.data();
  double* sp = scale.data();
  if (p == 0.0) {
    // No mask noise: plain gradient descent, stopped once it stops moving.
    for (std::size_t t = 0; t < options.steps; ++t) {
      double moved = 0.0;
      for (std::size_t i = 0; i < d; ++i) {
        double g = -xty[i];
        for (std::size_t j = 0; j < d; ++j) g += gram[i * d + j] * w[j];
        php[i] = g;
      }
      for (std::size_t i = 0; i < d; ++i) {
        wp[i] -= lr * php[i];
        moved = std::max(moved, std::abs(lr * php[i]));
      }
      if (moved == 0.0) break;
    }
    return w;
  }
  const std::size_t burn_in = options.steps / 2;
  for (std::size_t t = 0; t < options.steps; ++t) {
    std::uint64_t bits = 0;
    for (std::size_t i = 0; i < d; ++i) {
      if (i % 2 == 0) bits = engine();
      const std::uint64_t r = i % 2 == 0 ? bits >> 32 : bits & 0xffffffffULL;
      sp[i] = inv_keep * static_cast<double>(r < threshold);
      php[i] = u[i] + sp[i] * (wp[i] - u[i]);
    }
    for (std::size_t i = 0; i < d; ++i) {
      double g = -xty[i];
      for (std::size_t j = 0; j < d; ++j) g += gram[i * d + j] * php[j];
      wp[i] -= lr * sp[i] * g;
    }
    if (t >= burn_in) {
      for (std::size_t i = 0; i < d; ++i) sum[i] += wp[i];
    }
  }
  const auto averaged = static_cast<double>(options.steps - burn_in);
  for (double& x : sum) x /= averaged;
  return sum;
}

RegressionDemo ls_regression_demo(std::uint64_t seed, const std::vector<double>& p_grid,
                                  const RegressionDemoOptions& options) {
  RegressionDemo demo;
  demo.problem = RegressionProblem::synthesize(options.n, options.noise_std, seed);
  auto engine = make_engine(StreamKey{seed, 0xa2c});
  std::normal_distribution<double> normal(0.0, 1.0);
  demo.u = {normal(engine), normal(engine)};
  for (std::size_t k = 0; k < p_grid.size(); ++k) {
    RegressionRow row;
    row.p = p_grid[k];
    row.w_hat = ls_mixout_solve(demo.problem, demo.u, row.p);
    if (options.run_sgd) {
      SgdOptions sgd = options.sgd;
      sgd.seed = mix64(seed ^ k);
      row.w_sgd = ls_mixout_sgd(demo.problem, demo.u, row.p, sgd);
    }
    double du = 0.0;
    double dt = 0.0;
    for (std::size_t i = 0; i < row.w_hat.size(); ++i) {
      du += (row.w_hat[i] - demo.u[i]) * (row.w_hat[i] - demo.u[i]);
      dt += (row.w_hat[i] - demo.problem.w_true[i]) * (row.w_hat[i] - demo.problem.w_true[i]);
    }
    row.dev_from_u = std::sqrt(du);
    row.dev_from_true = std::sqrt(dt);
    demo.rows.push_back(std::move(row));
  }
  return demo;
}

void write_regression_csv(const RegressionDemo& demo, std::ostream& out) {
  out << "p,w_hat_1,w_hat_2,dev_from_u,dev_from_true\n";
  out << std::setprecision(17);
  for (const RegressionRow& row : demo.rows) {
    out << row.p << ',' << row.w_hat.at(0) << ',' << row.w_hat.at(1) << ',' << row.dev_from_u << ','
        << row.dev_from_true << '\n';
  }
}

// ---------------------------------------------------------------------------

namespace {

std::vector<std::shared_ptr<const ParamLayout>> check_layouts() {
  return {
      ParamLayout::flat(5),
      ParamLayout::create({LayerShape{3, 2, true, 0}}),
      ParamLayout::create({LayerShape{2, 3, true, 0}, LayerShape{2, 2, false, 0}}),
      ParamLayout::create({LayerShape{2, 2, true, 2}, LayerShape{1, 2, false, 0}}),
  };
}

ParamVector random_vector(const std::shared_ptr<const ParamLayout>& layout, std::mt19937_64& engine) {
  ParamVector v(layout);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = 2.0 * uniform01(engine) - 1.0;
  return v;
}

std::string fmt(double x) {
  std::ostringstream os;
  os << std::setprecision(3) << x;
  return os.str();
}

}  // namespace

std::vector<CheckResult> verify_theory(std::uint64_t seed, std::size_t instances) {
  auto engine = make_engine(StreamKey{seed, 0x7e51});
  const auto layouts = check_layouts();
  const Granularity grans[] = {Granularity::per_parameter, Granularity::per_source_neuron};

  double worst_enum = 0.0, worst_slack = 0.0, worst_iso = 0.0, worst_mean = 0.0, worst_second = 0.0,
         worst_cor = 0.0;
  for (std::size_t k = 0; k < instances; ++k) {
    const auto& layout = layouts[k % layouts.size()];
    const double p = 0.1 * static_cast<double>(1 + k % 9);
    const bool iso = k % 4 == 3;
    const QuadraticLoss quad = random_quadratic(layout->total_len(), mix64(seed + k), iso);
    const ParamVector w = random_vector(layout, engine);
    for (Granularity g : grans) {
      MixPolicy policy = MixPolicy::mixout(random_vector(layout, engine), p, AnchorKind::explicit_vector);
      policy.granularity = g;
      if (k % 5 == 4 && layout->num_layers() > 1) policy.excluded_layers = {0};
      const double enumerated =
          enum_expected_loss([&](const ParamVector& v) { return quad.value(v); }, w, policy);
      worst_enum = std::max(worst_enum, std::abs(enumerated - quadratic_expected_loss(quad, w, policy)));
      const BoundReport bound = check_lower_bound(quad, w, policy);
      worst_slack = std::min(worst_slack, bound.slack);
      if (iso) {
        worst_iso = std::max(worst_iso, std::abs(bound.slack));
        double dev = 0.0;
        const MaskVector active = base_mask(policy, layout);
        for (std::size_t i = 0; i < w.size(); ++i)
          if (active.active[i]) dev += (w[i] - policy.anchor[i]) * (w[i] - policy.anchor[i]);
        const double coef = quad.strong_convexity() * p / (2.0 * (1.0 - p));
        worst_cor = std::max(worst_cor, std::abs((enumerated - quad.value(w)) - coef * dev));
      }
      const PhiMoments mom = enum_phi_moments(w, policy);
      const MaskVector active = base_mask(policy, layout);
      double dev = 0.0;
      for (std::size_t i = 0; i < w.size(); ++i) {
        worst_mean = std::max(worst_mean, std::abs(mom.mean[i] - w[i]));
        if (active.active[i]) dev += (w[i] - policy.anchor[i]) * (w[i] - policy.anchor[i]);
      }
      worst_second =
          std::max(worst_second, std::abs(mom.second_moment - policy.distribution.noise_ratio() * dev));
    }
  }

  std::vector<CheckResult> out;
  out.push_back({"expected loss: enumeration = closed form", worst_enum <= 1e-12, "max abs diff " + fmt(worst_enum)});
  out.push_back({"lower bound holds", worst_slack >= -1e-12, "min slack " + fmt(worst_slack)});
  out.push_back({"lower bound tight for A = mI", worst_iso <= 1e-12, "max |slack| " + fmt(worst_iso)});
  out.push_back({"E[phi - w] = 0", worst_mean <= 1e-12, "max abs " + fmt(worst_mean)});
  out.push_back({"E||phi - w||^2 = (sigma^2/mu^2)||w~ - u~||^2", worst_second <= 1e-12,
                 "max abs diff " + fmt(worst_second)});
  out.push_back({"mixout coefficient m p / 2(1 - p)", worst_cor <= 1e-12, "max abs diff " + fmt(worst_cor)});

  RegressionProblem hand;
  hand.x = Matrix(2, 1);
  hand.x << 1.0, -1.0;
  hand.y = {2.0, -2.0};
  const double w_hand = ls_mixout_solve(hand, {0.0}, 0.5).front();
  out.push_back({"least squares hand example", std::abs(w_hand - 1.0) <= 1e-12, "w = " + fmt(w_hand)});

  RegressionDemoOptions opts;
  opts.run_sgd = false;
  const RegressionDemo demo = ls_regression_demo(seed, {0.0, 0.3, 0.6, 0.9}, opts);
  bool decreasing = true;
  for (std::size_t i = 1; i < demo.rows.size(); ++i) {
    decreasing = decreasing && demo.rows[i].dev_from_u < demo.rows[i - 1].dev_from_u;
  }
  out.push_back({"least squares pulls toward u as p grows", decreasing, ""});
  return out;
}

}  // namespace mixreg
