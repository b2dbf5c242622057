#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "mixreg/mix.hpp"
#include "mixreg/net.hpp"
#include "mixreg/param.hpp"

namespace mixreg {

/// L(w) = 0.5 (w - w*)^T A (w - w*) with A symmetric positive definite.
class QuadraticLoss {
 public:
  QuadraticLoss(Matrix a, std::vector<double> minimizer);

  std::size_t dim() const { return minimizer_.size(); }
  const Matrix& hessian() const { return a_; }
  const std::vector<double>& minimizer() const { return minimizer_; }
  /// Strong-convexity constant m = smallest eigenvalue of A.
  double strong_convexity() const { return m_; }

  double value(const ParamVector& w) const;
  LossGrad loss_and_grad(const ParamVector& w) const;

 private:
  Matrix a_;
  std::vector<double> minimizer_;
  double m_ = 0.0;
};

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, ascending.
std::vector<double> symmetric_eigenvalues(const Matrix& a, double tol = 1e-12);

/// Random SPD quadratic of dimension d. `isotropic` gives A = m I.
QuadraticLoss random_quadratic(std::size_t d, std::uint64_t seed, bool isotropic = false);

inline constexpr std::size_t kMaxEnumeratedUnits = 20;

/// E over masks of loss(phi_mix(w; u, M)) by summing over all 2^k Bernoulli
/// outcomes of the policy's independent units. Throws CapacityError above
/// kMaxEnumeratedUnits units and ConfigError for non-Bernoulli laws.
double enum_expected_loss(const std::function<double(const ParamVector&)>& loss, const ParamVector& w,
                          const MixPolicy& policy);

struct ExpectedLoss {
  double value = 0.0;
  double std_error = 0.0;  // 0 when exact
  bool exact = true;
};

/// Exact enumeration when possible, otherwise a Monte Carlo estimate over
/// `samples` masks with its standard error.
ExpectedLoss expected_loss(const std::function<double(const ParamVector&)>& loss, const ParamVector& w,
                           const MixPolicy& policy, std::size_t samples = 100000,
                           std::uint64_t seed = 0);

/// Closed form of the expected loss for a quadratic:
/// L(w) + 0.5 (sigma^2 / mu^2) sum over units of d_U^T A_UU d_U with d = w - u.
double quadratic_expected_loss(const QuadraticLoss& quad, const ParamVector& w, const MixPolicy& policy);

/// Minimizer of quadratic_expected_loss: (A + rho B) w = A w* + rho B u,
/// where B keeps the within-unit blocks of A.
std::vector<double> quadratic_expected_minimizer(const QuadraticLoss& quad, const MixPolicy& policy);

struct BoundReport {
  double loss_at_w = 0.0;
  double lhs = 0.0;
  double rhs = 0.0;
  double slack = 0.0;
  double m = 0.0;
  bool holds = false;  // slack >= -1e-12
};

/// lhs = expected loss, rhs = L(w) + (m sigma^2 / 2 mu^2) ||w~ - u~||^2 over
/// the masked coordinates.
BoundReport check_lower_bound(const QuadraticLoss& quad, const ParamVector& w, const MixPolicy& policy);

/// Exact mask-expectation statistics of phi.
struct PhiMoments {
  std::vector<double> mean;          // E[phi]
  double second_moment = 0.0;        // E ||phi - w||^2
  Matrix covariance;                 // Cov(phi_i, phi_j)
};

PhiMoments enum_phi_moments(const ParamVector& w, const MixPolicy& policy);

// ---------------------------------------------------------------------------
// Least squares with per-parameter mixing

struct RegressionProblem {
  Matrix x;                     // n x d design
  std::vector<double> y;
  std::vector<double> w_true;   // generating parameters
  double noise_std = 0.0;

  /// y = w1 * x + w2 + noise with x ~ U[-1, 1] and (w1, w2) ~ N(0, 1).
  static RegressionProblem synthesize(std::size_t n, double noise_std, std::uint64_t seed);
};

/// Exact minimizer over w of E_M mean((X phi(w; u, M) - y)^2):
/// (X^T X / n + rho diag(c)) w = X^T y / n + rho diag(c) u, rho = p / (1 - p),
/// c_i = mean of X_ji^2.
std::vector<double> ls_mixout_solve(const RegressionProblem& prob, const std::vector<double>& u, double p);

struct SgdOptions {
  std::size_t steps = 25000000;
  double lr = 0.1;
  std::uint64_t seed = 0;
};

/// Stochastic gradient descent on the masked least-squares objective (one
/// mask per step, full batch), returning the average of the second half of
/// the iterates.
std::vector<double> ls_mixout_sgd(const RegressionProblem& prob, const std::vector<double>& u, double p,
                                  const SgdOptions& options);

struct RegressionRow {
  double p = 0.0;
  std::vector<double> w_hat;
  std::vector<double> w_sgd;
  double dev_from_u = 0.0;     // ||w_hat - u||
  double dev_from_true = 0.0;  // ||w_hat - w*||
};

struct RegressionDemo {
  RegressionProblem problem;
  std::vector<double> u;
  std::vector<RegressionRow> rows;
};

struct RegressionDemoOptions {
  std::size_t n = 200;
  double noise_std = 0.1;
  bool run_sgd = true;
  SgdOptions sgd;
};

RegressionDemo ls_regression_demo(std::uint64_t seed, const std::vector<double>& p_grid,
                                  const RegressionDemoOptions& options = {});

/// CSV with columns p,w_hat_1,w_hat_2,dev_from_u,dev_from_true.
void write_regression_csv(const RegressionDemo& demo, std::ostream& out);

// ---------------------------------------------------------------------------
// Self-check used by the `verify` command

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

std::vector<CheckResult> verify_theory(std::uint64_t seed, std::size_t instances = 100);

}  // namespace mixreg
