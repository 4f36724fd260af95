// SPDX-License-Identifier: Apache-2.0
//
// Exact Gaussian-process regression with a squared-exponential kernel
//   k(x, x') = s2 * exp(-|x - x'|^2 / (2 l^2)),
// standardized targets, and hyperparameters fitted by multi-start gradient
// ascent on the log marginal likelihood. Inputs are columns of a d x n
// matrix.

#pragma once

#include <Eigen/Cholesky>
#include <random>
#include <stdexcept>

#include "mvae/nn.hpp"

namespace mvae::latent_opt {

using Index = Eigen::Index;
using MatrixXd = nn::Matrix<double>;
using VectorXd = nn::Vector<double>;

class SingularKernel : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct GpHyper {
  double signal_variance = 1.0;
  double length_scale = 1.0;
  double noise_variance = 1e-2;
};

struct GpFitOptions {
  int restarts = 6;      // initializations, the first being the defaults
  int iterations = 100;  // ascent steps per initialization
  double min_noise = 1e-6;
  double max_jitter = 1e-2;  // relative to the mean kernel diagonal
};

/// Squared-exponential kernel between the columns of `a` and `b`.
MatrixXd se_kernel(const MatrixXd &a, const MatrixXd &b, double signal_variance, double length_scale);

/// Log marginal likelihood of zero-mean targets `y` at `h`; when `grad` is
/// non-null it receives d/d(log s2, log l, log noise).
double log_marginal_likelihood(const MatrixXd &x, const VectorXd &y, const GpHyper &h, VectorXd *grad = nullptr);

class GaussianProcess {
 public:
  struct Prediction {
    double mean = 0.0;
    double variance = 0.0;  // of the latent function, noise excluded
    VectorXd grad_mean;
    VectorXd grad_variance;
  };

  GaussianProcess() = default;

  /// Conditions on (x, y) with fixed hyperparameters (given for the
  /// standardized targets). Throws SingularKernel after jitter escalation.
  static GaussianProcess condition(const MatrixXd &x, const VectorXd &y, const GpHyper &h,
                                   const GpFitOptions &opt = {});

  /// Multi-start ascent on the log marginal likelihood, then conditioning.
  static GaussianProcess fit(const MatrixXd &x, const VectorXd &y, std::mt19937_64 &rng,
                             const GpFitOptions &opt = {});

  Prediction predict(const VectorXd &x, bool with_gradients = false) const;

  /// Same hyperparameters and standardization, one extra observation.
  GaussianProcess with_observation(const VectorXd &x, double y) const;

  const GpHyper &hyper() const { return hyper_; }
  double log_marginal_likelihood() const { return lml_; }
  double jitter() const { return jitter_; }
  Index size() const { return x_.cols(); }
  Index dim() const { return x_.rows(); }
  double y_mean() const { return y_mean_; }
  double y_scale() const { return y_scale_; }

  /// Log marginal likelihoods at each initialization of the last fit(),
  /// before ascent.
  const std::vector<double> &initial_lml() const { return initial_lml_; }

 private:
  void factorize(const GpFitOptions &opt);

  MatrixXd x_;
  VectorXd y_;  // standardized
  double y_mean_ = 0.0;
  double y_scale_ = 1.0;
  GpHyper hyper_;
  double jitter_ = 0.0;
  double lml_ = 0.0;
  Eigen::LLT<MatrixXd> llt_;
  VectorXd alpha_;
  std::vector<double> initial_lml_;
  GpFitOptions options_;
};

/// EI for maximization: (mu - best) Phi(u) + sigma phi(u), u = (mu - best) / sigma;
/// max(mu - best, 0) when sigma = 0.
double expected_improvement(double mean, double sigma, double best);

/// EI and its gradient with respect to the GP input.
double expected_improvement(const GaussianProcess &gp, const VectorXd &x, double best, VectorXd *grad = nullptr);

}  // namespace mvae::latent_opt
