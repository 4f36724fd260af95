// SPDX-License-Identifier: Apache-2.0

#include "mvae/gp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace mvae::latent_opt {

namespace {

MatrixXd squared_distances(const MatrixXd &a, const MatrixXd &b) {
  const VectorXd na = a.colwise().squaredNorm().transpose();
  const nn::RowVector<double> nb = b.colwise().squaredNorm();
  MatrixXd d = (-2.0 * a.transpose() * b).colwise() + na;
  d.rowwise() += nb;
  return d.cwiseMax(0.0);
}

double median_distance(const MatrixXd &x) {
  const MatrixXd d2 = squared_distances(x, x);
  std::vector<double> v;
  for (Index j = 0; j < x.cols(); ++j)
    for (Index i = 0; i < j; ++i) v.push_back(std::sqrt(d2(i, j)));
  if (v.empty()) return 1.0;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2), v.end());
  const double m = v[v.size() / 2];
  return m > 1e-12 ? m : 1.0;
}

// Log-parameters used during ascent: noise = min_noise + exp(t).
struct Theta {
  double log_s2, log_l, t;
};

GpHyper to_hyper(const Theta &th, double min_noise) {
  return {std::exp(th.log_s2), std::exp(th.log_l), min_noise + std::exp(th.t)};
}

Theta clamp(Theta th, double ref_length) {
  th.log_s2 = std::clamp(th.log_s2, -6.0, 6.0);
  th.log_l = std::clamp(th.log_l, std::log(ref_length) - 6.0, std::log(ref_length) + 6.0);
  th.t = std::clamp(th.t, -25.0, 3.0);
  return th;
}

double normal_cdf(double u) { return 0.5 * std::erfc(-u / std::numbers::sqrt2); }
double normal_pdf(double u) { return std::exp(-0.5 * u * u) / std::sqrt(2.0 * std::numbers::pi); }

}  // namespace

MatrixXd se_kernel(const MatrixXd &a, const MatrixXd &b, double signal_variance, double length_scale) {
  return signal_variance * (squared_distances(a, b) / (-2.0 * length_scale * length_scale)).array().exp().matrix();
}

double log_marginal_likelihood(const MatrixXd &x, const VectorXd &y, const GpHyper &h, VectorXd *grad) {
  const Index n = x.cols();
  const MatrixXd d2 = squared_distances(x, x);
  const MatrixXd kf = h.signal_variance * (d2 / (-2.0 * h.length_scale * h.length_scale)).array().exp().matrix();
  MatrixXd k = kf;
  k.diagonal().array() += h.noise_variance;
  const Eigen::LLT<MatrixXd> llt(k);
  if (llt.info() != Eigen::Success) return -std::numeric_limits<double>::infinity();
  const VectorXd alpha = llt.solve(y);
  const double log_det = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
  const double lml = -0.5 * y.dot(alpha) - 0.5 * log_det - 0.5 * static_cast<double>(n) * std::log(2.0 * std::numbers::pi);
  if (grad) {
    const MatrixXd w = alpha * alpha.transpose() - llt.solve(MatrixXd::Identity(n, n));
    grad->resize(3);
    (*grad)(0) = 0.5 * (w.array() * kf.array()).sum();
    (*grad)(1) = 0.5 * (w.array() * kf.array() * d2.array()).sum() / (h.length_scale * h.length_scale);
    (*grad)(2) = 0.5 * w.trace() * h.noise_variance;
  }
  return lml;
}

void GaussianProcess::factorize(const GpFitOptions &opt) {
  const Index n = x_.cols();
  MatrixXd k = se_kernel(x_, x_, hyper_.signal_variance, hyper_.length_scale);
  k.diagonal().array() += hyper_.noise_variance;
  const double scale = k.diagonal().mean();
  jitter_ = 0.0;
  for (;;) {
    MatrixXd kj = k;
    kj.diagonal().array() += jitter_;
    llt_.compute(kj);
    if (llt_.info() == Eigen::Success && (llt_.matrixLLT().diagonal().array() > 0.0).all()) break;
    jitter_ = jitter_ == 0.0 ? 1e-10 * scale : jitter_ * 10.0;
    if (jitter_ > opt.max_jitter * scale)
      throw SingularKernel("kernel matrix of " + std::to_string(n) + " points is not positive definite");
  }
  alpha_ = llt_.solve(y_);
  const double log_det = 2.0 * llt_.matrixLLT().diagonal().array().log().sum();
  lml_ = -0.5 * y_.dot(alpha_) - 0.5 * log_det - 0.5 * static_cast<double>(n) * std::log(2.0 * std::numbers::pi);
}

GaussianProcess GaussianProcess::condition(const MatrixXd &x, const VectorXd &y, const GpHyper &h,
                                           const GpFitOptions &opt) {
  if (x.cols() != y.size()) throw nn::ShapeMismatch("GaussianProcess: one target per input column");
  if (x.cols() < 1) throw std::invalid_argument("GaussianProcess: no data");
  if (!x.allFinite() || !y.allFinite()) throw std::invalid_argument("GaussianProcess: non-finite data");
  GaussianProcess gp;
  gp.x_ = x;
  gp.y_mean_ = y.mean();
  const double var = (y.array() - gp.y_mean_).square().mean();
  gp.y_scale_ = var > 1e-24 ? std::sqrt(var) : 1.0;
  gp.y_ = (y.array() - gp.y_mean_) / gp.y_scale_;
  gp.hyper_ = h;
  gp.options_ = opt;
  gp.factorize(opt);
  return gp;
}

GaussianProcess GaussianProcess::fit(const MatrixXd &x, const VectorXd &y, std::mt19937_64 &rng,
                                     const GpFitOptions &opt) {
  if (x.cols() < 2) throw std::invalid_argument("gp_fit needs at least two points");
  // Standardization is shared with condition().
  GaussianProcess base = condition(x, y, GpHyper{}, opt);
  const VectorXd &ys = base.y_;
  const double ref = median_distance(x);
  std::uniform_real_distribution<double> u(-1.0, 1.0);

  std::vector<double> initial;
  Theta best_theta{0.0, std::log(ref), std::log(1e-2)};
  double best = -std::numeric_limits<double>::infinity();
  for (int r = 0; r < std::max(1, opt.restarts); ++r) {
    Theta th = r == 0 ? Theta{0.0, std::log(ref), std::log(1e-2)}
                      : Theta{u(rng), std::log(ref) + u(rng), std::log(1e-4) + 3.0 * (u(rng) + 1.0)};
    th = clamp(th, ref);
    VectorXd g;
    double f = latent_opt::log_marginal_likelihood(x, ys, to_hyper(th, opt.min_noise), &g);
    initial.push_back(f);
    double eta = 0.05;
    for (int it = 0; it < opt.iterations && std::isfinite(f) && eta > 1e-10; ++it) {
      const GpHyper h = to_hyper(th, opt.min_noise);
      const double dt = g(2) * std::exp(th.t) / h.noise_variance;
      const Theta cand = clamp(Theta{th.log_s2 + eta * g(0), th.log_l + eta * g(1), th.t + eta * dt}, ref);
      VectorXd gc;
      const double fc = latent_opt::log_marginal_likelihood(x, ys, to_hyper(cand, opt.min_noise), &gc);
      if (fc > f) {
        th = cand;
        f = fc;
        g = gc;
        eta *= 1.5;
      } else {
        eta *= 0.5;
      }
    }
    if (f > best) {
      best = f;
      best_theta = th;
    }
  }
  GaussianProcess gp = condition(x, y, to_hyper(best_theta, opt.min_noise), opt);
  gp.initial_lml_ = std::move(initial);
  return gp;
}

GaussianProcess::Prediction GaussianProcess::predict(const VectorXd &x, bool with_gradients) const {
  if (x.size() != x_.rows()) throw nn::ShapeMismatch("GaussianProcess::predict: input dimension");
  const VectorXd k = se_kernel(x_, x, hyper_.signal_variance, hyper_.length_scale);
  const VectorXd v = llt_.matrixL().solve(k);
  Prediction p;
  p.mean = y_mean_ + y_scale_ * k.dot(alpha_);
  p.variance = y_scale_ * y_scale_ * std::max(0.0, hyper_.signal_variance - v.squaredNorm());
  if (with_gradients) {
    // dk_i/dx = -k_i (x - x_i) / l^2
    const double l2 = hyper_.length_scale * hyper_.length_scale;
    const MatrixXd dk = ((-x_).colwise() + x).array().rowwise() * (-k.transpose().array() / l2);
    p.grad_mean = y_scale_ * dk * alpha_;
    p.grad_variance = -2.0 * y_scale_ * y_scale_ * dk * llt_.solve(k);
  }
  return p;
}

GaussianProcess GaussianProcess::with_observation(const VectorXd &x, double y) const {
  if (x.size() != x_.rows()) throw nn::ShapeMismatch("GaussianProcess::with_observation: input dimension");
  GaussianProcess gp = *this;
  gp.x_.conservativeResize(Eigen::NoChange, x_.cols() + 1);
  gp.x_.col(x_.cols()) = x;
  gp.y_.conservativeResize(y_.size() + 1);
  gp.y_(y_.size()) = (y - y_mean_) / y_scale_;
  gp.initial_lml_.clear();
  gp.factorize(options_);
  return gp;
}

double expected_improvement(double mean, double sigma, double best) {
  const double diff = mean - best;
  if (!(sigma > 1e-12)) return std::max(diff, 0.0);
  const double u = diff / sigma;
  return std::max(0.0, diff * normal_cdf(u) + sigma * normal_pdf(u));
}

double expected_improvement(const GaussianProcess &gp, const VectorXd &x, double best, VectorXd *grad) {
  const auto p = gp.predict(x, grad != nullptr);
  const double sigma = std::sqrt(p.variance);
  const double ei = expected_improvement(p.mean, sigma, best);
  if (grad) {
    if (!(sigma > 1e-12)) {
      *grad = p.mean > best ? p.grad_mean : VectorXd::Zero(x.size());
    } else {
      const double u = (p.mean - best) / sigma;
      *grad = normal_cdf(u) * p.grad_mean + normal_pdf(u) * p.grad_variance / (2.0 * sigma);
    }
  }
  return ei;
}

}  // namespace mvae::latent_opt
