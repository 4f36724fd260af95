// SPDX-License-Identifier: Apache-2.0

#include "mvae/diagnostics.hpp"

#include <cmath>
#include <numbers>

namespace mvae::diagnostics {

MiEstimate mutual_information(const vae::LatentBatch<double> &post, long n_samples,
                              std::mt19937_64 &rng) {
  const Index n = post.size();
  const Index L = post.mu.rows();
  if (n < 2) throw DegenerateBatch("mutual_information needs at least two posteriors");
  if (n_samples < 1) throw std::invalid_argument("mutual_information: n_samples must be >= 1");

  MiEstimate est;
  est.n_data = n;
  est.n_samples = n_samples;
  est.avg_kl = vae::kl_to_standard_normal(post).mean();

  const nn::Matrix<double> sigma = (0.5 * post.logvar.array()).exp().matrix();
  const nn::Matrix<double> inv_var = (-post.logvar.array()).exp().matrix();
  // log N(z; mu_j, sigma_j) = c_j - 0.5 sum_d (z_d - mu_dj)^2 / var_dj
  const double half_log_2pi = 0.5 * std::log(2.0 * std::numbers::pi);
  const nn::Vector<double> c =
      (-0.5 * post.logvar.array().colwise().sum() - L * half_log_2pi).transpose().matrix();
  const double log_n = std::log(static_cast<double>(n));

  std::normal_distribution<double> normal(0.0, 1.0);
  nn::Vector<double> z(L), logq(n);
  double mean = 0.0, m2 = 0.0;
  for (long s = 0; s < n_samples; ++s) {
    const Index i = static_cast<Index>(s % n);
    for (Index d = 0; d < L; ++d) z(d) = post.mu(d, i) + sigma(d, i) * normal(rng);
    for (Index j = 0; j < n; ++j)
      logq(j) = c(j) - 0.5 * ((z - post.mu.col(j)).array().square() * inv_var.col(j).array()).sum();
    const double m = logq.maxCoeff();
    const double log_q = m + std::log((logq.array() - m).exp().sum()) - log_n;
    const double log_p = -0.5 * z.squaredNorm() - L * half_log_2pi;
    const double delta = (log_q - log_p) - mean;
    mean += delta / static_cast<double>(s + 1);
    m2 += delta * ((log_q - log_p) - mean);
  }
  const double k = static_cast<double>(n_samples);
  est.marginal_kl = mean;
  const double var = n_samples > 1 ? m2 / (k - 1) : 0.0;
  est.std_error = std::sqrt(var / k);
  est.tolerance = 3.0 * est.std_error;
  est.mi = est.avg_kl - est.marginal_kl;
  return est;
}

UnderestimationReport make_report(double tf_loss, double fr_loss, long tokens) {
  UnderestimationReport r;
  r.tf_loss = tf_loss;
  r.fr_loss = fr_loss;
  r.ratio = fr_loss > 0.0 ? tf_loss / fr_loss : 0.0;
  r.tokens = tokens;
  return r;
}

double alpha_from_ratio(const UnderestimationReport &r) {
  if (r.tf_loss == 0.0) throw DivisionByZero("alpha_from_ratio: teacher-forced loss is zero");
  return r.fr_loss / r.tf_loss;
}

}  // namespace mvae::diagnostics
