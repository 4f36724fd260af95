// SPDX-License-Identifier: Apache-2.0
//
// Latent-space property optimization: the penalized logP target and batched
// Bayesian optimization with expected improvement.

#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "mvae/gp.hpp"

namespace mvae::latent_opt {

class NoValidCandidates : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct PropertyRecord {
  std::string smiles;
  double logP = 0.0;
  double SA = 0.0;
  int cycle = 0;  // rings with more than six atoms
  double y = 0.0;
};

/// y = logP - SA - cycle.
double target_score(double logP, double SA, int cycle);

/// Parses `smiles` for its ring count; smiles::SmilesError propagates.
PropertyRecord score_record(const std::string &smiles, double logP, double SA);

/// Reads a CSV with header smiles,logP,SA (extra columns ignored). Rows whose
/// SMILES does not parse are skipped and counted in `skipped`.
std::vector<PropertyRecord> read_property_csv(const std::filesystem::path &path, std::size_t *skipped = nullptr);

/// Outcome of evaluating one latent point; nullopt marks an invalid decode.
struct Observation {
  double y = 0.0;
  std::string label;
};

/// Evaluates the columns of a latent batch.
using BatchObjective = std::function<std::vector<std::optional<Observation>>(const MatrixXd &)>;

struct BoOptions {
  int iterations = 5;
  int batch_size = 10;
  int restarts = 20;       // local-search starts per proposal
  int local_steps = 50;    // projected gradient steps per start
  double box_margin = 1.0; // in per-dimension standard deviations of the seeds
  bool refit_hyper = true; // refit hyperparameters every iteration
  GpFitOptions gp;
};

struct BoIteration {
  int iteration = 0;
  long proposed = 0;
  long valid = 0;
  double batch_best = 0.0;  // NaN when nothing valid
  double incumbent = 0.0;
  std::string incumbent_label;
  bool skipped = false;
  std::string message;
};

struct ScoredPoint {
  VectorXd z;
  double y = 0.0;
  std::string label;
  int iteration = 0;  // 0 for seeds
};

struct BoResult {
  std::vector<BoIteration> iterations;
  std::vector<ScoredPoint> points;  // seeds first, then valid proposals
  double seed_best = 0.0;
  double best = 0.0;

  /// Highest-scoring points, distinct labels, best first.
  std::vector<ScoredPoint> top(std::size_t k) const;
};

/// Axis-aligned search box: seed min/max widened by `margin` standard
/// deviations per dimension.
struct Box {
  VectorXd lower, upper;
  VectorXd clip(const VectorXd &z) const { return z.cwiseMax(lower).cwiseMin(upper); }
};
Box seed_box(const MatrixXd &seeds, double margin);

/// Maximizes EI over the box by projected gradient ascent from random and
/// incumbent-neighbourhood starts.
VectorXd maximize_ei(const GaussianProcess &gp, double best, const Box &box, const BoOptions &opt,
                     const MatrixXd &observed, std::mt19937_64 &rng);

/// Kriging-believer batch: each pick is added to the GP at its predicted
/// mean before the next pick.
MatrixXd propose_batch(const GaussianProcess &gp, double best, const Box &box, const BoOptions &opt,
                       const MatrixXd &observed, std::mt19937_64 &rng);

/// Batched BO from scored seeds. Iterations whose whole batch is invalid are
/// recorded as skipped. The incumbent never decreases.
BoResult bo_loop(const MatrixXd &seed_z, const std::vector<double> &seed_y, const std::vector<std::string> &seed_labels,
                 const BatchObjective &objective, const BoOptions &opt, std::mt19937_64 &rng);

}  // namespace mvae::latent_opt
