// SPDX-License-Identifier: Apache-2.0
//
// Training loop: per-epoch shuffling, one reparameterization draw per step,
// linear KL annealing, global-norm gradient clipping, Adam, periodic
// validation diagnostics and checkpoints.

#pragma once

#include <functional>
#include <optional>
#include <random>
#include <stdexcept>
#include <vector>

#include <nlohmann/json.hpp>

#include "mvae/checkpoint.hpp"
#include "mvae/config.hpp"
#include "mvae/corpus.hpp"
#include "mvae/vae.hpp"

namespace mvae::training {

class MalformedMetrics : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

class TrainingDiverged : public std::runtime_error {
 public:
  TrainingDiverged(const std::string &what, long step) : std::runtime_error(what), step_(step) {}
  long step() const noexcept { return step_; }

 private:
  long step_;
};

/// One line of the metrics stream. Training fields are epoch means;
/// validation fields are present only on diagnostic epochs.
struct MetricsRecord {
  long step = 0;
  int epoch = 0;
  double beta = 0.0;
  double kl = 0.0;
  double recon_sum = 0.0;
  double recon_per_token = 0.0;
  double total = 0.0;
  std::optional<double> mutual_information;
  std::optional<double> mi_std_error;
  std::optional<double> valid_kl;
  std::optional<double> valid_recon_per_token;     // teacher forced
  std::optional<double> valid_fr_recon_per_token;  // free running
  std::optional<double> reconstruction_accuracy;
  std::optional<double> token_accuracy;
  std::optional<double> validity;
  double wall_time = 0.0;  // seconds since training began
};

nlohmann::json to_json(const MetricsRecord &r);
MetricsRecord metrics_from_json(const nlohmann::json &j);
/// Reads a JSON-lines metrics file; throws MalformedMetrics on empty or
/// unparsable input.
std::vector<MetricsRecord> read_metrics(const std::filesystem::path &path);

struct TrainData {
  Vocabulary vocab;
  Corpus train;
  Corpus valid;  // may be empty: no validation fields are logged
};

/// Loads cfg.train_path (vocabulary source) and cfg.valid_path if set.
TrainData load_train_data(const TrainConfig &cfg);

struct TrainHooks {
  std::function<void(const MetricsRecord &)> on_metrics;
  std::function<void(const Checkpoint &)> on_checkpoint;
};

template <typename Scalar>
struct TrainResult {
  vae::SequenceVae<Scalar> model;
  nn::AdamState<Scalar> adam;
  long steps = 0;
  std::vector<MetricsRecord> metrics;
};

/// Deterministic given cfg.seed. On a non-finite gradient the step is
/// abandoned, no further checkpoint is emitted, and TrainingDiverged is
/// thrown.
template <typename Scalar>
TrainResult<Scalar> train(const TrainConfig &cfg, const TrainData &data, const TrainHooks &hooks = {});

/// Validation diagnostics written into `rec`.
template <typename Scalar>
void validation_metrics(const vae::SequenceVae<Scalar> &model, const TrainConfig &cfg, const TrainData &data,
                        std::mt19937_64 &rng, MetricsRecord &rec);

/// Index order of each epoch's batches.
std::vector<std::size_t> epoch_order(std::size_t n, std::mt19937_64 &rng);

}  // namespace mvae::training
