// SPDX-License-Identifier: Apache-2.0
//
// Training configuration, stored as JSON. Every field is optional in a file;
// missing fields keep the defaults below, unknown keys are rejected.

#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>

#include <nlohmann/json.hpp>

#include "mvae/vae.hpp"

namespace mvae::training {

class ConfigError : public std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct TrainConfig {
  // data
  std::string train_path;
  std::string valid_path;
  std::string test_path;
  int max_length = 60;  // body tokens, sentinels excluded

  // architecture
  int embed_dim = 64;
  int hidden = 128;
  int latent = 16;
  int encoder_layers = 2;
  int decoder_layers = 4;

  // objective
  std::string loss_mode = "beta";  // "beta" or "alpha"
  double beta_max = 0.1;
  double alpha = 1.0;
  long anneal_steps = 0;  // 0: anneal_epochs worth of steps
  int anneal_epochs = 10;

  // optimization
  int epochs = 30;
  int batch_size = 128;
  double lr = 1e-4;
  double clip_norm = 5.0;
  std::uint64_t seed = 1;
  std::string precision = "float";  // "float" or "double"

  // periodic validation
  int diag_every = 1;            // epochs; 0 disables
  int mi_samples = 512;          // posteriors in the aggregate mixture
  int recon_molecules = 100;     // validation molecules for accuracy
  int recon_encodes = 2;
  int recon_decodes = 5;
  int validity_latents = 100;
  int validity_decodes = 5;
  bool greedy = false;
  int checkpoint_every = 0;      // epochs; 0 writes only the final checkpoint

  void validate() const;
  vae::ModelConfig model(int vocab_size) const;
  vae::LossWeights weights(double beta) const;
  long resolved_anneal_steps(long steps_per_epoch) const;
  bool operator==(const TrainConfig &) const = default;
};

/// beta_max * min(1, step / anneal_steps).
double anneal_beta(long step, double beta_max, long anneal_steps);

nlohmann::json to_json(const TrainConfig &c);
/// Overlays `j` on the defaults; throws ConfigError on unknown keys, type
/// errors, or invalid values.
TrainConfig config_from_json(const nlohmann::json &j, const TrainConfig &base = {});
TrainConfig load_config(const std::filesystem::path &path);
void save_config(const std::filesystem::path &path, const TrainConfig &c);

}  // namespace mvae::training
