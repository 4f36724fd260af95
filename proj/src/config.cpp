// SPDX-License-Identifier: Apache-2.0

#include "mvae/config.hpp"

#include <algorithm>
#include <fstream>

#include "mvae/corpus.hpp"

namespace mvae::training {

namespace {

template <typename F>
void for_each_field(TrainConfig &c, F &&f) {
  f("train_path", c.train_path);
  f("valid_path", c.valid_path);
  f("test_path", c.test_path);
  f("max_length", c.max_length);
  f("embed_dim", c.embed_dim);
  f("hidden", c.hidden);
  f("latent", c.latent);
  f("encoder_layers", c.encoder_layers);
  f("decoder_layers", c.decoder_layers);
  f("loss_mode", c.loss_mode);
  f("beta_max", c.beta_max);
  f("alpha", c.alpha);
  f("anneal_steps", c.anneal_steps);
  f("anneal_epochs", c.anneal_epochs);
  f("epochs", c.epochs);
  f("batch_size", c.batch_size);
  f("lr", c.lr);
  f("clip_norm", c.clip_norm);
  f("seed", c.seed);
  f("precision", c.precision);
  f("diag_every", c.diag_every);
  f("mi_samples", c.mi_samples);
  f("recon_molecules", c.recon_molecules);
  f("recon_encodes", c.recon_encodes);
  f("recon_decodes", c.recon_decodes);
  f("validity_latents", c.validity_latents);
  f("validity_decodes", c.validity_decodes);
  f("greedy", c.greedy);
  f("checkpoint_every", c.checkpoint_every);
}

void require(bool ok, const std::string &msg) {
  if (!ok) throw ConfigError(msg);
}

}  // namespace

void TrainConfig::validate() const {
  require(max_length > 0, "max_length must be positive");
  require(embed_dim > 0 && hidden > 0 && latent > 0 && encoder_layers > 0 && decoder_layers > 0,
          "architecture sizes must be positive");
  require(loss_mode == "beta" || loss_mode == "alpha", "loss_mode must be \"beta\" or \"alpha\"");
  require(beta_max >= 0.0 && beta_max <= 1.0, "beta_max must lie in [0, 1]");
  require(alpha >= 1.0, "alpha must be >= 1");
  require(anneal_steps >= 0 && anneal_epochs >= 0, "anneal length must be non-negative");
  require(epochs >= 0 && batch_size > 0, "epochs must be >= 0 and batch_size positive");
  require(lr > 0.0 && clip_norm > 0.0, "lr and clip_norm must be positive");
  require(precision == "float" || precision == "double", "precision must be \"float\" or \"double\"");
  require(diag_every >= 0 && checkpoint_every >= 0, "periods must be non-negative");
  require(mi_samples >= 2, "mi_samples must be >= 2");
  require(recon_molecules >= 0 && recon_encodes > 0 && recon_decodes > 0 && validity_latents >= 0 &&
              validity_decodes > 0,
          "evaluation counts must be positive");
}

vae::ModelConfig TrainConfig::model(int vocab_size) const {
  vae::ModelConfig m;
  m.vocab_size = vocab_size;
  m.embed_dim = embed_dim;
  m.hidden = hidden;
  m.latent = latent;
  m.encoder_layers = encoder_layers;
  m.decoder_layers = decoder_layers;
  return m;
}

vae::LossWeights TrainConfig::weights(double beta) const {
  return loss_mode == "alpha" ? vae::LossWeights::alpha_weight(alpha) : vae::LossWeights::beta_weight(beta);
}

long TrainConfig::resolved_anneal_steps(long steps_per_epoch) const {
  if (anneal_steps > 0) return anneal_steps;
  return std::max<long>(1, static_cast<long>(anneal_epochs) * steps_per_epoch);
}

double anneal_beta(long step, double beta_max, long anneal_steps) {
  if (anneal_steps < 1) return beta_max;
  const double frac = std::clamp(static_cast<double>(step) / static_cast<double>(anneal_steps), 0.0, 1.0);
  return beta_max * frac;
}

nlohmann::json to_json(const TrainConfig &c) {
  nlohmann::json j = nlohmann::json::object();
  auto copy = c;
  for_each_field(copy, [&](const char *key, auto &v) { j[key] = v; });
  return j;
}

TrainConfig config_from_json(const nlohmann::json &j, const TrainConfig &base) {
  require(j.is_object(), "configuration must be a JSON object");
  TrainConfig c = base;
  std::size_t known = 0;
  for_each_field(c, [&](const char *key, auto &v) {
    const auto it = j.find(key);
    if (it == j.end()) return;
    ++known;
    try {
      it->get_to(v);
    } catch (const nlohmann::json::exception &e) {
      throw ConfigError(std::string("bad value for ") + key + ": " + e.what());
    }
  });
  if (known != j.size()) {
    TrainConfig probe;
    const auto keys = to_json(probe);
    for (const auto &[k, _] : j.items())
      require(keys.contains(k), "unknown configuration key \"" + k + "\"");
  }
  c.validate();
  return c;
}

TrainConfig load_config(const std::filesystem::path &path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error &e) {
    throw ConfigError("config " + path.string() + ": " + e.what());
  }
  return config_from_json(j);
}

void save_config(const std::filesystem::path &path, const TrainConfig &c) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << to_json(c).dump(2) << '\n';
  if (!out) throw IoError("write failure on " + path.string());
}

}  // namespace mvae::training
