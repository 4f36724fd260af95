// SPDX-License-Identifier: Apache-2.0

#include "mvae/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <numeric>

#include "mvae/diagnostics.hpp"
#include "mvae/evaluation.hpp"

namespace mvae::training {

using nn::Index;

namespace {

template <typename F>
void for_each_optional(MetricsRecord &r, F &&f) {
  f("mutual_information", r.mutual_information);
  f("mi_std_error", r.mi_std_error);
  f("valid_kl", r.valid_kl);
  f("valid_recon_per_token", r.valid_recon_per_token);
  f("valid_fr_recon_per_token", r.valid_fr_recon_per_token);
  f("reconstruction_accuracy", r.reconstruction_accuracy);
  f("token_accuracy", r.token_accuracy);
  f("validity", r.validity);
}

// Independent streams so diagnostics never shift the training draws.
std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream)};
  std::uint32_t words[2];
  seq.generate(words, words + 2);
  return (static_cast<std::uint64_t>(words[0]) << 32) | words[1];
}

}  // namespace

nlohmann::json to_json(const MetricsRecord &r) {
  nlohmann::json j{{"step", r.step},         {"epoch", r.epoch},
                   {"beta", r.beta},         {"kl", r.kl},
                   {"recon_sum", r.recon_sum}, {"recon_per_token", r.recon_per_token},
                   {"total", r.total},       {"wall_time", r.wall_time}};
  auto copy = r;
  for_each_optional(copy, [&](const char *key, std::optional<double> &v) {
    if (v) j[key] = *v;
  });
  return j;
}

MetricsRecord metrics_from_json(const nlohmann::json &j) {
  MetricsRecord r;
  try {
    j.at("step").get_to(r.step);
    j.at("epoch").get_to(r.epoch);
    j.at("beta").get_to(r.beta);
    j.at("kl").get_to(r.kl);
    j.at("recon_sum").get_to(r.recon_sum);
    j.at("recon_per_token").get_to(r.recon_per_token);
    if (j.contains("total")) j.at("total").get_to(r.total);
    if (j.contains("wall_time")) j.at("wall_time").get_to(r.wall_time);
    for_each_optional(r, [&](const char *key, std::optional<double> &v) {
      if (j.contains(key)) v = j.at(key).get<double>();
    });
  } catch (const nlohmann::json::exception &e) {
    throw MalformedMetrics(std::string("metrics record: ") + e.what());
  }
  return r;
}

std::vector<MetricsRecord> read_metrics(const std::filesystem::path &path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open metrics " + path.string());
  std::vector<MetricsRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error &e) {
      throw MalformedMetrics(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
    out.push_back(metrics_from_json(j));
  }
  if (out.empty()) throw MalformedMetrics(path.string() + ": no metrics records");
  return out;
}

TrainData load_train_data(const TrainConfig &cfg) {
  if (cfg.train_path.empty()) throw ConfigError("train_path is not set");
  auto tc = load_training_corpus(cfg.train_path, cfg.max_length);
  TrainData d{std::move(tc.vocab), std::move(tc.corpus), {}};
  if (!cfg.valid_path.empty()) d.valid = load_corpus(cfg.valid_path, d.vocab, cfg.max_length);
  return d;
}

std::vector<std::size_t> epoch_order(std::size_t n, std::mt19937_64 &rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  // Fisher-Yates with an explicit draw so the order is identical across
  // standard library implementations.
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(idx[i - 1], idx[j]);
  }
  return idx;
}

template <typename Scalar>
void validation_metrics(const vae::SequenceVae<Scalar> &model, const TrainConfig &cfg, const TrainData &data,
                        std::mt19937_64 &rng, MetricsRecord &rec) {
  const auto &valid = data.valid;
  if (valid.size() >= 2) {
    const std::size_t n = std::min<std::size_t>(valid.size(), static_cast<std::size_t>(cfg.mi_samples));
    const std::span<const TokenSequence> sub(valid.sequences.data(), n);
    const auto mi = diagnostics::mutual_information(model, sub, 0, rng);
    rec.mutual_information = mi.mi;
    rec.mi_std_error = mi.std_error;
    rec.valid_kl = mi.avg_kl;
    const auto under = diagnostics::underestimation_ratio(
        model, sub, rng, cfg.greedy ? vae::DecodeMode::Greedy : vae::DecodeMode::Sample);
    rec.valid_recon_per_token = under.tf_loss;
    rec.valid_fr_recon_per_token = under.fr_loss;
  }
  const auto mode = cfg.greedy ? vae::DecodeMode::Greedy : vae::DecodeMode::Sample;
  const auto steps = evaluation::max_decode_steps(cfg.max_length);
  if (cfg.recon_molecules > 0 && valid.size() > 0) {
    const std::size_t n = std::min<std::size_t>(valid.size(), static_cast<std::size_t>(cfg.recon_molecules));
    evaluation::ReconOptions opt;
    opt.mode = mode;
    opt.max_steps = steps;
    opt.encodes = cfg.recon_encodes;
    opt.decodes = cfg.recon_decodes;
    const auto rep = evaluation::reconstruction_accuracy(
        model, data.vocab, std::span<const std::string>(valid.smiles.data(), n),
        std::span<const TokenSequence>(valid.sequences.data(), n), opt, rng);
    rec.reconstruction_accuracy = rep.sequence_accuracy;
    rec.token_accuracy = rep.token_accuracy;
  }
  if (cfg.validity_latents > 0) {
    evaluation::ValidityOptions opt;
    opt.mode = mode;
    opt.max_steps = steps;
    opt.latents = cfg.validity_latents;
    opt.decodes = cfg.validity_decodes;
    rec.validity = evaluation::prior_validity(model, data.vocab, opt, rng).validity;
  }
}

template <typename Scalar>
TrainResult<Scalar> train(const TrainConfig &cfg, const TrainData &data, const TrainHooks &hooks) {
  cfg.validate();
  if (data.train.size() == 0) throw EmptyCorpus("training corpus is empty");
  const auto t0 = std::chrono::steady_clock::now();
  const auto elapsed = [&] { return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(); };

  TrainResult<Scalar> res{vae::SequenceVae<Scalar>(cfg.model(data.vocab.size()), cfg.seed), {}, 0, {}};
  auto &model = res.model;
  res.adam.config.lr = cfg.lr;
  std::mt19937_64 order_rng(stream_seed(cfg.seed, 1));
  std::mt19937_64 eps_rng(stream_seed(cfg.seed, 2));

  const std::size_t n = data.train.size();
  const std::size_t B = static_cast<std::size_t>(cfg.batch_size);
  const long steps_per_epoch = static_cast<long>((n + B - 1) / B);
  const long anneal = cfg.resolved_anneal_steps(steps_per_epoch);
  const auto params = model.parameters();
  std::vector<TokenSequence> batch;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto order = epoch_order(n, order_rng);
    double nll = 0.0, kl = 0.0, total = 0.0, beta = 0.0;
    long tokens = 0;
    for (std::size_t start = 0; start < n; start += B) {
      const std::size_t count = std::min(B, n - start);
      batch.clear();
      for (std::size_t i = start; i < start + count; ++i) batch.push_back(data.train.sequences[order[i]]);
      const auto x = vae::PaddedBatch::from(batch);
      const auto eps = vae::standard_normal<Scalar>(cfg.latent, static_cast<Index>(count), eps_rng);
      beta = anneal_beta(res.steps, cfg.beta_max, anneal);
      const auto weights = cfg.weights(beta);
      model.zero_grad();
      const auto loss = model.forward_backward(x, eps, weights);
      nn::clip_grad_norm<Scalar>(params, cfg.clip_norm);
      try {
        nn::adam_step<Scalar>(params, res.adam);
      } catch (const nn::NonFiniteGradient &e) {
        throw TrainingDiverged(std::string(e.what()) + " at step " + std::to_string(res.steps), res.steps);
      }
      ++res.steps;
      const double c = static_cast<double>(count);
      nll += loss.recon_per_token * static_cast<double>(loss.tokens);
      tokens += loss.tokens;
      kl += loss.kl * c;
      total += loss.total * c;
    }

    MetricsRecord rec;
    rec.step = res.steps;
    rec.epoch = epoch + 1;
    rec.beta = cfg.loss_mode == "alpha" ? 1.0 : beta;
    rec.kl = kl / static_cast<double>(n);
    rec.recon_sum = nll / static_cast<double>(n);
    rec.recon_per_token = tokens ? nll / static_cast<double>(tokens) : 0.0;
    rec.total = total / static_cast<double>(n);
    const bool last = epoch + 1 == cfg.epochs;
    if (cfg.diag_every > 0 && ((epoch + 1) % cfg.diag_every == 0 || last)) {
      std::mt19937_64 diag_rng(stream_seed(cfg.seed, 1000 + static_cast<std::uint64_t>(epoch)));
      validation_metrics(model, cfg, data, diag_rng, rec);
    }
    rec.wall_time = elapsed();
    res.metrics.push_back(rec);
    if (hooks.on_metrics) hooks.on_metrics(rec);
    const bool periodic = cfg.checkpoint_every > 0 && (epoch + 1) % cfg.checkpoint_every == 0;
    if (hooks.on_checkpoint && (periodic || last))
      hooks.on_checkpoint(make_checkpoint(cfg, data.vocab, model, res.adam, res.steps, epoch + 1));
  }
  return res;
}

template TrainResult<float> train<float>(const TrainConfig &, const TrainData &, const TrainHooks &);
template TrainResult<double> train<double>(const TrainConfig &, const TrainData &, const TrainHooks &);
template void validation_metrics<float>(const vae::SequenceVae<float> &, const TrainConfig &, const TrainData &,
                                        std::mt19937_64 &, MetricsRecord &);
template void validation_metrics<double>(const vae::SequenceVae<double> &, const TrainConfig &, const TrainData &,
                                         std::mt19937_64 &, MetricsRecord &);

}  // namespace mvae::training
