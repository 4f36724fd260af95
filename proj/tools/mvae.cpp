// SPDX-License-Identifier: Apache-2.0
//
// mvae: command-line entry point.
//
// Exit codes: 0 success, 1 usage/config/validation error, 2 runtime failure.

#include <CLI11.hpp>
#include <Eigen/Core>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <nlohmann/json.hpp>
#include <random>
#include <sstream>

#include "mvae/bayes_opt.hpp"
#include "mvae/checkpoint.hpp"
#include "mvae/config.hpp"
#include "mvae/corpus.hpp"
#include "mvae/diagnostics.hpp"
#include "mvae/evaluation.hpp"
#include "mvae/plots.hpp"
#include "mvae/smiles.hpp"
#include "mvae/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace mvae;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Common {
  std::string out_dir;
  int threads = 1;
  std::uint64_t seed = 1;
  bool seed_set = false;
};

fs::path output_dir(const Common &c) {
  fs::path dir = c.out_dir;
  if (dir.empty()) {
    const char *env = std::getenv("MVAE_OUTPUT_DIR");
    dir = env && *env ? env : ".";
  }
  fs::create_directories(dir);
  return dir;
}

void write_text(const fs::path &path, const std::string &text) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    out << text;
    if (!out) throw IoError("cannot write " + tmp.string());
  }
  fs::rename(tmp, path);
}

void write_json(const fs::path &path, const json &j) { write_text(path, j.dump(2) + "\n"); }

/// Resolved options of a non-training subcommand.
void snapshot(const fs::path &dir, const std::string &command, json options) {
  options["command"] = command;
  write_json(dir / (command + ".config.json"), options);
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

template <typename F>
auto with_model(const training::Checkpoint &ck, F &&f) {
  if (ck.config.precision == "double") return f(training::restore_model<double>(ck));
  return f(training::restore_model<float>(ck));
}

// ---------------------------------------------------------------- train

struct TrainArgs {
  std::string config;
  std::map<std::string, std::string> overrides;
};

training::TrainConfig resolve_train_config(const TrainArgs &a, const Common &c) {
  training::TrainConfig cfg;
  if (!a.config.empty()) cfg = training::load_config(a.config);
  json patch = json::object();
  const json defaults = training::to_json(cfg);
  for (const auto &[key, text] : a.overrides) {
    const json &current = defaults.at(key);
    try {
      if (current.is_string()) patch[key] = text;
      else if (current.is_boolean()) patch[key] = text == "true" || text == "1";
      else if (current.is_number_integer() || current.is_number_unsigned()) patch[key] = std::stoll(text);
      else patch[key] = std::stod(text);
    } catch (const std::exception &) {
      throw training::ConfigError("bad value for --" + key + ": \"" + text + "\"");
    }
  }
  if (c.seed_set) patch["seed"] = c.seed;
  return training::config_from_json(patch, cfg);
}

template <typename Scalar>
void train_with(const training::TrainConfig &cfg, const training::TrainData &data, const fs::path &dir) {
  std::ofstream metrics(dir / "metrics.jsonl", std::ios::trunc);
  if (!metrics) throw IoError("cannot write " + (dir / "metrics.jsonl").string());
  training::TrainHooks hooks;
  hooks.on_metrics = [&](const training::MetricsRecord &r) {
    metrics << training::to_json(r).dump() << "\n" << std::flush;
    std::cout << "epoch " << r.epoch << " step " << r.step << " beta " << r.beta << " kl " << r.kl << " recon "
              << r.recon_sum;
    if (r.mutual_information) std::cout << " I_q " << *r.mutual_information;
    if (r.reconstruction_accuracy) std::cout << " acc " << *r.reconstruction_accuracy;
    if (r.validity) std::cout << " validity " << *r.validity;
    std::cout << std::endl;
  };
  hooks.on_checkpoint = [&](const training::Checkpoint &ck) {
    training::save_checkpoint(dir / "model.ckpt", ck);
    if (cfg.checkpoint_every > 0 && ck.epoch % cfg.checkpoint_every == 0)
      training::save_checkpoint(dir / ("epoch_" + std::to_string(ck.epoch) + ".ckpt"), ck);
  };
  const auto res = training::train<Scalar>(cfg, data, hooks);
  std::cout << "trained " << res.steps << " steps; checkpoint " << (dir / "model.ckpt").string() << std::endl;
}

int cmd_train(const TrainArgs &a, const Common &c) {
  const auto cfg = resolve_train_config(a, c);
  const auto dir = output_dir(c);
  training::save_config(dir / "config.json", cfg);
  const auto data = training::load_train_data(cfg);
  std::cout << "train " << data.train.size() << " molecules (" << data.train.stats.illegal << " illegal, "
            << data.train.stats.too_long << " too long skipped), valid " << data.valid.size() << ", vocabulary "
            << data.vocab.size() << std::endl;
  if (cfg.precision == "double") train_with<double>(cfg, data, dir);
  else train_with<float>(cfg, data, dir);
  return 0;
}

// ---------------------------------------------------------------- evaluate

struct EvalArgs {
  std::string checkpoint, data;
  long molecules = 0;
  int encodes = 10, decodes = 10, latents = 1000, prior_decodes = 100;
  bool greedy = false;
};

int cmd_evaluate(const EvalArgs &a, const Common &c) {
  const auto dir = output_dir(c);
  snapshot(dir, "evaluate",
           {{"checkpoint", a.checkpoint}, {"data", a.data}, {"molecules", a.molecules}, {"encodes", a.encodes},
            {"decodes", a.decodes}, {"latents", a.latents}, {"prior_decodes", a.prior_decodes},
            {"greedy", a.greedy}, {"seed", c.seed}});
  const auto ck = training::load_checkpoint(a.checkpoint);
  json report = {{"checkpoint", a.checkpoint}};
  std::mt19937_64 rng(c.seed);
  const auto mode = a.greedy ? vae::DecodeMode::Greedy : vae::DecodeMode::Sample;
  const auto steps = evaluation::max_decode_steps(ck.config.max_length);
  with_model(ck, [&](const auto &model) {
    if (!a.data.empty()) {
      auto corpus = load_corpus(a.data, ck.vocab, ck.config.max_length);
      if (a.molecules > 0 && corpus.size() > static_cast<std::size_t>(a.molecules)) {
        corpus.smiles.resize(static_cast<std::size_t>(a.molecules));
        corpus.sequences.resize(static_cast<std::size_t>(a.molecules));
      }
      evaluation::ReconOptions ro;
      ro.encodes = a.encodes;
      ro.decodes = a.decodes;
      ro.mode = mode;
      ro.max_steps = steps;
      const auto t0 = std::chrono::steady_clock::now();
      const auto r = evaluation::reconstruction_accuracy(model, ck.vocab, std::span<const std::string>(corpus.smiles),
                                                         std::span<const TokenSequence>(corpus.sequences), ro, rng);
      report["reconstruction"] = {{"sequence_accuracy", r.sequence_accuracy},
                                  {"token_accuracy", r.token_accuracy},
                                  {"valid_but_unmatched_fraction", r.valid_but_unmatched_fraction},
                                  {"molecules", r.molecules},
                                  {"encodes", r.encodes},
                                  {"attempts", r.attempts},
                                  {"matches", r.matches},
                                  {"encodes_per_molecule", r.encodes_per_molecule},
                                  {"decodes_per_encoding", r.decodes_per_encoding},
                                  {"skipped_lines", corpus.stats.illegal + corpus.stats.too_long},
                                  {"seconds", seconds_since(t0)}};
      std::cout << "reconstruction: " << r.matches << "/" << r.attempts << " = " << r.sequence_accuracy
                << " (token accuracy " << r.token_accuracy << ")" << std::endl;
    }
    if (a.latents > 0) {
      evaluation::ValidityOptions vo;
      vo.latents = a.latents;
      vo.decodes = a.prior_decodes;
      vo.mode = mode;
      vo.max_steps = steps;
      const auto t0 = std::chrono::steady_clock::now();
      const auto v = evaluation::prior_validity(model, ck.vocab, vo, rng);
      report["prior_validity"] = {{"validity", v.validity}, {"latents", v.latents},   {"attempts", v.attempts},
                                  {"valid", v.valid},       {"unique_valid", v.unique_valid}, {"errors", v.errors},
                                  {"seconds", seconds_since(t0)}};
      std::cout << "prior validity: " << v.valid << "/" << v.attempts << " = " << v.validity << " ("
                << v.unique_valid << " unique)" << std::endl;
    }
    return 0;
  });
  write_json(dir / "evaluation.json", report);
  return 0;
}

// ---------------------------------------------------------------- sample

struct SampleArgs {
  std::string checkpoint;
  long count = 100;
  long max_attempts = 100000;
  bool greedy = false;
};

int cmd_sample(const SampleArgs &a, const Common &c) {
  const auto dir = output_dir(c);
  snapshot(dir, "sample",
           {{"checkpoint", a.checkpoint}, {"count", a.count}, {"max_attempts", a.max_attempts},
            {"greedy", a.greedy}, {"seed", c.seed}});
  const auto ck = training::load_checkpoint(a.checkpoint);
  std::mt19937_64 rng(c.seed);
  evaluation::DecodeOptions opt;
  opt.mode = a.greedy ? vae::DecodeMode::Greedy : vae::DecodeMode::Sample;
  opt.max_steps = evaluation::max_decode_steps(ck.config.max_length);
  const auto res = with_model(ck, [&](const auto &model) {
    return evaluation::generate_unique_valid(model, ck.vocab, a.count, a.max_attempts, opt, rng);
  });
  std::string text;
  for (const auto &m : res.molecules) text += m + "\n";
  write_text(dir / "samples.smi", text);
  write_json(dir / "sample_report.json", {{"molecules", res.molecules.size()},
                                          {"attempts", res.attempts},
                                          {"wall_seconds", res.wall_seconds}});
  std::cout << res.molecules.size() << " unique valid molecules in " << res.attempts << " decodes, "
            << res.wall_seconds << " s" << std::endl;
  return 0;
}

// ---------------------------------------------------------------- diagnose

struct DiagArgs {
  std::string checkpoint, data;
  long limit = 1000;
  long mi_samples = 0;
  bool greedy = false;
};

int cmd_diagnose(const DiagArgs &a, const Common &c) {
  const auto dir = output_dir(c);
  snapshot(dir, "diagnose",
           {{"checkpoint", a.checkpoint}, {"data", a.data}, {"limit", a.limit}, {"mi_samples", a.mi_samples},
            {"greedy", a.greedy}, {"seed", c.seed}});
  const auto ck = training::load_checkpoint(a.checkpoint);
  auto corpus = load_corpus(a.data, ck.vocab, ck.config.max_length);
  if (a.limit > 0 && corpus.size() > static_cast<std::size_t>(a.limit))
    corpus.sequences.resize(static_cast<std::size_t>(a.limit));
  const std::span<const TokenSequence> seqs(corpus.sequences);
  std::mt19937_64 rng(c.seed);
  json report;
  with_model(ck, [&](const auto &model) {
    const auto mi = diagnostics::mutual_information(model, seqs, a.mi_samples, rng);
    const auto u = diagnostics::underestimation_ratio(
        model, seqs, rng, a.greedy ? vae::DecodeMode::Greedy : vae::DecodeMode::Sample);
    report["mutual_information"] = {{"mi", mi.mi},
                                    {"avg_kl", mi.avg_kl},
                                    {"marginal_kl", mi.marginal_kl},
                                    {"std_error", mi.std_error},
                                    {"tolerance", mi.tolerance},
                                    {"n_samples", mi.n_samples},
                                    {"n_data", mi.n_data}};
    report["underestimation"] = {{"teacher_forced_per_token", u.tf_loss},
                                 {"free_running_per_token", u.fr_loss},
                                 {"ratio", u.ratio},
                                 {"tokens", u.tokens}};
    if (u.tf_loss > 0) report["underestimation"]["alpha"] = diagnostics::alpha_from_ratio(u);
    std::cout << "I_q " << mi.mi << " +- " << mi.std_error << " nats (avg KL " << mi.avg_kl << ")\n"
              << "teacher forced " << u.tf_loss << " vs free running " << u.fr_loss << " nats/token, ratio "
              << u.ratio << std::endl;
    return 0;
  });
  write_json(dir / "diagnostics.json", report);
  return 0;
}

// ---------------------------------------------------------------- optimize

struct OptArgs {
  std::string checkpoint, properties, scorer, lookup;
  long seeds = 0;
  int iterations = 5, batch = 10, top = 10;
  bool greedy = true;
};

std::string shell_quote(const std::string &s) {
  std::string out = "'";
  for (char ch : s) out += ch == '\'' ? std::string("'\\''") : std::string(1, ch);
  return out + "'";
}

/// Scores SMILES via a property table or an external command that is called
/// as `<cmd> <in.smi> <out.csv>` and must write smiles,logP,SA.
class PropertyScorer {
 public:
  PropertyScorer(std::string command, const std::string &lookup, fs::path work)
      : command_(std::move(command)), work_(std::move(work)) {
    if (!lookup.empty())
      for (const auto &r : latent_opt::read_property_csv(lookup)) table_[r.smiles] = r;
  }

  std::map<std::string, latent_opt::PropertyRecord> score(const std::vector<std::string> &smiles) {
    std::map<std::string, latent_opt::PropertyRecord> out;
    std::vector<std::string> missing;
    for (const auto &s : smiles) {
      if (const auto it = table_.find(s); it != table_.end()) out[s] = it->second;
      else missing.push_back(s);
    }
    if (!missing.empty() && !command_.empty()) {
      const auto in = work_ / "bo_candidates.smi", res = work_ / "bo_candidates.csv";
      std::string text;
      for (const auto &s : missing) text += s + "\n";
      write_text(in, text);
      fs::remove(res);
      const std::string cmd = command_ + " " + shell_quote(in.string()) + " " + shell_quote(res.string());
      if (std::system(cmd.c_str()) != 0) throw std::runtime_error("scorer command failed: " + cmd);
      for (const auto &r : latent_opt::read_property_csv(res)) {
        table_[r.smiles] = r;
        out[r.smiles] = r;
      }
    }
    return out;
  }

 private:
  std::string command_;
  fs::path work_;
  std::map<std::string, latent_opt::PropertyRecord> table_;
};

int cmd_optimize(const OptArgs &a, const Common &c) {
  if (a.scorer.empty() && a.lookup.empty()) throw UsageError("optimize needs --scorer-cmd or --lookup");
  const auto dir = output_dir(c);
  snapshot(dir, "optimize",
           {{"checkpoint", a.checkpoint}, {"properties", a.properties}, {"scorer_cmd", a.scorer},
            {"lookup", a.lookup}, {"seeds", a.seeds}, {"iterations", a.iterations}, {"batch", a.batch},
            {"top", a.top}, {"greedy", a.greedy}, {"seed", c.seed}});
  const auto ck = training::load_checkpoint(a.checkpoint);
  std::size_t skipped = 0;
  auto records = latent_opt::read_property_csv(a.properties, &skipped);
  std::vector<std::string> smiles;
  std::vector<double> ys;
  for (const auto &r : records) {
    smiles.push_back(r.smiles);
    ys.push_back(r.y);
  }
  Corpus corpus = encode_corpus(smiles, ck.vocab, ck.config.max_length);
  std::map<std::string, double> y_of;
  for (const auto &r : records) y_of[r.smiles] = r.y;
  if (a.seeds > 0 && corpus.size() > static_cast<std::size_t>(a.seeds)) {
    corpus.smiles.resize(static_cast<std::size_t>(a.seeds));
    corpus.sequences.resize(static_cast<std::size_t>(a.seeds));
  }
  if (corpus.size() < 2) throw std::runtime_error("fewer than two usable seed molecules");

  PropertyScorer scorer(a.scorer, a.lookup, dir);
  std::mt19937_64 rng(c.seed);
  latent_opt::BoOptions opt;
  opt.iterations = a.iterations;
  opt.batch_size = a.batch;
  const auto mode = a.greedy ? vae::DecodeMode::Greedy : vae::DecodeMode::Sample;
  const auto steps = evaluation::max_decode_steps(ck.config.max_length);

  const auto res = with_model(ck, [&](const auto &model) {
    using Scalar = typename std::decay_t<decltype(model)>::scalar_type;
    latent_opt::MatrixXd z(ck.config.latent, static_cast<Eigen::Index>(corpus.size()));
    const std::span<const TokenSequence> seqs(corpus.sequences);
    for (std::size_t start = 0; start < seqs.size(); start += 256) {
      const auto n = std::min<std::size_t>(256, seqs.size() - start);
      const auto d = model.encode(vae::PaddedBatch::from(seqs.subspan(start, n)));
      z.middleCols(static_cast<Eigen::Index>(start), static_cast<Eigen::Index>(n)) = d.mu.template cast<double>();
    }
    std::vector<double> seed_y;
    for (const auto &s : corpus.smiles) seed_y.push_back(y_of.at(s));

    latent_opt::BatchObjective objective = [&](const latent_opt::MatrixXd &zs) {
      const nn::Matrix<Scalar> zc = zs.cast<Scalar>();
      const auto out = model.decode_free_running(zc, nullptr, mode, rng, steps);
      std::vector<std::optional<std::string>> texts;
      std::vector<std::string> valid;
      for (std::size_t k = 0; k < out.emitted.size(); ++k) {
        auto t = evaluation::emitted_smiles(ck.vocab, out.emitted[k], out.finished[k]);
        if (t && !smiles::check_validity(*t).valid) t.reset();
        if (t) valid.push_back(*t);
        texts.push_back(t);
      }
      const auto scored = scorer.score(valid);
      std::vector<std::optional<latent_opt::Observation>> obs;
      for (const auto &t : texts) {
        const auto it = t ? scored.find(*t) : scored.end();
        if (it == scored.end()) obs.emplace_back();
        else obs.push_back(latent_opt::Observation{it->second.y, *t});
      }
      return obs;
    };
    return latent_opt::bo_loop(z, seed_y, corpus.smiles, objective, opt, rng);
  });

  json iters = json::array();
  for (const auto &it : res.iterations) {
    json j = {{"iteration", it.iteration}, {"proposed", it.proposed},          {"valid", it.valid},
              {"incumbent", it.incumbent}, {"incumbent_smiles", it.incumbent_label}, {"skipped", it.skipped}};
    j["batch_best"] = std::isnan(it.batch_best) ? json(nullptr) : json(it.batch_best);
    if (!it.message.empty()) {
      j["message"] = it.message;
      std::cerr << "warning: " << it.message << std::endl;
    }
    iters.push_back(j);
    std::cout << "iteration " << it.iteration << ": " << it.valid << "/" << it.proposed << " valid, best "
              << it.incumbent << " " << it.incumbent_label << std::endl;
  }
  json top = json::array();
  for (const auto &p : res.top(static_cast<std::size_t>(a.top)))
    top.push_back({{"smiles", p.label}, {"score", p.y}, {"iteration", p.iteration}});
  write_json(dir / "bo_report.json", {{"seed_best", res.seed_best},
                                      {"best", res.best},
                                      {"seeds", corpus.size()},
                                      {"skipped_property_rows", skipped},
                                      {"iterations", iters},
                                      {"top", top}});
  return 0;
}

// ---------------------------------------------------------------- tokenize / validate

int cmd_tokenize(const std::string &in, const std::string &out, const Common &c) {
  const auto dir = output_dir(c);
  snapshot(dir, "tokenize", {{"in", in}, {"out", out}});
  const auto lines = read_smiles_file(in);
  std::string text;
  long bad = 0;
  for (const auto &line : lines) {
    try {
      const auto toks = smiles::tokenize(line);
      for (std::size_t i = 0; i < toks.size(); ++i) text += (i ? " " : "") + toks[i];
      text += "\n";
    } catch (const smiles::SmilesError &e) {
      ++bad;
      std::cerr << "skipped \"" << line << "\": " << e.what() << std::endl;
      text += "\n";
    }
  }
  const fs::path target = fs::path(out).is_absolute() ? fs::path(out) : dir / out;
  write_text(target, text);
  std::cout << lines.size() - static_cast<std::size_t>(bad) << " of " << lines.size() << " lines tokenized -> "
            << target.string() << std::endl;
  return 0;
}

int cmd_validate(const std::string &in, const Common &c) {
  const auto dir = output_dir(c);
  snapshot(dir, "validate", {{"in", in}});
  const auto lines = read_smiles_file(in);
  json entries = json::array();
  std::map<std::string, long> counts;
  long valid = 0;
  for (const auto &line : lines) {
    const auto v = smiles::check_validity(line);
    valid += v.valid ? 1 : 0;
    ++counts[std::string(smiles::to_string(v.error_class))];
    json e = {{"smiles", line}, {"valid", v.valid}, {"error_class", smiles::to_string(v.error_class)}};
    if (!v.valid) e["message"] = v.message;
    entries.push_back(e);
  }
  write_json(dir / "validity_report.json",
             {{"total", lines.size()}, {"valid", valid}, {"by_class", counts}, {"molecules", entries}});
  std::cout << valid << " of " << lines.size() << " valid";
  for (const auto &[k, n] : counts)
    if (k != "none") std::cout << ", " << k << " " << n;
  std::cout << std::endl;
  return 0;
}

// ---------------------------------------------------------------- plot

int cmd_plot(const std::vector<std::string> &inputs, const Common &c) {
  const auto dir = output_dir(c);
  snapshot(dir, "plot", {{"metrics", inputs}});
  std::vector<plots::Run> runs;
  for (const auto &spec : inputs) {
    const auto eq = spec.find('=');
    const std::string label = eq == std::string::npos ? fs::path(spec).parent_path().filename().string()
                                                      : spec.substr(0, eq);
    const std::string path = eq == std::string::npos ? spec : spec.substr(eq + 1);
    runs.push_back({label.empty() ? path : label, training::read_metrics(path)});
  }
  for (const auto &p : plots::emit_plots(runs, dir)) std::cout << p.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char **argv) {
  CLI::App app{"Sequence VAE toolkit for SMILES: training, diagnostics, evaluation, latent optimization"};
  app.require_subcommand(1);
  Common common;
  app.add_option("--out,-o", common.out_dir, "Output directory (default: $MVAE_OUTPUT_DIR or .)");
  app.add_option("--threads", common.threads, "Maximum worker threads")->check(CLI::PositiveNumber);
  app.add_option_function<std::uint64_t>(
      "--seed", [&](std::uint64_t s) { common.seed = s, common.seed_set = true; }, "Random seed");

  TrainArgs ta;
  auto *train = app.add_subcommand("train", "Train a model; flags override the --config file");
  train->add_option("--config,-c", ta.config, "JSON configuration file")->check(CLI::ExistingFile);
  const std::pair<const char *, const char *> train_flags[] = {
      {"--train", "train_path"},      {"--valid", "valid_path"},      {"--test", "test_path"},
      {"--max-length", "max_length"}, {"--embed-dim", "embed_dim"},   {"--hidden", "hidden"},
      {"--latent", "latent"},         {"--loss-mode", "loss_mode"},   {"--beta", "beta_max"},
      {"--alpha", "alpha"},           {"--anneal-steps", "anneal_steps"}, {"--anneal-epochs", "anneal_epochs"},
      {"--epochs", "epochs"},         {"--batch-size", "batch_size"}, {"--lr", "lr"},
      {"--clip-norm", "clip_norm"},   {"--precision", "precision"},   {"--diag-every", "diag_every"},
      {"--mi-samples", "mi_samples"}, {"--checkpoint-every", "checkpoint_every"}};
  for (const auto &[flag, key] : train_flags) {
    const std::string k = key;
    train->add_option_function<std::string>(flag, [&ta, k](const std::string &v) { ta.overrides[k] = v; },
                                             "Overrides " + k);
  }

  EvalArgs ea;
  auto *evaluate = app.add_subcommand("evaluate", "Reconstruction accuracy and prior validity");
  evaluate->add_option("--checkpoint", ea.checkpoint)->required()->check(CLI::ExistingFile);
  evaluate->add_option("--data", ea.data, "SMILES file for reconstruction")->check(CLI::ExistingFile);
  evaluate->add_option("--molecules", ea.molecules, "Use the first N molecules (0: all)");
  evaluate->add_option("--encodes", ea.encodes)->check(CLI::PositiveNumber);
  evaluate->add_option("--decodes", ea.decodes)->check(CLI::PositiveNumber);
  evaluate->add_option("--latents", ea.latents, "Prior draws (0 skips prior validity)")->check(CLI::NonNegativeNumber);
  evaluate->add_option("--prior-decodes", ea.prior_decodes)->check(CLI::PositiveNumber);
  evaluate->add_flag("--greedy", ea.greedy, "Argmax decoding instead of sampling");

  SampleArgs sa;
  auto *sample = app.add_subcommand("sample", "Generate unique valid molecules from the prior");
  sample->add_option("--checkpoint", sa.checkpoint)->required()->check(CLI::ExistingFile);
  sample->add_option("--count,-n", sa.count)->check(CLI::PositiveNumber);
  sample->add_option("--max-attempts", sa.max_attempts)->check(CLI::PositiveNumber);
  sample->add_flag("--greedy", sa.greedy);

  DiagArgs da;
  auto *diagnose = app.add_subcommand("diagnose", "Mutual information and teacher-forcing underestimation");
  diagnose->add_option("--checkpoint", da.checkpoint)->required()->check(CLI::ExistingFile);
  diagnose->add_option("--data", da.data)->required()->check(CLI::ExistingFile);
  diagnose->add_option("--limit", da.limit, "Use the first N molecules (0: all)");
  diagnose->add_option("--mi-samples", da.mi_samples, "Monte-Carlo samples (0: one per molecule)");
  diagnose->add_flag("--greedy", da.greedy, "Greedy free-running decoding");

  OptArgs oa;
  auto *optimize = app.add_subcommand("optimize", "Batched Bayesian optimization in latent space");
  optimize->add_option("--checkpoint", oa.checkpoint)->required()->check(CLI::ExistingFile);
  optimize->add_option("--properties", oa.properties, "Seed CSV smiles,logP,SA")->required()->check(CLI::ExistingFile);
  optimize->add_option("--scorer-cmd", oa.scorer, "Command run as <cmd> <in.smi> <out.csv>");
  optimize->add_option("--lookup", oa.lookup, "CSV smiles,logP,SA used to score decodes")->check(CLI::ExistingFile);
  optimize->add_option("--seeds", oa.seeds, "Use the first N seed molecules (0: all)");
  optimize->add_option("--iterations", oa.iterations)->check(CLI::NonNegativeNumber);
  optimize->add_option("--batch", oa.batch)->check(CLI::PositiveNumber);
  optimize->add_option("--top", oa.top)->check(CLI::PositiveNumber);
  optimize->add_option("--greedy", oa.greedy, "Greedy decoding of candidates (default true)");

  std::string tok_in, tok_out;
  auto *tokenize = app.add_subcommand("tokenize", "Space-separated tokens, one molecule per line");
  tokenize->add_option("--in", tok_in)->required()->check(CLI::ExistingFile);
  tokenize->add_option("--out", tok_out)->required();

  std::string val_in;
  auto *validate = app.add_subcommand("validate", "Validity verdicts with error classes");
  validate->add_option("--in", val_in)->required()->check(CLI::ExistingFile);

  std::vector<std::string> plot_in;
  auto *plot = app.add_subcommand("plot", "SVG training curves; several --metrics overlay");
  plot->add_option("--metrics", plot_in, "metrics.jsonl or label=metrics.jsonl")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp &e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp &e) {
    return app.exit(e);
  } catch (const CLI::ParseError &e) {
    app.exit(e);
    return 1;
  }

  Eigen::setNbThreads(common.threads);
  try {
    if (*train) return cmd_train(ta, common);
    if (*evaluate) return cmd_evaluate(ea, common);
    if (*sample) return cmd_sample(sa, common);
    if (*diagnose) return cmd_diagnose(da, common);
    if (*optimize) return cmd_optimize(oa, common);
    if (*tokenize) return cmd_tokenize(tok_in, tok_out, common);
    if (*validate) return cmd_validate(val_in, common);
    if (*plot) return cmd_plot(plot_in, common);
  } catch (const UsageError &e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 1;
  } catch (const training::ConfigError &e) {
    std::cerr << "configuration error: " << e.what() << std::endl;
    return 1;
  } catch (const std::exception &e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 2;
  }
  return 1;
}
