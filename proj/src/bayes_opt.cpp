// SPDX-License-Identifier: Apache-2.0

#include "mvae/bayes_opt.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "mvae/corpus.hpp"
#include "mvae/smiles.hpp"

namespace mvae::latent_opt {

double target_score(double logP, double SA, int cycle) { return logP - SA - static_cast<double>(cycle); }

PropertyRecord score_record(const std::string &smiles, double logP, double SA) {
  PropertyRecord r{smiles, logP, SA, smiles::count_large_rings(smiles::parse(smiles)), 0.0};
  r.y = target_score(r.logP, r.SA, r.cycle);
  return r;
}

namespace {

std::vector<std::string> split_csv(const std::string &line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
    out.push_back(cell);
  }
  return out;
}

double parse_number(const std::string &s, const std::string &where) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception &) {
    throw IoError(where + ": not a number: \"" + s + "\"");
  }
}

}  // namespace

std::vector<PropertyRecord> read_property_csv(const std::filesystem::path &path, std::size_t *skipped) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw IoError(path.string() + ": missing header");
  const auto header = split_csv(line);
  auto column = [&](const std::string &name) {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw IoError(path.string() + ": header lacks column \"" + name + "\"");
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t cs = column("smiles"), cl = column("logP"), ca = column("SA");
  std::vector<PropertyRecord> out;
  std::size_t lineno = 1, skip = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto cells = split_csv(line);
    const std::string where = path.string() + ":" + std::to_string(lineno);
    if (cells.size() < header.size()) throw IoError(where + ": too few columns");
    const double logp = parse_number(cells[cl], where);
    const double sa = parse_number(cells[ca], where);
    try {
      out.push_back(score_record(cells[cs], logp, sa));
    } catch (const smiles::SmilesError &) {
      ++skip;
    }
  }
  if (skipped) *skipped = skip;
  return out;
}

std::vector<ScoredPoint> BoResult::top(std::size_t k) const {
  std::vector<const ScoredPoint *> order;
  for (const auto &p : points) order.push_back(&p);
  std::stable_sort(order.begin(), order.end(), [](auto *a, auto *b) { return a->y > b->y; });
  std::vector<ScoredPoint> out;
  std::set<std::string> seen;
  for (const auto *p : order) {
    if (out.size() >= k) break;
    if (seen.insert(p->label).second) out.push_back(*p);
  }
  return out;
}

Box seed_box(const MatrixXd &seeds, double margin) {
  const VectorXd mean = seeds.rowwise().mean();
  const VectorXd sd = ((seeds.colwise() - mean).array().square().rowwise().mean()).sqrt().matrix();
  return {seeds.rowwise().minCoeff() - margin * sd, seeds.rowwise().maxCoeff() + margin * sd};
}

VectorXd maximize_ei(const GaussianProcess &gp, double best, const Box &box, const BoOptions &opt,
                     const MatrixXd &observed, std::mt19937_64 &rng) {
  const Index d = box.lower.size();
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> nd(0.0, 1.0);
  const VectorXd width = box.upper - box.lower;

  // Starts: uniform in the box, and perturbations of the best observed points.
  std::vector<VectorXd> starts;
  for (int s = 0; s < opt.restarts; ++s) {
    VectorXd z(d);
    if (s % 2 == 1 && observed.cols() > 0) {
      const Index j = static_cast<Index>(rng() % static_cast<std::uint64_t>(std::min<Index>(observed.cols(), 10)));
      for (Index k = 0; k < d; ++k) z(k) = observed(k, j) + 0.05 * width(k) * nd(rng);
    } else {
      for (Index k = 0; k < d; ++k) z(k) = box.lower(k) + width(k) * u(rng);
    }
    starts.push_back(box.clip(z));
  }

  VectorXd best_z = starts.front();
  double best_ei = -1.0;
  for (auto z : starts) {
    VectorXd g;
    double f = expected_improvement(gp, z, best, &g);
    double eta = 0.1 * width.maxCoeff() / std::max(g.norm(), 1e-12);
    for (int it = 0; it < opt.local_steps && eta > 1e-12; ++it) {
      const VectorXd cand = box.clip(z + eta * g);
      VectorXd gc;
      const double fc = expected_improvement(gp, cand, best, &gc);
      if (fc > f) {
        z = cand;
        f = fc;
        g = gc;
        eta *= 1.5;
      } else {
        eta *= 0.5;
      }
    }
    if (f > best_ei) {
      best_ei = f;
      best_z = z;
    }
  }
  return best_z;
}

MatrixXd propose_batch(const GaussianProcess &gp, double best, const Box &box, const BoOptions &opt,
                       const MatrixXd &observed, std::mt19937_64 &rng) {
  MatrixXd batch(box.lower.size(), opt.batch_size);
  GaussianProcess believer = gp;
  for (int k = 0; k < opt.batch_size; ++k) {
    const VectorXd z = maximize_ei(believer, best, box, opt, observed, rng);
    batch.col(k) = z;
    if (k + 1 < opt.batch_size) believer = believer.with_observation(z, believer.predict(z).mean);
  }
  return batch;
}

BoResult bo_loop(const MatrixXd &seed_z, const std::vector<double> &seed_y, const std::vector<std::string> &seed_labels,
                 const BatchObjective &objective, const BoOptions &opt, std::mt19937_64 &rng) {
  const Index n = seed_z.cols();
  if (n < 2 || static_cast<Index>(seed_y.size()) != n || static_cast<Index>(seed_labels.size()) != n)
    throw std::invalid_argument("bo_loop: need at least two scored seeds with labels");
  if (opt.iterations < 0 || opt.batch_size < 1) throw std::invalid_argument("bo_loop: bad iteration or batch count");

  BoResult res;
  for (Index i = 0; i < n; ++i) res.points.push_back({seed_z.col(i), seed_y[i], seed_labels[i], 0});
  const auto best_it = std::max_element(seed_y.begin(), seed_y.end());
  res.seed_best = *best_it;
  res.best = res.seed_best;
  std::string best_label = seed_labels[static_cast<std::size_t>(best_it - seed_y.begin())];
  const Box box = seed_box(seed_z, opt.box_margin);

  MatrixXd x = seed_z;
  VectorXd y = Eigen::Map<const VectorXd>(seed_y.data(), n);
  GpHyper hyper;
  bool have_hyper = false;
  for (int iter = 1; iter <= opt.iterations; ++iter) {
    BoIteration rec;
    rec.iteration = iter;
    GaussianProcess gp = (opt.refit_hyper || !have_hyper) ? GaussianProcess::fit(x, y, rng, opt.gp)
                                                          : GaussianProcess::condition(x, y, hyper, opt.gp);
    hyper = gp.hyper();
    have_hyper = true;

    // Observed points sorted by score seed the local search.
    std::vector<Index> order(static_cast<std::size_t>(x.cols()));
    for (Index i = 0; i < x.cols(); ++i) order[static_cast<std::size_t>(i)] = i;
    std::sort(order.begin(), order.end(), [&](Index a, Index b) { return y(a) > y(b); });
    MatrixXd ranked(x.rows(), x.cols());
    for (Index i = 0; i < x.cols(); ++i) ranked.col(i) = x.col(order[static_cast<std::size_t>(i)]);

    const MatrixXd batch = propose_batch(gp, res.best, box, opt, ranked, rng);
    const auto outcomes = objective(batch);
    if (static_cast<Index>(outcomes.size()) != batch.cols())
      throw std::runtime_error("bo_loop: objective returned the wrong number of outcomes");
    rec.proposed = batch.cols();
    rec.batch_best = std::numeric_limits<double>::quiet_NaN();
    try {
      for (Index k = 0; k < batch.cols(); ++k) {
        const auto &o = outcomes[static_cast<std::size_t>(k)];
        if (!o) continue;
        ++rec.valid;
        res.points.push_back({batch.col(k), o->y, o->label, iter});
        x.conservativeResize(Eigen::NoChange, x.cols() + 1);
        x.col(x.cols() - 1) = batch.col(k);
        y.conservativeResize(y.size() + 1);
        y(y.size() - 1) = o->y;
        if (std::isnan(rec.batch_best) || o->y > rec.batch_best) rec.batch_best = o->y;
        if (o->y > res.best) {
          res.best = o->y;
          best_label = o->label;
        }
      }
      if (rec.valid == 0) throw NoValidCandidates("iteration " + std::to_string(iter) + ": no valid decodes");
    } catch (const NoValidCandidates &e) {
      rec.skipped = true;
      rec.message = e.what();
    }
    rec.incumbent = res.best;
    rec.incumbent_label = best_label;
    res.iterations.push_back(rec);
  }
  return res;
}

}  // namespace mvae::latent_opt
