// SPDX-License-Identifier: Apache-2.0

#include "mvae/plots.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>

#include "mvae/corpus.hpp"

namespace mvae::plots {

namespace {

using training::MetricsRecord;

template <typename Get>
Series series_of(const Run &run, Get get) {
  Series s{run.label, {}, {}};
  for (const auto &r : run.records) {
    const std::optional<double> v = get(r);
    if (v && std::isfinite(*v)) {
      s.x.push_back(r.epoch);
      s.y.push_back(*v);
    }
  }
  return s;
}

template <typename Get>
Panel panel_of(const std::vector<Run> &runs, std::string file, std::string title, std::string y_label, Get get) {
  Panel p{std::move(file), std::move(title), std::move(y_label), {}};
  for (const auto &run : runs) p.series.push_back(series_of(run, get));
  return p;
}

const char *const kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};

std::string escape(const std::string &s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

}  // namespace

std::vector<Panel> training_panels(const std::vector<Run> &runs) {
  using O = std::optional<double>;
  return {
      panel_of(runs, "beta", "KL weight", "beta", [](const MetricsRecord &r) -> O { return r.beta; }),
      panel_of(runs, "kl", "KL divergence", "nats", [](const MetricsRecord &r) -> O { return r.kl; }),
      panel_of(runs, "reconstruction", "Reconstruction loss", "nats per molecule",
               [](const MetricsRecord &r) -> O { return r.recon_sum; }),
      panel_of(runs, "mutual_information", "Mutual information I_q", "nats",
               [](const MetricsRecord &r) { return r.mutual_information; }),
      panel_of(runs, "accuracy", "Reconstruction accuracy", "fraction",
               [](const MetricsRecord &r) { return r.reconstruction_accuracy; }),
      panel_of(runs, "validity", "Prior validity", "fraction", [](const MetricsRecord &r) { return r.validity; }),
  };
}

std::string render_svg(const Panel &panel, int width, int height) {
  const double left = 64, right = 16, top = 32, bottom = 44;
  const double pw = width - left - right, ph = height - top - bottom;

  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  for (const auto &s : panel.series)
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      x0 = std::min(x0, s.x[i]);
      x1 = std::max(x1, s.x[i]);
      y0 = std::min(y0, s.y[i]);
      y1 = std::max(y1, s.y[i]);
    }
  const bool empty = !std::isfinite(x0);
  if (empty) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  if (x1 == x0) x0 -= 0.5, x1 += 0.5;
  if (y1 == y0) y0 -= 0.5, y1 += 0.5;
  const double pad = 0.05 * (y1 - y0);
  y0 -= pad;
  y1 += pad;
  auto px = [&](double x) { return left + (x - x0) / (x1 - x0) * pw; };
  auto py = [&](double y) { return top + (y1 - y) / (y1 - y0) * ph; };

  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
    << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<text x=\"" << width / 2 << "\" y=\"18\" text-anchor=\"middle\" font-size=\"13\">" << escape(panel.title)
    << "</text>\n";
  o << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << pw << "\" height=\"" << ph
    << "\" fill=\"none\" stroke=\"#444\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double xv = x0 + (x1 - x0) * k / 4.0, yv = y0 + (y1 - y0) * k / 4.0;
    o << "<text x=\"" << px(xv) << "\" y=\"" << top + ph + 14 << "\" text-anchor=\"middle\">" << fmt(xv)
      << "</text>\n";
    o << "<text x=\"" << left - 4 << "\" y=\"" << py(yv) + 4 << "\" text-anchor=\"end\">" << fmt(yv) << "</text>\n";
    o << "<line x1=\"" << left << "\" x2=\"" << left + pw << "\" y1=\"" << py(yv) << "\" y2=\"" << py(yv)
      << "\" stroke=\"#ddd\"/>\n";
  }
  o << "<text x=\"" << left + pw / 2 << "\" y=\"" << height - 8 << "\" text-anchor=\"middle\">epoch</text>\n";
  o << "<text transform=\"translate(14," << top + ph / 2 << ") rotate(-90)\" text-anchor=\"middle\">"
    << escape(panel.y_label) << "</text>\n";
  if (empty)
    o << "<text x=\"" << left + pw / 2 << "\" y=\"" << top + ph / 2 << "\" text-anchor=\"middle\" fill=\"#888\">"
      << "no data</text>\n";

  for (std::size_t k = 0; k < panel.series.size(); ++k) {
    const auto &s = panel.series[k];
    const char *color = kColors[k % std::size(kColors)];
    if (!s.x.empty()) {
      o << "<polyline class=\"series\" data-label=\"" << escape(s.label) << "\" fill=\"none\" stroke=\"" << color
        << "\" stroke-width=\"1.5\" points=\"";
      for (std::size_t i = 0; i < s.x.size(); ++i) o << (i ? " " : "") << px(s.x[i]) << "," << py(s.y[i]);
      o << "\"/>\n";
      for (std::size_t i = 0; i < s.x.size(); ++i)
        o << "<circle cx=\"" << px(s.x[i]) << "\" cy=\"" << py(s.y[i]) << "\" r=\"2\" fill=\"" << color << "\"/>\n";
    }
    const double ly = top + 12 + 14.0 * static_cast<double>(k);
    o << "<line x1=\"" << left + pw - 90 << "\" x2=\"" << left + pw - 74 << "\" y1=\"" << ly - 4 << "\" y2=\""
      << ly - 4 << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    o << "<text x=\"" << left + pw - 70 << "\" y=\"" << ly << "\">" << escape(s.label) << "</text>\n";
  }
  o << "</svg>\n";
  return o.str();
}

std::vector<std::filesystem::path> emit_plots(const std::vector<Run> &runs, const std::filesystem::path &dir) {
  namespace fs = std::filesystem;
  if (runs.empty()) throw training::MalformedMetrics("no metrics runs to plot");
  for (const auto &run : runs)
    if (run.records.empty()) throw training::MalformedMetrics("run \"" + run.label + "\" has no metrics records");

  std::vector<std::pair<fs::path, std::string>> rendered;
  for (const auto &p : training_panels(runs)) rendered.emplace_back(dir / (p.file + ".svg"), render_svg(p));

  fs::create_directories(dir);
  std::vector<fs::path> staged;
  auto discard = [&] {
    std::error_code ec;
    for (const auto &t : staged) fs::remove(t, ec);
  };
  for (const auto &[path, text] : rendered) {
    fs::path tmp = path;
    tmp += ".tmp";
    staged.push_back(tmp);
    std::ofstream out(tmp, std::ios::binary);
    out << text;
    out.close();
    if (!out) {
      discard();
      throw IoError("cannot write " + tmp.string());
    }
  }
  std::vector<fs::path> written;
  for (std::size_t i = 0; i < rendered.size(); ++i) {
    std::error_code ec;
    fs::rename(staged[i], rendered[i].first, ec);
    if (ec) {
      discard();
      for (const auto &w : written) fs::remove(w, ec);
      throw IoError("cannot write " + rendered[i].first.string());
    }
    written.push_back(rendered[i].first);
  }
  return written;
}

}  // namespace mvae::plots
