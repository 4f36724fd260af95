// SPDX-License-Identifier: Apache-2.0
//
// Static SVG charts of training curves, one file per panel, with any number
// of runs overlaid.

#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "mvae/trainer.hpp"

namespace mvae::plots {

struct Run {
  std::string label;
  std::vector<training::MetricsRecord> records;
};

struct Series {
  std::string label;
  std::vector<double> x, y;
};

struct Panel {
  std::string file;  // stem of the output file
  std::string title;
  std::string y_label;
  std::vector<Series> series;
};

/// The six panels: beta, KL, reconstruction, I_q, accuracy, validity, each
/// against epoch. Validation-only quantities use the records that carry them.
std::vector<Panel> training_panels(const std::vector<Run> &runs);

std::string render_svg(const Panel &panel, int width = 480, int height = 320);

/// Writes <dir>/<panel>.svg for every panel and returns the paths. Throws
/// training::MalformedMetrics if a run is empty; in that case, and on any I/O
/// failure, no panel file is left behind.
std::vector<std::filesystem::path> emit_plots(const std::vector<Run> &runs, const std::filesystem::path &dir);

}  // namespace mvae::plots
