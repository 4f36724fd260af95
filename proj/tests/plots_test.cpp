// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "mvae/config.hpp"
#include "mvae/plots.hpp"

namespace fs = std::filesystem;
using PlotRun = mvae::plots::Run;
using mvae::training::MetricsRecord;

namespace {

PlotRun fixture_run(const std::string &label, double beta_max, int epochs) {
  PlotRun run{label, {}};
  for (int e = 1; e <= epochs; ++e) {
    MetricsRecord r;
    r.epoch = e;
    r.step = e * 10;
    r.beta = mvae::training::anneal_beta(r.step, beta_max, 50);
    r.kl = 10.0 / e;
    r.recon_sum = 40.0 - e;
    if (e % 2 == 0) {
      r.mutual_information = 0.5 * e;
      r.reconstruction_accuracy = 0.1 * e;
      r.validity = 0.05 * e;
    }
    run.records.push_back(r);
  }
  return run;
}

fs::path fresh_dir(const std::string &name) {
  const auto d = fs::temp_directory_path() / ("mvae_plots_" + name);
  fs::remove_all(d);
  return d;
}

std::string slurp(const fs::path &p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::size_t count(const std::string &s, const std::string &needle) {
  std::size_t n = 0;
  for (auto p = s.find(needle); p != std::string::npos; p = s.find(needle, p + 1)) ++n;
  return n;
}

}  // namespace

TEST(Plots, SixPanels) {
  const auto dir = fresh_dir("six");
  const auto files = mvae::plots::emit_plots({fixture_run("beta=0.1", 0.1, 8)}, dir);
  ASSERT_EQ(files.size(), 6u);
  for (const char *stem : {"beta", "kl", "reconstruction", "mutual_information", "accuracy", "validity"})
    EXPECT_TRUE(fs::exists(dir / (std::string(stem) + ".svg"))) << stem;
  for (const auto &f : files) {
    const auto text = slurp(f);
    EXPECT_EQ(text.rfind("<svg", 0), 0u);
    EXPECT_NE(text.find("</svg>"), std::string::npos);
  }
  for (const auto &e : fs::directory_iterator(dir)) EXPECT_NE(e.path().extension(), ".tmp");
}

TEST(Plots, EmptyMetricsLeaveNoFiles) {
  const auto dir = fresh_dir("empty");
  EXPECT_THROW((mvae::plots::emit_plots({PlotRun{"empty", {}}}, dir)), mvae::training::MalformedMetrics);
  EXPECT_FALSE(fs::exists(dir) && !fs::is_empty(dir));
  EXPECT_THROW(mvae::plots::emit_plots({}, dir), mvae::training::MalformedMetrics);
  EXPECT_THROW((mvae::plots::emit_plots({fixture_run("a", 1.0, 3), PlotRun{"b", {}}}, dir)),
               mvae::training::MalformedMetrics);
  EXPECT_FALSE(fs::exists(dir) && !fs::is_empty(dir));
}

TEST(Plots, TwoRunsOverlayEveryPanel) {
  const auto dir = fresh_dir("overlay");
  const auto files = mvae::plots::emit_plots({fixture_run("beta=1", 1.0, 6), fixture_run("beta=0.1", 0.1, 6)}, dir);
  for (const auto &f : files) {
    const auto text = slurp(f);
    EXPECT_EQ(count(text, "class=\"series\""), 2u) << f;
    EXPECT_NE(text.find("data-label=\"beta=1\""), std::string::npos);
    EXPECT_NE(text.find("data-label=\"beta=0.1\""), std::string::npos);
  }
}

TEST(Plots, ValidationPanelsUseDiagnosticEpochsOnly) {
  const auto panels = mvae::plots::training_panels({fixture_run("r", 0.1, 7)});
  ASSERT_EQ(panels.size(), 6u);
  EXPECT_EQ(panels[0].series[0].x.size(), 7u);
  EXPECT_EQ(panels[3].file, "mutual_information");
  EXPECT_EQ(panels[3].series[0].x, (std::vector<double>{2, 4, 6}));
}

TEST(Plots, BetaPanelMonotoneForLinearAnneal) {
  const auto panels = mvae::plots::training_panels({fixture_run("r", 0.5, 10)});
  const auto &y = panels[0].series[0].y;
  for (std::size_t i = 1; i < y.size(); ++i) EXPECT_GE(y[i], y[i - 1]);
  EXPECT_DOUBLE_EQ(y.back(), 0.5);
}

TEST(Plots, PanelWithoutDataRendersPlaceholder) {
  PlotRun run{"train-only", {}};
  MetricsRecord r;
  r.epoch = 1;
  run.records.push_back(r);
  const auto panels = mvae::plots::training_panels({run});
  const auto svg = mvae::plots::render_svg(panels[3]);
  EXPECT_NE(svg.find("no data"), std::string::npos);
}

TEST(Plots, LabelsAreEscaped) {
  mvae::plots::Panel p{"x", "a<b", "y&z", {{"r\"1", {1, 2}, {3, 4}}}};
  const auto svg = mvae::plots::render_svg(p);
  EXPECT_NE(svg.find("a&lt;b"), std::string::npos);
  EXPECT_NE(svg.find("y&amp;z"), std::string::npos);
  EXPECT_NE(svg.find("r&quot;1"), std::string::npos);
}
