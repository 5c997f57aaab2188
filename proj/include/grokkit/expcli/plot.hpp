#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "grokkit/metrics.hpp"

namespace grokkit::expcli {

struct PlotSeries {
  std::string label;
  metrics::TrainingTrace trace;
};

/// Static SVG with four panels (train/test accuracy, train/test loss) on a
/// log10 epoch axis, one polyline per series in every panel.
/// Throws ArgumentError for no series or an empty trace.
std::string render_svg(const std::vector<PlotSeries>& series);

/// Reads each trace CSV (label = file stem of its directory or name) and
/// writes the SVG. No file is created when any input is rejected.
void emit_plot(const std::vector<std::filesystem::path>& csvs, const std::filesystem::path& out);

}  // namespace grokkit::expcli
