#include "grokkit/expcli/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "grokkit/errors.hpp"
#include "grokkit/expcli/report.hpp"

namespace grokkit::expcli {

namespace {

constexpr double kPanelW = 420, kPanelH = 260, kMargin = 50;
constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"};

struct Panel {
  const char* title;
  double (*value)(const metrics::TraceRecord&);
  bool unit_range;
};

const Panel kPanels[] = {
    {"train accuracy", [](const metrics::TraceRecord& r) { return r.train_acc; }, true},
    {"test accuracy", [](const metrics::TraceRecord& r) { return r.test_acc; }, true},
    {"train loss", [](const metrics::TraceRecord& r) { return r.train_loss; }, false},
    {"test loss", [](const metrics::TraceRecord& r) { return r.test_loss; }, false},
};

std::string escape(const std::string& s) {
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

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

}  // namespace

std::string render_svg(const std::vector<PlotSeries>& series) {
  if (series.empty()) throw ArgumentError("plot: no traces given");
  int max_epoch = 1;
  for (const auto& s : series) {
    if (s.trace.empty()) throw ArgumentError("plot: trace '" + s.label + "' has no records");
    max_epoch = std::max(max_epoch, s.trace.back().epoch);
  }
  // Epochs start at 1; one extra decade of room keeps a 1-epoch trace drawable.
  const double x_hi = std::max(1.0, std::log10(static_cast<double>(max_epoch)));

  const double width = 2 * kPanelW + 3 * kMargin, height = 2 * kPanelH + 3 * kMargin + 20.0 * series.size();
  std::ostringstream svg;
  svg << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(width) << "\" height=\"" << num(height)
      << "\" font-family=\"sans-serif\" font-size=\"11\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";

  for (std::size_t p = 0; p < std::size(kPanels); ++p) {
    const Panel& panel = kPanels[p];
    const double ox = kMargin + (p % 2) * (kPanelW + kMargin), oy = kMargin + (p / 2) * (kPanelH + kMargin);
    double y_lo = 0.0, y_hi = 1.0;
    if (!panel.unit_range) {
      y_hi = 0.0;
      for (const auto& s : series)
        for (const auto& r : s.trace.records())
          if (std::isfinite(panel.value(r))) y_hi = std::max(y_hi, panel.value(r));
      if (y_hi <= 0.0) y_hi = 1.0;
    }
    const auto px = [&](int epoch) { return ox + kPanelW * std::log10(static_cast<double>(epoch)) / x_hi; };
    const auto py = [&](double v) { return oy + kPanelH * (1.0 - (std::clamp(v, y_lo, y_hi) - y_lo) / (y_hi - y_lo)); };

    svg << "<g class=\"panel\" data-title=\"" << panel.title << "\">\n"
        << "<rect x=\"" << num(ox) << "\" y=\"" << num(oy) << "\" width=\"" << num(kPanelW) << "\" height=\""
        << num(kPanelH) << "\" fill=\"none\" stroke=\"#444\"/>\n"
        << "<text x=\"" << num(ox + kPanelW / 2) << "\" y=\"" << num(oy - 8) << "\" text-anchor=\"middle\">"
        << panel.title << "</text>\n";
    for (int d = 0; d <= static_cast<int>(std::floor(x_hi)); ++d) {
      const double x = ox + kPanelW * d / x_hi;
      svg << "<line x1=\"" << num(x) << "\" y1=\"" << num(oy + kPanelH) << "\" x2=\"" << num(x) << "\" y2=\""
          << num(oy + kPanelH + 4) << "\" stroke=\"#444\"/>"
          << "<text x=\"" << num(x) << "\" y=\"" << num(oy + kPanelH + 16) << "\" text-anchor=\"middle\">1e" << d
          << "</text>\n";
    }
    svg << "<text x=\"" << num(ox - 6) << "\" y=\"" << num(oy + 4) << "\" text-anchor=\"end\">" << num(y_hi)
        << "</text><text x=\"" << num(ox - 6) << "\" y=\"" << num(oy + kPanelH) << "\" text-anchor=\"end\">"
        << num(y_lo) << "</text>\n";

    for (std::size_t k = 0; k < series.size(); ++k) {
      svg << "<polyline fill=\"none\" stroke-width=\"1.5\" stroke=\"" << kPalette[k % std::size(kPalette)]
          << "\" points=\"";
      bool first = true;
      for (const auto& r : series[k].trace.records()) {
        const double v = panel.value(r);
        if (!std::isfinite(v) || r.epoch < 1) continue;
        svg << (first ? "" : " ") << num(px(r.epoch)) << "," << num(py(v));
        first = false;
      }
      svg << "\"><title>" << escape(series[k].label) << "</title></polyline>\n";
    }
    svg << "</g>\n";
  }

  const double ly = 2 * kPanelH + 3 * kMargin;
  for (std::size_t k = 0; k < series.size(); ++k) {
    const double y = ly + 20.0 * k;
    svg << "<line x1=\"" << num(kMargin) << "\" y1=\"" << num(y) << "\" x2=\"" << num(kMargin + 24) << "\" y2=\""
        << num(y) << "\" stroke=\"" << kPalette[k % std::size(kPalette)] << "\" stroke-width=\"2\"/>"
        << "<text x=\"" << num(kMargin + 30) << "\" y=\"" << num(y + 4) << "\">" << escape(series[k].label)
        << "</text>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

void emit_plot(const std::vector<std::filesystem::path>& csvs, const std::filesystem::path& out) {
  std::vector<PlotSeries> series;
  for (const auto& path : csvs) {
    PlotSeries s;
    const auto parent = path.parent_path().filename().string();
    s.label = path.stem() == "trace" && !parent.empty() ? parent : path.stem().string();
    s.trace = read_trace_csv(path);
    series.push_back(std::move(s));
  }
  const std::string svg = render_svg(series);
  std::ofstream f(out, std::ios::binary | std::ios::trunc);
  if (!f) throw FormatError("cannot open " + out.string() + " for writing");
  f << svg;
  if (!f) throw FormatError("failed writing " + out.string());
}

}  // namespace grokkit::expcli
