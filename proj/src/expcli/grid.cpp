#include "grokkit/expcli/grid.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "grokkit/errors.hpp"
#include "grokkit/expcli/runner.hpp"
#include "grokkit/util.hpp"

namespace grokkit::expcli {

namespace fs = std::filesystem;

std::size_t GridSpec::cell_count() const noexcept {
  if (axes.empty()) return 0;
  std::size_t n = 1;
  for (const auto& a : axes) n *= a.values.size();
  return n;
}

std::vector<std::size_t> GridSpec::cell_index(std::size_t flat) const {
  if (flat >= cell_count()) throw IndexError("grid cell " + std::to_string(flat) + " out of range");
  std::vector<std::size_t> idx(axes.size());
  for (std::size_t k = axes.size(); k-- > 0;) {
    idx[k] = flat % axes[k].values.size();
    flat /= axes[k].values.size();
  }
  return idx;
}

void GridSpec::validate() const {
  if (axes.empty()) throw ConfigError("grid.axes", "needs at least one axis");
  for (std::size_t k = 0; k < axes.size(); ++k) {
    const std::string path = "grid.axes[" + std::to_string(k) + "]";
    if (axes[k].path.empty()) throw ConfigError(path + ".path", "must not be empty");
    if (axes[k].values.empty()) throw ConfigError(path + ".values", "must not be empty");
    for (std::size_t j = 0; j < k; ++j) {
      if (axes[j].path == axes[k].path) throw ConfigError(path + ".path", "duplicates axis " + std::to_string(j));
    }
  }
  if (!(threshold > 0.0 && threshold <= 1.0)) throw ConfigError("grid.threshold", "must lie in (0, 1]");
}

GridSpec parse_grid(const Json& j) {
  if (!j.is_object()) throw ConfigError("grid", "expected an object");
  GridSpec g;
  for (const auto& [key, _] : j.items()) {
    if (key != "axes" && key != "threshold") throw ConfigError("grid." + key, "unknown field");
  }
  if (j.contains("threshold")) {
    if (!j["threshold"].is_number()) throw ConfigError("grid.threshold", "expected a number");
    g.threshold = j["threshold"].get<double>();
  }
  if (!j.contains("axes") || !j["axes"].is_array()) throw ConfigError("grid.axes", "expected an array");
  for (std::size_t k = 0; k < j["axes"].size(); ++k) {
    const auto& a = j["axes"][k];
    const std::string path = "grid.axes[" + std::to_string(k) + "]";
    if (!a.is_object() || !a.contains("path") || !a["path"].is_string()) {
      throw ConfigError(path + ".path", "expected a string");
    }
    if (!a.contains("values") || !a["values"].is_array()) throw ConfigError(path + ".values", "expected an array");
    g.axes.push_back({a["path"].get<std::string>(), std::vector<Json>(a["values"].begin(), a["values"].end())});
  }
  g.validate();
  return g;
}

GridSpec load_grid(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw NotFoundError("cannot open grid " + path.string());
  try {
    return parse_grid(Json::parse(in, nullptr, true, true));
  } catch (const Json::parse_error& e) {
    throw ConfigError("grid", std::string("invalid JSON: ") + e.what());
  }
}

namespace {

std::vector<Json> reals(std::initializer_list<double> v) { return std::vector<Json>(v.begin(), v.end()); }

// 0.1, 0.2, ..., 1.5, optionally led by 0.05.
std::vector<Json> init_scales(bool with_half_tenth) {
  std::vector<Json> out;
  if (with_half_tenth) out.emplace_back(0.05);
  for (int i = 1; i <= 15; ++i) out.emplace_back(i / 10.0);
  return out;
}

}  // namespace

GridSpec grid_preset(const std::string& name) {
  GridSpec g;
  if (name == "embedding-study") {
    g.axes = {{"model.init_scale", init_scales(false)},
              {"train.lr", reals({1e-4, 1e-3, 1e-2, 1e-1, 1.0})},
              {"train.weight_decay", reals({1e-4, 1e-3, 1e-2, 1e-1, 1.0, 5.0, 10.0})}};
  } else if (name == "transfer-target") {
    g.axes = {{"model.init_scale", init_scales(false)},
              {"train.lr", reals({1e-4, 5e-4, 1e-3, 5e-3, 1e-2, 1e-1})},
              {"train.weight_decay", reals({1e-4, 1e-3, 1e-2, 1e-1, 1.0, 2.0, 3.0, 4.0, 5.0})}};
  } else if (name == "scratch-target") {
    g.axes = {{"train.lr", reals({1e-3, 5e-3, 1e-2, 5e-2, 1e-1})},
              {"train.weight_decay", reals({1e-2, 1e-1, 1.0, 2.0, 3.0, 4.0, 5.0})}};
  } else if (name == "extended") {
    g.axes = {{"model.init_scale", init_scales(true)},
              {"train.lr", reals({1e-4, 5e-4, 1e-3, 5e-3, 1e-2, 1e-1, 0.5, 1.0})},
              {"train.weight_decay", reals({1e-4, 1e-3, 1e-2, 1e-1, 1.0, 2.0, 3.0, 4.0, 5.0})}};
    g.threshold = 0.99;
  } else {
    std::string known;
    for (const auto& n : grid_preset_names()) known += (known.empty() ? "" : "|") + n;
    throw ArgumentError("unknown grid preset '" + name + "' (expected " + known + ")");
  }
  return g;
}

std::vector<std::string> grid_preset_names() {
  return {"embedding-study", "transfer-target", "scratch-target", "extended"};
}

CellSummary summarize_cell(std::vector<std::size_t> index, const metrics::TrainingTrace& trace, double threshold) {
  CellSummary c;
  c.index = std::move(index);
  c.status = trace.status;
  for (const auto& r : trace.records()) {
    c.best_test_acc = std::max(c.best_test_acc, r.test_acc);
    if (!c.first_epoch && r.test_acc >= threshold) c.first_epoch = r.epoch;
  }
  return c;
}

Selection select_winner(std::span<const CellSummary> cells) {
  if (cells.empty()) throw ArgumentError("select_winner: no cells");
  const bool any = std::any_of(cells.begin(), cells.end(), [](const CellSummary& c) { return c.first_epoch.has_value(); });
  std::size_t best = cells.size();
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const auto& c = cells[i];
    if (any && !c.first_epoch) continue;
    if (best == cells.size()) {
      best = i;
      continue;
    }
    const auto& b = cells[best];
    const bool better = any ? (*c.first_epoch < *b.first_epoch ||
                               (*c.first_epoch == *b.first_epoch && c.index < b.index))
                            : (c.best_test_acc > b.best_test_acc ||
                               (c.best_test_acc == b.best_test_acc && c.index < b.index));
    if (better) best = i;
  }
  return {best, !any};
}

GridOutcome run_grid(const Json& base, const GridSpec& grid, const fs::path& out, Precision precision, int jobs) {
  grid.validate();
  const std::size_t n = grid.cell_count();
  std::vector<Json> docs(n);
  for (std::size_t i = 0; i < n; ++i) {
    docs[i] = base;
    const auto idx = grid.cell_index(i);
    for (std::size_t k = 0; k < grid.axes.size(); ++k) set_path(docs[i], grid.axes[k].path, grid.axes[k].values[idx[k]]);
    parse_config(docs[i]);  // reject a bad axis before any cell runs
  }

  fs::create_directories(out);
  const auto width = std::to_string(n - 1).size();
  const auto cell_dir = [&](std::size_t i) {
    std::string s = std::to_string(i);
    return out / ("cell_" + std::string(width - s.size(), '0') + s);
  };

  GridOutcome res;
  res.cells.resize(n);
  run_jobs(n, jobs, [&](std::size_t i) {
    const auto dir = cell_dir(i);
    fs::create_directories(dir);
    std::ofstream(dir / "config.json", std::ios::trunc) << docs[i].dump(2) << "\n";
    const auto run = run_experiment(parse_config(docs[i]), dir, precision);
    res.cells[i] = summarize_cell(grid.cell_index(i), run.primary().trace, grid.threshold);
  });

  res.winner = select_winner(res.cells);
  res.winner_config = docs[res.winner.position];

  std::ostringstream table;
  table << "cell";
  for (const auto& a : grid.axes) table << "\t" << a.path;
  table << "\tstatus\tfirst_epoch_at_" << format_real(grid.threshold) << "\tbest_test_acc\n";
  for (std::size_t i = 0; i < n; ++i) {
    const auto& c = res.cells[i];
    table << cell_dir(i).filename().string();
    for (std::size_t k = 0; k < grid.axes.size(); ++k) table << "\t" << grid.axes[k].values[c.index[k]].dump();
    table << "\t" << metrics::to_string(c.status) << "\t" << (c.first_epoch ? std::to_string(*c.first_epoch) : "none")
          << "\t" << format_real(c.best_test_acc) << "\n";
  }
  table << "winner: " << cell_dir(res.winner.position).filename().string()
        << (res.winner.flagged ? " (flagged: no cell reached the threshold, best effort)" : "") << "\n";
  std::ofstream(out / "grid_summary.txt", std::ios::trunc) << table.str();
  std::ofstream(out / "winner.json", std::ios::trunc) << res.winner_config.dump(2) << "\n";
  return res;
}

}  // namespace grokkit::expcli
