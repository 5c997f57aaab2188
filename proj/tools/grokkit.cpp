// grokkit command-line driver.
#include <CLI11.hpp>

#include <cstdio>
#include <exception>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "grokkit/errors.hpp"
#include "grokkit/expcli/config.hpp"
#include "grokkit/expcli/grid.hpp"
#include "grokkit/expcli/plot.hpp"
#include "grokkit/expcli/runner.hpp"
#include "grokkit/expcli/theory.hpp"

namespace fs = std::filesystem;
using namespace grokkit;
using namespace grokkit::expcli;

namespace {

enum Exit { kOk = 0, kInternal = 1, kConfig = 2, kIo = 3, kNumeric = 4 };

struct Globals {
  std::optional<std::uint64_t> seed;
  std::string out;
  int jobs = 1;
  std::string precision = "f32";
};

Json document(const std::string& path, const Globals& g) {
  Json doc = load_document(path);
  if (g.seed) {
    if (!doc.is_object()) throw ConfigError("", "expected an object");
    doc["seed"] = *g.seed;
  }
  return doc;
}

fs::path out_dir(const Globals& g, const char* fallback) { return g.out.empty() ? fs::path(fallback) : fs::path(g.out); }

int report(const RunResult& r) {
  for (const auto& st : r.stages) std::cout << format_summary(st.summary) << "\n";
  for (const auto& w : r.warnings) std::cerr << "warning: " << w << "\n";
  if (r.diverged()) {
    std::cerr << "error[diverged]: training diverged; partial results written\n";
    return kNumeric;
  }
  return kOk;
}

int cmd_gen(const std::string& config, const Globals& g) {
  const auto cfg = parse_config(document(config, g));
  for (const auto& p : generate_data(cfg, out_dir(g, "data"))) std::cout << "wrote " << p.string() << "\n";
  return kOk;
}

int cmd_run(const std::string& config, const Globals& g, bool transfer_only) {
  const auto cfg = parse_config(document(config, g));
  const auto out = out_dir(g, "run");
  const auto precision = parse_precision(g.precision);
  return report(transfer_only ? run_transfer(cfg, out, precision) : run_experiment(cfg, out, precision));
}

int cmd_grid(const std::string& config, const std::string& grid_file, const std::string& preset,
             std::optional<double> threshold, const Globals& g) {
  if (grid_file.empty() == preset.empty()) throw ArgumentError("grid: give exactly one of --grid or --preset");
  GridSpec spec = preset.empty() ? load_grid(grid_file) : grid_preset(preset);
  if (threshold) spec.threshold = *threshold;
  const auto out = out_dir(g, "grid");
  const auto res = run_grid(document(config, g), spec, out, parse_precision(g.precision), g.jobs);
  std::cout << "cells: " << res.cells.size() << "\nwinner: " << res.winner.position
            << (res.winner.flagged ? " (flagged: best effort)" : "") << "\nsee " << (out / "grid_summary.txt").string()
            << "\n";
  return kOk;
}

int cmd_theory(const std::string& config, const std::string& mode, int seeds, const Globals& g) {
  theoryxor::XorTheoryConfig base;
  if (!config.empty()) base = theory_from_json(load_document(config));
  const auto rep = run_theory(base, parse_theory_mode(mode), g.seed.value_or(0), seeds, out_dir(g, "theory"), g.jobs);
  std::cout << rep.text;
  return kOk;
}

int cmd_plot(const std::vector<std::string>& csvs, const Globals& g) {
  const fs::path out = g.out.empty() ? fs::path("plot.svg") : fs::path(g.out);
  emit_plot(std::vector<fs::path>(csvs.begin(), csvs.end()), out);
  std::cout << "wrote " << out.string() << "\n";
  return kOk;
}

int fail(const char* category, const std::exception& e, int code) {
  std::cerr << "error[" << category << "]: " << e.what() << "\n";
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Grokking and embedding-transfer experiments"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--seed", g.seed, "Override the config's seed (theory-xor: first seed)");
  app.add_option("--out", g.out, "Output directory (plot: output SVG file)");
  app.add_option("--jobs", g.jobs, "Concurrent grid cells or theory seeds")->check(CLI::PositiveNumber);
  app.add_option("--precision", g.precision, "Training precision")->check(CLI::IsMember({"f32", "f64"}));

  std::string config, grid_file, preset, mode = "one-step";
  std::optional<double> threshold;
  int seeds = 10;
  std::vector<std::string> csvs;

  auto* gen = app.add_subcommand("gen", "Write the datasets (and fixed embedding) a config describes");
  gen->add_option("config", config, "Experiment config")->required();
  auto* run = app.add_subcommand("run", "Train the experiment a config describes");
  run->add_option("config", config, "Experiment config")->required();
  auto* tr = app.add_subcommand("transfer", "Run a config's weak -> target transfer pipeline");
  tr->add_option("config", config, "Experiment config with a transfer section")->required();
  auto* grid = app.add_subcommand("grid", "Sweep config fields and pick the first cell to reach a threshold");
  grid->add_option("config", config, "Base experiment config")->required();
  grid->add_option("--grid", grid_file, "Grid spec file");
  grid->add_option("--preset", preset, "Built-in grid")->check(CLI::IsMember(grid_preset_names()));
  grid->add_option("--threshold", threshold, "Override the grid's test-accuracy threshold");
  auto* theory = app.add_subcommand("theory-xor", "XOR cluster theory checks");
  theory->add_option("--config", config, "JSON object of theory parameters");
  theory->add_option("--mode", mode, "one-step | weak | lemma1 | norm-ratio")
      ->check(CLI::IsMember({"one-step", "weak", "lemma1", "norm-ratio"}));
  theory->add_option("--seeds", seeds, "Number of seeds")->check(CLI::PositiveNumber);
  auto* plot = app.add_subcommand("plot", "Render trace CSVs as an SVG chart");
  plot->add_option("csv", csvs, "Trace CSV files")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kConfig;
  }

  try {
    if (*gen) return cmd_gen(config, g);
    if (*run) return cmd_run(config, g, false);
    if (*tr) return cmd_run(config, g, true);
    if (*grid) return cmd_grid(config, grid_file, preset, threshold, g);
    if (*theory) return cmd_theory(config, mode, seeds, g);
    if (*plot) return cmd_plot(csvs, g);
  } catch (const ArgumentError& e) {
    return fail("config", e, kConfig);
  } catch (const DimensionError& e) {
    return fail("config", e, kConfig);
  } catch (const NotFoundError& e) {
    return fail("io", e, kIo);
  } catch (const FormatError& e) {
    return fail("format", e, kIo);
  } catch (const fs::filesystem_error& e) {
    return fail("io", e, kIo);
  } catch (const std::exception& e) {
    return fail("internal", e, kInternal);
  }
  return kInternal;
}
