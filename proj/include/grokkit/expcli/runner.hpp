#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "grokkit/expcli/config.hpp"
#include "grokkit/expcli/report.hpp"
#include "grokkit/metrics.hpp"

namespace grokkit::expcli {

/// One trained model and where its artifacts went.
struct StageResult {
  RunSummary summary;
  metrics::TrainingTrace trace;
  std::filesystem::path dir;
};

struct RunResult {
  std::vector<StageResult> stages;  ///< single run: one stage; transfer: weak, target[, scratch]
  std::vector<std::string> warnings;
  /// The stage a grid ranks: the run itself, or the transfer target.
  const StageResult& primary() const;
  bool diverged() const noexcept;
};

/// Trains the configured model and writes trace.csv, model.ckpt and
/// summary.txt into `out`. A config with a transfer section runs the
/// pipeline instead (see run_transfer).
RunResult run_experiment(const ExperimentConfig& cfg, const std::filesystem::path& out, Precision precision);

/// Weak model, harvest, target, and the optional scratch baseline, each in
/// its own subdirectory of `out` (weak/, target/, scratch/), plus a combined
/// summary.txt. Throws ConfigError if the config has no transfer section.
RunResult run_transfer(const ExperimentConfig& cfg, const std::filesystem::path& out, Precision precision);

/// Writes the generated train/test sets (and any fixed embedding table)
/// as text files under `out`. Returns the files written.
std::vector<std::filesystem::path> generate_data(const ExperimentConfig& cfg, const std::filesystem::path& out);

/// Runs fn(0..count-1) on up to `jobs` threads; each job runs its kernels
/// single-threaded. The first exception is rethrown after all jobs finish.
void run_jobs(std::size_t count, int jobs, const std::function<void(std::size_t)>& fn);

}  // namespace grokkit::expcli
