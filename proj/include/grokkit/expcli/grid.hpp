#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "grokkit/expcli/config.hpp"
#include "grokkit/metrics.hpp"

namespace grokkit::expcli {

/// One swept config field, addressed by dotted path ("train.lr").
struct GridAxis {
  std::string path;
  std::vector<Json> values;
};

struct GridSpec {
  std::vector<GridAxis> axes;
  double threshold = 0.9;  ///< test accuracy a cell must reach

  std::size_t cell_count() const noexcept;
  /// Row-major multi-index of a flat cell number; the last axis varies fastest.
  std::vector<std::size_t> cell_index(std::size_t flat) const;
  void validate() const;
};

/// {"threshold": 0.9, "axes": [{"path": "train.lr", "values": [...]}, ...]}
GridSpec parse_grid(const Json& j);
GridSpec load_grid(const std::filesystem::path& path);

/// Built-in grids: "embedding-study", "transfer-target", "scratch-target",
/// "extended".
GridSpec grid_preset(const std::string& name);
std::vector<std::string> grid_preset_names();

struct CellSummary {
  std::vector<std::size_t> index;
  std::optional<int> first_epoch;  ///< first recorded epoch with test_acc >= threshold
  double best_test_acc = 0.0;
  metrics::RunStatus status = metrics::RunStatus::Completed;
};

CellSummary summarize_cell(std::vector<std::size_t> index, const metrics::TrainingTrace& trace, double threshold);

struct Selection {
  std::size_t position = 0;  ///< into the summaries passed to select_winner
  bool flagged = false;      ///< no cell reached the threshold; best-effort pick
};

/// Earliest first_epoch wins, ties to the lexicographically smallest index.
/// With no cell at threshold, the highest best_test_acc wins (same tie rule)
/// and the result is flagged. Throws ArgumentError for an empty list.
Selection select_winner(std::span<const CellSummary> cells);

struct GridOutcome {
  std::vector<CellSummary> cells;
  Selection winner;
  Json winner_config;
};

/// Runs every cell of `grid` over `base` (a config document) with up to
/// `jobs` concurrent cells. Cell k writes into out/cell_<k>/; the winner's
/// config and a table of all cells are written to out/.
GridOutcome run_grid(const Json& base, const GridSpec& grid, const std::filesystem::path& out, Precision precision,
                     int jobs);

}  // namespace grokkit::expcli
