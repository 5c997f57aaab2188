#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "grokkit/metrics.hpp"
#include "grokkit/models.hpp"

namespace grokkit::expcli {

inline constexpr const char* kTraceHeader = "epoch,train_loss,test_loss,train_acc,test_acc,ntk_drift,r_W,wallclock_ms";

/// One row per record; unmeasured fields are empty cells. Reals use the
/// shortest round-trip form, so equal traces give equal bytes.
std::string trace_csv(const metrics::TrainingTrace& trace);
void write_trace_csv(const metrics::TrainingTrace& trace, const std::filesystem::path& path);

/// Throws FormatError naming the offending column or line when the header
/// differs from kTraceHeader or a cell does not parse.
metrics::TrainingTrace read_trace_csv(const std::filesystem::path& path);

struct RunSummary {
  std::string label;
  metrics::RunStatus status = metrics::RunStatus::Completed;
  int epochs = 0;
  double final_train_loss = 0.0;
  double final_test_loss = 0.0;
  double final_train_acc = 0.0;
  double final_test_acc = 0.0;
  double best_test_acc = 0.0;
  metrics::TimeGapResult time_gap;
  double forward_flops = 0.0;   ///< per sample
  double training_flops = 0.0;  ///< 3 x forward x train samples x epochs
  std::size_t parameters = 0;
  std::vector<std::string> notes;
};

RunSummary summarize(const std::string& label, const metrics::TrainingTrace& trace, const models::ModelSpec& spec,
                     std::size_t parameters, std::size_t train_samples);

/// `key: value` lines; `time_gap: none` when generalization never happened.
std::string format_summary(const RunSummary& s);
void write_summary(const RunSummary& s, const std::filesystem::path& path);

}  // namespace grokkit::expcli
