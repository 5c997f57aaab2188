#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "grokkit/models.hpp"
#include "grokkit/nd/tensor.hpp"
#include "grokkit/tasks.hpp"

namespace grokkit::metrics {

/// Non-owning view of a labelled dataset in the form a model consumes.
/// Classifier data carries class indices; scalar data carries +-1 labels.
template <typename T>
struct DataView {
  models::Inputs<T> inputs;
  std::span<const int> classes;
  std::span<const T> signs;

  static DataView of(const tasks::TokenDataset& ds);
  static DataView of(const tasks::VectorDataset<T>& ds);
  bool is_classification() const noexcept { return !classes.empty(); }
  std::size_t size() const noexcept;
};

struct TraceRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double test_loss = 0.0;
  double train_acc = 0.0;
  double test_acc = 0.0;
  std::optional<double> ntk_drift;
  std::optional<double> r_w;
  std::optional<double> wallclock_ms;
};

enum class RunStatus { Completed, Stopped, Diverged };
const char* to_string(RunStatus s) noexcept;

/// Per-epoch records. Epochs strictly increase; accuracies lie in [0, 1].
class TrainingTrace {
 public:
  /// Throws ArgumentError if the record breaks an invariant.
  void append(const TraceRecord& r);
  const std::vector<TraceRecord>& records() const noexcept { return records_; }
  bool empty() const noexcept { return records_.empty(); }
  const TraceRecord& back() const { return records_.back(); }
  /// Records with epoch <= `epoch`.
  TrainingTrace prefix(int epoch) const;

  RunStatus status = RunStatus::Completed;
  std::uint64_t ntk_seed = 0;

 private:
  std::vector<TraceRecord> records_;
};

struct TimeGapResult {
  std::optional<int> epoch_train;  ///< first epoch with train_acc >= threshold
  std::optional<int> epoch_test;   ///< first epoch with test_acc >= threshold
  std::optional<int> gap;          ///< epoch_test - epoch_train when both exist
  double reciprocal = 0.0;         ///< 1/gap for gap >= 1, 0 when undefined
};

/// Throws ArgumentError on an empty trace.
TimeGapResult time_gap(const TrainingTrace& trace, double threshold = 0.95);

/// Fraction of correct predictions. Classifiers: argmax (ties -> lowest
/// index) equals the label. Scalar outputs: sign(output) equals the label,
/// with sign(0) counted as incorrect.
template <typename T>
double accuracy_from_outputs(const nd::Tensor2<T>& outputs, const DataView<T>& data);

template <typename T>
double accuracy(models::Model<T>& model, const DataView<T>& data);

/// Kernel over `points`: K(x1, x2) = <grad sum_i f_i(x1), grad sum_i f_i(x2)> / outputs,
/// gradients taken over all trainable parameters. Leaves parameter values
/// untouched and parameter gradients cleared.
template <typename T>
nd::Tensor2<double> pseudo_ntk(models::Model<T>& model, const DataView<T>& points);

/// Frobenius norm of k_t - k_prev.
double ntk_drift(const nd::Tensor2<double>& k_t, const nd::Tensor2<double>& k_prev);

/// RMS norm of rows 3..p over RMS norm of rows 1..2 of a p x width matrix.
/// Throws ArgumentError when p < 3 or rows 1..2 are all zero.
template <typename T>
double norm_ratio(const nd::Tensor2<T>& w);

enum class XorFeature { PlusMu1, MinusMu1, PlusMu2, MinusMu2 };
const char* to_string(XorFeature f) noexcept;

struct FeatureMatch {
  XorFeature feature = XorFeature::PlusMu1;
  double cosine = 0.0;  ///< cosine of the column's first two coords with the feature
};

/// Nearest of {+-[1,1], +-[-1,1]} for the first two coordinates of each
/// column of a p x m matrix.
template <typename T>
std::vector<FeatureMatch> feature_alignment(const nd::Tensor2<T>& w);

/// Number of distinct features matched with cosine >= threshold.
int feature_coverage(std::span<const FeatureMatch> matches, double threshold = 0.9);

struct FlopsEstimate {
  /// FNN: 2 * (sum of layer multiply-adds + token lookups + 2 * outputs).
  /// Transformer: 2 * (N + n_layer * n_ctx * d_attn).
  double forward = 0.0;
  /// Transformer only: N = 2 * d_embed * n_layer * (2 * d_attn + d_mlp).
  double non_embedding = 0.0;
  /// Token lookup / unembedding cost; zero-layer transformers cost only this.
  double embedding = 0.0;
  double total() const noexcept { return forward + embedding; }
};

/// Forward-pass FLOPs per sample. For transformers d_attn is the per-head
/// width d_head.
FlopsEstimate flops_estimate(const models::ModelSpec& spec);

}  // namespace grokkit::metrics
