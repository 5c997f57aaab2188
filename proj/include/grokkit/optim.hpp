#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "grokkit/metrics.hpp"
#include "grokkit/models.hpp"
#include "grokkit/nd/graph.hpp"

namespace grokkit::optim {

/// theta <- (1 - lambda) * theta - lr * grad on trainable groups. A trainable
/// group without a gradient is only decayed.
struct GdWdConfig {
  double lr = 0.1;
  double lambda = 0.0;
};

template <typename T>
void gd_wd_step(std::span<nd::ParamGroup<T>> params, const GdWdConfig& cfg);

struct AdamWConfig {
  double lr = 1e-3;
  double weight_decay = 0.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// First and second moment buffers, one pair per parameter group.
template <typename T>
struct AdamWState {
  std::vector<nd::Tensor2<T>> m;
  std::vector<nd::Tensor2<T>> v;
  long long step = 0;

  /// Zeroed moments matching the shapes of `params`.
  static AdamWState like(std::span<const nd::ParamGroup<T>> params);
};

/// Decoupled weight decay theta *= (1 - lr * wd) (skipped for decay_exempt
/// groups), then the bias-corrected Adam update. Increments state.step.
/// Throws DimensionError if the state does not match the parameters.
template <typename T>
void adamw_step(std::span<nd::ParamGroup<T>> params, AdamWState<T>& state, const AdamWConfig& cfg);

enum class OptimizerKind { GdWd, AdamW };
enum class LossKind { CrossEntropy, Exponential, Logistic };

const char* to_string(OptimizerKind k) noexcept;
const char* to_string(LossKind k) noexcept;
OptimizerKind parse_optimizer(const std::string& s);
LossKind parse_loss(const std::string& s);

struct TrainConfig {
  OptimizerKind optimizer = OptimizerKind::AdamW;
  double lr = 1e-3;
  /// AdamW: decoupled weight decay. GdWd: the per-step shrink factor lambda.
  double weight_decay = 0.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  LossKind loss = LossKind::CrossEntropy;
  int epochs = 100;
  std::size_t batch_size = 0;  ///< 0: full batch
  int eval_every = 1;          ///< record cadence in epochs; the last epoch is always recorded
  std::uint64_t seed = 0;      ///< minibatch order and NTK subsample
  int ntk_every = 0;           ///< 0: no NTK tracking
  std::size_t ntk_points = 64;
  std::string norm_ratio_group;  ///< record r_W of this group when non-empty
  bool record_wallclock = false;
  std::vector<std::string> decay_exempt;  ///< group names excluded from AdamW decay
};

/// Called after each record; return true to stop early.
template <typename T>
using StopFn = std::function<bool(const metrics::TraceRecord&, models::Model<T>&)>;

/// Stop once both accuracies reach `threshold`.
template <typename T>
StopFn<T> stop_when_both_reach(double threshold);

/// Trains `model` in place. Each epoch performs one pass over `train`
/// (one step when full batch), then records losses and accuracies of the
/// updated model on both sets. A non-finite loss ends the run with
/// RunStatus::Diverged.
template <typename T>
metrics::TrainingTrace train(models::Model<T>& model, const metrics::DataView<T>& train_data,
                             const metrics::DataView<T>& test_data, const TrainConfig& cfg,
                             const StopFn<T>& stop = {});

/// Mean loss of the model outputs, no regularization.
template <typename T>
double evaluate_loss(models::Model<T>& model, const metrics::DataView<T>& data, LossKind loss);

}  // namespace grokkit::optim
