#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "grokkit/metrics.hpp"
#include "grokkit/models.hpp"
#include "grokkit/nd/tensor.hpp"
#include "grokkit/optim.hpp"

namespace grokkit::transfer {

/// Stop the weak model once its test accuracy reaches `test_acc`, or after
/// `max_epochs` if it never does.
struct StopAtAccuracy {
  double test_acc = 0.3;
  int max_epochs = 10000;
};

/// Stop the weak model after exactly `epoch` epochs.
struct StopAtEpoch {
  int epoch = 1000;
};

using StopCriterion = std::variant<StopAtAccuracy, StopAtEpoch>;

enum class EmbeddingInit {
  Transfer,        ///< A := weak embedding, B random
  RandomAblation,  ///< A and B both random
};

const char* to_string(EmbeddingInit m) noexcept;
EmbeddingInit parse_embedding_init(const std::string& s);

struct TransferPlan {
  models::ModelSpec weak_model;
  optim::TrainConfig weak_train;
  std::uint64_t weak_seed = 0;
  StopCriterion stop = StopAtAccuracy{};

  models::ModelSpec target_model;
  optim::TrainConfig target_train;
  std::uint64_t target_seed = 1;

  EmbeddingInit mode = EmbeddingInit::Transfer;
  double b_scale = 0.0;  ///< std of B entries; 0 means 1/sqrt(d_W)

  void validate() const;
};

/// State of the weak model at the moment its embedding was harvested.
template <typename T>
struct WeakCheckpoint {
  models::ModelSpec spec;
  std::vector<nd::ParamGroup<T>> params;
  metrics::TrainingTrace trace;
  int epoch = 0;
  double test_acc = 0.0;
  bool reached_threshold = true;  ///< false when an accuracy stop ran out of budget
};

/// Group names searched, in order, for the weak embedding.
inline constexpr const char* kEmbeddingGroups[] = {"embedding", "dense1", "W", "U"};

/// Copy of the weak embedding table (vocab x d_W). A factorized weak model
/// yields the product A * B. Throws NotFoundError naming the available groups.
template <typename T>
nd::Tensor2<T> extract_embedding(std::span<const nd::ParamGroup<T>> params);
template <typename T>
nd::Tensor2<T> extract_embedding(const WeakCheckpoint<T>& ckpt);

/// Trains the weak model on the plan's stop criterion. Accuracy stops are
/// evaluated every epoch.
template <typename T>
WeakCheckpoint<T> run_weak(const TransferPlan& plan, const metrics::DataView<T>& train_data,
                           const metrics::DataView<T>& test_data);

template <typename T>
struct TargetInit {
  std::unique_ptr<models::Model<T>> model;
  std::vector<std::string> warnings;
};

/// Builds the target with its first stage factorized as A * B (inner
/// dimension d_W). Transfer mode copies `weak_embedding` into A; B is drawn
/// from the target seed either way, so both modes share B for equal seeds.
/// A discrete XOR target takes `weak_embedding` as its fixed U instead.
/// Throws DimensionError when the vocabulary (or input width) disagrees.
template <typename T>
TargetInit<T> init_target(const nd::Tensor2<T>& weak_embedding, const models::ModelSpec& target,
                          EmbeddingInit mode, std::uint64_t seed, double b_scale = 0.0);

template <typename T>
struct TransferResult {
  WeakCheckpoint<T> weak;
  std::unique_ptr<models::Model<T>> target;
  metrics::TrainingTrace target_trace;
  std::vector<std::string> warnings;
};

/// run_weak, extract_embedding, init_target, then target training.
template <typename T>
TransferResult<T> run_embedding_transfer(const TransferPlan& plan, const metrics::DataView<T>& train_data,
                                   const metrics::DataView<T>& test_data);

}  // namespace grokkit::transfer
