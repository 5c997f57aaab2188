#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "grokkit/models.hpp"
#include "grokkit/optim.hpp"
#include "grokkit/tasks.hpp"
#include "grokkit/transfer.hpp"

// Experiment configuration: a JSON document mapped onto the library types.
// Every parse error is a ConfigError carrying the dotted path of the field.
namespace grokkit::expcli {

using Json = nlohmann::json;

// Sub-seed salts; every stream of a run derives from the experiment seed.
inline constexpr std::uint64_t kSaltSplit = 11;
inline constexpr std::uint64_t kSaltModel = 12;
inline constexpr std::uint64_t kSaltTrainOrder = 13;
inline constexpr std::uint64_t kSaltWeakModel = 14;
inline constexpr std::uint64_t kSaltTrainData = 21;
inline constexpr std::uint64_t kSaltTestData = 22;

enum class Precision { F32, F64 };
const char* to_string(Precision p) noexcept;
Precision parse_precision(const std::string& s);

struct ModularTask {
  int p = 113;
  tasks::ModOp op = tasks::ModOp::Add;
  double train_fraction = 0.25;
};

struct ParityTask {
  int q = 40;
  int k = 3;
  std::vector<int> subset{1, 2, 3};
  int n_train = 1000;
  int n_test = 1000;
};

struct XorTask {
  int p = 8000;
  int n = 400;
  double eps = 0.05;
  int n_test = 10000;
};

using TaskSpec = std::variant<ModularTask, ParityTask, XorTask>;

/// Fixed input table for token tasks; absent means the model's own
/// (trainable or factorized) embedding is used.
struct FixedEmbedding {
  tasks::EmbedKind kind = tasks::EmbedKind::OneHot;
  std::filesystem::path path;  ///< External only
};

/// Baseline trained alongside a transfer run; unset fields inherit from the
/// experiment's target model and training config.
struct ScratchBaseline {
  Json model_overrides = Json::object();
  Json train_overrides = Json::object();
};

struct TransferSection {
  transfer::TransferPlan plan;  ///< target_model/target_train mirror the experiment's
  std::optional<ScratchBaseline> scratch;
};

struct ExperimentConfig {
  std::uint64_t seed = 0;
  TaskSpec task = ModularTask{};
  std::optional<FixedEmbedding> embedding;
  models::ModelSpec model;  ///< task-derived fields (vocab, input_dim, classes) already filled
  optim::TrainConfig train;
  /// Stop once train and test accuracy both reach this value.
  std::optional<double> stop_at_accuracy;
  std::optional<TransferSection> transfer;
  Json source;  ///< the document this config was parsed from
};

/// Parses and validates. Missing optional fields take the defaults above.
ExperimentConfig parse_config(const Json& doc);
ExperimentConfig load_config(const std::filesystem::path& path);
/// JSON (comments allowed) from a file, unvalidated.
Json load_document(const std::filesystem::path& path);

/// Sets the value at a dotted path ("train.lr", "model.init_scale"),
/// creating intermediate objects. Throws ConfigError if a step is not an object.
void set_path(Json& doc, const std::string& dotted, const Json& value);

Json model_to_json(const models::ModelSpec& spec);
/// Full spec including task-derived fields, as stored in checkpoints.
models::ModelSpec model_from_json(const Json& j, const std::string& path = "model");
Json train_to_json(const optim::TrainConfig& cfg);
optim::TrainConfig train_from_json(const Json& j, const std::string& path = "train");

}  // namespace grokkit::expcli
