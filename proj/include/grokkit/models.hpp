#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "grokkit/nd/graph.hpp"
#include "grokkit/nd/tensor.hpp"

namespace grokkit::models {

enum class ModelKind { Fnn, XorNet, Transformer };
enum class InputKind { Tokens, Dense };

/// How the first stage of a model (token table, or first dense layer for
/// dense inputs) is parameterized.
enum class EmbeddingMode {
  Trainable,   ///< one trainable table / matrix
  Fixed,       ///< non-trainable table supplied by the caller
  Factorized,  ///< trainable product A * B
};

const char* to_string(ModelKind k) noexcept;
const char* to_string(EmbeddingMode m) noexcept;
EmbeddingMode parse_embedding_mode(const std::string& s);

/// Bias-free ReLU feed-forward network. Token inputs (vocab > 0) look up both
/// tokens and concatenate their embeddings; dense inputs (vocab == 0) feed
/// `input_dim` features straight into the first dense layer.
struct FnnConfig {
  int depth = 3;          ///< number of dense layers, 2 or 3
  int vocab = 0;          ///< token vocabulary p; 0 for dense inputs
  int input_dim = 0;      ///< dense input width (vocab == 0 only)
  int d_embed = 0;        ///< embedding width (token inputs)
  int width = 0;          ///< hidden width
  int out_classes = 1;    ///< p for modular tasks, 1 for scalar-output tasks
  double init_scale = 1.0;
  EmbeddingMode embedding = EmbeddingMode::Trainable;
  int factor_rank = 0;    ///< inner dimension of A * B when factorized
  double factor_b_scale = 0.0;  ///< std of B entries; 0 means 1/sqrt(factor_rank)

  /// Token-input network with the d_mlp = 4 * d_embed width convention.
  static FnnConfig with_mlp_ratio(int vocab, int d_embed, int depth, int out_classes,
                                  double init_scale = 1.0);
  InputKind input_kind() const noexcept { return vocab > 0 ? InputKind::Tokens : InputKind::Dense; }
  /// Width of the vector entering the first dense layer.
  int first_layer_fan_in() const noexcept { return vocab > 0 ? 2 * d_embed : input_dim; }
  void validate() const;
};

enum class XorInit {
  Gaussian,  ///< w_j ~ N(0, w_init^2 I), a_j ~ N(0, a_init^2); f = sum a_j relu(<w_j, x>)
  Discrete,  ///< a_j ~ U{+-1/sqrt(m)}, v_j ~ U{+-v_init}^3; f = sum a_j relu(<v_j, U^T x>)
};

struct XorNetConfig {
  int input_dim = 0;  ///< p
  int width = 3;      ///< m
  XorInit init = XorInit::Gaussian;
  double w_init = 0.1;
  double a_init = 0.01;
  double v_init = 0.4;
  int embed_dim = 3;  ///< columns of U (Discrete mode)
  bool freeze_a = false;
  bool freeze_u = true;
  void validate() const;
};

/// Decoder-only transformer over exactly two tokens: token + learned
/// positional embeddings, per layer causal multi-head attention and a ReLU
/// MLP, both residual, no normalization and no biases. Logits are read at
/// the second position.
struct TransformerConfig {
  int n_layers = 1;
  int d_embed = 128;
  int d_mlp = 512;
  int n_head = 4;
  int d_head = 32;
  int vocab = 113;
  double init_scale = 1.0;
  EmbeddingMode embedding = EmbeddingMode::Trainable;
  int factor_rank = 0;
  double factor_b_scale = 0.0;
  int readout_position = 1;  ///< position whose residual stream is unembedded
  static constexpr int kContext = 2;
  void validate() const;
};

using ModelSpec = std::variant<FnnConfig, XorNetConfig, TransformerConfig>;

ModelKind kind_of(const ModelSpec& spec) noexcept;
InputKind input_kind_of(const ModelSpec& spec) noexcept;
std::size_t output_dim_of(const ModelSpec& spec) noexcept;

/// Two token columns (a, b) of equal length.
struct TokenInputs {
  std::span<const int> a;
  std::span<const int> b;
  std::size_t size() const noexcept { return a.size(); }
};

template <typename T>
using Inputs = std::variant<TokenInputs, const nd::Tensor2<T>*>;

/// A parameterized differentiable function with ordered, uniquely named
/// parameter groups.
template <typename T>
class Model {
 public:
  explicit Model(ModelSpec spec) : spec_(std::move(spec)) {}
  virtual ~Model() = default;
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  const ModelSpec& spec() const noexcept { return spec_; }
  ModelKind kind() const noexcept { return kind_of(spec_); }
  InputKind input_kind() const noexcept { return input_kind_of(spec_); }
  /// Number of classes, or 1 for scalar-output models.
  std::size_t output_dim() const noexcept { return output_dim_of(spec_); }

  /// Adds the forward computation to `g` and returns the output node:
  /// [batch x classes] logits or a [batch x 1] score column.
  /// Throws ArgumentError if `in` does not match input_kind().
  nd::Var forward(nd::Graph<T>& g, const Inputs<T>& in);

  std::vector<nd::ParamGroup<T>>& params() noexcept { return params_; }
  const std::vector<nd::ParamGroup<T>>& params() const noexcept { return params_; }
  nd::ParamGroup<T>* find(const std::string& name) noexcept;
  const nd::ParamGroup<T>* find(const std::string& name) const noexcept;
  /// Like find() but throws NotFoundError listing the available names.
  nd::ParamGroup<T>& at(const std::string& name);
  const nd::ParamGroup<T>& at(const std::string& name) const;
  std::string param_names() const;
  std::size_t parameter_count() const noexcept;
  void zero_grad();

 protected:
  virtual nd::Var forward_impl(nd::Graph<T>& g, const Inputs<T>& in) = 0;
  nd::ParamGroup<T>& add_param(std::string name, nd::Tensor2<T> value, bool trainable = true);

  ModelSpec spec_;
  std::vector<nd::ParamGroup<T>> params_;
};

/// Builds an FNN. For EmbeddingMode::Fixed, `fixed_table` (vocab x d_embed)
/// supplies the non-trainable table; when omitted a zero table is allocated
/// (used when the values are restored from a checkpoint).
template <typename T>
std::unique_ptr<Model<T>> build_fnn(const FnnConfig& cfg, std::uint64_t seed,
                                    const nd::Tensor2<double>* fixed_table = nullptr);

/// Builds an XOR network. Discrete mode requires `u` (input_dim x embed_dim)
/// unless `allow_missing_u` is set (checkpoint restore), else ArgumentError.
template <typename T>
std::unique_ptr<Model<T>> build_xor_net(const XorNetConfig& cfg, std::uint64_t seed,
                                        const nd::Tensor2<double>* u = nullptr,
                                        bool allow_missing_u = false);

template <typename T>
std::unique_ptr<Model<T>> build_transformer(const TransformerConfig& cfg, std::uint64_t seed);

/// Dispatch on the spec alternative. Fixed tables / U default to zeros.
template <typename T>
std::unique_ptr<Model<T>> build_model(const ModelSpec& spec, std::uint64_t seed);

/// Runs a forward pass in a scratch graph and returns the outputs.
template <typename T>
nd::Tensor2<T> predict(Model<T>& model, const Inputs<T>& in);

}  // namespace grokkit::models
