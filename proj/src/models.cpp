#include "grokkit/models.hpp"

#include <cmath>
#include <type_traits>

#include "grokkit/errors.hpp"
#include "grokkit/rng.hpp"

namespace grokkit::models {

using nd::Graph;
using nd::ParamGroup;
using nd::Tensor2;
using nd::Var;

const char* to_string(ModelKind k) noexcept {
  switch (k) {
    case ModelKind::Fnn: return "fnn";
    case ModelKind::XorNet: return "xor";
    case ModelKind::Transformer: return "transformer";
  }
  return "?";
}

const char* to_string(EmbeddingMode m) noexcept {
  switch (m) {
    case EmbeddingMode::Trainable: return "trainable";
    case EmbeddingMode::Fixed: return "fixed";
    case EmbeddingMode::Factorized: return "factorized";
  }
  return "?";
}

EmbeddingMode parse_embedding_mode(const std::string& s) {
  if (s == "trainable") return EmbeddingMode::Trainable;
  if (s == "fixed") return EmbeddingMode::Fixed;
  if (s == "factorized") return EmbeddingMode::Factorized;
  throw ArgumentError("unknown embedding mode '" + s + "' (expected trainable|fixed|factorized)");
}

FnnConfig FnnConfig::with_mlp_ratio(int vocab, int d_embed, int depth, int out_classes,
                                    double init_scale) {
  FnnConfig c;
  c.depth = depth;
  c.vocab = vocab;
  c.d_embed = d_embed;
  c.width = 4 * d_embed;
  c.out_classes = out_classes;
  c.init_scale = init_scale;
  return c;
}

void FnnConfig::validate() const {
  if (depth != 2 && depth != 3) throw ArgumentError("fnn: depth must be 2 or 3");
  if (vocab < 0) throw ArgumentError("fnn: vocab must be >= 0");
  if (vocab > 0 && d_embed < 1) throw ArgumentError("fnn: d_embed must be >= 1 for token inputs");
  if (vocab == 0 && input_dim < 1) throw ArgumentError("fnn: input_dim must be >= 1 for dense inputs");
  if (vocab == 0 && embedding == EmbeddingMode::Fixed) {
    throw ArgumentError("fnn: fixed embeddings require token inputs");
  }
  if (width < 1) throw ArgumentError("fnn: width must be >= 1");
  if (out_classes < 1) throw ArgumentError("fnn: out_classes must be >= 1");
  if (!(init_scale > 0.0)) throw ArgumentError("fnn: init_scale must be > 0");
  if (embedding == EmbeddingMode::Factorized && factor_rank < 1) {
    throw ArgumentError("fnn: factorized embedding needs factor_rank >= 1");
  }
}

void XorNetConfig::validate() const {
  if (input_dim < 1) throw ArgumentError("xor: input_dim must be >= 1");
  if (width < 1) throw ArgumentError("xor: width must be >= 1");
  if (init == XorInit::Gaussian && (!(w_init > 0.0) || !(a_init > 0.0))) {
    throw ArgumentError("xor: w_init and a_init must be > 0");
  }
  if (init == XorInit::Discrete && (!(v_init > 0.0) || embed_dim < 1)) {
    throw ArgumentError("xor: v_init must be > 0 and embed_dim >= 1");
  }
}

void TransformerConfig::validate() const {
  if (n_layers < 0) throw ArgumentError("transformer: n_layers must be >= 0");
  if (d_embed < 1 || d_mlp < 1 || n_head < 1 || d_head < 1 || vocab < 2) {
    throw ArgumentError("transformer: dimensions must be positive and vocab >= 2");
  }
  if (!(init_scale > 0.0)) throw ArgumentError("transformer: init_scale must be > 0");
  if (readout_position != 0 && readout_position != 1) {
    throw ArgumentError("transformer: readout_position must be 0 or 1");
  }
  if (embedding == EmbeddingMode::Fixed) throw ArgumentError("transformer: fixed embeddings unsupported");
  if (embedding == EmbeddingMode::Factorized && factor_rank < 1) {
    throw ArgumentError("transformer: factorized embedding needs factor_rank >= 1");
  }
}

ModelKind kind_of(const ModelSpec& spec) noexcept {
  return std::visit(
      [](const auto& c) {
        using C = std::decay_t<decltype(c)>;
        if constexpr (std::is_same_v<C, FnnConfig>) return ModelKind::Fnn;
        else if constexpr (std::is_same_v<C, XorNetConfig>) return ModelKind::XorNet;
        else return ModelKind::Transformer;
      },
      spec);
}

InputKind input_kind_of(const ModelSpec& spec) noexcept {
  return std::visit(
      [](const auto& c) {
        using C = std::decay_t<decltype(c)>;
        if constexpr (std::is_same_v<C, FnnConfig>) return c.input_kind();
        else if constexpr (std::is_same_v<C, XorNetConfig>) return InputKind::Dense;
        else return InputKind::Tokens;
      },
      spec);
}

std::size_t output_dim_of(const ModelSpec& spec) noexcept {
  return std::visit(
      [](const auto& c) -> std::size_t {
        using C = std::decay_t<decltype(c)>;
        if constexpr (std::is_same_v<C, FnnConfig>) return static_cast<std::size_t>(c.out_classes);
        else if constexpr (std::is_same_v<C, XorNetConfig>) return 1;
        else return static_cast<std::size_t>(c.vocab);
      },
      spec);
}

// ---------------------------------------------------------------------------
// Model base

template <typename T>
Var Model<T>::forward(Graph<T>& g, const Inputs<T>& in) {
  const bool tokens = std::holds_alternative<TokenInputs>(in);
  if (tokens != (input_kind() == InputKind::Tokens)) {
    throw ArgumentError(std::string("forward: ") + to_string(kind()) + " model expects " +
                        (input_kind() == InputKind::Tokens ? "token" : "dense") + " inputs");
  }
  if (tokens) {
    const auto& t = std::get<TokenInputs>(in);
    if (t.a.size() != t.b.size()) throw DimensionError("forward: token columns differ in length");
  } else if (std::get<const Tensor2<T>*>(in) == nullptr) {
    throw ArgumentError("forward: null dense input");
  }
  return forward_impl(g, in);
}

template <typename T>
ParamGroup<T>* Model<T>::find(const std::string& name) noexcept {
  for (auto& p : params_)
    if (p.name == name) return &p;
  return nullptr;
}

template <typename T>
const ParamGroup<T>* Model<T>::find(const std::string& name) const noexcept {
  for (const auto& p : params_)
    if (p.name == name) return &p;
  return nullptr;
}

template <typename T>
std::string Model<T>::param_names() const {
  std::string s;
  for (const auto& p : params_) {
    if (!s.empty()) s += ", ";
    s += p.name;
  }
  return s;
}

template <typename T>
ParamGroup<T>& Model<T>::at(const std::string& name) {
  if (auto* p = find(name)) return *p;
  throw NotFoundError("no parameter group '" + name + "'; available: " + param_names());
}

template <typename T>
const ParamGroup<T>& Model<T>::at(const std::string& name) const {
  if (const auto* p = find(name)) return *p;
  throw NotFoundError("no parameter group '" + name + "'; available: " + param_names());
}

template <typename T>
std::size_t Model<T>::parameter_count() const noexcept {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

template <typename T>
void Model<T>::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

template <typename T>
ParamGroup<T>& Model<T>::add_param(std::string name, Tensor2<T> value, bool trainable) {
  if (find(name) != nullptr) throw ArgumentError("duplicate parameter group '" + name + "'");
  ParamGroup<T> p;
  p.name = std::move(name);
  p.value = std::move(value);
  p.trainable = trainable;
  params_.push_back(std::move(p));
  return params_.back();
}

namespace {

// Dense weight stored fan_in x fan_out, uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) * scale.
template <typename T>
Tensor2<T> dense_init(SplitMix64& rng, std::size_t fan_in, std::size_t fan_out, double scale) {
  Tensor2<T> w(fan_in, fan_out);
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (T& v : w.data()) v = static_cast<T>(rng.uniform(-bound, bound) * scale);
  return w;
}

template <typename T>
Tensor2<T> normal_init(SplitMix64& rng, std::size_t rows, std::size_t cols, double std) {
  Tensor2<T> w(rows, cols);
  for (T& v : w.data()) v = static_cast<T>(rng.normal() * std);
  return w;
}

double b_scale_for(int rank, double configured) {
  return configured > 0.0 ? configured : 1.0 / std::sqrt(static_cast<double>(rank));
}

// ---------------------------------------------------------------------------

template <typename T>
class FnnModel final : public Model<T> {
 public:
  FnnModel(const FnnConfig& cfg, std::uint64_t seed, const Tensor2<double>* fixed_table)
      : Model<T>(cfg), cfg_(cfg) {
    cfg.validate();
    SplitMix64 rng(seed);
    const auto fan_in0 = static_cast<std::size_t>(cfg.first_layer_fan_in());
    const auto width = static_cast<std::size_t>(cfg.width);
    const auto out = static_cast<std::size_t>(cfg.out_classes);

    if (cfg.vocab > 0) {
      const auto vocab = static_cast<std::size_t>(cfg.vocab);
      const auto d = static_cast<std::size_t>(cfg.d_embed);
      switch (cfg.embedding) {
        case EmbeddingMode::Trainable:
          this->add_param("embedding", normal_init<T>(rng, vocab, d, cfg.init_scale));
          break;
        case EmbeddingMode::Fixed: {
          Tensor2<T> table(vocab, d);
          if (fixed_table != nullptr) {
            if (fixed_table->rows() != vocab || fixed_table->cols() != d) {
              throw DimensionError("fnn: fixed table " + fixed_table->shape() + " but config needs " +
                                   Tensor2<T>::shape_string(vocab, d));
            }
            table = fixed_table->template cast<T>();
          }
          this->add_param("embedding", std::move(table), false);
          break;
        }
        case EmbeddingMode::Factorized: {
          const auto r = static_cast<std::size_t>(cfg.factor_rank);
          this->add_param("embedding.A", normal_init<T>(rng, vocab, r, cfg.init_scale));
          this->add_param("embedding.B", normal_init<T>(rng, r, d, b_scale_for(cfg.factor_rank, cfg.factor_b_scale)));
          break;
        }
      }
    }

    if (cfg.vocab == 0 && cfg.embedding == EmbeddingMode::Factorized) {
      const auto r = static_cast<std::size_t>(cfg.factor_rank);
      this->add_param("dense1.A", dense_init<T>(rng, fan_in0, r, cfg.init_scale));
      this->add_param("dense1.B", normal_init<T>(rng, r, width, b_scale_for(cfg.factor_rank, cfg.factor_b_scale)));
    } else {
      this->add_param("dense1", dense_init<T>(rng, fan_in0, width, cfg.init_scale));
    }
    if (cfg.depth == 3) this->add_param("dense2", dense_init<T>(rng, width, width, cfg.init_scale));
    this->add_param(cfg.depth == 3 ? "dense3" : "dense2", dense_init<T>(rng, width, out, cfg.init_scale));
  }

 protected:
  Var forward_impl(Graph<T>& g, const Inputs<T>& in) override {
    Var h;
    if (cfg_.vocab > 0) {
      const auto& tok = std::get<TokenInputs>(in);
      Var table = cfg_.embedding == EmbeddingMode::Factorized
                      ? g.matmul(g.param(this->at("embedding.A")), g.param(this->at("embedding.B")))
                      : g.param(this->at("embedding"));
      const Var parts[2] = {g.gather_rows(table, tok.a), g.gather_rows(table, tok.b)};
      h = g.concat_cols(parts);
    } else {
      const Tensor2<T>* x = std::get<const Tensor2<T>*>(in);
      if (x->cols() != static_cast<std::size_t>(cfg_.input_dim)) {
        throw DimensionError("fnn: input " + x->shape() + " but input_dim = " + std::to_string(cfg_.input_dim));
      }
      h = g.input(*x);
    }
    Var w1 = cfg_.vocab == 0 && cfg_.embedding == EmbeddingMode::Factorized
                 ? g.matmul(g.param(this->at("dense1.A")), g.param(this->at("dense1.B")))
                 : g.param(this->at("dense1"));
    h = g.relu(g.matmul(h, w1));
    if (cfg_.depth == 3) {
      h = g.relu(g.matmul(h, g.param(this->at("dense2"))));
      return g.matmul(h, g.param(this->at("dense3")));
    }
    return g.matmul(h, g.param(this->at("dense2")));
  }

 private:
  FnnConfig cfg_;
};

template <typename T>
class XorNet final : public Model<T> {
 public:
  XorNet(const XorNetConfig& cfg, std::uint64_t seed, const Tensor2<double>* u, bool allow_missing_u)
      : Model<T>(cfg), cfg_(cfg) {
    cfg.validate();
    SplitMix64 rng(seed);
    const auto p = static_cast<std::size_t>(cfg.input_dim);
    const auto m = static_cast<std::size_t>(cfg.width);
    if (cfg.init == XorInit::Gaussian) {
      this->add_param("W", normal_init<T>(rng, p, m, cfg.w_init));
      this->add_param("a", normal_init<T>(rng, m, 1, cfg.a_init), !cfg.freeze_a);
      return;
    }
    const auto k = static_cast<std::size_t>(cfg.embed_dim);
    Tensor2<T> uval(p, k);
    if (u == nullptr) {
      if (!allow_missing_u) throw ArgumentError("xor: discrete initialization requires a U matrix");
    } else {
      if (u->rows() != p || u->cols() != k) {
        throw DimensionError("xor: U is " + u->shape() + " but config needs " + Tensor2<T>::shape_string(p, k));
      }
      uval = u->template cast<T>();
    }
    this->add_param("U", std::move(uval), !cfg.freeze_u);
    Tensor2<T> v(k, m);
    for (T& e : v.data()) e = static_cast<T>(rng.sign() * cfg.v_init);
    this->add_param("V", std::move(v));
    Tensor2<T> a(m, 1);
    const double amag = 1.0 / std::sqrt(static_cast<double>(m));
    for (T& e : a.data()) e = static_cast<T>(rng.sign() * amag);
    this->add_param("a", std::move(a), !cfg.freeze_a);
  }

 protected:
  Var forward_impl(Graph<T>& g, const Inputs<T>& in) override {
    const Tensor2<T>* x = std::get<const Tensor2<T>*>(in);
    if (x->cols() != static_cast<std::size_t>(cfg_.input_dim)) {
      throw DimensionError("xor: input " + x->shape() + " but input_dim = " + std::to_string(cfg_.input_dim));
    }
    Var xv = g.input(*x);
    Var pre = cfg_.init == XorInit::Gaussian
                  ? g.matmul(xv, g.param(this->at("W")))
                  : g.matmul(g.matmul(xv, g.param(this->at("U"))), g.param(this->at("V")));
    return g.matmul(g.relu(pre), g.param(this->at("a")));
  }

 private:
  XorNetConfig cfg_;
};

template <typename T>
class Transformer final : public Model<T> {
 public:
  Transformer(const TransformerConfig& cfg, std::uint64_t seed) : Model<T>(cfg), cfg_(cfg) {
    cfg.validate();
    SplitMix64 rng(seed);
    const auto d = static_cast<std::size_t>(cfg.d_embed);
    const auto vocab = static_cast<std::size_t>(cfg.vocab);
    const auto attn = static_cast<std::size_t>(cfg.n_head * cfg.d_head);
    const auto mlp = static_cast<std::size_t>(cfg.d_mlp);
    if (cfg.embedding == EmbeddingMode::Factorized) {
      const auto r = static_cast<std::size_t>(cfg.factor_rank);
      this->add_param("embedding.A", normal_init<T>(rng, vocab, r, cfg.init_scale));
      this->add_param("embedding.B", normal_init<T>(rng, r, d, b_scale_for(cfg.factor_rank, cfg.factor_b_scale)));
    } else {
      this->add_param("embedding", normal_init<T>(rng, vocab, d, cfg.init_scale));
    }
    this->add_param("pos_embedding", normal_init<T>(rng, TransformerConfig::kContext, d, cfg.init_scale));
    for (int l = 0; l < cfg.n_layers; ++l) {
      const std::string pre = "layer" + std::to_string(l) + ".";
      this->add_param(pre + "W_Q", dense_init<T>(rng, d, attn, cfg.init_scale));
      this->add_param(pre + "W_K", dense_init<T>(rng, d, attn, cfg.init_scale));
      this->add_param(pre + "W_V", dense_init<T>(rng, d, attn, cfg.init_scale));
      this->add_param(pre + "W_O", dense_init<T>(rng, attn, d, cfg.init_scale));
      this->add_param(pre + "W_in", dense_init<T>(rng, d, mlp, cfg.init_scale));
      this->add_param(pre + "W_out", dense_init<T>(rng, mlp, d, cfg.init_scale));
    }
    this->add_param("unembed", dense_init<T>(rng, d, vocab, cfg.init_scale));
  }

 protected:
  Var forward_impl(Graph<T>& g, const Inputs<T>& in) override {
    const auto& tok = std::get<TokenInputs>(in);
    const std::size_t batch = tok.size();
    Var table = cfg_.embedding == EmbeddingMode::Factorized
                    ? g.matmul(g.param(this->at("embedding.A")), g.param(this->at("embedding.B")))
                    : g.param(this->at("embedding"));
    Var pos = g.param(this->at("pos_embedding"));
    const std::vector<int> zeros(batch, 0), ones(batch, 1);
    Var x0 = g.add(g.gather_rows(table, tok.a), g.gather_rows(pos, zeros));
    Var x1 = g.add(g.gather_rows(table, tok.b), g.gather_rows(pos, ones));

    const auto dh = static_cast<std::size_t>(cfg_.d_head);
    const T inv_sqrt = static_cast<T>(1.0 / std::sqrt(static_cast<double>(cfg_.d_head)));
    for (int l = 0; l < cfg_.n_layers; ++l) {
      const std::string pre = "layer" + std::to_string(l) + ".";
      const bool need_pos0 = l + 1 < cfg_.n_layers || cfg_.readout_position == 0;
      Var wq = g.param(this->at(pre + "W_Q"));
      Var wk = g.param(this->at(pre + "W_K"));
      Var wv = g.param(this->at(pre + "W_V"));
      Var wo = g.param(this->at(pre + "W_O"));
      Var q1 = g.matmul(x1, wq);
      Var k0 = g.matmul(x0, wk), k1 = g.matmul(x1, wk);
      Var v0 = g.matmul(x0, wv), v1 = g.matmul(x1, wv);
      std::vector<Var> heads1;
      for (int h = 0; h < cfg_.n_head; ++h) {
        const std::size_t off = static_cast<std::size_t>(h) * dh;
        Var qh = g.slice_cols(q1, off, dh);
        Var v0h = g.slice_cols(v0, off, dh), v1h = g.slice_cols(v1, off, dh);
        const Var scores[2] = {g.scale(g.row_dot(qh, g.slice_cols(k0, off, dh)), inv_sqrt),
                               g.scale(g.row_dot(qh, g.slice_cols(k1, off, dh)), inv_sqrt)};
        Var w = g.softmax_rows(g.concat_cols(scores));
        heads1.push_back(g.add(g.mul_col(v0h, g.slice_cols(w, 0, 1)), g.mul_col(v1h, g.slice_cols(w, 1, 1))));
      }
      // Position 0 attends only to itself (causal mask), so its mixed value is v0.
      Var attn1 = g.matmul(g.concat_cols(heads1), wo);
      x1 = g.add(x1, attn1);
      Var w_in = g.param(this->at(pre + "W_in"));
      Var w_out = g.param(this->at(pre + "W_out"));
      x1 = g.add(x1, g.matmul(g.relu(g.matmul(x1, w_in)), w_out));
      if (need_pos0) {
        x0 = g.add(x0, g.matmul(v0, wo));
        x0 = g.add(x0, g.matmul(g.relu(g.matmul(x0, w_in)), w_out));
      }
    }
    return g.matmul(cfg_.readout_position == 0 ? x0 : x1, g.param(this->at("unembed")));
  }

 private:
  TransformerConfig cfg_;
};

}  // namespace

template <typename T>
std::unique_ptr<Model<T>> build_fnn(const FnnConfig& cfg, std::uint64_t seed,
                                    const Tensor2<double>* fixed_table) {
  return std::make_unique<FnnModel<T>>(cfg, seed, fixed_table);
}

template <typename T>
std::unique_ptr<Model<T>> build_xor_net(const XorNetConfig& cfg, std::uint64_t seed,
                                        const Tensor2<double>* u, bool allow_missing_u) {
  return std::make_unique<XorNet<T>>(cfg, seed, u, allow_missing_u);
}

template <typename T>
std::unique_ptr<Model<T>> build_transformer(const TransformerConfig& cfg, std::uint64_t seed) {
  return std::make_unique<Transformer<T>>(cfg, seed);
}

template <typename T>
std::unique_ptr<Model<T>> build_model(const ModelSpec& spec, std::uint64_t seed) {
  return std::visit(
      [&](const auto& c) -> std::unique_ptr<Model<T>> {
        using C = std::decay_t<decltype(c)>;
        if constexpr (std::is_same_v<C, FnnConfig>) return build_fnn<T>(c, seed);
        else if constexpr (std::is_same_v<C, XorNetConfig>) return build_xor_net<T>(c, seed, nullptr, true);
        else return build_transformer<T>(c, seed);
      },
      spec);
}

template <typename T>
Tensor2<T> predict(Model<T>& model, const Inputs<T>& in) {
  Graph<T> g;
  const Var out = model.forward(g, in);
  return g.value(out);
}

#define GROKKIT_INSTANTIATE(T)                                                                     \
  template class Model<T>;                                                                         \
  template std::unique_ptr<Model<T>> build_fnn<T>(const FnnConfig&, std::uint64_t,                 \
                                                  const Tensor2<double>*);                         \
  template std::unique_ptr<Model<T>> build_xor_net<T>(const XorNetConfig&, std::uint64_t,          \
                                                      const Tensor2<double>*, bool);               \
  template std::unique_ptr<Model<T>> build_transformer<T>(const TransformerConfig&, std::uint64_t); \
  template std::unique_ptr<Model<T>> build_model<T>(const ModelSpec&, std::uint64_t);              \
  template Tensor2<T> predict<T>(Model<T>&, const Inputs<T>&);

GROKKIT_INSTANTIATE(float)
GROKKIT_INSTANTIATE(double)
#undef GROKKIT_INSTANTIATE

}  // namespace grokkit::models
