#include "grokkit/expcli/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <initializer_list>
#include <limits>
#include <type_traits>

#include "grokkit/errors.hpp"
#include "grokkit/rng.hpp"

namespace grokkit::expcli {

using models::EmbeddingMode;
using models::FnnConfig;
using models::TransformerConfig;
using models::XorInit;
using models::XorNetConfig;

const char* to_string(Precision p) noexcept { return p == Precision::F32 ? "f32" : "f64"; }

Precision parse_precision(const std::string& s) {
  if (s == "f32") return Precision::F32;
  if (s == "f64") return Precision::F64;
  throw ArgumentError("unknown precision '" + s + "' (expected f32|f64)");
}

namespace {

std::string join(const std::string& base, const std::string& key) { return base.empty() ? key : base + "." + key; }

// Typed access to one JSON object with path-aware errors. Keys not consumed
// by the parser are rejected by finish(), which catches misspelled fields.
class Section {
 public:
  Section(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_, "expected an object");
  }

  const std::string& path() const noexcept { return path_; }
  bool has(const char* key) {
    seen_.emplace_back(key);
    return j_.contains(key) && !j_.at(key).is_null();
  }
  const Json& raw(const char* key) {
    if (!has(key)) throw ConfigError(join(path_, key), "missing required field");
    return j_.at(key);
  }
  Section sub(const char* key) { return Section(raw(key), join(path_, key)); }

  template <typename V>
  V get(const char* key, V fallback) {
    return has(key) ? convert<V>(j_.at(key), join(path_, key)) : fallback;
  }
  template <typename V>
  V need(const char* key) {
    return convert<V>(raw(key), join(path_, key));
  }

  void finish() const {
    for (const auto& [key, _] : j_.items()) {
      if (std::find(seen_.begin(), seen_.end(), key) == seen_.end()) {
        throw ConfigError(join(path_, key), "unknown field");
      }
    }
  }

  template <typename V>
  static V convert(const Json& v, const std::string& path) {
    if constexpr (std::is_same_v<V, bool>) {
      if (!v.is_boolean()) throw ConfigError(path, "expected true or false");
      return v.get<bool>();
    } else if constexpr (std::is_integral_v<V>) {
      if (!v.is_number_integer()) throw ConfigError(path, "expected an integer");
      if constexpr (std::is_unsigned_v<V>) {
        if (v.is_number_integer() && !v.is_number_unsigned() && v.get<long long>() < 0) {
          throw ConfigError(path, "expected a non-negative integer");
        }
        return v.get<V>();
      } else {
        const long long x = v.get<long long>();
        if (x < std::numeric_limits<V>::min() || x > std::numeric_limits<V>::max()) {
          throw ConfigError(path, "integer out of range");
        }
        return static_cast<V>(x);
      }
    } else if constexpr (std::is_floating_point_v<V>) {
      if (!v.is_number()) throw ConfigError(path, "expected a number");
      const double x = v.get<double>();
      if (!std::isfinite(x)) throw ConfigError(path, "expected a finite number");
      return x;
    } else if constexpr (std::is_same_v<V, std::string>) {
      if (!v.is_string()) throw ConfigError(path, "expected a string");
      return v.get<std::string>();
    } else {
      if (!v.is_array()) throw ConfigError(path, "expected an array");
      V out;
      for (std::size_t i = 0; i < v.size(); ++i) {
        out.push_back(convert<typename V::value_type>(v[i], path + "[" + std::to_string(i) + "]"));
      }
      return out;
    }
  }

 private:
  const Json& j_;
  std::string path_;
  std::vector<std::string> seen_;
};

// Runs a library parser or validator, re-raising its message at `path`.
template <typename F>
auto at_path(const std::string& path, F&& f) {
  try {
    return f();
  } catch (const ConfigError&) {
    throw;
  } catch (const ArgumentError& e) {
    throw ConfigError(path, e.what());
  }
}

const char* xor_init_name(XorInit i) { return i == XorInit::Gaussian ? "gaussian" : "discrete"; }

XorInit parse_xor_init(const std::string& s, const std::string& path) {
  if (s == "gaussian") return XorInit::Gaussian;
  if (s == "discrete") return XorInit::Discrete;
  throw ConfigError(path, "unknown init '" + s + "' (expected gaussian|discrete)");
}

models::ModelSpec parse_model(Section s) {
  const auto kind = s.need<std::string>("kind");
  const auto mode = [&](EmbeddingMode fallback) {
    return s.has("embedding") ? at_path(join(s.path(), "embedding"),
                                        [&] { return models::parse_embedding_mode(s.need<std::string>("embedding")); })
                              : fallback;
  };
  models::ModelSpec out;
  if (kind == "fnn") {
    FnnConfig c;
    c.depth = s.get("depth", c.depth);
    c.vocab = s.get("vocab", c.vocab);
    c.input_dim = s.get("input_dim", c.input_dim);
    c.d_embed = s.get("d_embed", c.d_embed);
    c.width = s.need<int>("width");
    c.out_classes = s.get("out_classes", c.out_classes);
    c.init_scale = s.get("init_scale", c.init_scale);
    c.embedding = mode(c.embedding);
    c.factor_rank = s.get("factor_rank", c.factor_rank);
    c.factor_b_scale = s.get("factor_b_scale", c.factor_b_scale);
    out = c;
  } else if (kind == "transformer") {
    TransformerConfig c;
    c.n_layers = s.get("n_layers", c.n_layers);
    c.d_embed = s.get("d_embed", c.d_embed);
    c.d_mlp = s.get("d_mlp", c.d_mlp);
    c.n_head = s.get("n_head", c.n_head);
    c.d_head = s.get("d_head", c.d_head);
    c.vocab = s.get("vocab", c.vocab);
    c.init_scale = s.get("init_scale", c.init_scale);
    c.embedding = mode(c.embedding);
    c.factor_rank = s.get("factor_rank", c.factor_rank);
    c.factor_b_scale = s.get("factor_b_scale", c.factor_b_scale);
    c.readout_position = s.get("readout_position", c.readout_position);
    out = c;
  } else if (kind == "xor_net") {
    XorNetConfig c;
    c.input_dim = s.get("input_dim", c.input_dim);
    c.width = s.get("width", c.width);
    if (s.has("init")) c.init = parse_xor_init(s.need<std::string>("init"), join(s.path(), "init"));
    c.w_init = s.get("w_init", c.w_init);
    c.a_init = s.get("a_init", c.a_init);
    c.v_init = s.get("v_init", c.v_init);
    c.embed_dim = s.get("embed_dim", c.embed_dim);
    c.freeze_a = s.get("freeze_a", c.freeze_a);
    c.freeze_u = s.get("freeze_u", c.freeze_u);
    out = c;
  } else {
    throw ConfigError(join(s.path(), "kind"), "unknown model kind '" + kind + "' (expected fnn|transformer|xor_net)");
  }
  s.finish();
  return out;
}

optim::TrainConfig parse_train(Section s, optim::TrainConfig c) {
  if (s.has("optimizer")) {
    c.optimizer = at_path(join(s.path(), "optimizer"), [&] { return optim::parse_optimizer(s.need<std::string>("optimizer")); });
  }
  c.lr = s.get("lr", c.lr);
  c.weight_decay = s.get("weight_decay", c.weight_decay);
  c.beta1 = s.get("beta1", c.beta1);
  c.beta2 = s.get("beta2", c.beta2);
  c.eps = s.get("eps", c.eps);
  if (s.has("loss")) {
    c.loss = at_path(join(s.path(), "loss"), [&] { return optim::parse_loss(s.need<std::string>("loss")); });
  }
  c.epochs = s.get("epochs", c.epochs);
  c.batch_size = s.get("batch_size", c.batch_size);
  c.eval_every = s.get("eval_every", c.eval_every);
  c.seed = s.get("seed", c.seed);
  c.ntk_every = s.get("ntk_every", c.ntk_every);
  c.ntk_points = s.get("ntk_points", c.ntk_points);
  c.norm_ratio_group = s.get("norm_ratio_group", c.norm_ratio_group);
  c.record_wallclock = s.get("record_wallclock", c.record_wallclock);
  c.decay_exempt = s.get("decay_exempt", c.decay_exempt);
  s.finish();
  if (c.epochs < 1) throw ConfigError(join(s.path(), "epochs"), "must be >= 1");
  if (c.eval_every < 1) throw ConfigError(join(s.path(), "eval_every"), "must be >= 1");
  if (!(c.lr >= 0.0)) throw ConfigError(join(s.path(), "lr"), "must be >= 0");
  if (c.weight_decay < 0.0) throw ConfigError(join(s.path(), "weight_decay"), "must be >= 0");
  return c;
}

TaskSpec parse_task(Section s) {
  const auto kind = s.need<std::string>("kind");
  TaskSpec out;
  if (kind == "modular") {
    ModularTask t;
    t.p = s.get("p", t.p);
    if (s.has("op")) t.op = at_path(join(s.path(), "op"), [&] { return tasks::parse_mod_op(s.need<std::string>("op")); });
    t.train_fraction = s.get("train_fraction", t.train_fraction);
    if (t.p < 2) throw ConfigError(join(s.path(), "p"), "must be >= 2");
    if (!(t.train_fraction > 0.0 && t.train_fraction < 1.0)) {
      throw ConfigError(join(s.path(), "train_fraction"), "must lie in (0, 1)");
    }
    out = t;
  } else if (kind == "parity") {
    ParityTask t;
    t.q = s.get("q", t.q);
    t.k = s.get("k", t.k);
    t.subset = s.get("subset", t.subset);
    t.n_train = s.get("n_train", t.n_train);
    t.n_test = s.get("n_test", t.n_test);
    if (static_cast<int>(t.subset.size()) != t.k) throw ConfigError(join(s.path(), "subset"), "must hold exactly k entries");
    if (t.n_train < 1 || t.n_test < 1) throw ConfigError(join(s.path(), "n_train"), "sample counts must be >= 1");
    out = t;
  } else if (kind == "xor") {
    XorTask t;
    t.p = s.get("p", t.p);
    t.n = s.get("n", t.n);
    t.eps = s.get("eps", t.eps);
    t.n_test = s.get("n_test", t.n_test);
    if (t.p < 3) throw ConfigError(join(s.path(), "p"), "must be >= 3");
    if (t.n < 1 || t.n_test < 1) throw ConfigError(join(s.path(), "n"), "sample counts must be >= 1");
    if (!(t.eps > 0.0)) throw ConfigError(join(s.path(), "eps"), "must be > 0");
    out = t;
  } else {
    throw ConfigError(join(s.path(), "kind"), "unknown task kind '" + kind + "' (expected modular|parity|xor)");
  }
  s.finish();
  return out;
}

// Dimension of the fixed table for `kind`, matching tasks::make_embedding.
int fixed_embedding_dim(const FixedEmbedding& e, int p, const std::string& path) {
  return at_path(path, [&] {
    try {
      return static_cast<int>(tasks::make_embedding(e.kind, p, e.path).dim());
    } catch (const std::runtime_error& err) {
      throw ConfigError(path, err.what());
    }
  });
}

void fill(const std::string& path, const char* field, int& slot, int value) {
  if (slot != 0 && slot != value) {
    throw ConfigError(join(path, field), "is " + std::to_string(slot) + " but the task implies " + std::to_string(value));
  }
  slot = value;
}

// Fills the fields a model takes from its task and checks compatibility.
void bind_to_task(models::ModelSpec& spec, const TaskSpec& task, const std::optional<FixedEmbedding>& emb,
                  const std::string& path) {
  const auto* mod = std::get_if<ModularTask>(&task);
  const int dense_dim = std::holds_alternative<ParityTask>(task) ? std::get<ParityTask>(task).q
                        : std::holds_alternative<XorTask>(task) ? std::get<XorTask>(task).p
                                                                : 0;
  if (auto* f = std::get_if<FnnConfig>(&spec)) {
    if (mod != nullptr) {
      fill(path, "vocab", f->vocab, mod->p);
      if (f->out_classes == 1) f->out_classes = 0;  // the scalar default, not a user choice
      fill(path, "out_classes", f->out_classes, mod->p);
      if (emb) {
        f->embedding = EmbeddingMode::Fixed;
        const int d = fixed_embedding_dim(*emb, mod->p, "embedding");
        if (f->d_embed != 0 && f->d_embed != d) {
          throw ConfigError(join(path, "d_embed"), "fixed embedding has width " + std::to_string(d));
        }
        f->d_embed = d;
      }
    } else {
      if (emb) throw ConfigError("embedding", "fixed embeddings apply to token tasks only");
      fill(path, "input_dim", f->input_dim, dense_dim);
      if (f->out_classes != 1) throw ConfigError(join(path, "out_classes"), "dense tasks have a scalar output");
    }
  } else if (auto* t = std::get_if<TransformerConfig>(&spec)) {
    if (mod == nullptr) throw ConfigError(join(path, "kind"), "transformers need a modular task");
    if (emb) throw ConfigError("embedding", "transformers use their own embedding");
    t->vocab = mod->p;
  } else {
    auto& x = std::get<XorNetConfig>(spec);
    if (mod != nullptr) throw ConfigError(join(path, "kind"), "xor_net needs a dense (xor or parity) task");
    fill(path, "input_dim", x.input_dim, dense_dim);
  }
  at_path(path, [&] {
    std::visit([](const auto& c) { c.validate(); }, spec);
    return 0;
  });
}

transfer::StopCriterion parse_stop(Section s) {
  transfer::StopCriterion out;
  if (s.has("epoch")) {
    out = transfer::StopAtEpoch{s.need<int>("epoch")};
  } else {
    transfer::StopAtAccuracy a;
    a.test_acc = s.need<double>("test_acc");
    a.max_epochs = s.get("max_epochs", a.max_epochs);
    out = a;
  }
  s.finish();
  return out;
}

}  // namespace

Json model_to_json(const models::ModelSpec& spec) {
  return std::visit(
      [](const auto& c) -> Json {
        using C = std::decay_t<decltype(c)>;
        if constexpr (std::is_same_v<C, FnnConfig>) {
          return {{"kind", "fnn"},           {"depth", c.depth},
                  {"vocab", c.vocab},        {"input_dim", c.input_dim},
                  {"d_embed", c.d_embed},    {"width", c.width},
                  {"out_classes", c.out_classes}, {"init_scale", c.init_scale},
                  {"embedding", models::to_string(c.embedding)}, {"factor_rank", c.factor_rank},
                  {"factor_b_scale", c.factor_b_scale}};
        } else if constexpr (std::is_same_v<C, TransformerConfig>) {
          return {{"kind", "transformer"}, {"n_layers", c.n_layers},   {"d_embed", c.d_embed},
                  {"d_mlp", c.d_mlp},      {"n_head", c.n_head},       {"d_head", c.d_head},
                  {"vocab", c.vocab},      {"init_scale", c.init_scale}, {"embedding", models::to_string(c.embedding)},
                  {"factor_rank", c.factor_rank}, {"factor_b_scale", c.factor_b_scale},
                  {"readout_position", c.readout_position}};
        } else {
          return {{"kind", "xor_net"},  {"input_dim", c.input_dim}, {"width", c.width},
                  {"init", xor_init_name(c.init)}, {"w_init", c.w_init}, {"a_init", c.a_init},
                  {"v_init", c.v_init}, {"embed_dim", c.embed_dim}, {"freeze_a", c.freeze_a},
                  {"freeze_u", c.freeze_u}};
        }
      },
      spec);
}

models::ModelSpec model_from_json(const Json& j, const std::string& path) {
  auto spec = parse_model(Section(j, path));
  at_path(path, [&] {
    std::visit([](const auto& c) { c.validate(); }, spec);
    return 0;
  });
  return spec;
}

Json train_to_json(const optim::TrainConfig& c) {
  return {{"optimizer", optim::to_string(c.optimizer)},
          {"lr", c.lr},
          {"weight_decay", c.weight_decay},
          {"beta1", c.beta1},
          {"beta2", c.beta2},
          {"eps", c.eps},
          {"loss", optim::to_string(c.loss)},
          {"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"eval_every", c.eval_every},
          {"seed", c.seed},
          {"ntk_every", c.ntk_every},
          {"ntk_points", c.ntk_points},
          {"norm_ratio_group", c.norm_ratio_group},
          {"record_wallclock", c.record_wallclock},
          {"decay_exempt", c.decay_exempt}};
}

optim::TrainConfig train_from_json(const Json& j, const std::string& path) {
  return parse_train(Section(j, path), optim::TrainConfig{});
}

void set_path(Json& doc, const std::string& dotted, const Json& value) {
  if (dotted.empty()) throw ConfigError("", "empty field path");
  Json* node = &doc;
  std::string walked;
  std::size_t start = 0;
  while (true) {
    const auto dot = dotted.find('.', start);
    const std::string key = dotted.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (key.empty()) throw ConfigError(dotted, "empty path segment");
    if (node->is_null()) *node = Json::object();
    if (!node->is_object()) throw ConfigError(walked, "is not an object");
    walked = join(walked, key);
    node = &(*node)[key];
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  *node = value;
}

ExperimentConfig parse_config(const Json& doc) {
  Section root(doc, "");
  ExperimentConfig cfg;
  cfg.source = doc;
  cfg.seed = root.get("seed", cfg.seed);
  cfg.task = parse_task(root.sub("task"));

  if (root.has("embedding")) {
    Section e = root.sub("embedding");
    FixedEmbedding fe;
    fe.kind = at_path("embedding.kind", [&] { return tasks::parse_embed_kind(e.need<std::string>("kind")); });
    fe.path = e.get("path", std::string());
    e.finish();
    if (fe.kind == tasks::EmbedKind::External && fe.path.empty()) {
      throw ConfigError("embedding.path", "external embeddings need a path");
    }
    cfg.embedding = fe;
  }

  cfg.model = parse_model(root.sub("model"));
  bind_to_task(cfg.model, cfg.task, cfg.embedding, "model");

  optim::TrainConfig base;
  base.seed = derive_seed(cfg.seed, kSaltTrainOrder);
  if (!std::holds_alternative<ModularTask>(cfg.task)) {
    base.loss = std::holds_alternative<XorTask>(cfg.task) ? optim::LossKind::Exponential : optim::LossKind::Logistic;
  }
  cfg.train = root.has("train") ? parse_train(root.sub("train"), base) : base;
  if (root.has("stop_at_accuracy")) {
    const double a = root.need<double>("stop_at_accuracy");
    if (!(a > 0.0 && a <= 1.0)) throw ConfigError("stop_at_accuracy", "must lie in (0, 1]");
    cfg.stop_at_accuracy = a;
  }

  if (root.has("transfer")) {
    Section t = root.sub("transfer");
    if (cfg.embedding) throw ConfigError("transfer", "transfer needs the target's own embedding, not a fixed table");
    TransferSection ts;
    auto& plan = ts.plan;
    plan.weak_model = parse_model(t.sub("weak_model"));
    bind_to_task(plan.weak_model, cfg.task, std::nullopt, "transfer.weak_model");
    plan.weak_train = t.has("weak_train") ? parse_train(t.sub("weak_train"), base) : base;
    plan.weak_seed = t.get("weak_seed", derive_seed(cfg.seed, kSaltWeakModel));
    plan.target_seed = t.get("target_seed", derive_seed(cfg.seed, kSaltModel));
    if (t.has("stop")) plan.stop = parse_stop(t.sub("stop"));
    if (t.has("mode")) {
      plan.mode = at_path("transfer.mode", [&] { return transfer::parse_embedding_init(t.need<std::string>("mode")); });
    }
    plan.b_scale = t.get("b_scale", plan.b_scale);
    plan.target_model = cfg.model;
    plan.target_train = cfg.train;
    if (t.has("scratch")) {
      Section sc = t.sub("scratch");
      ScratchBaseline b;
      if (sc.has("model")) b.model_overrides = sc.raw("model");
      if (sc.has("train")) b.train_overrides = sc.raw("train");
      sc.finish();
      if (!b.model_overrides.is_object()) throw ConfigError("transfer.scratch.model", "expected an object");
      if (!b.train_overrides.is_object()) throw ConfigError("transfer.scratch.train", "expected an object");
      ts.scratch = b;
    }
    t.finish();
    at_path("transfer", [&] {
      plan.validate();
      return 0;
    });
    cfg.transfer = std::move(ts);
  }
  root.finish();
  return cfg;
}

Json load_document(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw NotFoundError("cannot open " + path.string());
  try {
    return Json::parse(in, nullptr, true, true);
  } catch (const Json::parse_error& e) {
    throw ConfigError("", std::string("invalid JSON in ") + path.string() + ": " + e.what());
  }
}

ExperimentConfig load_config(const std::filesystem::path& path) { return parse_config(load_document(path)); }

}  // namespace grokkit::expcli
