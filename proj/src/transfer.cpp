#include "grokkit/transfer.hpp"

#include <cmath>
#include <utility>

#include "grokkit/errors.hpp"
#include "grokkit/nd/kernels.hpp"
#include "grokkit/rng.hpp"

namespace grokkit::transfer {

using models::EmbeddingMode;
using models::FnnConfig;
using models::TransformerConfig;
using models::XorNetConfig;
using nd::ParamGroup;
using nd::Tensor2;

const char* to_string(EmbeddingInit m) noexcept {
  return m == EmbeddingInit::Transfer ? "transfer" : "random";
}

EmbeddingInit parse_embedding_init(const std::string& s) {
  if (s == "transfer") return EmbeddingInit::Transfer;
  if (s == "random") return EmbeddingInit::RandomAblation;
  throw ArgumentError("unknown embedding init '" + s + "' (expected transfer|random)");
}

void TransferPlan::validate() const {
  std::visit([](const auto& c) { c.validate(); }, weak_model);
  std::visit([](const auto& c) { c.validate(); }, target_model);
  if (const auto* acc = std::get_if<StopAtAccuracy>(&stop)) {
    if (!(acc->test_acc > 0.0 && acc->test_acc <= 1.0)) {
      throw ArgumentError("transfer: accuracy threshold must lie in (0, 1]");
    }
    if (acc->max_epochs < 1) throw ArgumentError("transfer: max_epochs must be >= 1");
  } else if (std::get<StopAtEpoch>(stop).epoch < 1) {
    throw ArgumentError("transfer: stop epoch must be >= 1");
  }
  if (b_scale < 0.0) throw ArgumentError("transfer: b_scale must be >= 0");
}

namespace {

template <typename T>
const ParamGroup<T>* find_group(std::span<const ParamGroup<T>> params, const std::string& name) {
  for (const auto& p : params)
    if (p.name == name) return &p;
  return nullptr;
}

template <typename T>
std::string names_of(std::span<const ParamGroup<T>> params) {
  std::string out;
  for (const auto& p : params) {
    if (!out.empty()) out += ", ";
    out += p.name;
  }
  return out.empty() ? "<none>" : out;
}

template <typename T>
Tensor2<T> product(const Tensor2<T>& a, const Tensor2<T>& b) {
  Tensor2<T> out(a.rows(), b.cols());
  nd::kernels::gemm(nd::kernels::Trans::No, nd::kernels::Trans::No, a, b, out, false);
  return out;
}

/// Rows the target's first stage expects, and its width d_T.
struct FirstStage {
  std::size_t rows;
  std::size_t width;
};

FirstStage first_stage_of(const models::ModelSpec& spec) {
  if (const auto* f = std::get_if<FnnConfig>(&spec)) {
    if (f->vocab > 0) return {static_cast<std::size_t>(f->vocab), static_cast<std::size_t>(f->d_embed)};
    return {static_cast<std::size_t>(f->input_dim), static_cast<std::size_t>(f->width)};
  }
  if (const auto* t = std::get_if<TransformerConfig>(&spec)) {
    return {static_cast<std::size_t>(t->vocab), static_cast<std::size_t>(t->d_embed)};
  }
  const auto& x = std::get<XorNetConfig>(spec);
  return {static_cast<std::size_t>(x.input_dim), static_cast<std::size_t>(x.width)};
}

}  // namespace

template <typename T>
Tensor2<T> extract_embedding(std::span<const ParamGroup<T>> params) {
  if (const auto* a = find_group(params, std::string("embedding.A"))) {
    if (const auto* b = find_group(params, std::string("embedding.B"))) return product(a->value, b->value);
  }
  for (const char* name : kEmbeddingGroups) {
    if (const auto* g = find_group(params, std::string(name))) return g->value;
  }
  if (const auto* a = find_group(params, std::string("dense1.A"))) {
    if (const auto* b = find_group(params, std::string("dense1.B"))) return product(a->value, b->value);
  }
  throw NotFoundError("no embedding or first-layer group; available: " + names_of(params));
}

template <typename T>
Tensor2<T> extract_embedding(const WeakCheckpoint<T>& ckpt) {
  return extract_embedding(std::span<const ParamGroup<T>>(ckpt.params));
}

template <typename T>
WeakCheckpoint<T> run_weak(const TransferPlan& plan, const metrics::DataView<T>& train_data,
                           const metrics::DataView<T>& test_data) {
  plan.validate();
  auto model = models::build_model<T>(plan.weak_model, plan.weak_seed);
  optim::TrainConfig cfg = plan.weak_train;
  optim::StopFn<T> stop;
  double threshold = 0.0;
  if (const auto* acc = std::get_if<StopAtAccuracy>(&plan.stop)) {
    cfg.epochs = acc->max_epochs;
    cfg.eval_every = 1;
    threshold = acc->test_acc;
    stop = [threshold](const metrics::TraceRecord& r, models::Model<T>&) { return r.test_acc >= threshold; };
  } else {
    cfg.epochs = std::get<StopAtEpoch>(plan.stop).epoch;
  }

  WeakCheckpoint<T> ckpt;
  ckpt.trace = optim::train<T>(*model, train_data, test_data, cfg, stop);
  ckpt.spec = plan.weak_model;
  ckpt.params = model->params();
  for (auto& p : ckpt.params) p.zero_grad();
  ckpt.epoch = ckpt.trace.back().epoch;
  ckpt.test_acc = ckpt.trace.back().test_acc;
  ckpt.reached_threshold = ckpt.trace.status != metrics::RunStatus::Diverged && ckpt.test_acc >= threshold;
  return ckpt;
}

template <typename T>
TargetInit<T> init_target(const Tensor2<T>& weak_embedding, const models::ModelSpec& target, EmbeddingInit mode,
                          std::uint64_t seed, double b_scale) {
  const FirstStage stage = first_stage_of(target);
  if (weak_embedding.rows() != stage.rows) {
    throw DimensionError("transfer: weak embedding has " + std::to_string(weak_embedding.rows()) +
                         " rows but the target expects " + std::to_string(stage.rows));
  }
  const std::size_t d_w = weak_embedding.cols();
  if (d_w == 0) throw DimensionError("transfer: weak embedding has no columns");

  TargetInit<T> out;
  if (d_w > stage.width) {
    out.warnings.push_back("weak embedding width " + std::to_string(d_w) + " exceeds target width " +
                           std::to_string(stage.width));
  }

  if (const auto* xc = std::get_if<XorNetConfig>(&target)) {
    XorNetConfig cfg = *xc;
    cfg.init = models::XorInit::Discrete;
    cfg.embed_dim = static_cast<int>(d_w);
    Tensor2<double> u = weak_embedding.template cast<double>();
    if (mode == EmbeddingInit::RandomAblation) {
      double ss = 0.0;
      for (double v : std::as_const(u).data()) ss += v * v;
      const double rms = std::sqrt(ss / static_cast<double>(u.size()));
      SplitMix64 rng(derive_seed(seed, 0xAB1A7E));
      for (double& v : u.data()) v = rng.normal() * rms;
    }
    out.model = models::build_xor_net<T>(cfg, seed, &u);
    return out;
  }

  models::ModelSpec spec = target;
  std::visit(
      [&](auto& c) {
        using C = std::decay_t<decltype(c)>;
        if constexpr (!std::is_same_v<C, XorNetConfig>) {
          c.embedding = EmbeddingMode::Factorized;
          c.factor_rank = static_cast<int>(d_w);
          c.factor_b_scale = b_scale;
        }
      },
      spec);
  out.model = models::build_model<T>(spec, seed);
  if (mode == EmbeddingInit::Transfer) {
    auto* a = out.model->find("embedding.A");
    if (a == nullptr) a = &out.model->at("dense1.A");
    a->value = weak_embedding;
  }
  return out;
}

template <typename T>
TransferResult<T> run_embedding_transfer(const TransferPlan& plan, const metrics::DataView<T>& train_data,
                                   const metrics::DataView<T>& test_data) {
  TransferResult<T> out;
  out.weak = run_weak<T>(plan, train_data, test_data);
  auto init = init_target<T>(extract_embedding(out.weak), plan.target_model, plan.mode, plan.target_seed, plan.b_scale);
  out.target = std::move(init.model);
  out.warnings = std::move(init.warnings);
  if (!out.weak.reached_threshold) {
    out.warnings.push_back("weak model stopped at epoch " + std::to_string(out.weak.epoch) +
                           " below its accuracy threshold");
  }
  out.target_trace = optim::train<T>(*out.target, train_data, test_data, plan.target_train);
  return out;
}

#define GROKKIT_INSTANTIATE(T)                                                                              \
  template Tensor2<T> extract_embedding<T>(std::span<const ParamGroup<T>>);                                 \
  template Tensor2<T> extract_embedding<T>(const WeakCheckpoint<T>&);                                       \
  template WeakCheckpoint<T> run_weak<T>(const TransferPlan&, const metrics::DataView<T>&,                  \
                                         const metrics::DataView<T>&);                                      \
  template TargetInit<T> init_target<T>(const Tensor2<T>&, const models::ModelSpec&, EmbeddingInit,         \
                                        std::uint64_t, double);                                             \
  template TransferResult<T> run_embedding_transfer<T>(const TransferPlan&, const metrics::DataView<T>&,          \
                                                 const metrics::DataView<T>&);

GROKKIT_INSTANTIATE(float)
GROKKIT_INSTANTIATE(double)

}  // namespace grokkit::transfer
