#include "grokkit/optim.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <optional>
#include <utility>

#include "grokkit/errors.hpp"
#include "grokkit/rng.hpp"

namespace grokkit::optim {

using metrics::DataView;
using nd::ParamGroup;
using nd::Tensor2;

template <typename T>
void gd_wd_step(std::span<ParamGroup<T>> params, const GdWdConfig& cfg) {
  const T keep = static_cast<T>(1.0 - cfg.lambda);
  const T lr = static_cast<T>(cfg.lr);
  for (auto& p : params) {
    if (!p.trainable) continue;
    auto w = p.value.data();
    if (!p.has_grad()) {
      for (T& x : w) x *= keep;
      continue;
    }
    nd::require_same_shape(p.value, p.grad, "gd_wd_step");
    const auto g = std::as_const(p.grad).data();
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = keep * w[i] - lr * g[i];
  }
}

template <typename T>
AdamWState<T> AdamWState<T>::like(std::span<const ParamGroup<T>> params) {
  AdamWState s;
  for (const auto& p : params) {
    s.m.emplace_back(p.value.rows(), p.value.cols());
    s.v.emplace_back(p.value.rows(), p.value.cols());
  }
  return s;
}

template <typename T>
void adamw_step(std::span<ParamGroup<T>> params, AdamWState<T>& state, const AdamWConfig& cfg) {
  if (state.m.size() != params.size() || state.v.size() != params.size()) {
    throw DimensionError("adamw_step: state holds " + std::to_string(state.m.size()) + " groups, model has " +
                         std::to_string(params.size()));
  }
  for (std::size_t k = 0; k < params.size(); ++k) {
    nd::require_same_shape(params[k].value, state.m[k], "adamw_step");
    nd::require_same_shape(params[k].value, state.v[k], "adamw_step");
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(cfg.beta1, t);
  const double bc2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& p = params[k];
    if (!p.trainable) continue;
    auto w = p.value.data();
    if (!p.decay_exempt && cfg.weight_decay != 0.0) {
      const T keep = static_cast<T>(1.0 - cfg.lr * cfg.weight_decay);
      for (T& x : w) x *= keep;
    }
    if (!p.has_grad()) continue;
    nd::require_same_shape(p.value, p.grad, "adamw_step");
    const auto g = std::as_const(p.grad).data();
    auto m = state.m[k].data();
    auto v = state.v[k].data();
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double gi = g[i];
      const double mi = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * gi;
      const double vi = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * gi * gi;
      m[i] = static_cast<T>(mi);
      v[i] = static_cast<T>(vi);
      w[i] -= static_cast<T>(cfg.lr * (mi / bc1) / (std::sqrt(vi / bc2) + cfg.eps));
    }
  }
}

const char* to_string(OptimizerKind k) noexcept {
  return k == OptimizerKind::GdWd ? "gd" : "adamw";
}

const char* to_string(LossKind k) noexcept {
  switch (k) {
    case LossKind::CrossEntropy: return "xent";
    case LossKind::Exponential: return "exp";
    case LossKind::Logistic: return "logistic";
  }
  return "?";
}

OptimizerKind parse_optimizer(const std::string& s) {
  if (s == "gd") return OptimizerKind::GdWd;
  if (s == "adamw") return OptimizerKind::AdamW;
  throw ArgumentError("unknown optimizer '" + s + "' (expected gd|adamw)");
}

LossKind parse_loss(const std::string& s) {
  if (s == "xent") return LossKind::CrossEntropy;
  if (s == "exp") return LossKind::Exponential;
  if (s == "logistic") return LossKind::Logistic;
  throw ArgumentError("unknown loss '" + s + "' (expected xent|exp|logistic)");
}

template <typename T>
StopFn<T> stop_when_both_reach(double threshold) {
  return [threshold](const metrics::TraceRecord& r, models::Model<T>&) {
    return r.train_acc >= threshold && r.test_acc >= threshold;
  };
}

namespace {

template <typename T>
nd::Var loss_node(nd::Graph<T>& g, nd::Var out, const DataView<T>& data, LossKind kind) {
  if (kind == LossKind::CrossEntropy) {
    if (!data.is_classification()) throw ArgumentError("cross-entropy loss needs class labels");
    return g.softmax_xent(out, data.classes);
  }
  if (data.is_classification()) throw ArgumentError(std::string(to_string(kind)) + " loss needs +-1 labels");
  return kind == LossKind::Exponential ? g.exp_loss(out, data.signs) : g.logistic_loss(out, data.signs);
}

struct Eval {
  double loss = 0.0;
  double acc = 0.0;
};

template <typename T>
Eval evaluate(models::Model<T>& model, const DataView<T>& data, LossKind kind) {
  if (data.size() == 0) return {std::nan(""), 0.0};
  nd::Graph<T> g;
  const nd::Var out = model.forward(g, data.inputs);
  const nd::Var loss = loss_node(g, out, data, kind);
  return {static_cast<double>(g.value(loss)(0, 0)), metrics::accuracy_from_outputs(g.value(out), data)};
}

// Owned copy of selected rows, viewable as a DataView.
template <typename T>
struct Batch {
  std::vector<int> a, b, classes;
  Tensor2<T> x;
  std::vector<T> signs;
  bool tokens = false;

  Batch(const DataView<T>& src, std::span<const std::size_t> rows) {
    if (const auto* t = std::get_if<models::TokenInputs>(&src.inputs)) {
      tokens = true;
      for (std::size_t r : rows) {
        a.push_back(t->a[r]);
        b.push_back(t->b[r]);
      }
    } else {
      const Tensor2<T>& full = *std::get<const Tensor2<T>*>(src.inputs);
      x = Tensor2<T>(rows.size(), full.cols());
      for (std::size_t i = 0; i < rows.size(); ++i) std::ranges::copy(full.row(rows[i]), x.row(i).begin());
    }
    for (std::size_t r : rows) {
      if (src.is_classification()) classes.push_back(src.classes[r]);
      else signs.push_back(src.signs[r]);
    }
  }
  Batch(const Batch&) = delete;
  Batch& operator=(const Batch&) = delete;

  DataView<T> view() const {
    DataView<T> v;
    if (tokens) v.inputs = models::TokenInputs{a, b};
    else v.inputs = &x;
    v.classes = classes;
    v.signs = signs;
    return v;
  }
};

}  // namespace

template <typename T>
double evaluate_loss(models::Model<T>& model, const DataView<T>& data, LossKind loss) {
  return evaluate(model, data, loss).loss;
}

template <typename T>
metrics::TrainingTrace train(models::Model<T>& model, const DataView<T>& train_data,
                             const DataView<T>& test_data, const TrainConfig& cfg, const StopFn<T>& stop) {
  if (cfg.epochs < 1) throw ArgumentError("train: epochs must be >= 1");
  if (cfg.eval_every < 1) throw ArgumentError("train: eval_every must be >= 1");
  if (!(cfg.lr >= 0.0)) throw ArgumentError("train: lr must be >= 0");
  if (cfg.optimizer == OptimizerKind::GdWd && !(cfg.weight_decay >= 0.0 && cfg.weight_decay < 1.0)) {
    throw ArgumentError("train: gd weight decay must lie in [0, 1)");
  }
  if (train_data.size() == 0) throw ArgumentError("train: empty training set");
  for (const auto& name : cfg.decay_exempt) model.at(name).decay_exempt = true;

  auto& params = model.params();
  AdamWState<T> adam = AdamWState<T>::like(params);
  const AdamWConfig adam_cfg{cfg.lr, cfg.weight_decay, cfg.beta1, cfg.beta2, cfg.eps};
  const GdWdConfig gd_cfg{cfg.lr, cfg.weight_decay};

  metrics::TrainingTrace trace;
  trace.ntk_seed = derive_seed(cfg.seed, 0x4e544bULL);

  std::optional<Batch<T>> ntk_batch;
  Tensor2<double> ntk_prev;
  if (cfg.ntk_every > 0) {
    const std::size_t n = train_data.size();
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    SplitMix64 rng(trace.ntk_seed);
    const std::size_t take = std::min(cfg.ntk_points, n);
    for (std::size_t i = 0; i < take; ++i) std::swap(idx[i], idx[i + rng.below(n - i)]);
    idx.resize(take);
    std::sort(idx.begin(), idx.end());
    ntk_batch.emplace(train_data, idx);
    ntk_prev = metrics::pseudo_ntk(model, ntk_batch->view());
  }

  const std::size_t n = train_data.size();
  const std::size_t bs = cfg.batch_size == 0 ? n : std::min(cfg.batch_size, n);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  SplitMix64 shuffle_rng(derive_seed(cfg.seed, 0x5348554646ULL));
  const auto start = std::chrono::steady_clock::now();

  auto step_on = [&](const DataView<T>& data) {
    model.zero_grad();
    nd::Graph<T> g;
    const nd::Var loss = loss_node(g, model.forward(g, data.inputs), data, cfg.loss);
    const double value = g.value(loss)(0, 0);
    if (!std::isfinite(value)) return false;
    g.backward(loss);
    if (cfg.optimizer == OptimizerKind::AdamW) adamw_step<T>(params, adam, adam_cfg);
    else gd_wd_step<T>(params, gd_cfg);
    return true;
  };

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    bool finite = true;
    if (bs == n) {
      finite = step_on(train_data);
    } else {
      for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[shuffle_rng.below(i)]);
      for (std::size_t off = 0; off < n && finite; off += bs) {
        const Batch<T> batch(train_data, std::span<const std::size_t>(order).subspan(off, std::min(bs, n - off)));
        finite = step_on(batch.view());
      }
    }

    const bool measure_ntk = cfg.ntk_every > 0 && epoch % cfg.ntk_every == 0;
    if (!finite || epoch % cfg.eval_every == 0 || epoch == cfg.epochs || measure_ntk) {
      metrics::TraceRecord rec;
      rec.epoch = epoch;
      const Eval tr = evaluate(model, train_data, cfg.loss);
      const Eval te = evaluate(model, test_data, cfg.loss);
      rec.train_loss = finite ? tr.loss : std::nan("");
      rec.train_acc = tr.acc;
      rec.test_loss = te.loss;
      rec.test_acc = te.acc;
      if (measure_ntk && finite) {
        Tensor2<double> k = metrics::pseudo_ntk(model, ntk_batch->view());
        rec.ntk_drift = metrics::ntk_drift(k, ntk_prev);
        ntk_prev = std::move(k);
      }
      if (!cfg.norm_ratio_group.empty()) rec.r_w = metrics::norm_ratio(model.at(cfg.norm_ratio_group).value);
      if (cfg.record_wallclock) {
        rec.wallclock_ms =
            std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
      }
      trace.append(rec);
      if (!finite || !std::isfinite(rec.train_loss) || !std::isfinite(rec.test_loss)) {
        trace.status = metrics::RunStatus::Diverged;
        break;
      }
      if (stop && stop(rec, model)) {
        trace.status = metrics::RunStatus::Stopped;
        break;
      }
    }
  }
  return trace;
}

#define GROKKIT_OPTIM_INSTANTIATE(T)                                                                   \
  template void gd_wd_step<T>(std::span<ParamGroup<T>>, const GdWdConfig&);                             \
  template struct AdamWState<T>;                                                                       \
  template void adamw_step<T>(std::span<ParamGroup<T>>, AdamWState<T>&, const AdamWConfig&);            \
  template StopFn<T> stop_when_both_reach<T>(double);                                                  \
  template double evaluate_loss<T>(models::Model<T>&, const DataView<T>&, LossKind);                   \
  template metrics::TrainingTrace train<T>(models::Model<T>&, const DataView<T>&, const DataView<T>&,  \
                                           const TrainConfig&, const StopFn<T>&);

GROKKIT_OPTIM_INSTANTIATE(float)
GROKKIT_OPTIM_INSTANTIATE(double)

}  // namespace grokkit::optim
