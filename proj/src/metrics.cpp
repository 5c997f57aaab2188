#include "grokkit/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <type_traits>

#include "grokkit/errors.hpp"
#include "grokkit/nd/kernels.hpp"

namespace grokkit::metrics {

using nd::Tensor2;

template <typename T>
DataView<T> DataView<T>::of(const tasks::TokenDataset& ds) {
  DataView v;
  v.inputs = models::TokenInputs{ds.a, ds.b};
  v.classes = ds.labels;
  return v;
}

template <typename T>
DataView<T> DataView<T>::of(const tasks::VectorDataset<T>& ds) {
  DataView v;
  v.inputs = &ds.x;
  v.signs = ds.y;
  return v;
}

template <typename T>
std::size_t DataView<T>::size() const noexcept {
  return is_classification() ? classes.size() : signs.size();
}

const char* to_string(RunStatus s) noexcept {
  switch (s) {
    case RunStatus::Completed: return "completed";
    case RunStatus::Stopped: return "stopped";
    case RunStatus::Diverged: return "diverged";
  }
  return "?";
}

void TrainingTrace::append(const TraceRecord& r) {
  if (!records_.empty() && r.epoch <= records_.back().epoch) {
    throw ArgumentError("trace: epoch " + std::to_string(r.epoch) + " does not follow " +
                        std::to_string(records_.back().epoch));
  }
  auto in_unit = [](double a) { return std::isnan(a) || (a >= 0.0 && a <= 1.0); };
  if (!in_unit(r.train_acc) || !in_unit(r.test_acc)) throw ArgumentError("trace: accuracy outside [0, 1]");
  records_.push_back(r);
}

TrainingTrace TrainingTrace::prefix(int epoch) const {
  TrainingTrace t;
  t.status = status;
  t.ntk_seed = ntk_seed;
  for (const auto& r : records_)
    if (r.epoch <= epoch) t.records_.push_back(r);
  return t;
}

TimeGapResult time_gap(const TrainingTrace& trace, double threshold) {
  if (trace.empty()) throw ArgumentError("time_gap: empty trace");
  TimeGapResult res;
  for (const auto& r : trace.records()) {
    if (!res.epoch_train && r.train_acc >= threshold) res.epoch_train = r.epoch;
    if (!res.epoch_test && r.test_acc >= threshold) res.epoch_test = r.epoch;
  }
  if (res.epoch_train && res.epoch_test) {
    res.gap = *res.epoch_test - *res.epoch_train;
    res.reciprocal = *res.gap >= 1 ? 1.0 / *res.gap : 0.0;
  }
  return res;
}

template <typename T>
double accuracy_from_outputs(const Tensor2<T>& out, const DataView<T>& data) {
  const std::size_t n = data.size();
  if (out.rows() != n) {
    throw DimensionError("accuracy: outputs " + out.shape() + " for " + std::to_string(n) + " labels");
  }
  if (n == 0) return 0.0;
  std::size_t correct = 0;
  if (data.is_classification()) {
    for (std::size_t i = 0; i < n; ++i) {
      const auto row = out.row(i);
      const auto best = std::max_element(row.begin(), row.end()) - row.begin();
      if (best == data.classes[i]) ++correct;
    }
  } else {
    if (out.cols() != 1) throw DimensionError("accuracy: scalar labels need one output column, got " + out.shape());
    for (std::size_t i = 0; i < n; ++i) {
      const T s = out(i, 0);
      if ((s > 0 && data.signs[i] > 0) || (s < 0 && data.signs[i] < 0)) ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(n);
}

template <typename T>
double accuracy(models::Model<T>& model, const DataView<T>& data) {
  return accuracy_from_outputs(models::predict(model, data.inputs), data);
}

namespace {

// Inputs restricted to row i.
template <typename T>
struct RowInput {
  models::Inputs<T> inputs;
  Tensor2<T> dense;
};

template <typename T>
void select_row(const models::Inputs<T>& in, std::size_t i, RowInput<T>& out) {
  if (const auto* t = std::get_if<models::TokenInputs>(&in)) {
    out.inputs = models::TokenInputs{t->a.subspan(i, 1), t->b.subspan(i, 1)};
    return;
  }
  const Tensor2<T>& x = *std::get<const Tensor2<T>*>(in);
  out.dense = Tensor2<T>(1, x.cols());
  std::ranges::copy(x.row(i), out.dense.data().begin());
  out.inputs = &out.dense;
}

}  // namespace

template <typename T>
Tensor2<double> pseudo_ntk(models::Model<T>& model, const DataView<T>& points) {
  const std::size_t n = std::visit([](const auto& v) -> std::size_t {
    if constexpr (std::is_same_v<std::decay_t<decltype(v)>, models::TokenInputs>) return v.size();
    else return v->rows();
  }, points.inputs);
  std::size_t dim = 0;
  for (const auto& p : model.params())
    if (p.trainable) dim += p.value.size();

  Tensor2<double> grads(n, dim);
  RowInput<T> row;
  for (std::size_t i = 0; i < n; ++i) {
    model.zero_grad();
    select_row(points.inputs, i, row);
    nd::Graph<T> g;
    g.backward(g.sum(model.forward(g, row.inputs)));
    double* dst = grads.row(i).data();
    for (const auto& p : model.params()) {
      if (!p.trainable) continue;
      if (p.has_grad()) std::copy(p.grad.data().begin(), p.grad.data().end(), dst);
      dst += p.value.size();
    }
  }
  model.zero_grad();

  Tensor2<double> k(n, n);
  nd::kernels::gemm(nd::kernels::Trans::No, nd::kernels::Trans::Yes, grads, grads, k);
  const double inv = 1.0 / static_cast<double>(model.output_dim());
  for (double& v : k.data()) v *= inv;
  return k;
}

double ntk_drift(const Tensor2<double>& k_t, const Tensor2<double>& k_prev) {
  nd::require_same_shape(k_t, k_prev, "ntk_drift");
  double s = 0.0;
  for (std::size_t i = 0; i < k_t.size(); ++i) {
    const double d = k_t.data()[i] - k_prev.data()[i];
    s += d * d;
  }
  return std::sqrt(s);
}

template <typename T>
double norm_ratio(const Tensor2<T>& w) {
  const std::size_t p = w.rows();
  if (p < 3) throw ArgumentError("norm_ratio: need at least 3 rows, got " + w.shape());
  double signal = 0.0, noise = 0.0;
  for (std::size_t i = 0; i < p; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < w.cols(); ++j) s += static_cast<double>(w(i, j)) * w(i, j);
    (i < 2 ? signal : noise) += s;
  }
  if (!(signal > 0.0)) throw ArgumentError("norm_ratio: signal rows have zero norm");
  return std::sqrt(noise / static_cast<double>(p - 2)) / std::sqrt(signal / 2.0);
}

const char* to_string(XorFeature f) noexcept {
  switch (f) {
    case XorFeature::PlusMu1: return "+mu1";
    case XorFeature::MinusMu1: return "-mu1";
    case XorFeature::PlusMu2: return "+mu2";
    case XorFeature::MinusMu2: return "-mu2";
  }
  return "?";
}

template <typename T>
std::vector<FeatureMatch> feature_alignment(const Tensor2<T>& w) {
  if (w.rows() < 2) throw ArgumentError("feature_alignment: need at least 2 rows, got " + w.shape());
  // mu1 = [1, 1], mu2 = [-1, 1], both scaled to unit length.
  static constexpr double r = 0.70710678118654752440;
  static constexpr double dirs[4][2] = {{r, r}, {-r, -r}, {-r, r}, {r, -r}};
  std::vector<FeatureMatch> out(w.cols());
  for (std::size_t j = 0; j < w.cols(); ++j) {
    const double x = w(0, j), y = w(1, j);
    const double norm = std::hypot(x, y);
    FeatureMatch best{XorFeature::PlusMu1, norm > 0.0 ? -2.0 : 0.0};
    if (norm > 0.0) {
      for (int f = 0; f < 4; ++f) {
        const double c = (x * dirs[f][0] + y * dirs[f][1]) / norm;
        if (c > best.cosine) best = {static_cast<XorFeature>(f), c};
      }
    }
    out[j] = best;
  }
  return out;
}

int feature_coverage(std::span<const FeatureMatch> matches, double threshold) {
  std::set<XorFeature> seen;
  for (const auto& m : matches)
    if (m.cosine >= threshold) seen.insert(m.feature);
  return static_cast<int>(seen.size());
}

FlopsEstimate flops_estimate(const models::ModelSpec& spec) {
  FlopsEstimate f;
  if (const auto* c = std::get_if<models::FnnConfig>(&spec)) {
    const double in = c->first_layer_fan_in(), width = c->width, out = c->out_classes;
    double macs = in * width + width * out + (c->depth == 3 ? width * width : 0.0);
    if (c->vocab > 0) {
      macs += 2.0 * c->d_embed;
      if (c->embedding == models::EmbeddingMode::Factorized) macs += 2.0 * c->factor_rank * c->d_embed;
    } else if (c->embedding == models::EmbeddingMode::Factorized) {
      macs += c->factor_rank * (in + width) - in * width;
    }
    f.forward = 2.0 * (macs + 2.0 * out);
    return f;
  }
  if (const auto* c = std::get_if<models::XorNetConfig>(&spec)) {
    const double p = c->input_dim, m = c->width;
    const double first = c->init == models::XorInit::Gaussian ? p * m : p * c->embed_dim + c->embed_dim * m;
    f.forward = 2.0 * (first + m);
    return f;
  }
  const auto& c = std::get<models::TransformerConfig>(spec);
  const double d = c.d_embed, layers = c.n_layers, d_attn = c.d_head;
  const double ctx = models::TransformerConfig::kContext;
  f.non_embedding = 2.0 * d * layers * (2.0 * d_attn + c.d_mlp);
  f.forward = 2.0 * (f.non_embedding + layers * ctx * d_attn);
  f.embedding = 2.0 * (ctx * d + d * c.vocab);
  return f;
}

#define GROKKIT_METRICS_INSTANTIATE(T)                                                  \
  template struct DataView<T>;                                                          \
  template double accuracy_from_outputs<T>(const Tensor2<T>&, const DataView<T>&);      \
  template double accuracy<T>(models::Model<T>&, const DataView<T>&);                   \
  template Tensor2<double> pseudo_ntk<T>(models::Model<T>&, const DataView<T>&);        \
  template double norm_ratio<T>(const Tensor2<T>&);                                     \
  template std::vector<FeatureMatch> feature_alignment<T>(const Tensor2<T>&);

GROKKIT_METRICS_INSTANTIATE(float)
GROKKIT_METRICS_INSTANTIATE(double)

}  // namespace grokkit::metrics
