#include "grokkit/theoryxor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "grokkit/errors.hpp"
#include "grokkit/nd/kernels.hpp"
#include "grokkit/optim.hpp"
#include "grokkit/rng.hpp"
#include "grokkit/util.hpp"

namespace grokkit::theoryxor {

using nd::Tensor2;

namespace {

// Sub-seed salts, shared by every entry point so runs line up.
constexpr std::uint64_t kSaltData = 1;
constexpr std::uint64_t kSaltTest = 2;
constexpr std::uint64_t kSaltWeak = 3;
constexpr std::uint64_t kSaltTargetData = 4;
constexpr std::uint64_t kSaltTarget = 5;
constexpr std::uint64_t kSaltTraceTest = 6;
constexpr int kTraceTestSamples = 500;
constexpr int kChunk = 1000;

double relu(double v) { return v > 0.0 ? v : 0.0; }

// Sign of the product; sign(0) never matches a +-1 label.
bool correct(double f, double y) { return f * y > 0.0; }

}  // namespace

void XorTheoryConfig::validate() const {
  if (p < 3 || n < 1 || m < 1 || weak_width < 1) throw ArgumentError("xor theory: p >= 3, n, m and weak_width >= 1");
  if (!(eps > 0.0) || !(v_init > 0.0) || !(alpha > 0.0) || !(C > 0.0)) {
    throw ArgumentError("xor theory: eps, v_init, alpha and C must be positive");
  }
  if (!(weak_lr > 0.0) || weak_lambda < 0.0 || weak_lambda >= 1.0) {
    throw ArgumentError("xor theory: weak_lr > 0 and weak_lambda in [0, 1)");
  }
  if (weak_max_epochs < 1 || plateau_window < 1 || test_samples < 0) {
    throw ArgumentError("xor theory: weak_max_epochs and plateau_window >= 1, test_samples >= 0");
  }
}

bool AssumptionReport::all_satisfied() const noexcept {
  return std::all_of(checks.begin(), checks.end(), [](const AssumptionCheck& c) { return c.satisfied; });
}

std::string AssumptionReport::describe() const {
  std::ostringstream out;
  for (const auto& c : checks) {
    out << c.name << " " << c.statement << ": observed " << format_real(c.observed);
    if (std::isfinite(c.lower)) out << ", lower " << format_real(c.lower);
    if (std::isfinite(c.upper)) out << ", upper " << format_real(c.upper);
    out << (c.satisfied ? " [ok]" : " [violated]") << "\n";
  }
  return out.str();
}

AssumptionReport check_assumptions(const XorTheoryConfig& cfg, const Tensor2<double>& delta) {
  cfg.validate();
  if (delta.rows() != static_cast<std::size_t>(cfg.p - 2) || delta.cols() == 0) {
    throw DimensionError("xor theory: delta is " + delta.shape() + " but p - 2 = " + std::to_string(cfg.p - 2));
  }
  const double n = cfg.n, p = cfg.p, m = cfg.m;
  const double logn = std::log(n);
  double dn = 0.0;
  for (double v : delta.data()) dn += v * v;
  dn = std::sqrt(dn);

  AssumptionReport r;
  r.checks[0] = {"A1", "noise scale eps <= (n / (p log^3 n))^(1/4)", -std::numeric_limits<double>::infinity(),
                 std::pow(n / (p * logn * logn * logn), 0.25), cfg.eps, false};
  r.checks[1] = {"A2", "||delta||_F <= C eps sqrt(p / n)", -std::numeric_limits<double>::infinity(),
                 cfg.C * cfg.eps * std::sqrt(p / n), dn, false};
  r.checks[2] = {"A3", "v_init <= C log^(-3/2) n", -std::numeric_limits<double>::infinity(),
                 cfg.C * std::pow(logn, -1.5), cfg.v_init, false};
  r.checks[3] = {"A4", "sqrt(m) v_init / C <= alpha <= sqrt(m) v_init", std::sqrt(m) * cfg.v_init / cfg.C,
                 std::sqrt(m) * cfg.v_init, cfg.alpha, false};
  r.checks[4] = {"A5", "m >= 2 log^3 n", 2.0 * logn * logn * logn, std::numeric_limits<double>::infinity(), m,
                 false};
  for (auto& c : r.checks) c.satisfied = c.observed >= c.lower && c.observed <= c.upper;
  return r;
}

double prototype_accuracy(const Tensor2<double>& w, std::span<const double> a) {
  if (w.rows() != 2 || w.cols() != a.size()) {
    throw DimensionError("prototype_accuracy: w is " + w.shape() + " for " + std::to_string(a.size()) + " neurons");
  }
  static constexpr double kProto[4][2] = {{1, 1}, {-1, -1}, {-1, 1}, {1, -1}};
  int hits = 0;
  for (const auto& x : kProto) {
    double f = 0.0;
    for (std::size_t j = 0; j < a.size(); ++j) f += a[j] * relu(w(0, j) * x[0] + w(1, j) * x[1]);
    hits += correct(f, x[0] * x[1]);
  }
  return hits / 4.0;
}

namespace {

struct SmallNet {
  Tensor2<double> w = Tensor2<double>(2, 3);
  std::vector<double> a = std::vector<double>(3);
};

SmallNet random_net(SplitMix64& rng) {
  SmallNet net;
  for (double& v : net.w.data()) v = rng.normal();
  for (double& v : net.a) v = rng.normal();
  return net;
}

// Full-batch GD on the mean logistic loss over the four prototypes.
void optimize(SmallNet& net, int steps, double lr) {
  static constexpr double kProto[4][2] = {{1, 1}, {-1, -1}, {-1, 1}, {1, -1}};
  for (int s = 0; s < steps; ++s) {
    Tensor2<double> gw(2, 3);
    std::vector<double> ga(3, 0.0);
    for (const auto& x : kProto) {
      const double y = x[0] * x[1];
      double pre[3], f = 0.0;
      for (int j = 0; j < 3; ++j) {
        pre[j] = net.w(0, j) * x[0] + net.w(1, j) * x[1];
        f += net.a[j] * relu(pre[j]);
      }
      const double coef = -y / (1.0 + std::exp(y * f)) / 4.0;
      for (int j = 0; j < 3; ++j) {
        ga[j] += coef * relu(pre[j]);
        if (pre[j] > 0.0) {
          gw(0, j) += coef * net.a[j] * x[0];
          gw(1, j) += coef * net.a[j] * x[1];
        }
      }
    }
    for (int j = 0; j < 3; ++j) {
      net.a[j] -= lr * ga[j];
      net.w(0, j) -= lr * gw(0, j);
      net.w(1, j) -= lr * gw(1, j);
    }
  }
}

}  // namespace

Lemma1Result lemma1_oracle(int random_trials, int optimized_trials, std::uint64_t seed) {
  if (random_trials < 0 || optimized_trials < 0 || random_trials + optimized_trials == 0) {
    throw ArgumentError("lemma1_oracle: trial counts must be >= 0 and not both zero");
  }
  Lemma1Result r;
  r.random_trials = random_trials;
  r.optimized_trials = optimized_trials;
  SplitMix64 rng(seed);
  for (int t = 0; t < random_trials; ++t) {
    const SmallNet net = random_net(rng);
    r.max_random = std::max(r.max_random, prototype_accuracy(net.w, net.a));
  }
  for (int t = 0; t < optimized_trials; ++t) {
    SmallNet net = random_net(rng);
    optimize(net, 500, 0.5);
    r.max_optimized = std::max(r.max_optimized, prototype_accuracy(net.w, net.a));
  }
  r.max_accuracy = std::max(r.max_random, r.max_optimized);

  const Tensor2<double> hw{{1.0, -1.0, -1.0}, {1.0, -1.0, 1.0}};
  const std::vector<double> ha{1.0, 1.0, -1.0};
  r.handcrafted = prototype_accuracy(hw, ha);

  // Same net on noisy samples; noise weights are zero so only the signal counts.
  const auto ds = tasks::gen_xor<double>(50, 10000, 0.05, derive_seed(seed, kSaltTest));
  int hits = 0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    double f = 0.0;
    for (int j = 0; j < 3; ++j) f += ha[j] * relu(hw(0, j) * ds.x(i, 0) + hw(1, j) * ds.x(i, 1));
    hits += correct(f, ds.y[i]);
  }
  r.handcrafted_sampled = static_cast<double>(hits) / static_cast<double>(ds.size());
  return r;
}

EventReport event_gdata(const tasks::VectorDataset<double>& data, const Tensor2<double>& u, double eps,
                        std::optional<int> n_ref) {
  const std::size_t p = data.dim();
  if (u.rows() != p || p < 3) throw DimensionError("event_gdata: U is " + u.shape() + " for p = " + std::to_string(p));
  const double n = n_ref ? *n_ref : static_cast<double>(data.size());
  if (!(n > 1.0)) throw ArgumentError("event_gdata: need n > 1");
  const double bound = eps * eps * std::sqrt(static_cast<double>(p) / n) * std::log(n);

  Tensor2<double> z(data.size(), u.cols());
  nd::kernels::gemm(nd::kernels::Trans::No, nd::kernels::Trans::No, data.x, u, z, false);
  EventReport r;
  r.name = "gdata";
  r.checks.reserve(data.size());
  std::size_t held = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    double ss = 0.0;
    for (std::size_t k = 0; k < u.cols(); ++k) {
      const double d = z(i, k) - (u(0, k) * data.x(i, 0) + u(1, k) * data.x(i, 1));
      ss += d * d;
    }
    EventCheck c{"sample " + std::to_string(i), std::sqrt(ss), bound, false};
    c.holds = c.observed <= c.bound;
    held += c.holds;
    r.checks.push_back(std::move(c));
  }
  r.fraction = data.size() == 0 ? 1.0 : static_cast<double>(held) / static_cast<double>(data.size());
  return r;
}

EventReport event_balance(const tasks::VectorDataset<double>& data, const Tensor2<double>& v,
                          std::span<const double> a) {
  const std::size_t m = a.size();
  if (v.cols() != m || v.rows() == 0 || v.rows() > 16) {
    throw DimensionError("event_balance: V is " + v.shape() + " for " + std::to_string(m) + " neurons");
  }
  const double n = static_cast<double>(data.size());
  if (!(n > 1.0)) throw ArgumentError("event_balance: need n > 1");
  const double logn = std::log(n), md = static_cast<double>(m);
  const std::size_t cells = std::size_t{1} << v.rows();

  std::vector<std::size_t> by_cell(cells, 0), by_cell_pos(cells, 0), by_cell_neg(cells, 0);
  std::size_t pos = 0, neg = 0;
  for (std::size_t j = 0; j < m; ++j) {
    std::size_t e = 0;
    for (std::size_t k = 0; k < v.rows(); ++k) e |= static_cast<std::size_t>(v(k, j) > 0.0) << k;
    ++by_cell[e];
    if (a[j] > 0.0) {
      ++pos;
      ++by_cell_pos[e];
    } else if (a[j] < 0.0) {
      ++neg;
      ++by_cell_neg[e];
    }
  }
  auto cell_name = [&](std::size_t e) {
    std::string s = "[";
    for (std::size_t k = 0; k < v.rows(); ++k) s += std::string(k ? "," : "") + ((e >> k) & 1 ? "+" : "-");
    return s + "]";
  };

  EventReport r;
  r.name = "balance";
  auto add = [&](std::string name, double count, double expect, double bound) {
    EventCheck c{std::move(name), std::abs(count - expect), bound, false};
    c.holds = c.observed <= c.bound;
    r.checks.push_back(std::move(c));
  };
  const double mb = md / logn;
  add("B1 a>0", static_cast<double>(pos), md / 2.0, mb);
  add("B1 a<0", static_cast<double>(neg), md / 2.0, mb);
  for (std::size_t e = 0; e < cells; ++e) add("B2 " + cell_name(e), static_cast<double>(by_cell[e]), md / cells, mb);
  for (std::size_t e = 0; e < cells; ++e) {
    add("B3 a>0 " + cell_name(e), static_cast<double>(by_cell_pos[e]), md / (2.0 * cells), mb);
    add("B3 a<0 " + cell_name(e), static_cast<double>(by_cell_neg[e]), md / (2.0 * cells), mb);
  }
  std::size_t counts[4] = {0, 0, 0, 0};
  for (std::size_t i = 0; i < data.size(); ++i) {
    counts[(data.x(i, 0) > 0 ? 0 : 1) + (data.x(i, 1) > 0 ? 0 : 2)]++;
  }
  static constexpr const char* kProtoNames[4] = {"[+,+]", "[-,+]", "[+,-]", "[-,-]"};
  for (int q = 0; q < 4; ++q) add(std::string("B4 ") + kProtoNames[q], static_cast<double>(counts[q]), n / 4.0, n / logn);

  const auto held = std::count_if(r.checks.begin(), r.checks.end(), [](const EventCheck& c) { return c.holds; });
  r.fraction = static_cast<double>(held) / static_cast<double>(r.checks.size());
  return r;
}

template <typename T>
EventReport event_balance(const tasks::VectorDataset<double>& data, const models::Model<T>& target) {
  const auto v = target.at("V").value.template cast<double>();
  const auto a = target.at("a").value.template cast<double>();
  return event_balance(data, v, std::span<const double>(a.data()));
}

Tensor2<double> normalize_embedding(const Tensor2<double>& w) {
  if (w.rows() < 2) throw DimensionError("normalize_embedding: need at least 2 rows, got " + w.shape());
  Tensor2<double> out = w;
  for (std::size_t j = 0; j < w.cols(); ++j) {
    const double s = std::hypot(w(0, j), w(1, j));
    if (s == 0.0) continue;
    const double f = std::sqrt(2.0) / s;
    for (std::size_t i = 0; i < w.rows(); ++i) out(i, j) *= f;
  }
  return out;
}

Tensor2<double> noise_block(const Tensor2<double>& u) {
  if (u.rows() < 3) throw DimensionError("noise_block: need at least 3 rows, got " + u.shape());
  Tensor2<double> out(u.rows() - 2, u.cols());
  for (std::size_t i = 2; i < u.rows(); ++i)
    for (std::size_t j = 0; j < u.cols(); ++j) out(i - 2, j) = u(i, j);
  return out;
}

double fresh_accuracy(models::Model<double>& model, int p, double eps, int count, std::uint64_t seed) {
  if (count <= 0) return std::nan("");
  double hits = 0.0;
  for (int start = 0, chunk = 0; start < count; start += kChunk, ++chunk) {
    const int size = std::min(kChunk, count - start);
    const auto ds = tasks::gen_xor<double>(p, size, eps, derive_seed(seed, chunk));
    hits += metrics::accuracy(model, metrics::DataView<double>::of(ds)) * size;
  }
  return hits / count;
}

WeakResult train_weak(const XorTheoryConfig& cfg, const tasks::VectorDataset<double>& data) {
  cfg.validate();
  if (data.dim() != static_cast<std::size_t>(cfg.p)) {
    throw DimensionError("train_weak: data has p = " + std::to_string(data.dim()) + ", config " + std::to_string(cfg.p));
  }
  models::XorNetConfig net;
  net.input_dim = cfg.p;
  net.width = cfg.weak_width;
  net.w_init = cfg.weak_w_init;
  net.a_init = cfg.weak_a_init;
  auto model = models::build_xor_net<double>(net, derive_seed(cfg.seed, kSaltWeak));

  optim::TrainConfig tc;
  tc.optimizer = optim::OptimizerKind::GdWd;
  tc.lr = cfg.weak_lr;
  tc.weight_decay = cfg.weak_lambda;
  tc.loss = optim::LossKind::Exponential;
  tc.epochs = cfg.weak_max_epochs;

  WeakResult r;
  std::vector<double> losses;
  const auto window = static_cast<std::size_t>(cfg.plateau_window);
  const double tol = cfg.plateau_tol;
  optim::StopFn<double> plateau = [&](const metrics::TraceRecord& rec, models::Model<double>&) {
    losses.push_back(rec.train_loss);
    if (losses.size() <= window) return false;
    const double before = losses[losses.size() - 1 - window];
    r.plateaued = std::abs(rec.train_loss - before) <= tol * std::abs(before);
    return r.plateaued;
  };

  const auto train_view = metrics::DataView<double>::of(data);
  if (cfg.test_samples > 0) {
    const auto trace_test = tasks::gen_xor<double>(cfg.p, std::min(kTraceTestSamples, cfg.test_samples), cfg.eps,
                                                   derive_seed(cfg.seed, kSaltTraceTest));
    r.trace = optim::train<double>(*model, train_view, metrics::DataView<double>::of(trace_test), tc, plateau);
  } else {
    r.trace = optim::train<double>(*model, train_view, train_view, tc, plateau);
  }

  r.w = model->at("W").value;
  const auto& a = model->at("a").value;
  r.a.assign(a.data().begin(), a.data().end());
  r.epochs = r.trace.back().epoch;
  r.train_acc = r.trace.back().train_acc;
  r.test_acc = fresh_accuracy(*model, cfg.p, cfg.eps, cfg.test_samples, derive_seed(cfg.seed, kSaltTest));
  r.features = metrics::feature_alignment(r.w);
  r.coverage = metrics::feature_coverage(r.features);
  r.r_w = metrics::norm_ratio(r.w);
  return r;
}

WeakResult weak_experiment(const XorTheoryConfig& cfg) {
  cfg.validate();
  return train_weak(cfg, tasks::gen_xor<double>(cfg.p, cfg.n, cfg.eps, derive_seed(cfg.seed, kSaltData)));
}

OneStepResult one_step_experiment(const XorTheoryConfig& cfg) {
  cfg.validate();
  OneStepResult r;
  const auto data = tasks::gen_xor<double>(cfg.p, cfg.n, cfg.eps, derive_seed(cfg.seed, kSaltData));
  r.weak = train_weak(cfg, data);
  r.features_ok = r.weak.coverage == 3;
  if (!r.features_ok) {
    r.flags.push_back("weak model covers " + std::to_string(r.weak.coverage) + " of the 4 features, expected 3");
  }

  const Tensor2<double> u = normalize_embedding(r.weak.w);
  r.assumptions = check_assumptions(cfg, noise_block(u));
  for (const auto& c : r.assumptions.checks) {
    if (!c.satisfied) r.flags.push_back(c.name + " violated");
  }

  const auto target_data =
      cfg.reuse_weak_data ? data
                          : tasks::gen_xor<double>(cfg.p, cfg.n, cfg.eps, derive_seed(cfg.seed, kSaltTargetData));
  models::XorNetConfig net;
  net.input_dim = cfg.p;
  net.width = cfg.m;
  net.init = models::XorInit::Discrete;
  net.v_init = cfg.v_init;
  net.embed_dim = static_cast<int>(u.cols());
  net.freeze_a = true;
  net.freeze_u = true;
  auto target = models::build_xor_net<double>(net, derive_seed(cfg.seed, kSaltTarget), &u);

  r.gdata = event_gdata(target_data, u, cfg.eps);
  r.balance = event_balance(target_data, *target);
  if (!r.gdata.all_hold()) r.flags.push_back("gdata event fails on some training points");
  if (!r.balance.all_hold()) r.flags.push_back("balance event fails");

  const auto view = metrics::DataView<double>::of(target_data);
  r.initial_train_acc = metrics::accuracy(*target, view);
  optim::TrainConfig tc;
  tc.optimizer = optim::OptimizerKind::GdWd;
  tc.lr = cfg.alpha;
  tc.weight_decay = 0.0;
  tc.loss = optim::LossKind::Exponential;
  tc.epochs = 1;
  const auto trace = optim::train<double>(*target, view, view, tc);
  r.train_acc = trace.back().train_acc;
  r.test_acc = fresh_accuracy(*target, cfg.p, cfg.eps, cfg.test_samples, derive_seed(cfg.seed, kSaltTest));
  return r;
}

std::vector<NormRatioPoint> norm_ratio_sweep(const XorTheoryConfig& base, std::span<const int> ps,
                                             std::span<const int> ns, std::span<const double> epss) {
  std::vector<NormRatioPoint> out;
  for (int p : ps)
    for (int n : ns)
      for (double eps : epss) {
        XorTheoryConfig cfg = base;
        cfg.p = p;
        cfg.n = n;
        cfg.eps = eps;
        cfg.test_samples = 0;
        const auto data = tasks::gen_xor<double>(p, n, eps, derive_seed(cfg.seed, kSaltData));
        const auto weak = train_weak(cfg, data);
        out.push_back({p, n, eps, cfg.seed, weak.r_w, weak.coverage});
      }
  return out;
}

double loglog_slope(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw ArgumentError("loglog_slope: need two or more paired points");
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(x[i] > 0.0) || !(y[i] > 0.0)) throw ArgumentError("loglog_slope: values must be positive");
    const double lx = std::log(x[i]), ly = std::log(y[i]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  const double k = static_cast<double>(x.size());
  const double den = k * sxx - sx * sx;
  if (den == 0.0) throw ArgumentError("loglog_slope: x values are all equal");
  return (k * sxy - sx * sy) / den;
}

template EventReport event_balance<float>(const tasks::VectorDataset<double>&, const models::Model<float>&);
template EventReport event_balance<double>(const tasks::VectorDataset<double>&, const models::Model<double>&);

}  // namespace grokkit::theoryxor
