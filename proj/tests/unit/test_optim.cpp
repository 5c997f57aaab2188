#include <doctest.h>

#include <cmath>
#include <vector>

#include "grokkit/errors.hpp"
#include "grokkit/optim.hpp"
#include "grokkit/tasks.hpp"

using namespace grokkit;
using namespace grokkit::optim;
using nd::ParamGroup;
using nd::Tensor2;

namespace {

ParamGroup<double> scalar_group(double value, double grad, bool trainable = true) {
  ParamGroup<double> p;
  p.name = "theta";
  p.value = Tensor2<double>{{value}};
  p.grad = Tensor2<double>{{grad}};
  p.trainable = trainable;
  return p;
}

class Linear1 final : public models::Model<double> {
 public:
  explicit Linear1(double theta) : Model(spec()) { add_param("theta", Tensor2<double>{{theta}}); }

 protected:
  nd::Var forward_impl(nd::Graph<double>& g, const models::Inputs<double>& in) override {
    return g.matmul(g.input(*std::get<const Tensor2<double>*>(in)), g.param(at("theta")));
  }

 private:
  static models::FnnConfig spec() {
    models::FnnConfig c;
    c.depth = 2;
    c.input_dim = 1;
    c.width = 1;
    c.out_classes = 1;
    return c;
  }
};

models::FnnConfig small_classifier() {
  models::FnnConfig c;
  c.depth = 2;
  c.vocab = 11;
  c.d_embed = 4;
  c.width = 16;
  c.out_classes = 11;
  return c;
}

}  // namespace

TEST_CASE("gd with weight decay") {
  std::vector<ParamGroup<double>> ps{scalar_group(1.0, 0.5)};
  gd_wd_step<double>(ps, {0.1, 0.1});
  CHECK(ps[0].value(0, 0) == doctest::Approx(0.85));

  ps = {scalar_group(1.0, 1.0)};
  gd_wd_step<double>(ps, {0.1, 0.0});
  CHECK(ps[0].value(0, 0) == doctest::Approx(0.9));

  ps = {scalar_group(1.0, 0.0)};
  gd_wd_step<double>(ps, {0.1, 0.1});
  CHECK(ps[0].value(0, 0) == doctest::Approx(0.9));

  ps = {scalar_group(1.0, 3.0), scalar_group(2.0, 3.0, false)};
  gd_wd_step<double>(ps, {0.0, 0.0});
  CHECK(ps[0].value(0, 0) == 1.0);
  gd_wd_step<double>(ps, {0.5, 0.5});
  CHECK(ps[1].value(0, 0) == 2.0);

  ps[0].grad = Tensor2<double>(2, 1);
  CHECK_THROWS_AS(gd_wd_step<double>(ps, {0.1, 0.0}), DimensionError);
}

TEST_CASE("adamw decoupled decay") {
  std::vector<ParamGroup<double>> ps{scalar_group(2.0, 0.0), scalar_group(2.0, 0.0)};
  ps[1].decay_exempt = true;
  auto state = AdamWState<double>::like(ps);
  adamw_step<double>(ps, state, {0.01, 0.5});
  CHECK(ps[0].value(0, 0) == 2.0 * (1.0 - 0.01 * 0.5));
  CHECK(ps[1].value(0, 0) == 2.0);
  CHECK(state.step == 1);
}

TEST_CASE("adamw first step is a sign step") {
  std::vector<ParamGroup<double>> ps{scalar_group(1.0, 0.37), scalar_group(1.0, -4.0)};
  auto state = AdamWState<double>::like(ps);
  AdamWConfig c;
  c.lr = 0.01;
  c.eps = 1e-14;
  adamw_step<double>(ps, state, c);
  CHECK(ps[0].value(0, 0) == doctest::Approx(1.0 - 0.01).epsilon(1e-10));
  CHECK(ps[1].value(0, 0) == doctest::Approx(1.0 + 0.01).epsilon(1e-10));
}

TEST_CASE("adamw without momentum against a hand formula") {
  std::vector<ParamGroup<double>> ps{scalar_group(1.0, 0.5)};
  auto state = AdamWState<double>::like(ps);
  AdamWConfig c;
  c.lr = 0.1;
  c.beta1 = 0.0;
  c.beta2 = 0.0;
  c.eps = 10.0;
  adamw_step<double>(ps, state, c);
  CHECK(ps[0].value(0, 0) == doctest::Approx(1.0 - 0.1 * 0.5 / (0.5 + 10.0)));
  ps[0].grad = Tensor2<double>{{-2.0}};
  adamw_step<double>(ps, state, c);
  CHECK(ps[0].value(0, 0) == doctest::Approx(1.0 - 0.1 * 0.5 / 10.5 + 0.1 * 2.0 / 12.0));
}

TEST_CASE("adamw rejects mismatched state") {
  std::vector<ParamGroup<double>> ps{scalar_group(1.0, 0.5)};
  AdamWState<double> empty;
  CHECK_THROWS_AS(adamw_step<double>(ps, empty, {}), DimensionError);
  auto state = AdamWState<double>::like(ps);
  state.m[0] = Tensor2<double>(2, 2);
  CHECK_THROWS_AS(adamw_step<double>(ps, state, {}), DimensionError);
}

TEST_CASE("train on a one-parameter model reproduces the hand sequence") {
  Linear1 m(0.0);
  const Tensor2<double> x{{1.0}, {2.0}};
  const std::vector<double> y{1.0, -1.0};
  metrics::DataView<double> d;
  d.inputs = &x;
  d.signs = y;
  TrainConfig cfg;
  cfg.optimizer = OptimizerKind::GdWd;
  cfg.lr = 0.1;
  cfg.weight_decay = 0.05;
  cfg.loss = LossKind::Exponential;
  cfg.epochs = 4;
  const auto trace = train<double>(m, d, d, cfg);
  REQUIRE(trace.records().size() == 4u);

  double theta = 0.0;
  for (const auto& r : trace.records()) {
    // L = (exp(-theta) + exp(2 theta)) / 2, dL/dtheta = (-exp(-theta) + 2 exp(2 theta)) / 2
    const double grad = (-std::exp(-theta) + 2.0 * std::exp(2.0 * theta)) / 2.0;
    theta = (1.0 - 0.05) * theta - 0.1 * grad;
    const double loss = (std::exp(-theta) + std::exp(2.0 * theta)) / 2.0;
    CHECK(r.train_loss == doctest::Approx(loss).epsilon(1e-12));
    CHECK(r.test_loss == doctest::Approx(loss).epsilon(1e-12));
  }
  CHECK(m.at("theta").value(0, 0) == doctest::Approx(theta).epsilon(1e-12));
}

TEST_CASE("train validation and record cadence") {
  const auto data = tasks::gen_modular(11, tasks::ModOp::Add);
  const auto view = metrics::DataView<float>::of(data);
  auto m = models::build_fnn<float>(small_classifier(), 1);
  TrainConfig cfg;
  cfg.epochs = 0;
  CHECK_THROWS_AS(train<float>(*m, view, view, cfg), ArgumentError);
  cfg.epochs = 1;
  CHECK(train<float>(*m, view, view, cfg).records().size() == 1u);
  cfg.epochs = 10;
  cfg.eval_every = 4;
  const auto t = train<float>(*m, view, view, cfg);
  REQUIRE(t.records().size() == 3u);
  CHECK(t.records()[0].epoch == 4);
  CHECK(t.records()[2].epoch == 10);
  cfg.loss = LossKind::Exponential;
  CHECK_THROWS_AS(train<float>(*m, view, view, cfg), ArgumentError);
}

TEST_CASE("zero step size leaves the model and trace constant") {
  const auto data = tasks::gen_modular(11, tasks::ModOp::Add);
  const auto view = metrics::DataView<float>::of(data);
  auto m = models::build_fnn<float>(small_classifier(), 2);
  const auto before = m->at("dense1").value;
  TrainConfig cfg;
  cfg.optimizer = OptimizerKind::GdWd;
  cfg.lr = 0.0;
  cfg.weight_decay = 0.0;
  cfg.epochs = 5;
  cfg.ntk_every = 1;
  cfg.ntk_points = 8;
  const auto t = train<float>(*m, view, view, cfg);
  CHECK(m->at("dense1").value == before);
  for (const auto& r : t.records()) {
    CHECK(r.train_loss == t.records()[0].train_loss);
    CHECK(r.test_acc == t.records()[0].test_acc);
    REQUIRE(r.ntk_drift.has_value());
    CHECK(*r.ntk_drift == 0.0);
  }
}

TEST_CASE("training is deterministic and learns") {
  const auto data = tasks::gen_modular(11, tasks::ModOp::Add);
  const auto sp = tasks::split(data.size(), 0.5, 3);
  const auto tr = data.subset(sp.train), te = data.subset(sp.test);
  TrainConfig cfg;
  cfg.lr = 0.01;
  cfg.weight_decay = 0.1;
  cfg.epochs = 60;
  cfg.batch_size = 16;
  cfg.seed = 9;
  cfg.ntk_every = 20;
  cfg.ntk_points = 16;
  cfg.norm_ratio_group = "embedding";
  auto run = [&] {
    auto m = models::build_fnn<float>(small_classifier(), 4);
    return train<float>(*m, metrics::DataView<float>::of(tr), metrics::DataView<float>::of(te), cfg);
  };
  const auto a = run(), b = run();
  REQUIRE(a.records().size() == b.records().size());
  for (std::size_t i = 0; i < a.records().size(); ++i) {
    const auto &ra = a.records()[i], &rb = b.records()[i];
    CHECK(ra.train_loss == rb.train_loss);
    CHECK(ra.test_loss == rb.test_loss);
    CHECK(ra.test_acc == rb.test_acc);
    CHECK(ra.ntk_drift == rb.ntk_drift);
    CHECK(ra.r_w == rb.r_w);
    CHECK_FALSE(ra.wallclock_ms.has_value());
  }
  CHECK(a.back().train_acc > 0.9);
  CHECK(a.back().train_loss < a.records().front().train_loss);
  CHECK(a.records()[19].ntk_drift.has_value());
  CHECK_FALSE(a.records()[18].ntk_drift.has_value());
}

TEST_CASE("stop callback and divergence") {
  const auto data = tasks::gen_modular(11, tasks::ModOp::Add);
  const auto view = metrics::DataView<float>::of(data);
  TrainConfig cfg;
  cfg.lr = 0.02;
  cfg.epochs = 500;
  auto m = models::build_fnn<float>(small_classifier(), 5);
  const auto t = train<float>(*m, view, view, cfg, stop_when_both_reach<float>(0.5));
  CHECK(t.status == metrics::RunStatus::Stopped);
  CHECK(t.back().train_acc >= 0.5);
  CHECK(t.back().epoch < 500);

  cfg.optimizer = OptimizerKind::GdWd;
  cfg.lr = 1e30;
  cfg.epochs = 20;
  auto boom = models::build_fnn<float>(small_classifier(), 5);
  const auto d = train<float>(*boom, view, view, cfg);
  CHECK(d.status == metrics::RunStatus::Diverged);
  CHECK(d.records().size() < 20u);
}
