#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "grokkit/errors.hpp"
#include "grokkit/metrics.hpp"
#include "grokkit/models.hpp"
#include "grokkit/rng.hpp"

using namespace grokkit;
using namespace grokkit::metrics;
using nd::Tensor2;

namespace {

// f(x) = theta * x with a single scalar parameter.
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

TrainingTrace trace_of(std::vector<std::pair<double, double>> accs) {
  TrainingTrace t;
  int epoch = 1;
  for (auto [tr, te] : accs) {
    TraceRecord r;
    r.epoch = epoch++;
    r.train_acc = tr;
    r.test_acc = te;
    t.append(r);
  }
  return t;
}

models::FnnConfig small_classifier() {
  models::FnnConfig c;
  c.depth = 3;
  c.vocab = 7;
  c.d_embed = 3;
  c.width = 5;
  c.out_classes = 7;
  return c;
}

}  // namespace

TEST_CASE("classifier accuracy conventions") {
  const std::vector<int> labels{2, 0, 1};
  DataView<double> d;
  d.classes = labels;
  Tensor2<double> out(3, 4);
  for (std::size_t i = 0; i < 3; ++i) out(i, labels[i]) = 1.0;
  CHECK(accuracy_from_outputs(out, d) == 1.0);
  // A tie resolves to the lowest index: row 0 ties classes 0 and 2.
  out(0, 0) = 1.0;
  CHECK(accuracy_from_outputs(out, d) == doctest::Approx(2.0 / 3.0));
  const Tensor2<double> wrong_rows(2, 4);
  CHECK_THROWS_AS(accuracy_from_outputs(wrong_rows, d), DimensionError);
}

TEST_CASE("scalar accuracy counts sign(0) as incorrect") {
  const std::vector<double> y{1, -1, 1, -1};
  DataView<double> d;
  d.signs = y;
  CHECK(accuracy_from_outputs(Tensor2<double>(4, 1), d) == 0.0);
  CHECK(accuracy_from_outputs(Tensor2<double>{{0.3}, {-2}, {-1}, {0}}, d) == 0.5);

  models::XorNetConfig c;
  c.input_dim = 5;
  c.width = 3;
  auto m = models::build_xor_net<double>(c, 1);
  m->at("a").value.fill(0.0);
  const auto ds = tasks::gen_xor<double>(5, 50, 0.1, 2);
  CHECK(accuracy(*m, DataView<double>::of(ds)) == 0.0);
}

TEST_CASE("accuracy agrees with a per-sample loop") {
  const auto data = tasks::gen_modular(7, tasks::ModOp::Add);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    auto m = models::build_fnn<double>(small_classifier(), seed);
    const auto view = DataView<double>::of(data);
    int correct = 0;
    for (std::size_t i = 0; i < data.size(); ++i) {
      const std::vector<int> a{data.a[i]}, b{data.b[i]};
      const auto out = models::predict<double>(*m, models::TokenInputs{a, b});
      std::size_t best = 0;
      for (std::size_t j = 1; j < out.cols(); ++j)
        if (out(0, j) > out(0, best)) best = j;
      correct += static_cast<int>(best) == data.labels[i];
    }
    CHECK(accuracy(*m, view) == doctest::Approx(correct / 49.0));
  }
}

TEST_CASE("time gap") {
  std::vector<std::pair<double, double>> accs(600, {0.5, 0.1});
  for (std::size_t e = 9; e < 600; ++e) accs[e].first = 0.99;
  for (std::size_t e = 499; e < 600; ++e) accs[e].second = 0.96;
  const auto t = trace_of(accs);
  auto g = time_gap(t);
  CHECK(*g.epoch_train == 10);
  CHECK(*g.epoch_test == 500);
  CHECK(*g.gap == 490);
  CHECK(g.reciprocal == doctest::Approx(1.0 / 490));

  const auto never = time_gap(trace_of({{0.99, 0.5}, {0.99, 0.6}}));
  CHECK(never.epoch_train.has_value());
  CHECK_FALSE(never.epoch_test.has_value());
  CHECK_FALSE(never.gap.has_value());
  CHECK(never.reciprocal == 0.0);

  const auto same = time_gap(trace_of({{0.2, 0.2}, {0.97, 0.97}}));
  CHECK(*same.gap == 0);
  CHECK(same.reciprocal == 0.0);

  CHECK_THROWS_AS(time_gap(TrainingTrace{}), ArgumentError);
}

TEST_CASE("time gap is monotone in the threshold") {
  SplitMix64 rng(5);
  std::vector<std::pair<double, double>> accs;
  double tr = 0.0, te = 0.0;
  for (int e = 0; e < 300; ++e) {
    tr = std::min(1.0, tr + rng.uniform(0, 0.01));
    te = std::min(1.0, std::max(0.0, te + rng.uniform(-0.004, 0.006)));
    accs.push_back({tr, te});
  }
  const auto t = trace_of(accs);
  std::optional<int> prev_train = 0, prev_test = 0;
  for (double th = 0.05; th <= 1.0; th += 0.05) {
    const auto g = time_gap(t, th);
    if (prev_train && g.epoch_train) CHECK(*g.epoch_train >= *prev_train);
    if (!prev_train) CHECK_FALSE(g.epoch_train.has_value());
    if (prev_test && g.epoch_test) CHECK(*g.epoch_test >= *prev_test);
    if (!prev_test) CHECK_FALSE(g.epoch_test.has_value());
    prev_train = g.epoch_train;
    prev_test = g.epoch_test;
  }
}

TEST_CASE("trace invariants") {
  TrainingTrace t;
  TraceRecord r;
  r.epoch = 3;
  t.append(r);
  CHECK_THROWS_AS(t.append(r), ArgumentError);
  r.epoch = 4;
  r.test_acc = 1.5;
  CHECK_THROWS_AS(t.append(r), ArgumentError);
  r.test_acc = 1.0;
  t.append(r);
  CHECK(t.prefix(3).records().size() == 1u);
}

TEST_CASE("pseudo-NTK of a scalar linear model") {
  Linear1 m(0.7);
  const Tensor2<double> x{{1.5}, {-2.0}, {0.5}};
  const std::vector<double> y{1, 1, 1};
  DataView<double> d;
  d.inputs = &x;
  d.signs = y;
  const auto k = pseudo_ntk<double>(m, d);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) CHECK(k(i, j) == doctest::Approx(x(i, 0) * x(j, 0)));
  CHECK(m.at("theta").value(0, 0) == 0.7);
}

TEST_CASE("pseudo-NTK symmetry, PSD and purity") {
  const auto data = tasks::gen_modular(7, tasks::ModOp::Add);
  const auto sub = data.subset(std::vector<std::size_t>{0, 5, 9, 17, 23, 30, 41, 48});
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    auto m = models::build_fnn<double>(small_classifier(), seed);
    const auto before = m->at("dense2").value;
    const auto k = pseudo_ntk<double>(*m, DataView<double>::of(sub));
    CHECK(m->at("dense2").value == before);
    for (const auto& p : m->params()) CHECK_FALSE(p.has_grad());
    const auto again = pseudo_ntk<double>(*m, DataView<double>::of(sub));
    CHECK(again == k);
    CHECK(ntk_drift(k, again) == 0.0);

    Eigen::MatrixXd e(k.rows(), k.cols());
    double trace = 0.0;
    for (std::size_t i = 0; i < k.rows(); ++i) {
      trace += k(i, i);
      for (std::size_t j = 0; j < k.cols(); ++j) {
        CHECK(std::abs(k(i, j) - k(j, i)) <= 1e-6);
        e(i, j) = k(i, j);
      }
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(e);
    CHECK(solver.eigenvalues().minCoeff() >= -1e-6 * trace);
  }
}

TEST_CASE("ntk drift") {
  Tensor2<double> k{{2, 1, 0}, {1, 3, 1}, {0, 1, 4}};
  Tensor2<double> k_plus = k;
  for (std::size_t i = 0; i < 3; ++i) k_plus(i, i) += 1.0;
  CHECK(ntk_drift(k, k) == 0.0);
  CHECK(ntk_drift(k_plus, k) == doctest::Approx(std::sqrt(3.0)));
  CHECK_THROWS_AS(ntk_drift(k, Tensor2<double>(2, 2)), DimensionError);
}

TEST_CASE("norm ratio") {
  Tensor2<double> w(5, 3, 0.0);
  for (std::size_t j = 0; j < 3; ++j) {
    w(0, j) = 1.0;
    w(1, j) = -2.0;
  }
  CHECK(norm_ratio(w) == 0.0);
  CHECK(norm_ratio(Tensor2<double>(6, 4, 0.3)) == doctest::Approx(1.0));
  CHECK(norm_ratio(Tensor2<double>{{1}, {1}, {2}, {2}}) == doctest::Approx(2.0));

  SplitMix64 rng(2);
  Tensor2<double> r(9, 4);
  for (double& v : r.data()) v = rng.normal();
  const double base = norm_ratio(r);
  for (double c : {-3.0, 0.01, 7.5}) {
    Tensor2<double> s = r;
    for (double& v : s.data()) v *= c;
    CHECK(norm_ratio(s) == doctest::Approx(base));
  }
  CHECK_THROWS_AS(norm_ratio(Tensor2<double>(2, 3, 1.0)), ArgumentError);
  Tensor2<double> zero_signal(4, 2, 1.0);
  zero_signal(0, 0) = zero_signal(0, 1) = zero_signal(1, 0) = zero_signal(1, 1) = 0.0;
  CHECK_THROWS_AS(norm_ratio(zero_signal), ArgumentError);
}

TEST_CASE("feature alignment") {
  const Tensor2<double> w{{-1, 1, 1, 1}, {1, 1, -1, 0}, {0, 5, 0, 0}};
  const auto m = feature_alignment(w);
  REQUIRE(m.size() == 4u);
  CHECK(m[0].feature == XorFeature::PlusMu2);
  CHECK(m[0].cosine == doctest::Approx(1.0));
  CHECK(m[1].feature == XorFeature::PlusMu1);
  CHECK(m[1].cosine == doctest::Approx(1.0));
  CHECK(m[2].feature == XorFeature::MinusMu2);
  CHECK(feature_coverage(m, 0.9) == 3);
  CHECK(m[3].cosine < 0.9);
  CHECK(feature_coverage(std::vector<FeatureMatch>{{XorFeature::PlusMu1, 0.95}, {XorFeature::PlusMu1, 0.99}}) == 1);
  CHECK_THROWS_AS(feature_alignment(Tensor2<double>(1, 3)), ArgumentError);
}

TEST_CASE("flops estimates") {
  models::FnnConfig weak;
  weak.depth = 2;
  weak.vocab = 113;
  weak.d_embed = 4;
  weak.width = 4;
  weak.out_classes = 113;
  CHECK(flops_estimate(weak).total() == 1436.0);

  models::TransformerConfig big;
  big.n_layers = 8;
  big.d_embed = 512;
  big.d_mlp = 512;
  big.n_head = 4;
  big.d_head = 128;
  big.vocab = 113;
  const auto f = flops_estimate(big);
  CHECK(f.non_embedding == 6291456.0);
  CHECK(f.forward == 2.0 * (6291456.0 + 8 * 2 * 128));

  big.n_layers = 0;
  const auto z = flops_estimate(big);
  CHECK(z.non_embedding == 0.0);
  CHECK(z.forward == 0.0);
  CHECK(z.embedding > 0.0);
  CHECK(z.total() == z.embedding);
}
