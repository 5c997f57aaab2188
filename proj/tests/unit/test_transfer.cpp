#include <doctest.h>

#include <Eigen/Dense>

#include <string>
#include <vector>

#include "grokkit/errors.hpp"
#include "grokkit/tasks.hpp"
#include "grokkit/transfer.hpp"

using namespace grokkit;
using namespace grokkit::transfer;
using nd::Tensor2;

namespace {

constexpr int kP = 23;

struct Data {
  tasks::TokenDataset train, test;
};

Data modular_data() {
  const auto all = tasks::gen_modular(kP, tasks::ModOp::Add);
  const auto sp = tasks::split(all.size(), 0.5, 1);
  return {all.subset(sp.train), all.subset(sp.test)};
}

models::FnnConfig weak_fnn() {
  models::FnnConfig c;
  c.depth = 2;
  c.vocab = kP;
  c.d_embed = 4;
  c.width = 16;
  c.out_classes = kP;
  return c;
}

models::FnnConfig target_fnn() {
  models::FnnConfig c;
  c.depth = 3;
  c.vocab = kP;
  c.d_embed = 12;
  c.width = 24;
  c.out_classes = kP;
  c.init_scale = 0.5;
  return c;
}

TransferPlan small_plan() {
  TransferPlan plan;
  plan.weak_model = weak_fnn();
  plan.weak_train.lr = 0.01;
  plan.weak_train.weight_decay = 0.1;
  plan.weak_seed = 3;
  plan.stop = StopAtEpoch{15};
  plan.target_model = target_fnn();
  plan.target_train.lr = 0.005;
  plan.target_train.weight_decay = 0.5;
  plan.target_train.epochs = 10;
  plan.target_seed = 4;
  return plan;
}

Eigen::MatrixXd to_eigen(const Tensor2<double>& t) {
  Eigen::MatrixXd m(t.rows(), t.cols());
  for (std::size_t i = 0; i < t.rows(); ++i)
    for (std::size_t j = 0; j < t.cols(); ++j) m(i, j) = t(i, j);
  return m;
}

}  // namespace

TEST_CASE("plan validation") {
  TransferPlan plan = small_plan();
  CHECK_NOTHROW(plan.validate());
  plan.stop = StopAtAccuracy{0.0, 10};
  CHECK_THROWS_AS(plan.validate(), ArgumentError);
  plan.stop = StopAtAccuracy{0.5, 0};
  CHECK_THROWS_AS(plan.validate(), ArgumentError);
  plan.stop = StopAtEpoch{0};
  CHECK_THROWS_AS(plan.validate(), ArgumentError);
  plan = small_plan();
  plan.b_scale = -1.0;
  CHECK_THROWS_AS(plan.validate(), ArgumentError);
  CHECK(parse_embedding_init("random") == EmbeddingInit::RandomAblation);
  CHECK(std::string(to_string(EmbeddingInit::Transfer)) == "transfer");
  CHECK_THROWS_AS(parse_embedding_init("copy"), ArgumentError);
}

TEST_CASE("extract_embedding returns an independent copy") {
  auto weak = models::build_fnn<double>(weak_fnn(), 7);
  const std::span<const nd::ParamGroup<double>> params(weak->params());
  auto e = extract_embedding(params);
  CHECK(e == weak->at("embedding").value);
  CHECK(e.rows() == static_cast<std::size_t>(kP));
  CHECK(e.cols() == 4u);
  e(0, 0) += 1.0;
  CHECK(e != weak->at("embedding").value);

  models::XorNetConfig xc;
  xc.input_dim = 40;
  auto xor_net = models::build_xor_net<double>(xc, 2);
  const auto u = extract_embedding(std::span<const nd::ParamGroup<double>>(xor_net->params()));
  CHECK(u.rows() == 40u);
  CHECK(u.cols() == 3u);
  CHECK(u == xor_net->at("W").value);

  auto fc = weak_fnn();
  fc.embedding = models::EmbeddingMode::Factorized;
  fc.factor_rank = 2;
  auto fact = models::build_fnn<double>(fc, 1);
  const auto prod = extract_embedding(std::span<const nd::ParamGroup<double>>(fact->params()));
  const Eigen::MatrixXd expect = to_eigen(fact->at("embedding.A").value) * to_eigen(fact->at("embedding.B").value);
  CHECK((to_eigen(prod) - expect).norm() <= 1e-12);

  std::vector<nd::ParamGroup<double>> none(1);
  none[0].name = "head";
  none[0].value = Tensor2<double>(2, 2);
  try {
    extract_embedding(std::span<const nd::ParamGroup<double>>(none));
    FAIL("expected NotFoundError");
  } catch (const NotFoundError& err) {
    CHECK(std::string(err.what()).find("head") != std::string::npos);
  }
}

TEST_CASE("init_target in transfer mode") {
  auto weak = models::build_fnn<double>(weak_fnn(), 7);
  const auto e = weak->at("embedding").value;
  auto t = init_target<double>(e, target_fnn(), EmbeddingInit::Transfer, 11);
  CHECK(t.warnings.empty());
  const auto& a = t.model->at("embedding.A");
  const auto& b = t.model->at("embedding.B");
  CHECK(a.value == e);
  CHECK(a.trainable);
  CHECK(b.trainable);
  CHECK(b.value.rows() == 4u);
  CHECK(b.value.cols() == 12u);
  CHECK(t.model->find("embedding") == nullptr);

  const Eigen::MatrixXd eff = to_eigen(a.value) * to_eigen(b.value);
  Eigen::FullPivLU<Eigen::MatrixXd> lu(eff);
  CHECK(lu.rank() <= 4);

  // B entries are N(0, 1/d_W) by default.
  double ss = 0.0;
  for (double v : b.value.data()) ss += v * v;
  CHECK(ss / static_cast<double>(b.value.size()) == doctest::Approx(0.25).epsilon(0.5));

  auto scaled = init_target<double>(e, target_fnn(), EmbeddingInit::Transfer, 11, 2.0);
  double ss2 = 0.0;
  for (double v : scaled.model->at("embedding.B").value.data()) ss2 += v * v;
  CHECK(ss2 / ss == doctest::Approx(16.0));
}

TEST_CASE("random ablation shares B but not A") {
  auto weak = models::build_fnn<double>(weak_fnn(), 7);
  const auto e = weak->at("embedding").value;
  auto tr = init_target<double>(e, target_fnn(), EmbeddingInit::Transfer, 11);
  auto ab = init_target<double>(e, target_fnn(), EmbeddingInit::RandomAblation, 11);
  CHECK(ab.model->at("embedding.A").value != e);
  CHECK(ab.model->at("embedding.B").value == tr.model->at("embedding.B").value);
  CHECK(ab.model->at("dense3").value == tr.model->at("dense3").value);
}

TEST_CASE("init_target errors and warnings") {
  Tensor2<double> wrong_vocab(kP + 1, 4);
  CHECK_THROWS_AS(init_target<double>(wrong_vocab, target_fnn(), EmbeddingInit::Transfer, 0), DimensionError);
  Tensor2<double> wide(kP, 20);
  const auto t = init_target<double>(wide, target_fnn(), EmbeddingInit::Transfer, 0);
  REQUIRE(t.warnings.size() == 1u);
  CHECK(t.warnings[0].find("20") != std::string::npos);
}

TEST_CASE("transformer and xor targets") {
  auto weak = models::build_fnn<double>(weak_fnn(), 7);
  const auto e = weak->at("embedding").value;
  models::TransformerConfig tc;
  tc.vocab = kP;
  tc.d_embed = 8;
  tc.d_mlp = 16;
  tc.n_head = 2;
  tc.d_head = 4;
  auto tf = init_target<double>(e, tc, EmbeddingInit::Transfer, 5);
  CHECK(tf.model->at("embedding.A").value == e);
  CHECK(tf.model->at("embedding.B").value.cols() == 8u);

  models::XorNetConfig weak_x;
  weak_x.input_dim = 30;
  auto small = models::build_xor_net<double>(weak_x, 1);
  models::XorNetConfig target_x;
  target_x.input_dim = 30;
  target_x.width = 64;
  auto big = init_target<double>(small->at("W").value, target_x, EmbeddingInit::Transfer, 2);
  CHECK(big.model->at("U").value == small->at("W").value);
  CHECK_FALSE(big.model->at("U").trainable);
  CHECK(big.model->at("V").value.rows() == 3u);
  auto ablated = init_target<double>(small->at("W").value, target_x, EmbeddingInit::RandomAblation, 2);
  CHECK(ablated.model->at("U").value != small->at("W").value);
}

TEST_CASE("run_weak stops on a fixed epoch exactly") {
  const auto d = modular_data();
  const auto tr = metrics::DataView<float>::of(d.train), te = metrics::DataView<float>::of(d.test);
  TransferPlan plan = small_plan();
  const auto ckpt = run_weak<float>(plan, tr, te);
  CHECK(ckpt.epoch == 15);
  CHECK(ckpt.reached_threshold);
  CHECK(ckpt.trace.back().epoch == 15);

  auto manual = models::build_fnn<float>(weak_fnn(), plan.weak_seed);
  auto cfg = plan.weak_train;
  cfg.epochs = 15;
  optim::train<float>(*manual, tr, te, cfg);
  REQUIRE(ckpt.params.size() == manual->params().size());
  for (std::size_t i = 0; i < ckpt.params.size(); ++i) CHECK(ckpt.params[i].value == manual->params()[i].value);
}

TEST_CASE("run_weak on an accuracy threshold") {
  const auto d = modular_data();
  const auto tr = metrics::DataView<float>::of(d.train), te = metrics::DataView<float>::of(d.test);
  TransferPlan plan = small_plan();
  plan.weak_train.eval_every = 50;
  plan.stop = StopAtAccuracy{0.02, 400};
  const auto hit = run_weak<float>(plan, tr, te);
  CHECK(hit.reached_threshold);
  CHECK(hit.test_acc >= 0.02);
  CHECK(hit.trace.status == metrics::RunStatus::Stopped);
  // Every epoch is evaluated, so the stop lands on the first crossing.
  for (const auto& r : hit.trace.records()) {
    if (r.epoch < hit.epoch) CHECK(r.test_acc < 0.02);
  }
  CHECK(hit.trace.records().size() == static_cast<std::size_t>(hit.epoch));

  plan.stop = StopAtAccuracy{1.0, 3};
  const auto miss = run_weak<float>(plan, tr, te);
  CHECK_FALSE(miss.reached_threshold);
  CHECK(miss.epoch == 3);
}

TEST_CASE("embedding transfer composes its stages") {
  const auto d = modular_data();
  const auto tr = metrics::DataView<float>::of(d.train), te = metrics::DataView<float>::of(d.test);
  TransferPlan plan = small_plan();
  const auto result = run_embedding_transfer<float>(plan, tr, te);

  const auto weak = run_weak<float>(plan, tr, te);
  const auto snapshot = weak.params;
  auto init = init_target<float>(extract_embedding(weak), plan.target_model, plan.mode, plan.target_seed);
  const auto trace = optim::train<float>(*init.model, tr, te, plan.target_train);

  for (std::size_t i = 0; i < weak.params.size(); ++i) {
    CHECK(weak.params[i].value == snapshot[i].value);
    CHECK(result.weak.params[i].value == weak.params[i].value);
  }
  REQUIRE(trace.records().size() == result.target_trace.records().size());
  for (std::size_t i = 0; i < trace.records().size(); ++i) {
    CHECK(trace.records()[i].train_loss == result.target_trace.records()[i].train_loss);
    CHECK(trace.records()[i].test_acc == result.target_trace.records()[i].test_acc);
  }
  for (std::size_t i = 0; i < init.model->params().size(); ++i) {
    CHECK(init.model->params()[i].value == result.target->params()[i].value);
  }
  // Target training moved A away from the harvested table; the checkpoint kept it.
  CHECK(result.target->at("embedding.A").value != extract_embedding(result.weak));
}
