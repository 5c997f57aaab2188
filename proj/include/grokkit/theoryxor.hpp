#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "grokkit/metrics.hpp"
#include "grokkit/models.hpp"
#include "grokkit/nd/tensor.hpp"
#include "grokkit/tasks.hpp"

namespace grokkit::theoryxor {

struct XorTheoryConfig {
  int p = 8000;
  int n = 400;
  double eps = 0.05;
  int m = 2048;          ///< target width
  double v_init = 0.4;   ///< target first-layer magnitude
  double alpha = 2.0;    ///< target step size
  double C = 10.0;       ///< constant in the assumption bounds
  std::uint64_t seed = 0;

  // Weak model: 3-neuron net, GD with multiplicative decay on exponential loss.
  int weak_width = 3;
  double weak_lr = 0.1;
  double weak_lambda = 0.01;
  double weak_w_init = 0.1;
  double weak_a_init = 0.01;
  int weak_max_epochs = 1000;
  int plateau_window = 50;
  double plateau_tol = 1e-5;

  int test_samples = 10000;
  bool reuse_weak_data = false;  ///< train the target on the weak model's points

  void validate() const;
};

struct AssumptionCheck {
  std::string name;
  std::string statement;
  double lower = -std::numeric_limits<double>::infinity();  ///< observed must be >= lower
  double upper = std::numeric_limits<double>::infinity();  ///< observed must be <= upper
  double observed = 0.0;
  bool satisfied = false;
};

struct AssumptionReport {
  std::array<AssumptionCheck, 5> checks;  ///< A1..A5
  bool all_satisfied() const noexcept;
  std::string describe() const;
};

/// Evaluates A1..A5. `delta` is the (p-2) x 3 noise block of the
/// transferred embedding. Throws DimensionError on a shape mismatch.
AssumptionReport check_assumptions(const XorTheoryConfig& cfg, const nd::Tensor2<double>& delta);

struct Lemma1Result {
  double max_accuracy = 0.0;         ///< over every net evaluated
  double max_random = 0.0;
  double max_optimized = 0.0;
  double handcrafted = 0.0;          ///< three-term net from the four-neuron solution
  double handcrafted_sampled = 0.0;  ///< same net on sampled data with noise
  int random_trials = 0;
  int optimized_trials = 0;
};

/// Prototype accuracy of sum_j a_j relu(<w_j, x>) over {[+-1, +-1]}, with
/// `w` given as 2 x width (signal coordinates) and `a` of length width.
double prototype_accuracy(const nd::Tensor2<double>& w, std::span<const double> a);

/// Random and locally optimized 3-neuron nets, evaluated exactly on the four
/// prototypes. Throws ArgumentError if a trial count is negative or both are 0.
Lemma1Result lemma1_oracle(int random_trials, int optimized_trials, std::uint64_t seed);

struct EventCheck {
  std::string name;
  double observed = 0.0;
  double bound = 0.0;
  bool holds = false;
  double slack() const noexcept { return bound - observed; }
};

struct EventReport {
  std::string name;
  std::vector<EventCheck> checks;
  double fraction = 0.0;  ///< share of checks that hold
  bool all_hold() const noexcept { return fraction == 1.0; }
};

/// Per-sample ||U^T x_i - U_sig^T x_sig,i|| against eps^2 sqrt(p/n) log n,
/// where n defaults to the dataset size.
EventReport event_gdata(const tasks::VectorDataset<double>& data, const nd::Tensor2<double>& u, double eps,
                        std::optional<int> n_ref = std::nullopt);

/// Balance of the target initialization and of the prototype counts:
/// sign split of a, the 8 sign cells of v, their 16 sign-split refinements,
/// and the 4 prototype counts, each within m/log n (n/log n for counts).
EventReport event_balance(const tasks::VectorDataset<double>& data, const nd::Tensor2<double>& v,
                          std::span<const double> a);
template <typename T>
EventReport event_balance(const tasks::VectorDataset<double>& data, const models::Model<T>& target);

/// Rescales each column so its first two coordinates have norm sqrt(2),
/// the scale at which learned features read [+-1, +-1]. Columns with a zero
/// signal part are left unchanged.
nd::Tensor2<double> normalize_embedding(const nd::Tensor2<double>& w);

/// Rows 3..p of an embedding.
nd::Tensor2<double> noise_block(const nd::Tensor2<double>& u);

struct WeakResult {
  nd::Tensor2<double> w;  ///< p x width first layer
  std::vector<double> a;
  metrics::TrainingTrace trace;
  int epochs = 0;
  bool plateaued = false;
  double train_acc = 0.0;
  double test_acc = 0.0;  ///< on cfg.test_samples fresh points
  std::vector<metrics::FeatureMatch> features;
  int coverage = 0;
  double r_w = 0.0;
};

/// Trains the weak net to 1000 epochs or a train-loss plateau on `data`.
WeakResult train_weak(const XorTheoryConfig& cfg, const tasks::VectorDataset<double>& data);

/// train_weak on the n training points one_step_experiment would draw for cfg.seed.
WeakResult weak_experiment(const XorTheoryConfig& cfg);

/// Accuracy of `model` on `count` fresh points drawn in chunks from `seed`.
double fresh_accuracy(models::Model<double>& model, int p, double eps, int count, std::uint64_t seed);

struct OneStepResult {
  WeakResult weak;
  AssumptionReport assumptions;
  EventReport gdata;
  EventReport balance;
  double train_acc = 0.0;
  double test_acc = 0.0;
  double initial_train_acc = 0.0;
  bool features_ok = false;  ///< weak coverage == 3
  std::vector<std::string> flags;
};

/// Weak model, transfer of its normalized first layer as U, one GD step on
/// V of the wide target with step alpha, then train/fresh-test accuracy.
OneStepResult one_step_experiment(const XorTheoryConfig& cfg);

struct NormRatioPoint {
  int p = 0;
  int n = 0;
  double eps = 0.0;
  std::uint64_t seed = 0;
  double r_w = 0.0;
  int coverage = 0;
};

/// Weak-model r_W on every (p, n, eps) combination.
std::vector<NormRatioPoint> norm_ratio_sweep(const XorTheoryConfig& base, std::span<const int> ps,
                                             std::span<const int> ns, std::span<const double> epss);

/// Least-squares slope of log(y) against log(x).
double loglog_slope(std::span<const double> x, std::span<const double> y);

}  // namespace grokkit::theoryxor
