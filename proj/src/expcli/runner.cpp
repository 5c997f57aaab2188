#include "grokkit/expcli/runner.hpp"

#include <omp.h>

#include <atomic>
#include <exception>
#include <fstream>
#include <mutex>
#include <thread>

#include "grokkit/errors.hpp"
#include "grokkit/expcli/checkpoint.hpp"
#include "grokkit/rng.hpp"
#include "grokkit/transfer.hpp"
#include "grokkit/util.hpp"

namespace grokkit::expcli {

namespace fs = std::filesystem;

const StageResult& RunResult::primary() const {
  if (stages.empty()) throw StateError("run produced no stages");
  return stages.size() == 1 ? stages[0] : stages[1];
}

bool RunResult::diverged() const noexcept {
  for (const auto& s : stages)
    if (s.summary.status == metrics::RunStatus::Diverged) return true;
  return false;
}

namespace {

template <typename T>
struct Data {
  bool tokens = true;
  tasks::TokenDataset tok_train, tok_test;
  tasks::VectorDataset<T> vec_train, vec_test;

  metrics::DataView<T> train() const {
    return tokens ? metrics::DataView<T>::of(tok_train) : metrics::DataView<T>::of(vec_train);
  }
  metrics::DataView<T> test() const {
    return tokens ? metrics::DataView<T>::of(tok_test) : metrics::DataView<T>::of(vec_test);
  }
  std::size_t train_size() const { return tokens ? tok_train.size() : vec_train.size(); }
};

template <typename T>
Data<T> make_data(const ExperimentConfig& cfg) {
  Data<T> d;
  const auto s_train = derive_seed(cfg.seed, kSaltTrainData), s_test = derive_seed(cfg.seed, kSaltTestData);
  if (const auto* m = std::get_if<ModularTask>(&cfg.task)) {
    const auto all = tasks::gen_modular(m->p, m->op);
    const auto sp = tasks::split(all.size(), m->train_fraction, derive_seed(cfg.seed, kSaltSplit));
    d.tok_train = all.subset(sp.train);
    d.tok_test = all.subset(sp.test);
  } else if (const auto* q = std::get_if<ParityTask>(&cfg.task)) {
    d.tokens = false;
    d.vec_train = tasks::gen_parity<T>(q->q, q->k, q->subset, q->n_train, s_train);
    d.vec_test = tasks::gen_parity<T>(q->q, q->k, q->subset, q->n_test, s_test);
  } else {
    const auto& x = std::get<XorTask>(cfg.task);
    d.tokens = false;
    d.vec_train = tasks::gen_xor<T>(x.p, x.n, x.eps, s_train);
    d.vec_test = tasks::gen_xor<T>(x.p, x.n_test, x.eps, s_test);
  }
  return d;
}

int task_vocab(const TaskSpec& t) {
  const auto* m = std::get_if<ModularTask>(&t);
  return m ? m->p : 0;
}

template <typename T>
std::unique_ptr<models::Model<T>> build_configured(const ExperimentConfig& cfg, std::uint64_t seed) {
  if (const auto* x = std::get_if<models::XorNetConfig>(&cfg.model); x && x->init == models::XorInit::Discrete) {
    throw ConfigError("model.init", "a discrete xor_net needs a transferred U; add a transfer section");
  }
  if (cfg.embedding) {
    const auto table = tasks::make_embedding(cfg.embedding->kind, task_vocab(cfg.task), cfg.embedding->path);
    return models::build_fnn<T>(std::get<models::FnnConfig>(cfg.model), seed, &table.table);
  }
  return models::build_model<T>(cfg.model, seed);
}

template <typename T>
StageResult finish_stage(const std::string& label, const models::Model<T>& model, metrics::TrainingTrace trace,
                         std::size_t train_size, const fs::path& dir) {
  fs::create_directories(dir);
  StageResult st;
  st.dir = dir;
  st.summary = summarize(label, trace, model.spec(), model.parameter_count(), train_size);
  write_trace_csv(trace, dir / "trace.csv");
  save_checkpoint(model, dir / "model.ckpt");
  write_summary(st.summary, dir / "summary.txt");
  st.trace = std::move(trace);
  return st;
}

template <typename T>
optim::StopFn<T> stop_for(const ExperimentConfig& cfg) {
  return cfg.stop_at_accuracy ? optim::stop_when_both_reach<T>(*cfg.stop_at_accuracy) : optim::StopFn<T>{};
}

template <typename T>
StageResult train_single(const ExperimentConfig& cfg, const Data<T>& data, const std::string& label,
                         const fs::path& dir) {
  auto model = build_configured<T>(cfg, derive_seed(cfg.seed, kSaltModel));
  auto trace = optim::train<T>(*model, data.train(), data.test(), cfg.train, stop_for<T>(cfg));
  return finish_stage(label, *model, std::move(trace), data.train_size(), dir);
}

// The scratch baseline: the experiment without its transfer section, with
// the baseline's overrides merged into the model and train objects.
ExperimentConfig scratch_config(const ExperimentConfig& cfg) {
  Json doc = cfg.source;
  doc.erase("transfer");
  const auto& b = *cfg.transfer->scratch;
  doc["model"].merge_patch(b.model_overrides);
  if (!doc.contains("train")) doc["train"] = Json::object();
  doc["train"].merge_patch(b.train_overrides);
  try {
    return parse_config(doc);
  } catch (const ConfigError& e) {
    throw ConfigError("transfer.scratch", e.what());
  }
}

template <typename T>
RunResult run_transfer_t(const ExperimentConfig& cfg, const fs::path& out) {
  if (!cfg.transfer) throw ConfigError("transfer", "missing required section");
  const auto& plan = cfg.transfer->plan;
  const auto data = make_data<T>(cfg);
  RunResult res;

  auto weak = transfer::run_weak<T>(plan, data.train(), data.test());
  auto weak_model = models::build_model<T>(weak.spec, plan.weak_seed);
  weak_model->params() = weak.params;
  res.stages.push_back(finish_stage("weak", *weak_model, weak.trace, data.train_size(), out / "weak"));
  res.stages.back().summary.notes.push_back("harvested at epoch " + std::to_string(weak.epoch) + ", test accuracy " +
                                            format_real(weak.test_acc));
  if (!weak.reached_threshold) {
    res.warnings.push_back("weak model stopped at epoch " + std::to_string(weak.epoch) + " below its accuracy threshold");
  }

  auto init = transfer::init_target<T>(transfer::extract_embedding(weak), plan.target_model, plan.mode,
                                       plan.target_seed, plan.b_scale);
  for (auto& w : init.warnings) res.warnings.push_back(std::move(w));
  auto trace = optim::train<T>(*init.model, data.train(), data.test(), plan.target_train, stop_for<T>(cfg));
  res.stages.push_back(finish_stage("target", *init.model, std::move(trace), data.train_size(), out / "target"));
  res.stages.back().summary.notes.push_back(std::string("embedding init: ") + transfer::to_string(plan.mode));

  if (cfg.transfer->scratch) {
    const auto sc = scratch_config(cfg);
    res.stages.push_back(train_single<T>(sc, data, "scratch", out / "scratch"));
  }
  for (auto& st : res.stages) {
    for (const auto& w : res.warnings) st.summary.notes.push_back("warning: " + w);
    write_summary(st.summary, st.dir / "summary.txt");
  }

  std::string combined;
  for (const auto& st : res.stages) combined += format_summary(st.summary) + "\n";
  std::ofstream(out / "summary.txt", std::ios::trunc) << combined;
  return res;
}

template <typename T>
RunResult run_t(const ExperimentConfig& cfg, const fs::path& out) {
  if (cfg.transfer) return run_transfer_t<T>(cfg, out);
  const auto data = make_data<T>(cfg);
  RunResult res;
  res.stages.push_back(train_single<T>(cfg, data, "run", out));
  return res;
}

void write_tokens(const tasks::TokenDataset& d, const fs::path& path) {
  std::ofstream f(path, std::ios::trunc);
  f << "# a b label\n";
  for (std::size_t i = 0; i < d.size(); ++i) f << d.a[i] << ' ' << d.b[i] << ' ' << d.labels[i] << '\n';
  if (!f) throw FormatError("failed writing " + path.string());
}

void write_vectors(const tasks::VectorDataset<double>& d, const fs::path& path) {
  std::ofstream f(path, std::ios::trunc);
  f << "# label x_1 .. x_" << d.dim() << "\n";
  for (std::size_t i = 0; i < d.size(); ++i) {
    f << format_real(d.y[i]);
    for (std::size_t j = 0; j < d.dim(); ++j) f << ' ' << format_real(d.x(i, j));
    f << '\n';
  }
  if (!f) throw FormatError("failed writing " + path.string());
}

}  // namespace

RunResult run_experiment(const ExperimentConfig& cfg, const fs::path& out, Precision precision) {
  fs::create_directories(out);
  return precision == Precision::F32 ? run_t<float>(cfg, out) : run_t<double>(cfg, out);
}

RunResult run_transfer(const ExperimentConfig& cfg, const fs::path& out, Precision precision) {
  if (!cfg.transfer) throw ConfigError("transfer", "missing required section");
  fs::create_directories(out);
  return precision == Precision::F32 ? run_transfer_t<float>(cfg, out) : run_transfer_t<double>(cfg, out);
}

std::vector<fs::path> generate_data(const ExperimentConfig& cfg, const fs::path& out) {
  fs::create_directories(out);
  const auto d = make_data<double>(cfg);
  std::vector<fs::path> written{out / "train.txt", out / "test.txt"};
  if (d.tokens) {
    write_tokens(d.tok_train, written[0]);
    write_tokens(d.tok_test, written[1]);
  } else {
    write_vectors(d.vec_train, written[0]);
    write_vectors(d.vec_test, written[1]);
  }
  if (cfg.embedding) {
    written.push_back(out / "embedding.txt");
    tasks::write_embedding(tasks::make_embedding(cfg.embedding->kind, task_vocab(cfg.task), cfg.embedding->path),
                           written.back());
  }
  return written;
}

void run_jobs(std::size_t count, int jobs, const std::function<void(std::size_t)>& fn) {
  if (jobs < 1) throw ArgumentError("jobs must be >= 1");
  const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(jobs), count);
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr first;
  std::mutex mu;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      omp_set_num_threads(1);
      for (std::size_t i; (i = next.fetch_add(1)) < count;) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(mu);
          if (!first) first = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (first) std::rethrow_exception(first);
}

}  // namespace grokkit::expcli
