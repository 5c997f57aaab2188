#include "grokkit/expcli/theory.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "grokkit/errors.hpp"
#include "grokkit/expcli/runner.hpp"
#include "grokkit/util.hpp"

namespace grokkit::expcli {

namespace fs = std::filesystem;
using theoryxor::XorTheoryConfig;

const char* to_string(TheoryMode m) noexcept {
  switch (m) {
    case TheoryMode::OneStep: return "one-step";
    case TheoryMode::Weak: return "weak";
    case TheoryMode::Lemma1: return "lemma1";
    case TheoryMode::NormRatio: return "norm-ratio";
  }
  return "?";
}

TheoryMode parse_theory_mode(const std::string& s) {
  for (auto m : {TheoryMode::OneStep, TheoryMode::Weak, TheoryMode::Lemma1, TheoryMode::NormRatio}) {
    if (s == to_string(m)) return m;
  }
  throw ArgumentError("unknown theory mode '" + s + "' (expected one-step|weak|lemma1|norm-ratio)");
}

namespace {

// Field table shared by the reader and the writer.
template <typename F>
void for_each_field(XorTheoryConfig& c, F&& f) {
  f("p", c.p);
  f("n", c.n);
  f("eps", c.eps);
  f("m", c.m);
  f("v_init", c.v_init);
  f("alpha", c.alpha);
  f("C", c.C);
  f("weak_width", c.weak_width);
  f("weak_lr", c.weak_lr);
  f("weak_lambda", c.weak_lambda);
  f("weak_w_init", c.weak_w_init);
  f("weak_a_init", c.weak_a_init);
  f("weak_max_epochs", c.weak_max_epochs);
  f("plateau_window", c.plateau_window);
  f("plateau_tol", c.plateau_tol);
  f("test_samples", c.test_samples);
  f("reuse_weak_data", c.reuse_weak_data);
}

Json features_json(const std::vector<metrics::FeatureMatch>& fm) {
  Json out = Json::array();
  for (const auto& f : fm) out.push_back({{"feature", metrics::to_string(f.feature)}, {"cosine", f.cosine}});
  return out;
}

Json weak_json(const theoryxor::WeakResult& w) {
  return {{"epochs", w.epochs},       {"plateaued", w.plateaued}, {"train_acc", w.train_acc},
          {"test_acc", w.test_acc},   {"coverage", w.coverage},   {"r_w", w.r_w},
          {"features", features_json(w.features)}};
}

Json assumptions_json(const theoryxor::AssumptionReport& r) {
  Json out = Json::array();
  for (const auto& c : r.checks) {
    Json j = {{"name", c.name}, {"statement", c.statement}, {"observed", c.observed}, {"satisfied", c.satisfied}};
    if (std::isfinite(c.lower)) j["lower"] = c.lower;
    if (std::isfinite(c.upper)) j["upper"] = c.upper;
    out.push_back(j);
  }
  return out;
}

Json event_json(const theoryxor::EventReport& r) {
  double worst = std::numeric_limits<double>::infinity();
  for (const auto& c : r.checks) worst = std::min(worst, c.slack());
  return {{"name", r.name}, {"fraction", r.fraction}, {"checks", r.checks.size()}, {"min_slack", worst}};
}

bool weak_ok(const theoryxor::WeakResult& w) { return w.coverage == 3 && w.test_acc >= 0.7 && w.test_acc <= 0.8; }

std::string fmt(double v) {
  std::ostringstream s;
  s.precision(4);
  s << v;
  return s.str();
}

}  // namespace

XorTheoryConfig theory_from_json(const Json& j, const std::string& path) {
  if (!j.is_object()) throw ConfigError(path, "expected an object");
  XorTheoryConfig c;
  std::vector<std::string> known;
  for_each_field(c, [&](const char* key, auto& slot) {
    known.emplace_back(key);
    if (!j.contains(key)) return;
    const auto& v = j.at(key);
    using V = std::decay_t<decltype(slot)>;
    const std::string at = path + "." + key;
    if constexpr (std::is_same_v<V, bool>) {
      if (!v.is_boolean()) throw ConfigError(at, "expected true or false");
    } else if constexpr (std::is_integral_v<V>) {
      if (!v.is_number_integer()) throw ConfigError(at, "expected an integer");
    } else {
      if (!v.is_number()) throw ConfigError(at, "expected a number");
    }
    slot = v.get<V>();
  });
  for (const auto& [key, _] : j.items()) {
    if (key == "seed") {
      if (!j[key].is_number_unsigned()) throw ConfigError(path + ".seed", "expected a non-negative integer");
      c.seed = j[key].get<std::uint64_t>();
    } else if (std::find(known.begin(), known.end(), key) == known.end()) {
      throw ConfigError(path + "." + key, "unknown field");
    }
  }
  try {
    c.validate();
  } catch (const ArgumentError& e) {
    throw ConfigError(path, e.what());
  }
  return c;
}

Json theory_to_json(const XorTheoryConfig& cfg) {
  XorTheoryConfig c = cfg;
  Json out = Json::object();
  for_each_field(c, [&](const char* key, auto& slot) { out[key] = slot; });
  out["seed"] = c.seed;
  return out;
}

TheoryReport run_theory(const XorTheoryConfig& base, TheoryMode mode, std::uint64_t first_seed, int seeds,
                        const fs::path& out, int jobs) {
  base.validate();
  if (seeds < 1) throw ArgumentError("theory: seeds must be >= 1");
  fs::create_directories(out);
  TheoryReport rep;
  rep.json = {{"mode", to_string(mode)}, {"config", theory_to_json(base)}, {"runs", Json::array()}};
  std::ostringstream text;
  text << "mode: " << to_string(mode) << "\n";

  if (mode == TheoryMode::Lemma1) {
    rep.total = seeds;
    std::vector<theoryxor::Lemma1Result> res(seeds);
    run_jobs(seeds, jobs, [&](std::size_t i) { res[i] = theoryxor::lemma1_oracle(10000, 100, first_seed + i); });
    for (int i = 0; i < seeds; ++i) {
      const auto& r = res[i];
      const bool ok = r.max_accuracy <= 0.75 && r.handcrafted == 0.75;
      rep.passed += ok;
      rep.json["runs"].push_back({{"seed", first_seed + i},
                                  {"max_accuracy", r.max_accuracy},
                                  {"max_random", r.max_random},
                                  {"max_optimized", r.max_optimized},
                                  {"handcrafted", r.handcrafted},
                                  {"handcrafted_sampled", r.handcrafted_sampled},
                                  {"ok", ok}});
      text << "seed " << first_seed + i << ": max " << fmt(r.max_accuracy) << " (random " << fmt(r.max_random)
           << ", optimized " << fmt(r.max_optimized) << "), handcrafted " << fmt(r.handcrafted) << ", sampled "
           << fmt(r.handcrafted_sampled) << (ok ? " [ok]" : " [FAIL]") << "\n";
    }
  } else if (mode == TheoryMode::Weak || mode == TheoryMode::OneStep) {
    rep.total = seeds;
    std::vector<theoryxor::OneStepResult> res(seeds);
    run_jobs(seeds, jobs, [&](std::size_t i) {
      XorTheoryConfig c = base;
      c.seed = first_seed + i;
      if (mode == TheoryMode::OneStep) {
        res[i] = theoryxor::one_step_experiment(c);
      } else {
        res[i].weak = theoryxor::weak_experiment(c);
      }
    });
    for (int i = 0; i < seeds; ++i) {
      const auto& r = res[i];
      Json j = {{"seed", first_seed + i}, {"weak", weak_json(r.weak)}};
      text << "seed " << first_seed + i << ": weak epochs " << r.weak.epochs << ", test " << fmt(r.weak.test_acc)
           << ", coverage " << r.weak.coverage << ", r_W " << fmt(r.weak.r_w);
      bool ok = weak_ok(r.weak);
      if (mode == TheoryMode::OneStep) {
        ok = r.train_acc == 1.0 && r.test_acc >= 0.99;
        j["assumptions"] = assumptions_json(r.assumptions);
        j["assumptions_satisfied"] = r.assumptions.all_satisfied();
        j["gdata"] = event_json(r.gdata);
        j["balance"] = event_json(r.balance);
        j["initial_train_acc"] = r.initial_train_acc;
        j["train_acc"] = r.train_acc;
        j["test_acc"] = r.test_acc;
        j["flags"] = r.flags;
        text << "; target train " << fmt(r.train_acc) << ", test " << fmt(r.test_acc) << ", assumptions "
             << (r.assumptions.all_satisfied() ? "ok" : "violated") << ", gdata " << fmt(r.gdata.fraction)
             << ", balance " << fmt(r.balance.fraction);
        for (const auto& f : r.flags) text << "\n    flag: " << f;
      }
      j["ok"] = ok;
      rep.passed += ok;
      text << (ok ? " [ok]" : " [FAIL]") << "\n";
      rep.json["runs"].push_back(std::move(j));
    }
  } else {
    const std::vector<int> ns{400, 800, 1600, 3200};
    const std::vector<int> ps{base.p / 2, base.p, base.p * 2};
    const std::vector<double> epss{1.0 / 40, 1.0 / 80};
    struct Point {
      int p, n;
      double eps;
      double r_w = 0.0;
      int full_coverage = 0;  // seeds whose weak model covers 3 features
    };
    std::vector<Point> points;
    for (double e : epss) {
      for (int n : ns) points.push_back({base.p, n, e});
      for (int p : ps)
        if (p != base.p) points.push_back({p, base.n, e});
    }
    const std::size_t jobs_total = points.size() * seeds;
    std::vector<double> r(jobs_total);
    std::vector<int> cov(jobs_total);
    run_jobs(jobs_total, jobs, [&](std::size_t k) {
      const auto& pt = points[k % points.size()];
      const int s = static_cast<int>(first_seed + k / points.size());
      const int pp[] = {pt.p};
      const int nn[] = {pt.n};
      const double ee[] = {pt.eps};
      XorTheoryConfig c = base;
      c.seed = s;
      const auto res = theoryxor::norm_ratio_sweep(c, pp, nn, ee).at(0);
      r[k] = res.r_w;
      cov[k] = res.coverage;
    });
    for (std::size_t k = 0; k < jobs_total; ++k) {
      auto& pt = points[k % points.size()];
      pt.r_w += r[k] / seeds;
      pt.full_coverage += cov[k] == 3;
    }

    const auto find = [&](int p, int n, double e) {
      for (const auto& pt : points)
        if (pt.p == p && pt.n == n && pt.eps == e) return pt.r_w;
      throw StateError("norm-ratio point missing");
    };
    for (const auto& pt : points) {
      rep.json["runs"].push_back(
          {{"p", pt.p}, {"n", pt.n}, {"eps", pt.eps}, {"r_w", pt.r_w}, {"full_coverage", pt.full_coverage}});
      text << "p " << pt.p << " n " << pt.n << " eps " << fmt(pt.eps) << ": r_W " << fmt(pt.r_w) << ", coverage 3 in "
           << pt.full_coverage << "/" << seeds << "\n";
    }
    Json fits = Json::array();
    for (double e : epss) {
      std::vector<double> x, y, yp;
      for (int n : ns) {
        x.push_back(n);
        y.push_back(find(base.p, n, e));
      }
      for (int p : ps) yp.push_back(find(p, base.n, e));
      const double slope = theoryxor::loglog_slope(x, y);
      const double spread = *std::max_element(yp.begin(), yp.end()) / *std::min_element(yp.begin(), yp.end()) - 1.0;
      const bool ok_n = std::abs(slope + 0.5) <= 0.15, ok_p = spread <= 0.2;
      rep.total += 2;
      rep.passed += ok_n + ok_p;
      fits.push_back({{"eps", e}, {"slope_vs_n", slope}, {"relative_spread_vs_p", spread}, {"slope_ok", ok_n},
                      {"spread_ok", ok_p}});
      text << "eps " << fmt(e) << ": slope vs n " << fmt(slope) << (ok_n ? " [ok]" : " [FAIL]")
           << ", max/min - 1 over p " << fmt(spread) << (ok_p ? " [ok]" : " [FAIL]") << "\n";
    }
    rep.json["fits"] = fits;
  }

  text << "passed: " << rep.passed << "/" << rep.total << "\n";
  rep.json["passed"] = rep.passed;
  rep.json["total"] = rep.total;
  rep.text = text.str();
  std::ofstream(out / "report.json", std::ios::trunc) << rep.json.dump(2) << "\n";
  std::ofstream(out / "report.txt", std::ios::trunc) << rep.text;
  return rep;
}

}  // namespace grokkit::expcli
