#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "grokkit/expcli/config.hpp"
#include "grokkit/theoryxor.hpp"

namespace grokkit::expcli {

enum class TheoryMode { OneStep, Weak, Lemma1, NormRatio };
const char* to_string(TheoryMode m) noexcept;
TheoryMode parse_theory_mode(const std::string& s);

/// XorTheoryConfig from a flat JSON object whose keys are the field names
/// (p, n, eps, m, v_init, alpha, C, weak_lambda, ...). Unknown keys are errors.
theoryxor::XorTheoryConfig theory_from_json(const Json& j, const std::string& path = "theory");
Json theory_to_json(const theoryxor::XorTheoryConfig& cfg);

struct TheoryReport {
  Json json;         ///< structured results, one entry per seed
  std::string text;  ///< the same, human-readable
  int passed = 0;    ///< seeds meeting the mode's success condition
  int total = 0;
};

/// Runs `mode` for seeds first_seed .. first_seed + seeds - 1 (concurrently,
/// up to `jobs`) and writes report.json and report.txt into `out`.
/// Success per seed: one-step train_acc == 1 and test_acc >= 0.99; weak
/// coverage == 3 with test accuracy in [0.7, 0.8]; lemma1 max <= 0.75.
/// Norm-ratio mode sweeps n in {400, 800, 1600, 3200} for eps in {1/40, 1/80}
/// and p in {p/2, p, 2p} and reports the fitted slopes.
TheoryReport run_theory(const theoryxor::XorTheoryConfig& base, TheoryMode mode, std::uint64_t first_seed, int seeds,
                        const std::filesystem::path& out, int jobs);

}  // namespace grokkit::expcli
