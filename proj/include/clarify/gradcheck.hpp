// Finite-difference checks of every embedding and reward loss on small random
// fixtures.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace clarify {

struct GradSuiteResult {
  std::string name;
  int fixtures = 0;
  double tolerance = 0.0;
  double max_rel_error = 0.0;
  bool passed = false;
  std::string detail;  // first failure, if any
};

inline constexpr double kEmbeddingGradTol = 1e-5;
inline constexpr double kRewardGradTol = 1e-4;

std::vector<GradSuiteResult> run_gradient_suites(std::uint64_t seed = 0, int fixtures = 10);

}  // namespace clarify
