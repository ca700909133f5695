#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mods/gradcheck.hpp"

namespace mods {

struct SuiteEntry {
  std::string module;
  GradReport report;
  std::size_t parameters = 0;  // scalar entries checked
  double seconds = 0.0;
};

/// Finite-difference checks of every trainable module at d=8, J=4, T≤12,
/// plus the full model loss over a batch of K=4 samples.
std::vector<SuiteEntry> run_gradcheck_suite(std::uint64_t seed, const GradCheckOptions& opts = {});

}  // namespace mods
