#pragma once

// Precision-independent entry point for the full-model gradient check. It is
// implemented only in the double-precision library (yoto_f64), because
// single-precision central differences cannot resolve a 1e-3 relative error.

#include <cstdint>
#include <functional>
#include <string>

namespace yoto {

struct FullGradCheckResult {
  double max_relative_error = 0;
  bool passed = false;
  std::size_t tensors = 0;
  std::size_t elements = 0;
  std::string worst_param;
  double seconds = 0;
};

FullGradCheckResult run_full_model_grad_check(std::uint64_t seed,
                                              const std::function<void(const std::string&)>& progress = {});

}  // namespace yoto
