#include "yoto/full_gradcheck.hpp"

#include <chrono>
#include <cstdio>

#include "yoto/model_gradcheck.hpp"

#if !defined(YOTO_REAL_DOUBLE)
#error "full_gradcheck.cpp must be built with YOTO_REAL_DOUBLE"
#endif

namespace yoto {

FullGradCheckResult run_full_model_grad_check(std::uint64_t seed,
                                              const std::function<void(const std::string&)>& progress) {
  const auto start = std::chrono::steady_clock::now();
  const GradCheckProblem problem = make_grad_check_problem(seed);
  ModelGradCheckOptions opt;
  if (progress) {
    opt.on_param = [&](const ParamCheck& c) {
      char buf[160];
      std::snprintf(buf, sizeof buf, " max_rel_err=%.3e at %zu (analytic %.6e, numeric %.6e)", c.max_relative_error,
                    c.worst_index, c.analytic, c.numeric);
      progress(c.name + buf);
    };
  }
  const GradCheckReport report = model_grad_check(problem.model, problem.pairs, problem.targets, opt);
  FullGradCheckResult r;
  r.max_relative_error = report.max_relative_error;
  r.passed = report.passed;
  r.tensors = report.params.size();
  r.elements = problem.model.parameter_count();
  for (const auto& c : report.params) {
    if (c.max_relative_error == report.max_relative_error) r.worst_param = c.name;
  }
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return r;
}

}  // namespace yoto
