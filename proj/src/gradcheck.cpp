#include "yoto/gradcheck.hpp"

#include <algorithm>
#include <cmath>

YOTO_BEGIN_NAMESPACE

double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
  return std::abs(analytic - numeric) / denom;
}

GradCheckReport finite_diff_check(const std::function<Tensor()>& f, std::vector<Tensor> params, double epsilon,
                                  double tol, std::vector<std::string> names) {
  if (!(epsilon > 0)) throw ContractError("finite_diff_check: epsilon must be positive");
  for (auto& p : params) p.zero_grad();
  const Tensor loss = f();
  if (loss.size() != 1) throw ContractError("finite_diff_check: f must return a scalar, got " + shape_str(loss.shape()));
  backward(loss);

  GradCheckReport report;
  NoGradGuard no_grad;
  for (std::size_t p = 0; p < params.size(); ++p) {
    Tensor& param = params[p];
    const std::vector<real> analytic = param.grad();
    ParamCheck check;
    check.name = p < names.size() ? names[p] : "param" + std::to_string(p);
    auto values = param.mutable_data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const real original = values[i];
      const real hi = static_cast<real>(original + epsilon);
      const real lo = static_cast<real>(original - epsilon);
      values[i] = hi;
      const double up = f().item();
      values[i] = lo;
      const double down = f().item();
      values[i] = original;
      // Divide by the step actually taken after rounding to `real`.
      const double numeric = (up - down) / (static_cast<double>(hi) - static_cast<double>(lo));
      const double err = relative_error(analytic[i], numeric);
      if (err > check.max_relative_error || i == 0) {
        check.max_relative_error = err;
        check.worst_index = i;
        check.analytic = analytic[i];
        check.numeric = numeric;
      }
    }
    report.max_relative_error = std::max(report.max_relative_error, check.max_relative_error);
    report.params.push_back(std::move(check));
  }
  report.passed = report.max_relative_error < tol;
  return report;
}

YOTO_END_NAMESPACE
