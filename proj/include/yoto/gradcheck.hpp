#pragma once

#include <functional>
#include <string>
#include <vector>

#include "yoto/tensor.hpp"

YOTO_BEGIN_NAMESPACE

/// |a - n| / max(|a|, |n|, 1e-8)
double relative_error(double analytic, double numeric);

struct ParamCheck {
  std::string name;
  double max_relative_error = 0;
  std::size_t worst_index = 0;
  double analytic = 0;  // at worst_index
  double numeric = 0;
};

struct GradCheckReport {
  std::vector<ParamCheck> params;
  double max_relative_error = 0;
  bool passed = false;
};

/// Compares backward() against central differences (f(p+eps) - f(p-eps)) / 2eps
/// for every element of every tensor in `params`. `f` must return a scalar and
/// is re-evaluated with the parameter data perturbed in place; the original
/// values are restored afterwards. Existing gradients are cleared.
GradCheckReport finite_diff_check(const std::function<Tensor()>& f, std::vector<Tensor> params, double epsilon,
                                  double tol, std::vector<std::string> names = {});

YOTO_END_NAMESPACE
