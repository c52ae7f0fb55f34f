#pragma once

#include <functional>
#include <span>

#include "yoto/gradcheck.hpp"
#include "yoto/model.hpp"

YOTO_BEGIN_NAMESPACE

struct ModelGradCheckOptions {
  double epsilon = 1e-3;
  double tol = 1e-3;
  std::function<void(const ParamCheck&)> on_param;
};

/// Central differences on every element of every model parameter against
/// backward() of the L2 loss over `pairs`. Each perturbation recomputes only
/// the forward phases that depend on the perturbed parameter.
GradCheckReport model_grad_check(const Model& model, std::span<const ModePair> pairs, std::span<const real> targets,
                                 const ModelGradCheckOptions& opt = {});

/// Default-config model and a batch of two (one NR, one FR pair) built from
/// `seed`; targets drawn from the same seed.
struct GradCheckProblem {
  Model model;
  std::vector<ModePair> pairs;
  std::vector<real> targets;
};
GradCheckProblem make_grad_check_problem(std::uint64_t seed, const ModelConfig& config = {});

YOTO_END_NAMESPACE
