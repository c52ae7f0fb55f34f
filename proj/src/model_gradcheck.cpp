#include "yoto/model_gradcheck.hpp"

#include <algorithm>

#include "yoto/datagen.hpp"
#include "yoto/errors.hpp"
#include "yoto/train.hpp"

YOTO_BEGIN_NAMESPACE

namespace {

double trace_loss(const std::vector<ForwardTrace>& traces, std::span<const real> targets) {
  double total = 0;
  for (std::size_t i = 0; i < traces.size(); ++i) {
    const double d = static_cast<double>(traces[i].score.item()) - static_cast<double>(targets[i]);
    total += d * d;
  }
  return total / static_cast<double>(traces.size());
}

}  // namespace

GradCheckReport model_grad_check(const Model& model, std::span<const ModePair> pairs, std::span<const real> targets,
                                 const ModelGradCheckOptions& opt) {
  if (pairs.empty() || pairs.size() != targets.size()) {
    throw ContractError("model_grad_check: need one target per pair");
  }
  Model m = model.clone();
  auto params = m.parameters();

  {
    std::vector<Tensor> preds;
    for (const auto& p : pairs) preds.push_back(reshape(forward(m, p), {1}));
    backward(l2_loss(concat(preds, 0), targets));
  }

  NoGradGuard no_grad;
  std::vector<ForwardTrace> traces;
  for (const auto& p : pairs) traces.push_back(forward_trace(m, p));
  auto refresh = [&](const ParamGroup& g) {
    for (auto& t : traces) refresh_trace(m, t, g);
  };

  GradCheckReport report;
  for (auto& param : params) {
    const std::vector<real> analytic = param.tensor.grad();
    ParamCheck check;
    check.name = param.name;
    auto values = param.tensor.mutable_data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const real original = values[i];
      const real hi = static_cast<real>(original + opt.epsilon);
      const real lo = static_cast<real>(original - opt.epsilon);
      values[i] = hi;
      refresh(param.group);
      const double up = trace_loss(traces, targets);
      values[i] = lo;
      refresh(param.group);
      const double down = trace_loss(traces, targets);
      values[i] = original;
      const double numeric = (up - down) / (static_cast<double>(hi) - static_cast<double>(lo));
      const double err = relative_error(analytic[i], numeric);
      if (err > check.max_relative_error || i == 0) {
        check.max_relative_error = err;
        check.worst_index = i;
        check.analytic = analytic[i];
        check.numeric = numeric;
      }
    }
    refresh(param.group);
    report.max_relative_error = std::max(report.max_relative_error, check.max_relative_error);
    if (opt.on_param) opt.on_param(check);
    report.params.push_back(std::move(check));
  }
  report.passed = report.max_relative_error < opt.tol;
  return report;
}

GradCheckProblem make_grad_check_problem(std::uint64_t seed, const ModelConfig& config) {
  GradCheckProblem p{Model::init(config, hash_seed(seed, "gradcheck-model")), {}, {}};
  Rng rng(hash_seed(seed, "gradcheck-data"));
  const Image ref = gen_base_image(rng.next(), config.image_size);
  const Image noisy = apply_distortion(ref, {DistortionKind::gaussian_noise, 3, rng.next()});
  const Image blurred = apply_distortion(ref, {DistortionKind::gaussian_blur, 2, rng.next()});
  p.pairs.push_back(ModePair::nr(noisy));
  p.pairs.push_back(ModePair::fr(blurred, ref));
  p.targets.push_back(static_cast<real>(rng.uniform()));
  p.targets.push_back(static_cast<real>(rng.uniform()));
  return p;
}

YOTO_END_NAMESPACE
