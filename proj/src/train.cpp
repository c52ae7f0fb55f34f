#include "yoto/train.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "yoto/errors.hpp"

YOTO_BEGIN_NAMESPACE

std::string_view to_string(TrainMode mode) {
  switch (mode) {
    case TrainMode::nr: return "nr";
    case TrainMode::fr: return "fr";
    case TrainMode::joint: return "joint";
  }
  return "?";
}

TrainMode parse_train_mode(std::string_view name) {
  if (name == "nr") return TrainMode::nr;
  if (name == "fr") return TrainMode::fr;
  if (name == "joint") return TrainMode::joint;
  throw ContractError("unknown training mode '" + std::string(name) + "' (expected nr, fr or joint)");
}

void TrainConfig::validate(std::size_t image_size) const {
  if (batch_size == 0) throw ContractError("train: batch size must be positive");
  if (crop == 0 || crop > image_size) throw ContractError("train: crop must be in [1, image size]");
  if (!(lr0 >= 0) || !(eta_min >= 0)) throw ContractError("train: learning rates must be non-negative");
  if (!(t_max > 0)) throw ContractError("train: t_max must be positive");
  if (!(hflip_prob >= 0 && hflip_prob <= 1) || !(fr_prob >= 0 && fr_prob <= 1)) {
    throw ContractError("train: probabilities must lie in [0, 1]");
  }
}

Tensor l2_loss(const Tensor& pred, std::span<const real> target) {
  if (pred.rank() != 1 || pred.size() != target.size()) {
    throw DimensionError("l2_loss: prediction " + shape_str(pred.shape()) + " vs " + std::to_string(target.size()) +
                         " targets");
  }
  if (target.empty()) throw ContractError("l2_loss: empty input");
  const Tensor t = Tensor::from({target.size()}, std::vector<real>(target.begin(), target.end()));
  const Tensor d = sub(pred, t);
  return mean(mul(d, d));
}

void adam_step(std::span<Tensor> params, std::span<const std::vector<real>> grads, AdamState& state, double lr,
               const AdamOptions& opt) {
  if (params.size() != grads.size()) throw DimensionError("adam_step: parameter and gradient counts differ");
  if (state.m.empty()) {
    for (const auto& p : params) {
      state.m.emplace_back(p.size(), 0.0);
      state.v.emplace_back(p.size(), 0.0);
    }
  }
  if (state.m.size() != params.size()) throw DimensionError("adam_step: state does not match parameters");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (grads[i].size() != params[i].size() || state.m[i].size() != params[i].size()) {
      throw DimensionError("adam_step: shape mismatch at parameter " + std::to_string(i));
    }
  }
  ++state.step;
  const double c1 = 1.0 - std::pow(opt.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(opt.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto w = params[i].mutable_data();
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (std::size_t j = 0; j < w.size(); ++j) {
      const double g = grads[i][j];
      m[j] = opt.beta1 * m[j] + (1 - opt.beta1) * g;
      v[j] = opt.beta2 * v[j] + (1 - opt.beta2) * g * g;
      const double mhat = m[j] / c1;
      const double vhat = v[j] / c2;
      w[j] = static_cast<real>(w[j] - lr * mhat / (std::sqrt(vhat) + opt.eps));
    }
  }
}

double cosine_lr(double t, double lr0, double t_max, double eta_min) {
  const double tc = std::clamp(t, 0.0, t_max);
  if (tc == t_max) return eta_min;
  return eta_min + 0.5 * (lr0 - eta_min) * (1.0 + std::cos(std::numbers::pi * tc / t_max));
}

TrainPair augment(const Sample& sample, Mode mode, const TrainConfig& cfg, std::size_t image_size, Rng& rng) {
  const Image& dis = sample.distorted;
  if (dis.width != image_size || dis.height != image_size) {
    throw ContractError("augment: sample '" + sample.id + "' is not " + std::to_string(image_size) + " pixels square");
  }
  TrainPair out;
  out.target = static_cast<real>(sample.mos);
  const std::size_t room = image_size - cfg.crop + 1;
  out.crop_x = static_cast<std::size_t>(rng.below(room));
  out.crop_y = static_cast<std::size_t>(rng.below(room));
  out.flipped = rng.bernoulli(cfg.hflip_prob);
  auto view = [&](const Image& img) {
    Image v = cfg.crop == image_size ? img : resize_nearest(crop(img, out.crop_x, out.crop_y, cfg.crop, cfg.crop),
                                                             image_size, image_size);
    return out.flipped ? flip_horizontal(v) : v;
  };
  Image d = view(dis);
  out.pair = mode == Mode::nr ? ModePair::nr(std::move(d)) : ModePair::fr(std::move(d), view(sample.reference));
  return out;
}

namespace {

Mode draw_mode(const TrainConfig& cfg, Rng& rng) {
  switch (cfg.mode) {
    case TrainMode::nr: return Mode::nr;
    case TrainMode::fr: return Mode::fr;
    case TrainMode::joint: return rng.bernoulli(cfg.fr_prob) ? Mode::fr : Mode::nr;
  }
  return Mode::nr;
}

}  // namespace

std::vector<TrainPair> sample_batch(std::span<const Sample> samples, const TrainConfig& cfg, std::size_t image_size,
                                    Rng& rng) {
  if (samples.empty()) throw ContractError("sample_batch: empty training split");
  std::vector<TrainPair> batch;
  for (std::size_t i = 0; i < cfg.batch_size; ++i) {
    const Sample& s = samples[rng.below(samples.size())];
    const Mode mode = draw_mode(cfg, rng);
    batch.push_back(augment(s, mode, cfg, image_size, rng));
  }
  return batch;
}

TrainResult train(std::span<const Sample> samples, const TrainConfig& cfg, const ModelConfig& model_cfg,
                  const std::function<void(const EpochLog&)>& on_epoch) {
  cfg.validate(model_cfg.image_size);
  if (samples.empty()) throw ContractError("train: empty training split");
  TrainResult result{Model::init(model_cfg, hash_seed(cfg.seed, "init")), {}};
  Model& model = result.model;
  std::vector<Tensor> params;
  for (const auto& p : model.parameters()) params.push_back(p.tensor);

  Rng rng(hash_seed(cfg.seed, "train"));
  AdamState adam;
  std::vector<std::size_t> order(samples.size());
  std::vector<std::vector<real>> grads(params.size());
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = cosine_lr(static_cast<double>(epoch), cfg.lr0, cfg.t_max, cfg.eta_min);
    std::iota(order.begin(), order.end(), std::size_t{0});
    rng.shuffle(order.begin(), order.end());
    double loss_sum = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      std::vector<Tensor> preds;
      std::vector<real> targets;
      for (std::size_t i = start; i < end; ++i) {
        const Sample& s = samples[order[i]];
        const Mode mode = draw_mode(cfg, rng);
        TrainPair tp = augment(s, mode, cfg, model_cfg.image_size, rng);
        preds.push_back(reshape(forward(model, tp.pair), {1}));
        targets.push_back(tp.target);
      }
      const Tensor loss = l2_loss(concat(preds, 0), targets);
      model.zero_grad();
      backward(loss);
      for (std::size_t i = 0; i < params.size(); ++i) grads[i] = params[i].grad();
      adam_step(params, grads, adam, lr);
      loss_sum += static_cast<double>(loss.item()) * static_cast<double>(end - start);
    }
    result.log.push_back({epoch, lr, loss_sum / static_cast<double>(samples.size())});
    if (on_epoch) on_epoch(result.log.back());
  }
  model.zero_grad();
  return result;
}

YOTO_END_NAMESPACE
