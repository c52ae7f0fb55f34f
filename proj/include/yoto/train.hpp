#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "yoto/datagen.hpp"
#include "yoto/model.hpp"

YOTO_BEGIN_NAMESPACE

enum class TrainMode { nr, fr, joint };
std::string_view to_string(TrainMode mode);
TrainMode parse_train_mode(std::string_view name);

struct TrainConfig {
  TrainMode mode = TrainMode::nr;
  std::size_t epochs = 100;
  std::size_t batch_size = 8;
  double lr0 = 1e-4;
  double t_max = 50;
  double eta_min = 0;
  std::uint64_t seed = 0;
  std::size_t crop = 48;
  double hflip_prob = 0.5;
  double fr_prob = 0.5;  // joint mode only

  void validate(std::size_t image_size) const;
};

/// Mean squared error; pred is [n].
Tensor l2_loss(const Tensor& pred, std::span<const real> target);

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::vector<std::vector<double>> m, v;
  std::uint64_t step = 0;
};

/// One bias-corrected Adam update of each leaf in `params` using `grads`.
void adam_step(std::span<Tensor> params, std::span<const std::vector<real>> grads, AdamState& state, double lr,
               const AdamOptions& opt = {});

/// eta_min + (lr0 - eta_min) (1 + cos(pi t / t_max)) / 2, with t clamped to [0, t_max].
double cosine_lr(double t, double lr0, double t_max, double eta_min);

/// A training pair after augmentation. Both images were cropped at
/// (crop_x, crop_y), resized back to the model input size and flipped together.
struct TrainPair {
  ModePair pair;
  real target = 0;
  std::size_t crop_x = 0, crop_y = 0;
  bool flipped = false;
};

/// Shared crop at random coordinates, nearest resize to image_size, and a
/// synchronized horizontal flip. crop == image_size skips the resize.
TrainPair augment(const Sample& sample, Mode mode, const TrainConfig& cfg, std::size_t image_size, Rng& rng);

/// batch_size samples drawn uniformly with replacement; mode per cfg (joint: FR
/// with probability fr_prob, per sample).
std::vector<TrainPair> sample_batch(std::span<const Sample> samples, const TrainConfig& cfg, std::size_t image_size,
                                    Rng& rng);

struct EpochLog {
  std::size_t epoch = 0;
  double lr = 0;
  double loss = 0;
};

struct TrainResult {
  Model model;
  std::vector<EpochLog> log;
};

/// Per epoch: shuffle, split into batches, augment, forward, L2, backward,
/// Adam at the epoch's cosine learning rate. Deterministic in cfg.seed.
TrainResult train(std::span<const Sample> samples, const TrainConfig& cfg, const ModelConfig& model_cfg = {},
                  const std::function<void(const EpochLog&)>& on_epoch = {});

YOTO_END_NAMESPACE
