#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "yoto/datagen.hpp"
#include "yoto/model.hpp"

YOTO_BEGIN_NAMESPACE

/// Pearson correlation. Throws DegenerateInputError if either input is constant.
double plcc(std::span<const double> x, std::span<const double> y);
/// Spearman correlation: 1 - 6 sum d^2 / (n (n^2 - 1)) when there are no ties,
/// otherwise Pearson correlation of average ranks.
double srocc(std::span<const double> x, std::span<const double> y);
/// 1-based ranks, ties receive their average rank.
std::vector<double> average_ranks(std::span<const double> x);

struct EvalOptions {
  Mode mode = Mode::nr;
  std::size_t crops = 8;
  std::size_t crop_size = 48;
  std::uint64_t seed = 0;
  bool consistency = false;  // also report the FR/NR mean squared difference
};

struct MetricsReport {
  double plcc = 0;
  double srocc = 0;
  std::optional<double> mse_fr_nr;
  std::size_t n = 0;
  Mode mode = Mode::nr;
  std::uint64_t seed = 0;
  std::size_t crops = 0;
  std::vector<double> predictions;  // per sample, input order
};

/// Crop origins for one image; derived from hash_seed(seed, id) so results do
/// not depend on evaluation order.
std::vector<std::pair<std::size_t, std::size_t>> eval_crops(const std::string& id, std::uint64_t seed, std::size_t crops,
                                                            std::size_t crop_size, std::size_t image_size);

/// Mean score over the crops (each resized to the model input size).
double predict(const Model& model, const Sample& sample, Mode mode, const EvalOptions& opt);

MetricsReport evaluate(std::span<const Sample> samples, const Model& model, const EvalOptions& opt);

/// Mean squared difference between FR and NR predictions over the same crops.
double consistency_mse(std::span<const Sample> samples, const Model& model, const EvalOptions& opt);

/// Mean and sample standard deviation (0 for a single value).
struct SeedSummary {
  double mean = 0;
  double stddev = 0;
  std::size_t n = 0;
};
SeedSummary summarize(std::span<const double> values);

/// JSON with keys plcc, srocc, mse_fr_nr (null when absent), n, mode, seed,
/// crops; reals in 6-decimal fixed notation.
std::string report_json(const MetricsReport& r);

YOTO_END_NAMESPACE
