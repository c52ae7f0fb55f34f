#include "yoto/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "yoto/errors.hpp"

YOTO_BEGIN_NAMESPACE

namespace {

void check_pair(std::span<const double> x, std::span<const double> y, const char* what) {
  if (x.size() != y.size()) throw DimensionError(std::string(what) + ": inputs differ in length");
  if (x.size() < 2) throw ContractError(std::string(what) + ": needs at least two samples");
}

}  // namespace

double plcc(std::span<const double> x, std::span<const double> y) {
  check_pair(x, y, "plcc");
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0 || syy == 0) throw DegenerateInputError("plcc: zero variance input");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

std::vector<double> average_ranks(std::span<const double> x) {
  std::vector<std::size_t> idx(x.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> ranks(x.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && x[idx[j + 1]] == x[idx[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[idx[k]] = r;
    i = j + 1;
  }
  return ranks;
}

double srocc(std::span<const double> x, std::span<const double> y) {
  check_pair(x, y, "srocc");
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  auto has_ties = [](std::vector<double> r) {
    std::sort(r.begin(), r.end());
    return std::adjacent_find(r.begin(), r.end()) != r.end();
  };
  if (has_ties(rx) || has_ties(ry)) return plcc(rx, ry);
  const double n = static_cast<double>(x.size());
  double d2 = 0;
  for (std::size_t i = 0; i < rx.size(); ++i) d2 += (rx[i] - ry[i]) * (rx[i] - ry[i]);
  return 1.0 - 6.0 * d2 / (n * (n * n - 1.0));
}

std::vector<std::pair<std::size_t, std::size_t>> eval_crops(const std::string& id, std::uint64_t seed, std::size_t crops,
                                                            std::size_t crop_size, std::size_t image_size) {
  if (crops == 0) throw ContractError("evaluate: crop count must be positive");
  if (crop_size == 0 || crop_size > image_size) throw ContractError("evaluate: crop size must be in [1, image size]");
  if (crop_size == image_size) return {{0, 0}};
  Rng rng(hash_seed(seed, id));
  const std::size_t room = image_size - crop_size + 1;
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t i = 0; i < crops; ++i) {
    const auto x = static_cast<std::size_t>(rng.below(room));
    const auto y = static_cast<std::size_t>(rng.below(room));
    out.emplace_back(x, y);
  }
  return out;
}

double predict(const Model& model, const Sample& sample, Mode mode, const EvalOptions& opt) {
  const std::size_t size = model.config.image_size;
  const auto origins = eval_crops(sample.id, opt.seed, opt.crops, opt.crop_size, size);
  auto view = [&](const Image& img, std::pair<std::size_t, std::size_t> o) {
    if (opt.crop_size == size) return img;
    return resize_nearest(crop(img, o.first, o.second, opt.crop_size, opt.crop_size), size, size);
  };
  double total = 0;
  for (const auto& o : origins) {
    const ModePair pair =
        mode == Mode::nr ? ModePair::nr(view(sample.distorted, o)) : ModePair::fr(view(sample.distorted, o), view(sample.reference, o));
    total += score(model, pair);
  }
  return total / static_cast<double>(origins.size());
}

MetricsReport evaluate(std::span<const Sample> samples, const Model& model, const EvalOptions& opt) {
  if (samples.empty()) throw ContractError("evaluate: empty split");
  MetricsReport r;
  r.mode = opt.mode;
  r.seed = opt.seed;
  r.crops = opt.crop_size == model.config.image_size ? 1 : opt.crops;
  r.n = samples.size();
  std::vector<double> mos;
  for (const auto& s : samples) {
    r.predictions.push_back(predict(model, s, opt.mode, opt));
    mos.push_back(s.mos);
  }
  r.plcc = plcc(r.predictions, mos);
  r.srocc = srocc(r.predictions, mos);
  if (opt.consistency) r.mse_fr_nr = consistency_mse(samples, model, opt);
  return r;
}

double consistency_mse(std::span<const Sample> samples, const Model& model, const EvalOptions& opt) {
  if (samples.empty()) throw ContractError("consistency_mse: empty split");
  double total = 0;
  for (const auto& s : samples) {
    const double d = predict(model, s, Mode::fr, opt) - predict(model, s, Mode::nr, opt);
    total += d * d;
  }
  return total / static_cast<double>(samples.size());
}

SeedSummary summarize(std::span<const double> values) {
  SeedSummary s;
  s.n = values.size();
  if (values.empty()) return s;
  s.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(s.n);
  if (s.n > 1) {
    double ss = 0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.stddev = std::sqrt(ss / static_cast<double>(s.n - 1));
  }
  return s;
}

std::string report_json(const MetricsReport& r) {
  auto fixed = [](double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return std::string(buf);
  };
  std::string out = "{\n";
  out += "  \"plcc\": " + fixed(r.plcc) + ",\n";
  out += "  \"srocc\": " + fixed(r.srocc) + ",\n";
  out += "  \"mse_fr_nr\": " + (r.mse_fr_nr ? fixed(*r.mse_fr_nr) : std::string("null")) + ",\n";
  out += "  \"n\": " + std::to_string(r.n) + ",\n";
  out += "  \"mode\": \"" + std::string(to_string(r.mode)) + "\",\n";
  out += "  \"seed\": " + std::to_string(r.seed) + ",\n";
  out += "  \"crops\": " + std::to_string(r.crops) + "\n";
  out += "}\n";
  return out;
}

YOTO_END_NAMESPACE
