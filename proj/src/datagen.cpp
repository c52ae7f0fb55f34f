#include "yoto/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>

#include "yoto/errors.hpp"
#include "yoto/rng.hpp"

YOTO_BEGIN_NAMESPACE

namespace fs = std::filesystem;

std::string_view to_string(DistortionKind kind) {
  switch (kind) {
    case DistortionKind::block_occlusion:
      return "block_occlusion";
    case DistortionKind::sparse_sampling:
      return "sparse_sampling";
    case DistortionKind::gaussian_noise:
      return "gaussian_noise";
    case DistortionKind::gaussian_blur:
      return "gaussian_blur";
  }
  return "unknown";
}

DistortionKind parse_distortion_kind(std::string_view name) {
  for (auto k : kDistortionKinds) {
    if (to_string(k) == name) return k;
  }
  throw ContractError("unknown distortion kind '" + std::string(name) + "'");
}

std::string_view to_string(Split split) { return split == Split::train ? "train" : "test"; }

Image gen_base_image(std::uint64_t seed, std::size_t size) {
  if (size == 0 || size % 32 != 0) throw ContractError("gen_base_image: size must be a positive multiple of 32");
  Rng rng(seed);
  const double n = static_cast<double>(size);
  std::vector<double> field(size * size * 3, 0.0);
  auto f = [&](std::size_t x, std::size_t y, std::size_t c) -> double& { return field[(y * size + x) * 3 + c]; };

  for (int g = 0; g < 3; ++g) {
    const double fx = rng.uniform(-6, 6), fy = rng.uniform(-6, 6);
    const double phase = rng.uniform(0, 2 * std::numbers::pi);
    std::array<double, 3> amp{};
    for (auto& a : amp) a = rng.uniform(0.2, 1.0);
    for (std::size_t y = 0; y < size; ++y) {
      for (std::size_t x = 0; x < size; ++x) {
        const double s = std::sin(2 * std::numbers::pi * (fx * x + fy * y) / n + phase);
        for (std::size_t c = 0; c < 3; ++c) f(x, y, c) += amp[c] * s;
      }
    }
  }
  for (int b = 0; b < 4; ++b) {
    const double cx = rng.uniform(0, n), cy = rng.uniform(0, n);
    const double sigma = rng.uniform(3, 12);
    std::array<double, 3> amp{};
    for (auto& a : amp) a = rng.uniform(-1.5, 1.5);
    for (std::size_t y = 0; y < size; ++y) {
      for (std::size_t x = 0; x < size; ++x) {
        const double d2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
        const double w = std::exp(-d2 / (2 * sigma * sigma));
        for (std::size_t c = 0; c < 3; ++c) f(x, y, c) += amp[c] * w;
      }
    }
  }
  for (int r = 0; r < 2; ++r) {
    const std::size_t w = 8 + rng.below(17), h = 8 + rng.below(17);
    const std::size_t x0 = rng.below(size - w + 1), y0 = rng.below(size - h + 1);
    std::array<double, 3> value{};
    for (auto& v : value) v = rng.uniform(-2, 2);
    for (std::size_t y = y0; y < y0 + h; ++y) {
      for (std::size_t x = x0; x < x0 + w; ++x) {
        for (std::size_t c = 0; c < 3; ++c) f(x, y, c) = value[c];
      }
    }
  }

  const auto [lo_it, hi_it] = std::minmax_element(field.begin(), field.end());
  const double lo = *lo_it, span = std::max(*hi_it - lo, 1e-12);
  Image img(size, size, 3);
  for (std::size_t i = 0; i < field.size(); ++i) {
    img.pixels[i] = static_cast<std::uint8_t>(std::lround((field[i] - lo) / span * 255.0));
  }
  return img;
}

namespace {

std::uint8_t clamp_byte(double v) { return static_cast<std::uint8_t>(std::clamp<long>(std::lround(v), 0, 255)); }

Image block_occlusion(const Image& img, int level, Rng& rng) {
  constexpr std::size_t kBlock = 8;
  const std::size_t cols = img.width / kBlock, rows = img.height / kBlock;
  std::vector<std::size_t> cells(cols * rows);
  for (std::size_t i = 0; i < cells.size(); ++i) cells[i] = i;
  rng.shuffle(cells.begin(), cells.end());
  Image out = img;
  const std::array<std::uint8_t, 3> yellow = {255, 255, 0};
  for (int b = 0; b < level && b < static_cast<int>(cells.size()); ++b) {
    const std::size_t bx = (cells[static_cast<std::size_t>(b)] % cols) * kBlock;
    const std::size_t by = (cells[static_cast<std::size_t>(b)] / cols) * kBlock;
    for (std::size_t y = by; y < by + kBlock; ++y) {
      for (std::size_t x = bx; x < bx + kBlock; ++x) {
        for (std::size_t c = 0; c < out.channels; ++c) out.at(x, y, c) = yellow[c % 3];
      }
    }
  }
  return out;
}

Image sparse_sampling(const Image& img, int level, Rng& rng) {
  const std::size_t total = img.width * img.height;
  const auto count = static_cast<std::size_t>(std::lround(0.04 * level * static_cast<double>(total)));
  std::vector<std::size_t> order(total);
  for (std::size_t i = 0; i < total; ++i) order[i] = i;
  // Partial Fisher-Yates: the first `count` entries are a uniform subset.
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t j = i + rng.below(total - i);
    std::swap(order[i], order[j]);
  }
  Image out = img;
  for (std::size_t i = 0; i < count; ++i) {
    for (std::size_t c = 0; c < out.channels; ++c) out.pixels[order[i] * out.channels + c] = 0;
  }
  return out;
}

Image gaussian_noise(const Image& img, int level, Rng& rng) {
  const double sigma = 4.0 * level;
  Image out = img;
  for (auto& p : out.pixels) p = clamp_byte(p + sigma * rng.normal());
  return out;
}

Image gaussian_blur(const Image& img, int level) {
  const double sigma = 0.5 * level;
  const int radius = static_cast<int>(std::ceil(3 * sigma));
  std::vector<double> kernel(static_cast<std::size_t>(2 * radius + 1));
  double total = 0;
  for (int i = -radius; i <= radius; ++i) {
    kernel[static_cast<std::size_t>(i + radius)] = std::exp(-(i * i) / (2 * sigma * sigma));
    total += kernel[static_cast<std::size_t>(i + radius)];
  }
  for (auto& k : kernel) k /= total;

  const auto W = static_cast<long>(img.width), H = static_cast<long>(img.height);
  const std::size_t C = img.channels;
  auto clampi = [](long v, long hi) { return std::clamp<long>(v, 0, hi - 1); };
  std::vector<double> horiz(img.pixels.size());
  for (long y = 0; y < H; ++y) {
    for (long x = 0; x < W; ++x) {
      for (std::size_t c = 0; c < C; ++c) {
        double acc = 0;
        for (int i = -radius; i <= radius; ++i) {
          acc += kernel[static_cast<std::size_t>(i + radius)] * img.at(static_cast<std::size_t>(clampi(x + i, W)), static_cast<std::size_t>(y), c);
        }
        horiz[(static_cast<std::size_t>(y * W + x)) * C + c] = acc;
      }
    }
  }
  Image out(img.width, img.height, C);
  for (long y = 0; y < H; ++y) {
    for (long x = 0; x < W; ++x) {
      for (std::size_t c = 0; c < C; ++c) {
        double acc = 0;
        for (int i = -radius; i <= radius; ++i) {
          acc += kernel[static_cast<std::size_t>(i + radius)] * horiz[static_cast<std::size_t>(clampi(y + i, H) * W + x) * C + c];
        }
        out.at(static_cast<std::size_t>(x), static_cast<std::size_t>(y), c) = clamp_byte(acc);
      }
    }
  }
  return out;
}

}  // namespace

Image apply_distortion(const Image& img, const DistortionSpec& spec) {
  if (spec.level < kMinLevel || spec.level > kMaxLevel) {
    throw ContractError("apply_distortion: level must be in [1,5], got " + std::to_string(spec.level));
  }
  Rng rng(spec.seed);
  switch (spec.kind) {
    case DistortionKind::block_occlusion:
      return block_occlusion(img, spec.level, rng);
    case DistortionKind::sparse_sampling:
      return sparse_sampling(img, spec.level, rng);
    case DistortionKind::gaussian_noise:
      return gaussian_noise(img, spec.level, rng);
    case DistortionKind::gaussian_blur:
      return gaussian_blur(img, spec.level);
  }
  throw ContractError("apply_distortion: unknown kind");
}

double synth_mos(DistortionKind kind, int level) {
  if (level < kMinLevel || level > kMaxLevel) throw ContractError("synth_mos: level must be in [1,5]");
  double weight = 1.0;
  switch (kind) {
    case DistortionKind::block_occlusion:
      weight = 1.2;
      break;
    case DistortionKind::sparse_sampling:
      weight = 1.0;
      break;
    case DistortionKind::gaussian_noise:
      weight = 0.9;
      break;
    case DistortionKind::gaussian_blur:
      weight = 0.8;
      break;
  }
  return std::clamp(1.0 - 0.14 * level * weight, 0.05, 0.95);
}

std::size_t DatasetManifest::count(Split split) const {
  return static_cast<std::size_t>(std::count_if(rows.begin(), rows.end(), [&](const ManifestRow& r) { return r.split == split; }));
}

namespace {

std::string format_mos(double mos) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", mos);
  return buf;
}

std::string ref_name(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "ref%04zu", index);
  return buf;
}

}  // namespace

std::string manifest_csv(const DatasetManifest& manifest) {
  std::string out = "id,ref_path,dist_path,kind,level,mos,split\n";
  for (const auto& r : manifest.rows) {
    out += r.id + "," + r.ref_path + "," + r.dist_path + "," + std::string(to_string(r.kind)) + "," +
           std::to_string(r.level) + "," + format_mos(r.mos) + "," + std::string(to_string(r.split)) + "\n";
  }
  return out;
}

DatasetManifest build_dataset(const fs::path& out_dir, std::size_t n_base, std::uint64_t seed, std::size_t image_size) {
  if (n_base == 0) throw ContractError("build_dataset: n_base must be positive");
  std::error_code ec;
  fs::create_directories(out_dir / "ref", ec);
  if (!ec) fs::create_directories(out_dir / "dist", ec);
  if (ec) throw IoError("cannot create dataset directories under " + out_dir.string() + ": " + ec.message());

  std::vector<std::size_t> order(n_base);
  for (std::size_t i = 0; i < n_base; ++i) order[i] = i;
  Rng split_rng(hash_seed(seed, "split"));
  split_rng.shuffle(order.begin(), order.end());
  const auto n_train = static_cast<std::size_t>(std::floor(kTrainFraction * static_cast<double>(n_base)));
  std::vector<Split> split_of(n_base, Split::test);
  for (std::size_t i = 0; i < n_train; ++i) split_of[order[i]] = Split::train;

  DatasetManifest manifest;
  manifest.root = out_dir;
  for (std::size_t r = 0; r < n_base; ++r) {
    const std::string ref_id = ref_name(r);
    const Image base = gen_base_image(hash_seed(seed, ref_id), image_size);
    const std::string ref_rel = "ref/" + ref_id + ".ppm";
    write_ppm(out_dir / ref_rel, base);
    for (auto kind : kDistortionKinds) {
      for (int level = kMinLevel; level <= kMaxLevel; ++level) {
        ManifestRow row;
        row.id = ref_id + "_" + std::string(to_string(kind)) + "_" + std::to_string(level);
        row.ref_path = ref_rel;
        row.dist_path = "dist/" + row.id + ".ppm";
        row.kind = kind;
        row.level = level;
        row.mos = std::stod(format_mos(synth_mos(kind, level)));
        row.split = split_of[r];
        write_ppm(out_dir / row.dist_path, apply_distortion(base, {kind, level, hash_seed(seed, row.id)}));
        manifest.rows.push_back(std::move(row));
      }
    }
  }

  const fs::path csv_path = out_dir / "manifest.csv";
  std::ofstream os(csv_path, std::ios::binary);
  if (!os) throw IoError("cannot open for writing: " + csv_path.string());
  os << manifest_csv(manifest);
  if (!os) throw IoError("write failed: " + csv_path.string());
  return manifest;
}

DatasetManifest read_manifest(const fs::path& path) {
  const fs::path file = fs::is_directory(path) ? path / "manifest.csv" : path;
  std::ifstream is(file, std::ios::binary);
  if (!is) throw IoError("cannot open manifest: " + file.string());
  DatasetManifest manifest;
  manifest.root = file.parent_path();
  std::string line;
  std::uint64_t offset = 0;
  if (!std::getline(is, line) || line != "id,ref_path,dist_path,kind,level,mos,split") {
    throw FormatError("manifest: unexpected header in " + file.string(), 0);
  }
  offset += line.size() + 1;
  while (std::getline(is, line)) {
    if (line.empty()) {
      offset += 1;
      continue;
    }
    std::vector<std::string> cols;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cols.push_back(cell);
    if (cols.size() != 7) throw FormatError("manifest: expected 7 columns", offset);
    ManifestRow row;
    try {
      row.id = cols[0];
      row.ref_path = cols[1];
      row.dist_path = cols[2];
      row.kind = parse_distortion_kind(cols[3]);
      row.level = std::stoi(cols[4]);
      row.mos = std::stod(cols[5]);
    } catch (const std::exception& e) {
      throw FormatError(std::string("manifest: bad row: ") + e.what(), offset);
    }
    if (cols[6] == "train") {
      row.split = Split::train;
    } else if (cols[6] == "test") {
      row.split = Split::test;
    } else {
      throw FormatError("manifest: unknown split '" + cols[6] + "'", offset);
    }
    manifest.rows.push_back(std::move(row));
    offset += line.size() + 1;
  }
  return manifest;
}

Dataset load_dataset(const DatasetManifest& manifest) {
  Dataset data;
  std::map<std::string, Image> refs;
  for (const auto& row : manifest.rows) {
    auto it = refs.find(row.ref_path);
    if (it == refs.end()) it = refs.emplace(row.ref_path, read_pnm(manifest.root / row.ref_path)).first;
    Sample s;
    s.id = row.id;
    s.reference = it->second;
    s.distorted = read_pnm(manifest.root / row.dist_path);
    if (s.distorted.width != s.reference.width || s.distorted.height != s.reference.height) {
      throw ContractError("sample " + row.id + ": reference and distorted sizes differ");
    }
    s.spec = {row.kind, row.level, 0};
    s.mos = row.mos;
    (row.split == Split::train ? data.train : data.test).push_back(std::move(s));
  }
  return data;
}

YOTO_END_NAMESPACE
