#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "yoto/image.hpp"

YOTO_BEGIN_NAMESPACE

enum class DistortionKind { block_occlusion, sparse_sampling, gaussian_noise, gaussian_blur };

inline constexpr std::array<DistortionKind, 4> kDistortionKinds = {
    DistortionKind::block_occlusion, DistortionKind::sparse_sampling, DistortionKind::gaussian_noise,
    DistortionKind::gaussian_blur};
inline constexpr int kMinLevel = 1;
inline constexpr int kMaxLevel = 5;

std::string_view to_string(DistortionKind kind);
DistortionKind parse_distortion_kind(std::string_view name);

struct DistortionSpec {
  DistortionKind kind = DistortionKind::gaussian_noise;
  int level = 1;
  std::uint64_t seed = 0;
};

/// Procedural stand-in for a pristine photo: sinusoidal gratings, gaussian
/// blobs and flat rectangles, stretched to the full 0..255 range.
Image gen_base_image(std::uint64_t seed, std::size_t size = 64);

/// block_occlusion: `level` yellow 8x8 blocks on distinct 8-aligned cells.
/// sparse_sampling: round(0.04 * level * pixels) distinct pixels set to black.
/// gaussian_noise: N(0, (4 level)^2) per channel, rounded and clamped.
/// gaussian_blur: sigma = 0.5 level, kernel 2 ceil(3 sigma) + 1, edge-clamped.
Image apply_distortion(const Image& img, const DistortionSpec& spec);

/// 1 - 0.14 * level * w(kind), clamped to [0.05, 0.95].
double synth_mos(DistortionKind kind, int level);
inline double synth_mos(const DistortionSpec& spec) { return synth_mos(spec.kind, spec.level); }

enum class Split { train, test };
std::string_view to_string(Split split);

struct ManifestRow {
  std::string id;
  std::string ref_path;   // relative to the manifest directory
  std::string dist_path;  // relative to the manifest directory
  DistortionKind kind = DistortionKind::gaussian_noise;
  int level = 1;
  double mos = 0;
  Split split = Split::train;
};

struct DatasetManifest {
  std::filesystem::path root;  // directory holding manifest.csv
  std::vector<ManifestRow> rows;

  std::size_t count(Split split) const;
};

inline constexpr double kTrainFraction = 0.8;

/// Writes n_base references x 4 kinds x 5 levels to out_dir and returns the
/// manifest (also written as out_dir/manifest.csv). Deterministic in seed.
DatasetManifest build_dataset(const std::filesystem::path& out_dir, std::size_t n_base, std::uint64_t seed,
                              std::size_t image_size = 64);

std::string manifest_csv(const DatasetManifest& manifest);
/// Accepts either the manifest file or the directory containing manifest.csv.
DatasetManifest read_manifest(const std::filesystem::path& path);

/// A decoded (reference, distorted, score) triple.
struct Sample {
  std::string id;
  Image reference;
  Image distorted;
  DistortionSpec spec;  // seed is not stored on disk; loaded samples carry 0
  double mos = 0;
};

struct Dataset {
  std::vector<Sample> train;
  std::vector<Sample> test;

  const std::vector<Sample>& split(Split s) const { return s == Split::train ? train : test; }
};

Dataset load_dataset(const DatasetManifest& manifest);

YOTO_END_NAMESPACE
