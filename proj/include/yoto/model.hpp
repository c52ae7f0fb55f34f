#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include "yoto/attention.hpp"
#include "yoto/image.hpp"

YOTO_BEGIN_NAMESPACE

enum class Mode { nr, fr };
std::string_view to_string(Mode mode);
Mode parse_mode(std::string_view name);

/// Image pair fed to the network: [distorted, distorted] (NR) or
/// [distorted, reference] (FR).
struct ModePair {
  Image primary;
  Image secondary;
  Mode mode = Mode::nr;

  static ModePair nr(Image distorted);
  static ModePair fr(Image distorted, Image reference);
  void validate(std::size_t image_size) const;
};

struct ModelConfig {
  std::size_t image_size = 64;
  std::size_t channels = 16;
  HAConfig ha;
  std::size_t cone_grid = 2;

  /// Seven channel blocks are concatenated before the head (H1..H4, G1..G3).
  std::size_t aggregate_channels() const { return 7 * channels; }
};

/// Dual-branch patch-wise head: per-token score and sigmoid weight, both
/// C_total -> C_total/2 -> 1.
struct ScoreHeadParams {
  Mlp score;
  Mlp weight;

  static ScoreHeadParams init(std::size_t channels, Rng& rng);
  void visit(const std::string& prefix, const ParamVisitor& f);
};

/// Which forward phase a parameter feeds.
struct ParamGroup {
  enum Kind { encoder, embedding, ha, sda, head } kind = encoder;
  std::size_t index = 0;  // encoder/ha: stage (0-based); sda: pair index

  bool operator==(const ParamGroup&) const = default;
};

struct NamedParam {
  std::string name;
  Tensor tensor;  // shares storage with the model
  ParamGroup group;
};

struct Model {
  ModelConfig config;
  EncoderParams encoder;
  SegmentEmbedding embedding;
  std::array<std::vector<AttentionParams>, kNumStages> ha;
  std::array<AttentionParams, 6> sda;
  ScoreHeadParams head;

  static Model init(const ModelConfig& config, std::uint64_t seed);
  /// Deep copy: fresh leaves holding the same values.
  Model clone() const;
  std::vector<NamedParam> parameters() const;
  std::size_t parameter_count() const;
  void zero_grad();
};

/// Every intermediate of one forward pass (batch of one).
struct ForwardTrace {
  Mode mode = Mode::nr;
  TokenMap dis_patches, sec_patches;
  StagePyramid dis, sec;
  std::array<TokenMap, kNumStages> ha;
  std::array<TokenMap, 6> sda;
  TokenMap aggregated;
  Tensor score;  // scalar
};

ForwardTrace forward_trace(const Model& model, const ModePair& pair);
/// Recomputes only the parts of `trace` that depend on parameters in `changed`.
/// The result is bitwise equal to a fresh forward_trace.
void refresh_trace(const Model& model, ForwardTrace& trace, const ParamGroup& changed);

/// Scalar score tensor (graph attached when grad mode is on).
Tensor forward(const Model& model, const ModePair& pair);
double score(const Model& model, const ModePair& pair);

/// Groups SDA outputs by query stage (G1 = mean C21,C31,C41; G2 = mean
/// C32,C42; G3 = C43), resamples H1..H4 and G1..G3 to the stage-2 grid
/// (k x k average pool when finer, nearest upsample when coarser) and
/// concatenates channels.
TokenMap aggregate(std::span<const TokenMap, kNumStages> ha, std::span<const TokenMap, 6> sda);
/// Resamples a square grid to side `target` by integer-factor pooling or upsampling.
TokenMap resample(const TokenMap& x, std::size_t target);

/// sum_t w_t s_t / (sum_t w_t + 1e-8) per batch entry; returns [B].
Tensor score_head(const TokenMap& features, const ScoreHeadParams& p);

/// Writes enc{s}.pgm, ha{s}.pgm and sda_{i}_{j}.pgm channel-mean heatmaps.
std::vector<std::filesystem::path> dump_feature_maps(const Model& model, const ModePair& pair,
                                                     const std::filesystem::path& out_dir);
/// Channel mean of a batch-of-one map, min-max scaled to 0..255 (flat -> 128).
Image heatmap(const TokenMap& map);

YOTO_END_NAMESPACE
