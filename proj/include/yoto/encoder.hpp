#pragma once

#include <array>
#include <string>

#include "yoto/image.hpp"
#include "yoto/layers.hpp"

YOTO_BEGIN_NAMESPACE

inline constexpr std::size_t kPatchSize = 4;
inline constexpr std::size_t kNumStages = 4;

/// Tokens [B, L, C] laid out row-major over an H x W grid (L == H * W).
struct TokenMap {
  Tensor tokens;
  std::size_t height = 0;
  std::size_t width = 0;

  TokenMap() = default;
  TokenMap(Tensor t, std::size_t h, std::size_t w);

  std::size_t batch() const { return tokens.dim(0); }
  std::size_t length() const { return height * width; }
  std::size_t channels() const { return tokens.dim(2); }
};

/// Token permutation grouping an h x w grid into tiles of tile_h x tile_w:
/// tiles in row-major order, tokens row-major inside each tile.
/// result[new_position] = old_index.
std::vector<std::size_t> tile_order(std::size_t h, std::size_t w, std::size_t tile_h, std::size_t tile_w);
std::vector<std::size_t> invert_order(const std::vector<std::size_t>& order);

/// Encoder stage outputs, finest first.
struct StagePyramid {
  std::array<TokenMap, kNumStages> stages;
};

/// Flattens non-overlapping 4x4 patches (pixel / 255) into 48-wide tokens;
/// within a token the order is (row, col, channel).
TokenMap patchify(const Image& img);
/// Inverse of patchify (values scaled back by 255 and rounded).
Image unpatchify(const TokenMap& tokens);

/// Squeeze-excitation gate: mean over tokens -> C/4 -> relu -> C -> sigmoid.
struct ChannelGateParams {
  Tensor w1, b1, w2, b2;

  static ChannelGateParams init(std::size_t channels, std::size_t reduction, Rng& rng);
  void visit(const std::string& prefix, const ParamVisitor& f);
};

TokenMap channel_gate(const TokenMap& x, const ChannelGateParams& p);

/// Concatenates each 2x2 token neighbourhood (order: top-left, top-right,
/// bottom-left, bottom-right) into one token with 4C channels.
TokenMap space_to_depth(const TokenMap& x);

struct EncoderStageParams {
  bool merge = false;  // space-to-depth before the projection
  Tensor proj_w, proj_b;
  Mlp mlp;
  ChannelGateParams gate;

  void visit(const std::string& prefix, const ParamVisitor& f);
};

/// [merge] -> linear -> x + mlp(x) -> channel gate.
TokenMap encode_stage(const TokenMap& x, const EncoderStageParams& p);

struct EncoderParams {
  std::array<EncoderStageParams, kNumStages> stages;

  /// Stage 1 projects the 48-wide patch tokens; stages 2-4 merge 2x2.
  static EncoderParams init(std::size_t channels, Rng& rng);
  void visit(const std::string& prefix, const ParamVisitor& f);
};

StagePyramid encode(const Image& img, const EncoderParams& p);
/// Recomputes stages [first, 4) of `pyramid` from stage first-1 (or from
/// `patches` when first == 0).
void encode_from(const TokenMap& patches, StagePyramid& pyramid, std::size_t first, const EncoderParams& p);

YOTO_END_NAMESPACE
