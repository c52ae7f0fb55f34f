#pragma once

#include <array>
#include <span>
#include <utility>
#include <vector>

#include "yoto/encoder.hpp"

YOTO_BEGIN_NAMESPACE

/// Single-head attention projections plus the output MLP (C -> 2C -> C).
/// The head width equals the channel width: space is split, channels are not.
struct AttentionParams {
  Tensor wq, wk, wv;  // [C, C], no bias
  Mlp mlp;

  static AttentionParams init(std::size_t channels, Rng& rng);
  std::size_t head_dim() const { return wq.dim(1); }
  void visit(const std::string& prefix, const ParamVisitor& f);
};

struct HAConfig {
  std::vector<std::size_t> scales = {1, 2};
  std::size_t layers_per_scale = 1;

  std::size_t layer_count() const { return scales.size() * layers_per_scale; }
};

enum class Role { distorted, reference };

/// Learned role vectors: `distorted` (e0) and `reference` (e1).
struct SegmentEmbedding {
  Tensor distorted, reference;

  static SegmentEmbedding init(std::size_t channels, Rng& rng);
  void visit(const std::string& prefix, const ParamVisitor& f);
};

TokenMap add_segment_embedding(const TokenMap& x, Role role, const SegmentEmbedding& emb);

/// Splits the grid into r x r tiles: [B, r^2, L / r^2, C], tile (i, j) in slot i * r + j.
Tensor spatial_partition(const TokenMap& x, std::size_t r);
/// Inverse of spatial_partition.
TokenMap spatial_unpartition(const Tensor& blocks, std::size_t height, std::size_t width, std::size_t r);

/// Per-tile attention: queries from q_src, keys and values from kv_src,
/// softmax restricted to the tile (the full attention matrix is block
/// diagonal), tokens returned in grid order.
TokenMap blocked_attention(const TokenMap& q_src, const TokenMap& kv_src, std::size_t r, const AttentionParams& p);

/// x_q + MLP(blocked_attention(x_q, x_kv)).
TokenMap ha_layer(const TokenMap& x_q, const TokenMap& x_kv, std::size_t r, const AttentionParams& p);

/// Runs one ha_layer per (scale, repeat) in cfg order. The query stream starts
/// at `x_other` (the distorted features again in NR mode, the reference in FR
/// mode) and is carried through the residuals; keys and values always come
/// from `x_dis`.
TokenMap ha_stack(const TokenMap& x_dis, const TokenMap& x_other, const HAConfig& cfg,
                  std::span<const AttentionParams> layers);

/// Aligned n x n tiling of a shallow grid and a deep grid.
struct ConePartition {
  std::size_t cones_per_side = 0;
  std::size_t shallow_side = 0, deep_side = 0;
  std::size_t shallow_per_cone = 0, deep_per_cone = 0;
  std::vector<std::size_t> shallow_order, deep_order;  // tokens grouped by cone
  std::vector<std::size_t> shallow_cone, deep_cone;    // token -> cone id

  std::size_t cone_count() const { return cones_per_side * cones_per_side; }
};

ConePartition cone_partition(const TokenMap& shallow, const TokenMap& deep, std::size_t n);

/// Cone-restricted cross attention: shallow queries attend only to the deep
/// tokens of their own cone. Output x_s + MLP(attended), shaped like x_s.
TokenMap sda(const TokenMap& x_s, const TokenMap& x_d, std::size_t n, const AttentionParams& p);

/// (deep stage i, shallow stage j), 1-based, grouped by shallow stage.
inline constexpr std::array<std::pair<std::size_t, std::size_t>, 6> kSdaPairs = {
    {{2, 1}, {3, 1}, {4, 1}, {3, 2}, {4, 2}, {4, 3}}};

/// C_{i,j} = sda(stage_j, stage_i) for every pair in kSdaPairs.
std::array<TokenMap, 6> sda_dense(const StagePyramid& pyramid, std::size_t n, std::span<const AttentionParams, 6> params);

YOTO_END_NAMESPACE
