#include "yoto/attention.hpp"

#include <cmath>

YOTO_BEGIN_NAMESPACE

AttentionParams AttentionParams::init(std::size_t channels, Rng& rng) {
  AttentionParams p;
  p.wq = xavier_uniform(channels, channels, rng);
  p.wk = xavier_uniform(channels, channels, rng);
  p.wv = xavier_uniform(channels, channels, rng);
  p.mlp = Mlp::init(channels, 2 * channels, channels, rng);
  return p;
}

void AttentionParams::visit(const std::string& prefix, const ParamVisitor& f) {
  f(prefix + ".q.weight", wq);
  f(prefix + ".k.weight", wk);
  f(prefix + ".v.weight", wv);
  mlp.visit(prefix + ".mlp", f);
}

SegmentEmbedding SegmentEmbedding::init(std::size_t channels, Rng& rng) {
  return {normal_init(channels, 0.02, rng), normal_init(channels, 0.02, rng)};
}

void SegmentEmbedding::visit(const std::string& prefix, const ParamVisitor& f) {
  f(prefix + ".distorted", distorted);
  f(prefix + ".reference", reference);
}

TokenMap add_segment_embedding(const TokenMap& x, Role role, const SegmentEmbedding& emb) {
  const Tensor& e = role == Role::distorted ? emb.distorted : emb.reference;
  if (e.rank() != 1 || e.dim(0) != x.channels()) {
    throw ContractError("add_segment_embedding: embedding " + shape_str(e.shape()) + " does not match width " +
                        std::to_string(x.channels()));
  }
  return TokenMap(broadcast_add(x.tokens, e), x.height, x.width);
}

namespace {

void check_scale(std::size_t h, std::size_t w, std::size_t r, const char* op) {
  if (r == 0 || h % r != 0 || w % r != 0) {
    throw ContractError(std::string(op) + ": scale " + std::to_string(r) + " does not divide the " + std::to_string(h) +
                        "x" + std::to_string(w) + " grid");
  }
}

real score_divisor(const AttentionParams& p) { return static_cast<real>(std::sqrt(static_cast<double>(p.head_dim()))); }

// softmax(q k^T / sqrt(d)) v over the last two axes.
Tensor attend(const Tensor& q, const Tensor& k, const Tensor& v, real divisor) {
  return matmul(softmax_rows(matmul(q, transpose(k)), divisor), v);
}

}  // namespace

Tensor spatial_partition(const TokenMap& x, std::size_t r) {
  check_scale(x.height, x.width, r, "spatial_partition");
  const auto order = tile_order(x.height, x.width, x.height / r, x.width / r);
  return reshape(gather_rows(x.tokens, order), {x.batch(), r * r, x.length() / (r * r), x.channels()});
}

TokenMap spatial_unpartition(const Tensor& blocks, std::size_t height, std::size_t width, std::size_t r) {
  check_scale(height, width, r, "spatial_unpartition");
  if (blocks.rank() != 4 || blocks.dim(1) != r * r || blocks.dim(2) * r * r != height * width) {
    throw DimensionError("spatial_unpartition: blocks " + shape_str(blocks.shape()) + " do not match grid and scale");
  }
  const auto inverse = invert_order(tile_order(height, width, height / r, width / r));
  const Tensor flat = reshape(blocks, {blocks.dim(0), height * width, blocks.dim(3)});
  return TokenMap(gather_rows(flat, inverse), height, width);
}

TokenMap blocked_attention(const TokenMap& q_src, const TokenMap& kv_src, std::size_t r, const AttentionParams& p) {
  if (q_src.height != kv_src.height || q_src.width != kv_src.width || q_src.channels() != kv_src.channels() ||
      q_src.batch() != kv_src.batch()) {
    throw ContractError("blocked_attention: query and key/value maps differ in shape");
  }
  check_scale(q_src.height, q_src.width, r, "blocked_attention");
  const Tensor q = matmul(q_src.tokens, p.wq);
  const Tensor k = matmul(kv_src.tokens, p.wk);
  const Tensor v = matmul(kv_src.tokens, p.wv);
  const std::size_t h = q_src.height, w = q_src.width;
  const Tensor out = attend(spatial_partition(TokenMap(q, h, w), r), spatial_partition(TokenMap(k, h, w), r),
                            spatial_partition(TokenMap(v, h, w), r), score_divisor(p));
  return spatial_unpartition(out, h, w, r);
}

TokenMap ha_layer(const TokenMap& x_q, const TokenMap& x_kv, std::size_t r, const AttentionParams& p) {
  const TokenMap attended = blocked_attention(x_q, x_kv, r, p);
  return TokenMap(add(x_q.tokens, p.mlp(attended.tokens)), x_q.height, x_q.width);
}

TokenMap ha_stack(const TokenMap& x_dis, const TokenMap& x_other, const HAConfig& cfg,
                  std::span<const AttentionParams> layers) {
  if (layers.size() != cfg.layer_count()) {
    throw ContractError("ha_stack: config needs " + std::to_string(cfg.layer_count()) + " layers, got " +
                        std::to_string(layers.size()));
  }
  TokenMap stream = x_other;
  std::size_t next = 0;
  for (std::size_t r : cfg.scales) {
    for (std::size_t rep = 0; rep < cfg.layers_per_scale; ++rep) stream = ha_layer(stream, x_dis, r, layers[next++]);
  }
  return stream;
}

ConePartition cone_partition(const TokenMap& shallow, const TokenMap& deep, std::size_t n) {
  if (shallow.height != shallow.width || deep.height != deep.width) {
    throw ContractError("cone_partition: grids must be square");
  }
  const std::size_t m = shallow.height, nd = deep.height;
  if (n == 0 || m % n != 0 || nd % n != 0 || n > nd) {
    throw ContractError("cone_partition: cone grid " + std::to_string(n) + " must divide shallow side " +
                        std::to_string(m) + " and deep side " + std::to_string(nd));
  }
  ConePartition cp;
  cp.cones_per_side = n;
  cp.shallow_side = m;
  cp.deep_side = nd;
  cp.shallow_per_cone = (m / n) * (m / n);
  cp.deep_per_cone = (nd / n) * (nd / n);
  cp.shallow_order = tile_order(m, m, m / n, m / n);
  cp.deep_order = tile_order(nd, nd, nd / n, nd / n);
  cp.shallow_cone.resize(m * m);
  cp.deep_cone.resize(nd * nd);
  for (std::size_t i = 0; i < cp.shallow_order.size(); ++i) cp.shallow_cone[cp.shallow_order[i]] = i / cp.shallow_per_cone;
  for (std::size_t i = 0; i < cp.deep_order.size(); ++i) cp.deep_cone[cp.deep_order[i]] = i / cp.deep_per_cone;
  return cp;
}

TokenMap sda(const TokenMap& x_s, const TokenMap& x_d, std::size_t n, const AttentionParams& p) {
  if (x_s.height <= x_d.height || x_s.width <= x_d.width) {
    throw ContractError("sda: shallow grid " + std::to_string(x_s.height) + " must be larger than deep grid " +
                        std::to_string(x_d.height));
  }
  if (x_s.batch() != x_d.batch() || x_s.channels() != x_d.channels()) {
    throw ContractError("sda: shallow and deep maps differ in batch or width");
  }
  const ConePartition cp = cone_partition(x_s, x_d, n);
  const std::size_t B = x_s.batch(), C = x_s.channels(), cones = cp.cone_count();
  const Tensor q = reshape(gather_rows(matmul(x_s.tokens, p.wq), cp.shallow_order), {B, cones, cp.shallow_per_cone, C});
  const Tensor k = reshape(gather_rows(matmul(x_d.tokens, p.wk), cp.deep_order), {B, cones, cp.deep_per_cone, C});
  const Tensor v = reshape(gather_rows(matmul(x_d.tokens, p.wv), cp.deep_order), {B, cones, cp.deep_per_cone, C});
  const Tensor attended = attend(q, k, v, score_divisor(p));
  const Tensor restored = gather_rows(reshape(attended, {B, x_s.length(), C}), invert_order(cp.shallow_order));
  return TokenMap(add(x_s.tokens, p.mlp(restored)), x_s.height, x_s.width);
}

std::array<TokenMap, 6> sda_dense(const StagePyramid& pyramid, std::size_t n, std::span<const AttentionParams, 6> params) {
  std::array<TokenMap, 6> out;
  for (std::size_t k = 0; k < kSdaPairs.size(); ++k) {
    const auto [deep, shallow] = kSdaPairs[k];
    out[k] = sda(pyramid.stages[shallow - 1], pyramid.stages[deep - 1], n, params[k]);
  }
  return out;
}

YOTO_END_NAMESPACE
