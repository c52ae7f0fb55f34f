#include "yoto/encoder.hpp"

#include <algorithm>
#include <cmath>

YOTO_BEGIN_NAMESPACE

TokenMap::TokenMap(Tensor t, std::size_t h, std::size_t w) : tokens(std::move(t)), height(h), width(w) {
  if (tokens.rank() != 3 || tokens.dim(1) != h * w) {
    throw DimensionError("TokenMap: tokens " + shape_str(tokens.shape()) + " do not match a " + std::to_string(h) + "x" +
                         std::to_string(w) + " grid");
  }
}

std::vector<std::size_t> tile_order(std::size_t h, std::size_t w, std::size_t tile_h, std::size_t tile_w) {
  if (tile_h == 0 || tile_w == 0 || h % tile_h != 0 || w % tile_w != 0) {
    throw ContractError("tile_order: " + std::to_string(tile_h) + "x" + std::to_string(tile_w) + " tiles do not divide a " +
                        std::to_string(h) + "x" + std::to_string(w) + " grid");
  }
  std::vector<std::size_t> order;
  order.reserve(h * w);
  for (std::size_t ty = 0; ty < h / tile_h; ++ty) {
    for (std::size_t tx = 0; tx < w / tile_w; ++tx) {
      for (std::size_t y = 0; y < tile_h; ++y) {
        for (std::size_t x = 0; x < tile_w; ++x) order.push_back((ty * tile_h + y) * w + tx * tile_w + x);
      }
    }
  }
  return order;
}

std::vector<std::size_t> invert_order(const std::vector<std::size_t>& order) {
  std::vector<std::size_t> inv(order.size());
  for (std::size_t i = 0; i < order.size(); ++i) inv[order[i]] = i;
  return inv;
}

TokenMap patchify(const Image& img) {
  if (img.channels != 3 || img.width % kPatchSize != 0 || img.height % kPatchSize != 0 || img.width == 0) {
    throw ContractError("patchify: need an RGB image with sides divisible by 4, got " + std::to_string(img.width) + "x" +
                        std::to_string(img.height) + "x" + std::to_string(img.channels));
  }
  const std::size_t gh = img.height / kPatchSize, gw = img.width / kPatchSize;
  const std::size_t dim = kPatchSize * kPatchSize * 3;
  std::vector<real> values(gh * gw * dim);
  for (std::size_t ty = 0; ty < gh; ++ty) {
    for (std::size_t tx = 0; tx < gw; ++tx) {
      real* token = values.data() + (ty * gw + tx) * dim;
      for (std::size_t py = 0; py < kPatchSize; ++py) {
        for (std::size_t px = 0; px < kPatchSize; ++px) {
          for (std::size_t c = 0; c < 3; ++c) {
            token[(py * kPatchSize + px) * 3 + c] =
                static_cast<real>(img.at(tx * kPatchSize + px, ty * kPatchSize + py, c)) / real(255);
          }
        }
      }
    }
  }
  return TokenMap(Tensor::from({1, gh * gw, dim}, std::move(values)), gh, gw);
}

Image unpatchify(const TokenMap& map) {
  const std::size_t dim = kPatchSize * kPatchSize * 3;
  if (map.channels() != dim || map.batch() != 1) throw ContractError("unpatchify: expected [1, L, 48] tokens");
  Image img(map.width * kPatchSize, map.height * kPatchSize, 3);
  const auto values = map.tokens.data();
  for (std::size_t ty = 0; ty < map.height; ++ty) {
    for (std::size_t tx = 0; tx < map.width; ++tx) {
      const real* token = values.data() + (ty * map.width + tx) * dim;
      for (std::size_t py = 0; py < kPatchSize; ++py) {
        for (std::size_t px = 0; px < kPatchSize; ++px) {
          for (std::size_t c = 0; c < 3; ++c) {
            const double v = std::round(static_cast<double>(token[(py * kPatchSize + px) * 3 + c]) * 255.0);
            img.at(tx * kPatchSize + px, ty * kPatchSize + py, c) = static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0));
          }
        }
      }
    }
  }
  return img;
}

ChannelGateParams ChannelGateParams::init(std::size_t channels, std::size_t reduction, Rng& rng) {
  ChannelGateParams p;
  const std::size_t hidden = std::max<std::size_t>(1, channels / reduction);
  p.w1 = xavier_uniform(channels, hidden, rng);
  p.b1 = Tensor::zeros({hidden}, true);
  p.w2 = xavier_uniform(hidden, channels, rng);
  p.b2 = Tensor::zeros({channels}, true);
  return p;
}

void ChannelGateParams::visit(const std::string& prefix, const ParamVisitor& f) {
  f(prefix + ".squeeze.weight", w1);
  f(prefix + ".squeeze.bias", b1);
  f(prefix + ".excite.weight", w2);
  f(prefix + ".excite.bias", b2);
}

TokenMap channel_gate(const TokenMap& x, const ChannelGateParams& p) {
  const Tensor squeezed = mean_axis(x.tokens, 1, true);  // [B, 1, C]
  const Tensor gate = sigmoid(linear(relu(linear(squeezed, p.w1, p.b1)), p.w2, p.b2));
  return TokenMap(broadcast_mul(x.tokens, gate), x.height, x.width);
}

TokenMap space_to_depth(const TokenMap& x) {
  if (x.height % 2 != 0 || x.width % 2 != 0) {
    throw ContractError("space_to_depth: grid " + std::to_string(x.height) + "x" + std::to_string(x.width) + " is not even");
  }
  const auto order = tile_order(x.height, x.width, 2, 2);
  const Tensor grouped = gather_rows(x.tokens, order);
  const std::size_t h = x.height / 2, w = x.width / 2;
  return TokenMap(reshape(grouped, {x.batch(), h * w, 4 * x.channels()}), h, w);
}

void EncoderStageParams::visit(const std::string& prefix, const ParamVisitor& f) {
  f(prefix + ".proj.weight", proj_w);
  f(prefix + ".proj.bias", proj_b);
  mlp.visit(prefix + ".mlp", f);
  gate.visit(prefix + ".gate", f);
}

TokenMap encode_stage(const TokenMap& x, const EncoderStageParams& p) {
  const TokenMap in = p.merge ? space_to_depth(x) : x;
  const Tensor projected = linear(in.tokens, p.proj_w, p.proj_b);
  const Tensor mixed = add(projected, p.mlp(projected));
  return channel_gate(TokenMap(mixed, in.height, in.width), p.gate);
}

EncoderParams EncoderParams::init(std::size_t channels, Rng& rng) {
  EncoderParams p;
  const std::size_t patch_dim = kPatchSize * kPatchSize * 3;
  for (std::size_t s = 0; s < kNumStages; ++s) {
    auto& st = p.stages[s];
    st.merge = s > 0;
    const std::size_t in = s == 0 ? patch_dim : 4 * channels;
    st.proj_w = xavier_uniform(in, channels, rng);
    st.proj_b = Tensor::zeros({channels}, true);
    st.mlp = Mlp::init(channels, 2 * channels, channels, rng);
    st.gate = ChannelGateParams::init(channels, 4, rng);
  }
  return p;
}

void EncoderParams::visit(const std::string& prefix, const ParamVisitor& f) {
  for (std::size_t s = 0; s < kNumStages; ++s) stages[s].visit(prefix + ".stage" + std::to_string(s + 1), f);
}

void encode_from(const TokenMap& patches, StagePyramid& pyramid, std::size_t first, const EncoderParams& p) {
  for (std::size_t s = first; s < kNumStages; ++s) {
    pyramid.stages[s] = encode_stage(s == 0 ? patches : pyramid.stages[s - 1], p.stages[s]);
  }
}

StagePyramid encode(const Image& img, const EncoderParams& p) {
  StagePyramid pyramid;
  encode_from(patchify(img), pyramid, 0, p);
  return pyramid;
}

YOTO_END_NAMESPACE
