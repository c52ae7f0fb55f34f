#include "yoto/model.hpp"

#include <algorithm>
#include <cmath>

#include "yoto/errors.hpp"

YOTO_BEGIN_NAMESPACE

namespace fs = std::filesystem;

std::string_view to_string(Mode mode) { return mode == Mode::nr ? "nr" : "fr"; }

Mode parse_mode(std::string_view name) {
  if (name == "nr") return Mode::nr;
  if (name == "fr") return Mode::fr;
  throw ContractError("unknown mode '" + std::string(name) + "' (expected nr or fr)");
}

ModePair ModePair::nr(Image distorted) {
  ModePair p;
  p.secondary = distorted;
  p.primary = std::move(distorted);
  p.mode = Mode::nr;
  return p;
}

ModePair ModePair::fr(Image distorted, Image reference) {
  ModePair p;
  p.primary = std::move(distorted);
  p.secondary = std::move(reference);
  p.mode = Mode::fr;
  return p;
}

void ModePair::validate(std::size_t image_size) const {
  for (const Image* img : {&primary, &secondary}) {
    if (img->width != image_size || img->height != image_size || img->channels != 3 ||
        img->pixels.size() != image_size * image_size * 3) {
      throw ContractError("ModePair: images must be " + std::to_string(image_size) + "x" + std::to_string(image_size) +
                          "x3, got " + std::to_string(img->width) + "x" + std::to_string(img->height) + "x" +
                          std::to_string(img->channels));
    }
  }
  if (mode == Mode::nr && primary != secondary) throw ContractError("ModePair: NR pair must repeat the distorted image");
}

ScoreHeadParams ScoreHeadParams::init(std::size_t channels, Rng& rng) {
  return {Mlp::init(channels, channels / 2, 1, rng), Mlp::init(channels, channels / 2, 1, rng)};
}

void ScoreHeadParams::visit(const std::string& prefix, const ParamVisitor& f) {
  score.visit(prefix + ".score", f);
  weight.visit(prefix + ".weight", f);
}

namespace {

void validate_config(const ModelConfig& c) {
  if (c.image_size == 0 || c.image_size % 32 != 0) throw ContractError("model: image size must be a multiple of 32");
  if (c.channels < 4 || c.channels % 4 != 0) throw ContractError("model: channel width must be a positive multiple of 4");
  if (c.ha.scales.empty() || c.ha.layers_per_scale == 0) throw ContractError("model: HA config needs at least one layer");
  const std::size_t deepest = c.image_size / 32;
  for (std::size_t s = 0; s < kNumStages; ++s) {
    const std::size_t side = (c.image_size / kPatchSize) >> s;
    for (std::size_t r : c.ha.scales) {
      if (r == 0 || side % r != 0) {
        throw ContractError("model: HA scale " + std::to_string(r) + " does not divide stage " + std::to_string(s + 1) +
                            " grid " + std::to_string(side));
      }
    }
  }
  if (c.cone_grid == 0 || deepest % c.cone_grid != 0) throw ContractError("model: cone grid must divide the deepest stage");
}

void visit_model(Model& m, const std::function<void(const std::string&, Tensor&, ParamGroup)>& f) {
  for (std::size_t s = 0; s < kNumStages; ++s) {
    m.encoder.stages[s].visit("encoder.stage" + std::to_string(s + 1),
                              [&](const std::string& n, Tensor& t) { f(n, t, {ParamGroup::encoder, s}); });
  }
  m.embedding.visit("embedding", [&](const std::string& n, Tensor& t) { f(n, t, {ParamGroup::embedding, 0}); });
  for (std::size_t s = 0; s < kNumStages; ++s) {
    for (std::size_t l = 0; l < m.ha[s].size(); ++l) {
      m.ha[s][l].visit("ha.stage" + std::to_string(s + 1) + ".layer" + std::to_string(l + 1),
                       [&](const std::string& n, Tensor& t) { f(n, t, {ParamGroup::ha, s}); });
    }
  }
  for (std::size_t k = 0; k < kSdaPairs.size(); ++k) {
    m.sda[k].visit("sda." + std::to_string(kSdaPairs[k].first) + "_" + std::to_string(kSdaPairs[k].second),
                   [&](const std::string& n, Tensor& t) { f(n, t, {ParamGroup::sda, k}); });
  }
  m.head.visit("head", [&](const std::string& n, Tensor& t) { f(n, t, {ParamGroup::head, 0}); });
}

}  // namespace

Model Model::init(const ModelConfig& config, std::uint64_t seed) {
  validate_config(config);
  Rng rng(seed);
  Model m;
  m.config = config;
  const std::size_t C = config.channels;
  m.encoder = EncoderParams::init(C, rng);
  m.embedding = SegmentEmbedding::init(C, rng);
  for (auto& stage : m.ha) {
    for (std::size_t l = 0; l < config.ha.layer_count(); ++l) stage.push_back(AttentionParams::init(C, rng));
  }
  for (auto& p : m.sda) p = AttentionParams::init(C, rng);
  m.head = ScoreHeadParams::init(config.aggregate_channels(), rng);
  return m;
}

Model Model::clone() const {
  Model copy = *this;
  visit_model(copy, [](const std::string&, Tensor& t, ParamGroup) { t = t.detach(true); });
  return copy;
}

std::vector<NamedParam> Model::parameters() const {
  std::vector<NamedParam> out;
  visit_model(const_cast<Model&>(*this),
              [&](const std::string& n, Tensor& t, ParamGroup g) { out.push_back({n, t, g}); });
  return out;
}

std::size_t Model::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : parameters()) n += p.tensor.size();
  return n;
}

void Model::zero_grad() {
  visit_model(*this, [](const std::string&, Tensor& t, ParamGroup) { t.zero_grad(); });
}

// ---------------------------------------------------------------------------

TokenMap resample(const TokenMap& x, std::size_t target) {
  if (x.height != x.width) throw ContractError("resample: grid must be square");
  const std::size_t side = x.height;
  if (side == target) return x;
  if (side > target) {
    if (side % target != 0) throw ContractError("resample: pooling factor must be an integer");
    const std::size_t f = side / target;
    const Tensor grouped = gather_rows(x.tokens, tile_order(side, side, f, f));
    const Tensor pooled = mean_axis(reshape(grouped, {x.batch(), target * target, f * f, x.channels()}), 2);
    return TokenMap(pooled, target, target);
  }
  if (target % side != 0) throw ContractError("resample: upsampling factor must be an integer");
  const std::size_t f = target / side;
  std::vector<std::size_t> index(target * target);
  for (std::size_t y = 0; y < target; ++y) {
    for (std::size_t x2 = 0; x2 < target; ++x2) index[y * target + x2] = (y / f) * side + x2 / f;
  }
  return TokenMap(gather_rows(x.tokens, index), target, target);
}

TokenMap aggregate(std::span<const TokenMap, kNumStages> ha, std::span<const TokenMap, 6> c) {
  const std::size_t target = ha[1].height;
  const Tensor g1 = scale(add(add(c[0].tokens, c[1].tokens), c[2].tokens), real(1) / real(3));
  const Tensor g2 = scale(add(c[3].tokens, c[4].tokens), real(1) / real(2));
  const std::array<TokenMap, 7> blocks = {ha[0], ha[1], ha[2], ha[3], TokenMap(g1, c[0].height, c[0].width),
                                          TokenMap(g2, c[3].height, c[3].width), c[5]};
  std::vector<Tensor> parts;
  for (const auto& b : blocks) parts.push_back(resample(b, target).tokens);
  return TokenMap(concat(parts, -1), target, target);
}

Tensor score_head(const TokenMap& features, const ScoreHeadParams& p) {
  const Tensor s = p.score(features.tokens);            // [B, L, 1]
  const Tensor w = sigmoid(p.weight(features.tokens));  // [B, L, 1]
  const Tensor num = sum_axis(mul(w, s), 1);            // [B, 1]
  const Tensor den = add_scalar(sum_axis(w, 1), real(1e-8));
  return reshape(div(num, den), {features.batch()});
}

namespace {

Role secondary_role(Mode mode) { return mode == Mode::nr ? Role::distorted : Role::reference; }

void compute_ha(const Model& m, ForwardTrace& t, std::size_t s) {
  const TokenMap kv = add_segment_embedding(t.dis.stages[s], Role::distorted, m.embedding);
  const TokenMap q = add_segment_embedding(t.sec.stages[s], secondary_role(t.mode), m.embedding);
  t.ha[s] = ha_stack(kv, q, m.config.ha, m.ha[s]);
}

void compute_sda(const Model& m, ForwardTrace& t, std::size_t k) {
  const auto [deep, shallow] = kSdaPairs[k];
  t.sda[k] = sda(t.dis.stages[shallow - 1], t.dis.stages[deep - 1], m.config.cone_grid, m.sda[k]);
}

void compute_head(const Model& m, ForwardTrace& t) {
  t.aggregated = aggregate(t.ha, t.sda);
  t.score = reshape(score_head(t.aggregated, m.head), {});
}

void compute_encoder(const Model& m, ForwardTrace& t, std::size_t first) {
  encode_from(t.dis_patches, t.dis, first, m.encoder);
  if (t.mode == Mode::fr) {
    encode_from(t.sec_patches, t.sec, first, m.encoder);
  } else {
    t.sec = t.dis;
  }
}

}  // namespace

ForwardTrace forward_trace(const Model& model, const ModePair& pair) {
  pair.validate(model.config.image_size);
  ForwardTrace t;
  t.mode = pair.mode;
  t.dis_patches = patchify(pair.primary);
  t.sec_patches = pair.mode == Mode::fr ? patchify(pair.secondary) : t.dis_patches;
  refresh_trace(model, t, {ParamGroup::encoder, 0});
  return t;
}

void refresh_trace(const Model& model, ForwardTrace& t, const ParamGroup& changed) {
  switch (changed.kind) {
    case ParamGroup::encoder: {
      const std::size_t first = changed.index;
      compute_encoder(model, t, first);
      for (std::size_t s = first; s < kNumStages; ++s) compute_ha(model, t, s);
      for (std::size_t k = 0; k < kSdaPairs.size(); ++k) {
        if (kSdaPairs[k].first - 1 >= first) compute_sda(model, t, k);
      }
      break;
    }
    case ParamGroup::embedding:
      for (std::size_t s = 0; s < kNumStages; ++s) compute_ha(model, t, s);
      break;
    case ParamGroup::ha:
      compute_ha(model, t, changed.index);
      break;
    case ParamGroup::sda:
      compute_sda(model, t, changed.index);
      break;
    case ParamGroup::head:
      break;
  }
  compute_head(model, t);
}

Tensor forward(const Model& model, const ModePair& pair) { return forward_trace(model, pair).score; }

double score(const Model& model, const ModePair& pair) {
  NoGradGuard no_grad;
  return forward(model, pair).item();
}

Image heatmap(const TokenMap& map) {
  if (map.batch() != 1) throw ContractError("heatmap: expected a batch of one");
  const std::size_t L = map.length(), C = map.channels();
  const auto v = map.tokens.data();
  std::vector<double> means(L, 0.0);
  for (std::size_t t = 0; t < L; ++t) {
    for (std::size_t c = 0; c < C; ++c) means[t] += v[t * C + c];
    means[t] /= static_cast<double>(C);
  }
  const auto [lo, hi] = std::minmax_element(means.begin(), means.end());
  Image img(map.width, map.height, 1);
  for (std::size_t t = 0; t < L; ++t) {
    img.pixels[t] = *hi == *lo ? std::uint8_t{128}
                               : static_cast<std::uint8_t>(std::lround((means[t] - *lo) / (*hi - *lo) * 255.0));
  }
  return img;
}

std::vector<fs::path> dump_feature_maps(const Model& model, const ModePair& pair, const fs::path& out_dir) {
  ForwardTrace t;
  {
    NoGradGuard no_grad;
    t = forward_trace(model, pair);
  }
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());
  std::vector<fs::path> written;
  auto emit = [&](const std::string& name, const TokenMap& map) {
    const fs::path path = out_dir / name;
    write_pgm(path, heatmap(map));
    written.push_back(path);
  };
  for (std::size_t s = 0; s < kNumStages; ++s) emit("enc" + std::to_string(s + 1) + ".pgm", t.dis.stages[s]);
  for (std::size_t s = 0; s < kNumStages; ++s) emit("ha" + std::to_string(s + 1) + ".pgm", t.ha[s]);
  for (std::size_t k = 0; k < kSdaPairs.size(); ++k) {
    emit("sda_" + std::to_string(kSdaPairs[k].first) + "_" + std::to_string(kSdaPairs[k].second) + ".pgm", t.sda[k]);
  }
  return written;
}

YOTO_END_NAMESPACE
