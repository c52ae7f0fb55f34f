#include <doctest.h>

#include <cmath>
#include <fstream>
#include <iterator>
#include <set>

#include "test_util.hpp"
#include "yoto/datagen.hpp"
#include "yoto/errors.hpp"

using namespace yoto;

namespace {

std::size_t differing_pixels(const Image& a, const Image& b) {
  std::size_t n = 0;
  for (std::size_t i = 0; i < a.width * a.height; ++i) {
    bool diff = false;
    for (std::size_t c = 0; c < a.channels; ++c) diff |= a.pixels[i * a.channels + c] != b.pixels[i * b.channels + c];
    n += diff;
  }
  return n;
}

double mean_abs_dev(const Image& a, const Image& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.pixels.size(); ++i) s += std::abs(int(a.pixels[i]) - int(b.pixels[i]));
  return s / static_cast<double>(a.pixels.size());
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("base images are deterministic, diverse and span the byte range") {
  CHECK(gen_base_image(42) == gen_base_image(42));
  for (std::uint64_t s = 0; s < 100; ++s) {
    const Image a = gen_base_image(s), b = gen_base_image(s + 1000);
    CHECK(a.width == 64);
    CHECK(differing_pixels(a, b) >= a.width * a.height / 10);
    const auto [lo, hi] = std::minmax_element(a.pixels.begin(), a.pixels.end());
    CHECK(*lo < 32);
    CHECK(*hi > 223);
  }
  CHECK_THROWS_AS(gen_base_image(1, 48), ContractError);
}

TEST_CASE("block occlusion paints level aligned 8x8 yellow blocks") {
  const Image base = gen_base_image(3);
  for (int level = 1; level <= 5; ++level) {
    const Image out = apply_distortion(base, {DistortionKind::block_occlusion, level, 77});
    std::size_t yellow_cells = 0;
    for (std::size_t cy = 0; cy < 8; ++cy)
      for (std::size_t cx = 0; cx < 8; ++cx) {
        bool all_yellow = true, changed = false;
        for (std::size_t y = cy * 8; y < cy * 8 + 8; ++y)
          for (std::size_t x = cx * 8; x < cx * 8 + 8; ++x) {
            all_yellow &= out.at(x, y, 0) == 255 && out.at(x, y, 1) == 255 && out.at(x, y, 2) == 0;
            for (std::size_t c = 0; c < 3; ++c) changed |= out.at(x, y, c) != base.at(x, y, c);
          }
        yellow_cells += all_yellow;
        if (changed) CHECK(all_yellow);
      }
    CHECK(yellow_cells == static_cast<std::size_t>(level));
    // The base image contains no pure yellow pixels, so each block changes exactly 64 pixels.
    CHECK(differing_pixels(base, out) == 64u * static_cast<std::size_t>(level));
  }
}

TEST_CASE("sparse sampling zeroes the stated fraction of pixels") {
  const Image base = gen_base_image(4);
  for (int level = 1; level <= 5; ++level) {
    const Image out = apply_distortion(base, {DistortionKind::sparse_sampling, level, 5});
    std::size_t black = 0, black_before = 0;
    for (std::size_t i = 0; i < 64 * 64; ++i) {
      black += out.pixels[3 * i] == 0 && out.pixels[3 * i + 1] == 0 && out.pixels[3 * i + 2] == 0;
      black_before += base.pixels[3 * i] == 0 && base.pixels[3 * i + 1] == 0 && base.pixels[3 * i + 2] == 0;
    }
    const auto expected = static_cast<std::size_t>(std::lround(0.04 * level * 4096));
    CHECK(differing_pixels(base, out) <= expected);
    CHECK(black >= expected);
    CHECK(black <= expected + black_before);
  }
}

TEST_CASE("blur and noise") {
  Image flat(64, 64, 3, 90);
  for (int level = 1; level <= 5; ++level) CHECK(apply_distortion(flat, {DistortionKind::gaussian_blur, level, 0}) == flat);
  double d1 = 0, d5 = 0;
  for (std::uint64_t s = 0; s < 20; ++s) {
    const Image base = gen_base_image(s);
    d1 += mean_abs_dev(base, apply_distortion(base, {DistortionKind::gaussian_noise, 1, s}));
    d5 += mean_abs_dev(base, apply_distortion(base, {DistortionKind::gaussian_noise, 5, s}));
  }
  CHECK(d5 > d1);
  CHECK_THROWS_AS(apply_distortion(flat, {DistortionKind::gaussian_noise, 0, 0}), ContractError);
  CHECK_THROWS_AS(apply_distortion(flat, {DistortionKind::gaussian_noise, 6, 0}), ContractError);
}

TEST_CASE("synthetic opinion scores") {
  CHECK(synth_mos(DistortionKind::gaussian_blur, 1) == doctest::Approx(0.888));
  CHECK(synth_mos(DistortionKind::block_occlusion, 5) == doctest::Approx(0.16));
  CHECK(synth_mos(DistortionKind::sparse_sampling, 5) == doctest::Approx(0.30));
  for (auto kind : kDistortionKinds) {
    for (int level = 1; level < 5; ++level) CHECK(synth_mos(kind, level) > synth_mos(kind, level + 1));
    for (int level = 1; level <= 5; ++level) {
      CHECK(synth_mos(kind, level) >= 0.05);
      CHECK(synth_mos(kind, level) <= 0.95);
    }
  }
  for (auto kind : kDistortionKinds) CHECK(parse_distortion_kind(to_string(kind)) == kind);
  CHECK_THROWS_AS(parse_distortion_kind("jpeg"), ContractError);
}

TEST_CASE("dataset generation") {
  testutil::TempDir dir("datagen");
  const DatasetManifest m = build_dataset(dir / "a", 16, 9);
  CHECK(m.rows.size() == 320);
  CHECK(m.count(Split::train) == 240);
  CHECK(m.count(Split::test) == 80);

  std::set<std::string> train_refs, test_refs;
  for (const auto& r : m.rows) (r.split == Split::train ? train_refs : test_refs).insert(r.ref_path);
  CHECK(train_refs.size() == 12);
  for (const auto& r : train_refs) CHECK(test_refs.count(r) == 0);

  for (const auto& r : m.rows) {
    const Image d = read_pnm(dir / "a" / r.dist_path);
    CHECK(d.width == 64);
    CHECK(d.channels == 3);
    CHECK(r.mos == doctest::Approx(synth_mos(r.kind, r.level)).epsilon(1e-6));
  }

  build_dataset(dir / "b", 16, 9);
  CHECK(slurp(dir / "a" / "manifest.csv") == slurp(dir / "b" / "manifest.csv"));
  CHECK(slurp(dir / "a" / m.rows[7].dist_path) == slurp(dir / "b" / m.rows[7].dist_path));

  const DatasetManifest back = read_manifest(dir / "a");
  CHECK(manifest_csv(back) == manifest_csv(m));
  const Dataset ds = load_dataset(back);
  CHECK(ds.train.size() == 240);
  CHECK(ds.test.size() == 80);
  CHECK(ds.train[0].reference.width == 64);

  CHECK_THROWS_AS(read_manifest(dir / "missing"), IoError);
  CHECK_THROWS_AS(build_dataset(dir / "c", 0, 1), ContractError);
}

TEST_CASE("manifest header line format") {
  DatasetManifest m;
  m.rows.push_back({"x", "ref/x.ppm", "dist/x.ppm", DistortionKind::gaussian_blur, 2, 0.776, Split::test});
  CHECK(manifest_csv(m) == "id,ref_path,dist_path,kind,level,mos,split\nx,ref/x.ppm,dist/x.ppm,gaussian_blur,2,0.776000,test\n");
}

TEST_CASE("pnm encoding") {
  Image img(3, 2);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) img.pixels[i] = static_cast<std::uint8_t>(i * 13);
  const auto bytes = encode_pnm(img);
  CHECK(std::string(bytes.begin(), bytes.begin() + 11) == "P6\n3 2\n255\n");
  CHECK(decode_pnm(bytes) == img);

  const std::string commented = "P5\n# a comment\n2 1\n255\n";
  std::vector<std::uint8_t> gray(commented.begin(), commented.end());
  gray.push_back(7);
  gray.push_back(9);
  const Image g = decode_pnm(gray);
  CHECK(g.channels == 1);
  CHECK(g.pixels == std::vector<std::uint8_t>{7, 9});

  auto truncated = bytes;
  truncated.pop_back();
  CHECK_THROWS_AS(decode_pnm(truncated), FormatError);
  auto bad_magic = bytes;
  bad_magic[1] = '3';
  try {
    decode_pnm(bad_magic);
    FAIL("expected a format error");
  } catch (const FormatError& e) {
    CHECK(e.offset() == 0);
  }
  const std::string sixteen_bit = "P6\n1 1\n65535\n";
  CHECK_THROWS_AS(decode_pnm(std::vector<std::uint8_t>(sixteen_bit.begin(), sixteen_bit.end())), FormatError);
}

TEST_CASE("crop, flip and nearest resize") {
  Image img(4, 4, 1);
  for (std::size_t i = 0; i < 16; ++i) img.pixels[i] = static_cast<std::uint8_t>(i);
  const Image c = crop(img, 1, 2, 2, 2);
  CHECK(c.pixels == std::vector<std::uint8_t>{9, 10, 13, 14});
  CHECK(flip_horizontal(c).pixels == std::vector<std::uint8_t>{10, 9, 14, 13});
  CHECK(flip_horizontal(flip_horizontal(img)) == img);
  const Image up = resize_nearest(c, 4, 4);
  CHECK(up.pixels == std::vector<std::uint8_t>{9, 9, 10, 10, 9, 9, 10, 10, 13, 13, 14, 14, 13, 13, 14, 14});
  CHECK(resize_nearest(img, 4, 4) == img);
  CHECK_THROWS_AS(crop(img, 3, 3, 2, 2), ContractError);
}
