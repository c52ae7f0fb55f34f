#include <doctest.h>

#include <fstream>
#include <iterator>

#include "test_util.hpp"
#include "yoto/weights.hpp"

using namespace yoto;

namespace {

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("weight file layout") {
  WeightStore s;
  s.entries.push_back({"a", {2}, {1.5f, -2.0f}});
  const auto bytes = encode_weights(s);
  // magic, version 1, count 1, name len 1, 'a', rank 1, dim 2, offset
  const std::vector<std::uint8_t> header = {'Y', 'O', 'T', 'O', 1, 0, 0, 0, 1, 0, 0, 0, 1, 0, 'a', 1, 2, 0, 0, 0};
  REQUIRE(bytes.size() == header.size() + 8 + 8);
  CHECK(std::equal(header.begin(), header.end(), bytes.begin()));
  CHECK(bytes[20] == 28);  // data starts right after the header
  // 1.5f == 0x3FC00000 little-endian
  CHECK(bytes[28] == 0x00);
  CHECK(bytes[30] == 0xC0);
  CHECK(bytes[31] == 0x3F);
  CHECK(decode_weights(bytes) == s);
}

TEST_CASE("model round trip is bit exact") {
  testutil::TempDir dir("weights");
  const Model m = Model::init({}, 11);
  save_model(m, dir / "a.bin");
  const Model back = load_model(dir / "a.bin");
  const auto pa = m.parameters(), pb = back.parameters();
  REQUIRE(pa.size() == pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) CHECK(testutil::bitwise_equal(pa[i].tensor, pb[i].tensor));
  save_model(back, dir / "b.bin");
  CHECK(read_bytes(dir / "a.bin") == read_bytes(dir / "b.bin"));
  CHECK(to_weight_store(m).value_count() == 47346);
}

TEST_CASE("corrupt files are rejected without partial loads") {
  const Model m = Model::init({}, 12);
  const auto good = encode_weights(to_weight_store(m));

  auto bad = good;
  bad[0] = 'X';
  CHECK_THROWS_AS(decode_weights(bad), FormatError);

  bad = good;
  bad[4] = 2;  // version
  try {
    decode_weights(bad);
    FAIL("expected a format error");
  } catch (const FormatError& e) {
    CHECK(e.offset() == 4);
  }

  bad = good;
  bad.resize(good.size() - 3);
  CHECK_THROWS_AS(decode_weights(bad), FormatError);

  bad = good;
  bad.resize(40);
  CHECK_THROWS_AS(decode_weights(bad), FormatError);

  bad = good;
  bad.push_back(0);
  CHECK_THROWS_AS(decode_weights(bad), FormatError);

  // Flip every header byte in turn; each must either fail loudly or (for
  // bytes inside names) change which tensor the data belongs to.
  Model target = Model::init({}, 13);
  const auto before = to_weight_store(target);
  for (std::size_t i = 0; i < 12; ++i) {
    bad = good;
    bad[i] ^= 0x5A;
    CHECK_THROWS(apply_weight_store(target, decode_weights(bad)));
  }
  CHECK(to_weight_store(target) == before);

  // A shape-mismatched store leaves the model untouched.
  WeightStore wrong = to_weight_store(m);
  wrong.entries.back().shape = {1, 1};
  wrong.entries.back().data = {0.0f};
  CHECK_THROWS_AS(apply_weight_store(target, wrong), ContractError);
  CHECK(to_weight_store(target) == before);

  WeightStore dup;
  dup.entries = {{"x", {1}, {1}}, {"x", {1}, {2}}};
  CHECK_THROWS_AS(encode_weights(dup), ContractError);
  CHECK_THROWS_AS(load_weights("/nonexistent/w.bin"), IoError);
}
