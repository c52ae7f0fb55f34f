#include <doctest.h>

#include <cmath>

#include "oracle.hpp"
#include "test_util.hpp"
#include "yoto/tensor.hpp"

using namespace yoto;
using testutil::random_tensor;

TEST_CASE("matmul small cases") {
  const Tensor a = Tensor::from({2, 2}, {1, 2, 3, 4});
  const Tensor eye = Tensor::from({2, 2}, {1, 0, 0, 1});
  CHECK(testutil::bitwise_equal(matmul(a, eye), a));
  const Tensor r = matmul(Tensor::from({1, 2}, {1, 2}), Tensor::from({2, 1}, {3, 4}));
  CHECK(r.shape() == Shape{1, 1});
  CHECK(r.item() == 11);
}

TEST_CASE("matmul matches a triple loop") {
  Rng rng(7);
  const Tensor a = random_tensor({3, 4}, rng), b = random_tensor({4, 2}, rng);
  const auto expect = oracle::matmul(oracle::to_mat(a), oracle::to_mat(b), 3, 4, 2);
  CHECK(oracle::max_abs_diff(matmul(a, b).data(), expect) < 1e-6);

  // Batched, and a shared right-hand matrix.
  const Tensor x = random_tensor({2, 3, 5, 4}, rng), y = random_tensor({2, 3, 4, 6}, rng), w = random_tensor({4, 6}, rng);
  const Tensor xy = matmul(x, y), xw = matmul(x, w);
  CHECK(xy.shape() == Shape{2, 3, 5, 6});
  for (std::size_t batch = 0; batch < 6; ++batch) {
    oracle::Mat xa(x.data().begin() + batch * 20, x.data().begin() + (batch + 1) * 20);
    oracle::Mat ya(y.data().begin() + batch * 24, y.data().begin() + (batch + 1) * 24);
    const auto e1 = oracle::matmul(xa, ya, 5, 4, 6);
    const auto e2 = oracle::matmul(xa, oracle::to_mat(w), 5, 4, 6);
    CHECK(oracle::max_abs_diff(xy.data().subspan(batch * 30, 30), e1) < 1e-6);
    CHECK(oracle::max_abs_diff(xw.data().subspan(batch * 30, 30), e2) < 1e-6);
  }
}

TEST_CASE("matmul rejects incompatible shapes and names them") {
  const Tensor a = Tensor::zeros({2, 3}), b = Tensor::zeros({4, 2});
  CHECK_THROWS_AS(matmul(a, b), DimensionError);
  try {
    matmul(a, b);
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("[2,3]") != std::string::npos);
    CHECK(msg.find("[4,2]") != std::string::npos);
  }
  CHECK_THROWS_AS(matmul(Tensor::zeros({2, 2, 3}), Tensor::zeros({3, 3, 2})), DimensionError);
}

TEST_CASE("matmul associativity with identity") {
  Rng rng(3);
  const Tensor a = random_tensor({4, 4}, rng), b = random_tensor({4, 4}, rng);
  Tensor eye = Tensor::zeros({4, 4});
  for (std::size_t i = 0; i < 4; ++i) eye.mutable_data()[i * 5] = 1;
  CHECK(testutil::bitwise_equal(matmul(matmul(a, eye), b), matmul(a, matmul(eye, b))));
}

TEST_CASE("softmax_rows examples") {
  auto row = [](real a, real b) { return testutil::values(softmax_rows(Tensor::from({1, 2}, {a, b}))); };
  CHECK(row(0, 0)[0] == doctest::Approx(0.5).epsilon(1e-7));
  CHECK(row(0, 0)[1] == doctest::Approx(0.5).epsilon(1e-7));
  const auto third = testutil::values(softmax_rows(Tensor::from({2}, {0, static_cast<real>(std::log(3.0))})));
  CHECK(std::abs(third[0] - 0.25) < 1e-6);
  CHECK(std::abs(third[1] - 0.75) < 1e-6);
  const auto big = row(1000, 0);
  CHECK(std::isfinite(big[0]));
  CHECK(std::abs(big[0] - 1) < 1e-6);
  CHECK(std::abs(big[1]) < 1e-6);
  CHECK_THROWS_AS(softmax_rows(Tensor::zeros({2}), 0), ContractError);
}

TEST_CASE("softmax rows sum to one for random inputs") {
  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t rows = 1 + rng.below(8), cols = 1 + rng.below(8);
    const double spread = trial < 25 ? 5.0 : 200.0;
    const Tensor x = random_tensor({rows, cols}, rng, -spread, spread);
    const auto y = testutil::values(softmax_rows(x, static_cast<real>(rng.uniform(0.5, 4.0))));
    for (std::size_t r = 0; r < rows; ++r) {
      double s = 0;
      for (std::size_t c = 0; c < cols; ++c) s += y[r * cols + c];
      CHECK(std::abs(s - 1) < 1e-6);
    }
  }
}

TEST_CASE("linear examples") {
  Rng rng(5);
  const Tensor x = random_tensor({3, 2}, rng);
  const Tensor r0 = linear(x, Tensor::zeros({2, 2}), Tensor::from({2}, {1, 2}));
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(r0.at(2 * i) == 1);
    CHECK(r0.at(2 * i + 1) == 2);
  }
  CHECK(testutil::bitwise_equal(linear(x, Tensor::from({2, 2}, {1, 0, 0, 1}), Tensor::zeros({2})), x));
  const Tensor w = random_tensor({2, 5}, rng), b = random_tensor({5}, rng);
  auto expect = oracle::matmul(oracle::to_mat(x), oracle::to_mat(w), 3, 2, 5);
  for (std::size_t i = 0; i < 15; ++i) expect[i] += b.at(i % 5);
  CHECK(oracle::max_abs_diff(linear(x, w, b).data(), expect) < 1e-6);
  CHECK_THROWS_AS(linear(x, Tensor::zeros({3, 2}), Tensor::zeros({2})), DimensionError);
}

TEST_CASE("elementwise examples") {
  const auto r = testutil::values(relu(Tensor::from({2}, {-1, 2})));
  CHECK(r[0] == 0);
  CHECK(r[1] == 2);
  CHECK(sigmoid(Tensor::scalar(0)).item() == 0.5);
  CHECK(mean_axis(Tensor::full({3, 4}, 1), 1).at(2) == 1);
  CHECK(std::abs(gelu(Tensor::scalar(1)).item() - oracle::gelu(1.0)) < 1e-6);
  CHECK_THROWS_AS(add(Tensor::zeros({2}), Tensor::zeros({3})), DimensionError);
  CHECK_THROWS_AS(mul(Tensor::zeros({2, 1}), Tensor::zeros({2})), DimensionError);
  CHECK_THROWS_AS(mean_axis(Tensor::zeros({2}), 3), DimensionError);
  // Broadcasting is only available through the explicit variants.
  const auto bsum = testutil::values(broadcast_add(Tensor::zeros({2, 3}), Tensor::from({3}, {1, 2, 3})));
  CHECK(bsum[4] == 2);
}

TEST_CASE("backward examples") {
  const Tensor x = Tensor::from({2}, {1, 2}, true);
  const Tensor loss = sum(mul(x, x));
  backward(loss);
  CHECK(x.grad() == std::vector<real>{2, 4});

  // Accumulates until zeroed.
  backward(loss);
  CHECK(x.grad() == std::vector<real>{4, 8});
  Tensor xx = x;
  xx.zero_grad();
  CHECK(x.grad() == std::vector<real>{0, 0});

  // sum(a b): d/da = 1 b^T, d/db = a^T 1.
  Rng rng(2);
  const Tensor a = random_tensor({2, 3}, rng, -1, 1, true), b = random_tensor({3, 2}, rng, -1, 1, true);
  backward(sum(matmul(a, b)));
  const auto ga = a.grad(), gb = b.grad();
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t k = 0; k < 3; ++k) CHECK(ga[i * 3 + k] == doctest::Approx(b.at(k * 2) + b.at(k * 2 + 1)));
  for (std::size_t k = 0; k < 3; ++k)
    for (std::size_t j = 0; j < 2; ++j) CHECK(gb[k * 2 + j] == doctest::Approx(a.at(k) + a.at(3 + k)));

  CHECK_THROWS_AS(backward(x), ContractError);
}

TEST_CASE("tape is topological and covers every reachable leaf") {
  Rng rng(4);
  const Tensor w = random_tensor({3, 3}, rng, -1, 1, true);
  const Tensor x = random_tensor({2, 3}, rng);
  const Tensor h = gelu(matmul(x, w));
  const Tensor loss = mean(mul(h, add(h, matmul(h, w))));
  const ComputationTape tape = record_tape(loss);
  const auto& entries = tape.entries();
  for (std::size_t i = 0; i < entries.size(); ++i) {
    CHECK(entries[i].output == i);
    for (std::size_t in : entries[i].inputs) CHECK(in < i);
  }
  CHECK(entries.back().op != "leaf");
  backward(loss, tape);
  CHECK(w.has_grad());
  CHECK_FALSE(x.has_grad());
}

TEST_CASE("no-grad mode records nothing") {
  const Tensor x = Tensor::from({2}, {1, 2}, true);
  NoGradGuard guard;
  CHECK_FALSE(grad_enabled());
  const Tensor y = mul(x, x);
  CHECK_FALSE(y.requires_grad());
  CHECK(y.is_leaf());
}

TEST_CASE("gather_rows sums gradients of duplicated rows") {
  const Tensor x = Tensor::from({3, 2}, {1, 2, 3, 4, 5, 6}, true);
  const std::vector<std::size_t> idx = {2, 0, 2};
  const Tensor g = gather_rows(x, idx);
  CHECK(g.data()[0] == 5);
  CHECK(g.data()[3] == 2);
  backward(sum(g));
  CHECK(x.grad() == std::vector<real>{1, 1, 0, 0, 2, 2});
}

TEST_CASE("operations are pure") {
  Rng rng(9);
  const Tensor a = random_tensor({4, 4}, rng);
  const std::vector<real> before(a.data().begin(), a.data().end());
  const Tensor y1 = softmax_rows(matmul(a, transpose(a)), 2);
  const Tensor y2 = softmax_rows(matmul(a, transpose(a)), 2);
  CHECK(testutil::bitwise_equal(y1, y2));
  CHECK(std::equal(before.begin(), before.end(), a.data().begin()));
}

TEST_CASE("results are finite on finite inputs") {
  Rng rng(1);
  const Tensor x = random_tensor({8, 8}, rng, -50, 50);
  for (const Tensor& y : {gelu(x), sigmoid(x), softmax_rows(x), relu(x), div(x, add_scalar(relu(x), 1))}) {
    for (real v : y.data()) CHECK(std::isfinite(v));
  }
}
