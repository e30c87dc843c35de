// SPDX-License-Identifier: Apache-2.0
#include <cmath>

#include "doctest.h"
#include "refl/error.hpp"
#include "refl/io.hpp"
#include "refl/nn/optim.hpp"
#include "support.hpp"

using namespace refl;
using namespace refl::nn;
using refl::testing::finite_difference;
using refl::testing::random_tensor;
using refl::testing::relative_error;

namespace {

// Projects an op output onto fixed random weights so every output element matters.
Var project(const Var& out, std::uint64_t seed) {
  return sum(mul(out, Var::constant(random_tensor(out.shape(), seed))));
}

// Checks d/d(inputs[k]) of project(op(inputs)) against central differences.
void check_op(const std::function<Var(const std::vector<Var>&)>& op, std::vector<Tensor> inputs, double tol = 1e-6) {
  std::vector<Var> leaves;
  for (auto& t : inputs) leaves.push_back(Var::leaf(t, true));
  Var loss = project(op(leaves), 99);
  loss.backward();
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    auto f = [&](const Tensor& xk) {
      std::vector<Var> vs;
      for (std::size_t j = 0; j < inputs.size(); ++j) vs.push_back(Var::constant(j == k ? xk : inputs[j]));
      return project(op(vs), 99).value()[0];
    };
    const auto fd = finite_difference(f, inputs[k], {});
    const auto an = leaves[k].grad();
    CHECK(relative_error(std::vector<double>(an.values().begin(), an.values().end()), fd) < tol);
  }
}

}  // namespace

TEST_CASE("elementwise ops match finite differences") {
  const Tensor a = random_tensor({2, 3}, 1), b = random_tensor({2, 3}, 2);
  check_op([](auto& v) { return add(v[0], v[1]); }, {a, b});
  check_op([](auto& v) { return sub(v[0], v[1]); }, {a, b});
  check_op([](auto& v) { return mul(v[0], v[1]); }, {a, b});
  check_op([](auto& v) { return square(v[0]); }, {a});
  check_op([](auto& v) { return exp(v[0]); }, {a});
  check_op([](auto& v) { return silu(v[0]); }, {a});
  check_op([](auto& v) { return relu(v[0]); }, {a});
  check_op([](auto& v) { return abs(v[0]); }, {a});
  check_op([](auto& v) { return scale(add_scalar(v[0], 0.3), -1.7); }, {a});
  check_op([](auto& v) { return mul_scalar(v[0], v[1]); }, {a, random_tensor({1}, 3)});
  check_op([](auto& v) { return mean(v[0]); }, {a});
  check_op([](auto& v) { return mean_per_sample(v[0]); }, {a});
  check_op([](auto& v) { return reshape(v[0], {3, 2}); }, {a});
  check_op([](auto& v) { return slice_rows(v[0], 1, 2); }, {a});
}

TEST_CASE("clamp01 passes gradient only inside the unit interval") {
  Var x = Var::leaf(Tensor({3}, {-0.5, 0.4, 1.5}), true);
  sum(clamp01(x)).backward();
  CHECK(x.grad()[0] == 0.0);
  CHECK(x.grad()[1] == 1.0);
  CHECK(x.grad()[2] == 0.0);
}

TEST_CASE("conv2d and feature-map ops match finite differences") {
  const Tensor x = random_tensor({2, 3, 6, 6}, 4);
  const Tensor w = random_tensor({4, 3, 3, 3}, 5, 0.3);
  const Tensor b = random_tensor({4}, 6);
  check_op([](auto& v) { return conv2d(v[0], v[1], v[2], 1, 1); }, {x, w, b});
  check_op([](auto& v) { return conv2d(v[0], v[1], v[2], 2, 1); }, {x, w, b});
  check_op([](auto& v) { return conv2d(v[0], v[1], Var(), 1, 0); }, {x, w});
  check_op([](auto& v) { return upsample_nearest2x(v[0]); }, {x});
  check_op([](auto& v) { return concat_channels(v[0], v[1]); }, {x, random_tensor({2, 2, 6, 6}, 7)});
  check_op([](auto& v) { return add_spatial_bias(v[0], v[1]); }, {x, random_tensor({2, 3}, 8)});
  check_op([](auto& v) { return global_avg_pool(v[0]); }, {x});
  check_op([](auto& v) { return normalize_channels(v[0], 1e-8); }, {x});
  check_op([](auto& v) { return haar_ll(v[0]); }, {x});
}

TEST_CASE("vector ops match finite differences") {
  const Tensor x = random_tensor({3, 4}, 10), w = random_tensor({5, 4}, 11), b = random_tensor({5}, 12);
  check_op([](auto& v) { return linear(v[0], v[1], v[2]); }, {x, w, b});
  check_op([](auto& v) { return normalize_rows(v[0], 1e-12); }, {x});
  check_op([](auto& v) { return rowwise_dot(v[0], v[1]); }, {x, random_tensor({3, 4}, 13)});
  check_op([](auto& v) { return concat_cols(std::vector<Var>{v[0], v[1]}); }, {x, random_tensor({3, 2}, 14)});
  const std::vector<int> idx = {2, 0, 2};
  check_op([&](auto& v) { return embedding(v[0], idx); }, {random_tensor({3, 4}, 15)});
}

TEST_CASE("pairwise_ce gradient is p minus y") {
  Var sa = Var::leaf(Tensor({2}, {0.3, -1.0}), true);
  Var sb = Var::leaf(Tensor({2}, {1.1, 0.5}), true);
  const std::vector<int> winners = {0, 1};
  pairwise_ce(sa, sb, winners).backward();
  // Mean over two pairs, so each gradient carries a factor 1/2.
  const double p0 = 1.0 / (1.0 + std::exp(1.1 - 0.3));
  CHECK(sa.grad()[0] == doctest::Approx((p0 - 1.0) / 2).epsilon(1e-12));
  CHECK(sb.grad()[0] == doctest::Approx((1.0 - p0) / 2).epsilon(1e-12));
  const double p1 = 1.0 / (1.0 + std::exp(0.5 + 1.0));
  CHECK(sa.grad()[1] == doctest::Approx(p1 / 2).epsilon(1e-12));
}

TEST_CASE("softmax_kl matches finite differences and vanishes at the base") {
  const Tensor base = random_tensor({5}, 20);
  check_op([&](auto& v) { return softmax_kl(v[0], base); }, {random_tensor({5}, 21)}, 1e-7);
  CHECK(softmax_kl(Var::constant(base), base).value()[0] == doctest::Approx(0.0).epsilon(1e-15));
}

TEST_CASE("no-grad guard records nothing") {
  Var x = Var::leaf(Tensor({2}, {1.0, 2.0}), true);
  NoGradGuard guard;
  Var y = square(x);
  CHECK_FALSE(y.requires_grad());
}

TEST_CASE("backward accumulates through shared subexpressions") {
  Var x = Var::leaf(Tensor({1}, {3.0}), true);
  Var y = mul(x, x);
  sum(add(y, y)).backward();
  CHECK(x.grad()[0] == doctest::Approx(12.0));
}

TEST_CASE("inputs frozen at graph construction get no gradient later") {
  ParamStore store;
  const Var w = store.add("w", random_tensor({2, 1, 3, 3}, 4));
  const Var x = Var::leaf(random_tensor({1, 1, 5, 5}, 5), true);
  Var y;
  {
    GradTrackingScope frozen(store, false);
    y = sum(conv2d(x, w, Var(), 1, 1));
  }
  CHECK(w.requires_grad());
  y.backward();
  CHECK_FALSE(w.has_grad());
  CHECK(x.has_grad());
}

TEST_CASE("adam skips frozen parameters") {
  ParamStore store;
  Var a = store.add("a", Tensor({2}, {1.0, 1.0}), true);
  Var b = store.add("b", Tensor({2}, {1.0, 1.0}), false);
  store.set_grad_tracking(true);
  Adam opt(store, {});
  sum(add(square(a), square(b))).backward();
  opt.step();
  CHECK(a.value()[0] < 1.0);
  CHECK(b.value()[0] == 1.0);
  CHECK_FALSE(b.has_grad());
}

TEST_CASE("archive round-trips arrays and metadata") {
  const auto dir = refl::testing::scratch_dir("archive");
  Archive a;
  a.metadata["version"] = 1;
  a.metadata["tau"] = 0.07;
  a.arrays.emplace_back("w", random_tensor({2, 3}, 30));
  a.arrays.emplace_back("b", random_tensor({4}, 31));
  save_archive(a, dir / "x.refl");
  const Archive b = load_archive(dir / "x.refl");
  CHECK(b.metadata == a.metadata);
  REQUIRE(b.arrays.size() == 2);
  CHECK(b.array("w").hash() == a.array("w").hash());
  CHECK(b.array("b").hash() == a.array("b").hash());
  CHECK_THROWS_AS(b.array("missing"), Error);
}
