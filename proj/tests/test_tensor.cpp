#include <doctest.h>

#include <cmath>
#include <random>

#include "agbseq/tensor.hpp"

using namespace agbseq::ad;

namespace {

TensorPtr random_leaf(const std::vector<int>& shape, std::mt19937_64& rng, double scale = 1.0,
                      double offset = 0.0) {
  auto t = make_leaf(shape);
  std::normal_distribution<double> dist(offset, scale);
  for (auto& v : t->value) v = dist(rng);
  return t;
}

// keep values away from the kinks of relu/clip so central differences hold
void push_off_kinks(const TensorPtr& t, double margin = 0.05) {
  for (auto& v : t->value)
    if (std::fabs(v) < margin) v = v < 0 ? -margin : margin;
}

}  // namespace

TEST_CASE("elementwise ops evaluate correctly") {
  auto a = make_constant({2, 1, 1, 2}, {1.0, -2.0, 3.0, 0.5});
  auto b = make_constant({2, 1, 1, 2}, {4.0, 1.0, -1.0, 2.0});
  CHECK(add(a, b)->value[0] == 5.0);
  CHECK(sub(a, b)->value[1] == -3.0);
  CHECK(mul(a, b)->value[2] == -3.0);
  CHECK(neg(a)->value[0] == -1.0);
  CHECK(scalar_mul(a, 3.0)->value[3] == 1.5);
  CHECK(scalar_add(a, 1.0)->value[1] == -1.0);
  CHECK(relu(a)->value[1] == 0.0);
  CHECK(relu(a)->value[0] == 1.0);
  CHECK(leaky_relu(a, 0.2)->value[1] == doctest::Approx(-0.4));
  CHECK(abs_op(a)->value[1] == 2.0);
  CHECK(clip(a, -1.0, 1.0)->value[1] == -1.0);
  CHECK(sqrt_op(make_constant({1}, {9.0}))->value[0] == doctest::Approx(3.0));
  CHECK(softplus(make_constant({1}, {0.0}))->value[0] == doctest::Approx(std::log(2.0)));
  CHECK(tanh_op(make_constant({1}, {0.0}))->value[0] == 0.0);
  CHECK(rsqrt_eps(make_constant({1}, {3.0}), 1.0)->value[0] == doctest::Approx(0.5));
}

TEST_CASE("nan check rejects non-finite op outputs") {
  auto a = make_leaf({1});
  a->value = {-1.0};
  CHECK_THROWS_AS(sqrt_op(a), std::runtime_error);
  set_nan_check(false);
  CHECK_NOTHROW(sqrt_op(a));
  set_nan_check(true);
}

TEST_CASE("reductions and broadcasts over axis groups") {
  // [B=2, C=2, H=1, W=2]
  auto a = make_constant({2, 2, 1, 2}, {1, 2, 3, 4, 5, 6, 7, 8});
  CHECK(reduce_sum(a, Axes::All)->value[0] == 36.0);
  auto ps = reduce_sum(a, Axes::PerSample);
  CHECK(ps->shape == std::vector<int>{2});
  CHECK(ps->value[0] == 10.0);
  CHECK(ps->value[1] == 26.0);
  auto pc = reduce_sum(a, Axes::PerChannel);
  CHECK(pc->value[0] == 1 + 2 + 5 + 6);
  CHECK(pc->value[1] == 3 + 4 + 7 + 8);
  auto psc = reduce_mean(a, Axes::PerSampleChan);
  CHECK(psc->shape == std::vector<int>{2, 2});
  CHECK(psc->value[2] == doctest::Approx(5.5));
  auto pp = reduce_sum(a, Axes::PerPosition);
  CHECK(pp->value[0] == 6.0);

  auto c = make_constant({2}, {10.0, 20.0});
  auto bc = broadcast(c, Axes::PerChannel, {2, 2, 1, 2});
  CHECK(bc->value[0] == 10.0);
  CHECK(bc->value[2] == 20.0);
  CHECK_THROWS_AS(broadcast(c, Axes::PerSampleChan, {2, 2, 1, 2}), std::invalid_argument);
}

TEST_CASE("gradcheck passes for every differentiable op") {
  std::mt19937_64 rng(7);
  const std::vector<int> shape{2, 3, 4, 4};

  auto check1 = [&](const std::function<TensorPtr(const TensorPtr&)>& op, double off = 0.0) {
    auto x = random_leaf(shape, rng, 1.0, off);
    push_off_kinks(x);
    auto f = [&](const std::vector<TensorPtr>& in) { return reduce_sum(op(in[0]), Axes::All); };
    return gradcheck(f, {x});
  };

  CHECK(check1([](const TensorPtr& x) { return relu(x); }) < 1e-4);
  CHECK(check1([](const TensorPtr& x) { return leaky_relu(x, 0.2); }) < 1e-4);
  CHECK(check1([](const TensorPtr& x) { return tanh_op(x); }) < 1e-4);
  CHECK(check1([](const TensorPtr& x) { return softplus(x); }) < 1e-4);
  CHECK(check1([](const TensorPtr& x) { return neg(x); }) < 1e-4);
  CHECK(check1([](const TensorPtr& x) { return abs_op(x); }) < 1e-4);
  CHECK(check1([](const TensorPtr& x) { return scalar_mul(x, -2.5); }) < 1e-4);
  CHECK(check1([](const TensorPtr& x) { return mul(x, x); }) < 1e-4);
  CHECK(check1([](const TensorPtr& x) { return sqrt_op(x); }, 8.0) < 1e-4);
  CHECK(check1([](const TensorPtr& x) { return rsqrt_eps(x, 0.5); }, 8.0) < 1e-4);
  CHECK(check1([](const TensorPtr& x) { return clip(x, -0.8, 0.8); }) < 1e-4);
  for (Axes ax : {Axes::All, Axes::PerSample, Axes::PerChannel, Axes::PerSampleChan,
                  Axes::PerPosition}) {
    CHECK(check1([ax](const TensorPtr& x) { return mul(reduce_mean(x, ax), reduce_mean(x, ax)); }) <
          1e-4);
  }
  // binary ops
  auto a = random_leaf(shape, rng);
  auto b = random_leaf(shape, rng);
  auto f2 = [](const std::vector<TensorPtr>& in) {
    return reduce_sum(mul(add(in[0], in[1]), sub(in[0], in[1])), Axes::All);
  };
  CHECK(gradcheck(f2, {a, b}) < 1e-4);
  // concat / slice
  auto fc = [](const std::vector<TensorPtr>& in) {
    auto c = concat_channels(in[0], in[1]);
    return reduce_sum(mul(slice_channels(c, 1, 4), slice_channels(c, 2, 5)), Axes::All);
  };
  CHECK(gradcheck(fc, {random_leaf(shape, rng), random_leaf(shape, rng)}) < 1e-4);
}

TEST_CASE("convolution gradcheck (stride, padding, transpose)") {
  std::mt19937_64 rng(11);
  for (auto [stride, pad] : {std::pair{1, 0}, {1, 1}, {2, 1}}) {
    auto x = random_leaf({2, 2, 6, 6}, rng, 0.5);
    auto w = random_leaf({3, 2, 3, 3}, rng, 0.5);
    auto f = [&, s = stride, p = pad](const std::vector<TensorPtr>& in) {
      return reduce_sum(mul(conv2d(in[0], in[1], s, p), conv2d(in[0], in[1], s, p)), Axes::All);
    };
    CHECK(gradcheck(f, {x, w}) < 1e-4);
  }
  auto y = random_leaf({1, 3, 4, 4}, rng, 0.5);
  auto wt = random_leaf({3, 2, 4, 4}, rng, 0.5);
  auto ft = [&](const std::vector<TensorPtr>& in) {
    auto o = conv_transpose2d(in[0], in[1], 2, 1);
    return reduce_sum(mul(o, o), Axes::All);
  };
  CHECK(gradcheck(ft, {y, wt}) < 1e-4);
  auto bias = random_leaf({2}, rng);
  auto xb = random_leaf({2, 2, 3, 3}, rng);
  auto fb = [](const std::vector<TensorPtr>& in) {
    auto o = add_channel_bias(in[0], in[1]);
    return reduce_sum(mul(o, o), Axes::All);
  };
  CHECK(gradcheck(fb, {xb, bias}) < 1e-4);
}

TEST_CASE("conv_transpose2d is the adjoint of conv2d") {
  // <conv(x, w), y> == <x, conv_transpose(y, w)> for all x, y
  std::mt19937_64 rng(3);
  for (auto [stride, pad] : {std::pair{1, 0}, {1, 1}, {2, 1}}) {
    auto x = random_leaf({2, 3, 8, 8}, rng);
    auto w = random_leaf({4, 3, 3, 3}, rng);
    auto cx = conv2d(x, w, stride, pad);
    auto y = random_leaf(cx->shape, rng);
    double lhs = 0.0;
    for (size_t i = 0; i < cx->value.size(); ++i) lhs += cx->value[i] * y->value[i];
    auto cty = conv_transpose2d(y, w, stride, pad, 8, 8);
    double rhs = 0.0;
    for (size_t i = 0; i < x->value.size(); ++i) rhs += x->value[i] * cty->value[i];
    CHECK(std::fabs(lhs - rhs) / std::max(1.0, std::fabs(lhs)) < 1e-10);
  }
}

TEST_CASE("conv2d matches a direct loop oracle") {
  std::mt19937_64 rng(5);
  auto x = random_leaf({1, 2, 5, 5}, rng);
  auto w = random_leaf({2, 2, 3, 3}, rng);
  const int stride = 2, pad = 1;
  auto y = conv2d(x, w, stride, pad);
  REQUIRE(y->shape == std::vector<int>{1, 2, 3, 3});
  for (int co = 0; co < 2; ++co)
    for (int oi = 0; oi < 3; ++oi)
      for (int oj = 0; oj < 3; ++oj) {
        double acc = 0.0;
        for (int ci = 0; ci < 2; ++ci)
          for (int ki = 0; ki < 3; ++ki)
            for (int kj = 0; kj < 3; ++kj) {
              const int si = oi * stride - pad + ki, sj = oj * stride - pad + kj;
              if (si < 0 || si >= 5 || sj < 0 || sj >= 5) continue;
              acc += x->value[(static_cast<size_t>(ci) * 5 + si) * 5 + sj] *
                     w->value[((static_cast<size_t>(co) * 2 + ci) * 3 + ki) * 3 + kj];
            }
        CHECK(y->value[(static_cast<size_t>(co) * 3 + oi) * 3 + oj] == doctest::Approx(acc));
      }
}

TEST_CASE("backward accumulates into leaf gradients") {
  auto x = make_leaf({1, 1, 1, 2});
  x->value = {3.0, -1.0};
  auto loss = reduce_sum(mul(x, x), Axes::All);  // sum x^2
  x->zero_grad();
  backward(loss);
  CHECK(x->grad[0] == doctest::Approx(6.0));
  CHECK(x->grad[1] == doctest::Approx(-2.0));
  backward(loss);  // accumulates
  CHECK(x->grad[0] == doctest::Approx(12.0));
  auto vec = make_constant({2}, {1.0, 2.0});
  CHECK_THROWS_AS(backward(add(vec, vec)), std::invalid_argument);  // non-scalar root
}

TEST_CASE("gradient_of builds a differentiable gradient graph") {
  // f(x) = sum(x^2): grad = 2x, and sum(grad^2) has gradient 8x wrt x.
  auto x = make_leaf({1, 1, 1, 3});
  x->value = {1.0, -2.0, 0.5};
  auto root = reduce_sum(mul(x, x), Axes::All);
  auto g = gradient_of(root, x);
  for (int i = 0; i < 3; ++i) CHECK(g->value[i] == doctest::Approx(2.0 * x->value[i]));
  auto outer = reduce_sum(mul(g, g), Axes::All);
  x->zero_grad();
  backward(outer);
  for (int i = 0; i < 3; ++i) CHECK(x->grad[i] == doctest::Approx(8.0 * x->value[i]));
}

TEST_CASE("gradient_of rejects ops outside the double-differentiable set") {
  auto x = make_leaf({1});
  x->value = {0.3};
  auto root = reduce_sum(tanh_op(x), Axes::All);
  CHECK_THROWS_WITH_AS(gradient_of(root, x),
                       doctest::Contains("tanh"), std::invalid_argument);
  auto root2 = reduce_sum(softplus(x), Axes::All);
  CHECK_THROWS_AS(gradient_of(root2, x), std::invalid_argument);
}

TEST_CASE("gradient_of through convolution matches finite differences") {
  std::mt19937_64 rng(13);
  auto x = make_leaf({1, 1, 4, 4});
  std::normal_distribution<double> dist(0.0, 1.0);
  for (auto& v : x->value) v = dist(rng);
  auto w = random_leaf({1, 1, 3, 3}, rng);
  // penalty = sum over (d/dx sum(conv(x,w)^2))^2 — a double-backprop path
  auto f = [&](const std::vector<TensorPtr>& in) {
    auto y = conv2d(in[0], w, 1, 1);
    auto inner = reduce_sum(mul(y, y), Axes::All);
    auto g = gradient_of(inner, in[0]);
    return reduce_sum(mul(g, g), Axes::All);
  };
  CHECK(gradcheck(f, {x}) < 1e-4);
}

TEST_CASE("adam step matches a hand-computed update") {
  auto p = make_leaf({1});
  p->value = {1.0};
  p->grad = {0.5};
  AdamState st;
  st.lr = 0.1;
  adam_step({p}, st);
  // step 1: mhat = g, vhat = g^2 -> update = lr * g / (|g| + eps)
  CHECK(p->value[0] == doctest::Approx(1.0 - 0.1 * 0.5 / (0.5 + 1e-8)));
  auto q = make_leaf({1});
  CHECK_THROWS_AS(adam_step({p, q}, st), std::invalid_argument);  // param count changed
}
