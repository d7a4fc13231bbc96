#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "bifuser/core/conv.hpp"
#include "bifuser/core/nn.hpp"
#include "bifuser/core/optim.hpp"
#include "helpers.hpp"

using namespace bifuser;
using test::gradcheck;
using test::random_var;

TEST_CASE("tensor basics") {
  TensorF t({2, 3});
  CHECK(t.size() == 6);
  t.at({1, 2}) = 5.0f;
  CHECK(t[5] == 5.0f);
  auto r = t.reshaped({3, 2});
  CHECK(r.dim(0) == 3);
  CHECK_THROWS_AS(t.reshaped({4, 2}), std::invalid_argument);
}

TEST_CASE("matmul against hand computation") {
  auto a = Var<double>(Tensor<double>::from({2, 2}, {1, 2, 3, 4}));
  auto b = Var<double>(Tensor<double>::from({2, 2}, {5, 6, 7, 8}));
  auto c = matmul(a, b);
  CHECK(c.value()[0] == doctest::Approx(19));
  CHECK(c.value()[1] == doctest::Approx(22));
  CHECK(c.value()[2] == doctest::Approx(43));
  CHECK(c.value()[3] == doctest::Approx(50));
}

TEST_CASE("elementwise op gradients") {
  Rng rng(7);
  auto a = random_var(rng, {3, 4});
  auto b = random_var(rng, {3, 4});
  // keep |b| away from zero for the division
  b.value().array() = b.value().array().sign() * (b.value().array().abs() + 0.5);

  auto loss_fn = [&] {
    auto s = add(mul(a, b), div_elem(a, b));
    return mean_all(mul(s, s));
  };
  CHECK(gradcheck({a, b}, loss_fn, 24, 1) < 1e-7);
}

TEST_CASE("activation gradients") {
  Rng rng(11);
  auto x = random_var(rng, {40});
  // keep relu inputs away from the kink
  for (Index i = 0; i < x.size(); ++i)
    if (std::abs(x.value()[i]) < 0.05) x.value()[i] += 0.2;

  CHECK(gradcheck({x}, [&] { return sum_all(mul(relu(x), relu(x))); }, 40, 2) < 1e-7);
  CHECK(gradcheck({x}, [&] { return sum_all(mul(gelu(x), gelu(x))); }, 40, 3) < 1e-7);
  CHECK(gradcheck({x}, [&] { return sum_all(mul(sigmoid(x), sigmoid(x))); }, 40, 4) < 1e-7);
}

TEST_CASE("softmax rows sum to one and gradient checks") {
  Rng rng(13);
  auto x = random_var(rng, {5, 7});
  auto y = softmax_lastdim(x);
  for (Index r = 0; r < 5; ++r) {
    double s = 0;
    for (Index c = 0; c < 7; ++c) s += y.value().at({r, c});
    CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
  }
  auto w = Var<double>(rng.normal_tensor<double>({5, 7}));
  CHECK(gradcheck({x}, [&] { return sum_all(mul(softmax_lastdim(x), w)); }, 35, 5) < 1e-7);
}

TEST_CASE("matmul and bmm gradients") {
  Rng rng(17);
  auto a = random_var(rng, {3, 4});
  auto b = random_var(rng, {4, 5});
  CHECK(gradcheck({a, b}, [&] { return mean_all(mul(matmul(a, b), matmul(a, b))); }, 32, 6) <
        1e-7);

  auto ba = random_var(rng, {2, 3, 3, 4});
  auto bb = random_var(rng, {2, 3, 4, 2});
  CHECK(gradcheck({ba, bb}, [&] { return mean_all(mul(bmm(ba, bb), bmm(ba, bb))); }, 48, 7) <
        1e-7);
}

TEST_CASE("linear gradient") {
  Rng rng(19);
  auto x = random_var(rng, {2, 6, 4});
  auto w = random_var(rng, {4, 3});
  auto b = random_var(rng, {3});
  CHECK(gradcheck({x, w, b}, [&] { return mean_all(mul(linear(x, w, b), linear(x, w, b))); }, 50,
                  8) < 1e-7);
}

TEST_CASE("shape op gradients") {
  Rng rng(23);
  auto x = random_var(rng, {2, 3, 4});
  auto w = Var<double>(rng.normal_tensor<double>({4, 3, 2}));
  CHECK(gradcheck({x}, [&] { return sum_all(mul(permute(x, {2, 1, 0}), w)); }, 24, 9) < 1e-8);

  auto w2 = Var<double>(rng.normal_tensor<double>({2, 2, 4}));
  CHECK(gradcheck({x}, [&] { return sum_all(mul(narrow(x, 1, 1, 2), w2)); }, 24, 10) < 1e-8);

  auto y = random_var(rng, {2, 2, 4});
  auto wc = Var<double>(rng.normal_tensor<double>({2, 5, 4}));
  CHECK(gradcheck({x, y}, [&] { return sum_all(mul(concat<double>({x, y}, 1), wc)); }, 40, 11) <
        1e-8);

  auto ws = Var<double>(rng.normal_tensor<double>({3, 4}));
  CHECK(gradcheck({x}, [&] { return sum_all(mul(select0(x, 1), ws)); }, 12, 12) < 1e-8);
}

TEST_CASE("conv2d matches direct convolution and gradient checks") {
  Rng rng(29);
  auto x = random_var(rng, {1, 2, 5, 5});
  auto w = random_var(rng, {3, 2, 3, 3});
  auto b = random_var(rng, {3});
  auto y = conv2d(x, w, b, 1, 1, 1);
  REQUIRE(y.shape() == Shape{1, 3, 5, 5});

  // direct reference at one output location
  double acc = b.value()[1];
  const Index oy = 2, ox = 3;
  for (Index c = 0; c < 2; ++c)
    for (Index ky = 0; ky < 3; ++ky)
      for (Index kx = 0; kx < 3; ++kx) {
        const Index iy = oy - 1 + ky, ix = ox - 1 + kx;
        if (iy < 0 || iy >= 5 || ix < 0 || ix >= 5) continue;
        acc += x.value().at({0, c, iy, ix}) * w.value().at({1, c, ky, kx});
      }
  CHECK(y.value().at({0, 1, oy, ox}) == doctest::Approx(acc).epsilon(1e-12));

  auto loss = [&] {
    auto out = conv2d(x, w, b, 2, 1, 1);
    return mean_all(mul(out, out));
  };
  CHECK(gradcheck({x, w, b}, loss, 50, 13) < 1e-6);

  auto dilated_loss = [&] {
    auto out = conv2d(x, w, b, 1, 2, 2);
    return mean_all(mul(out, out));
  };
  CHECK(gradcheck({x, w, b}, dilated_loss, 50, 14) < 1e-6);

  auto wp = random_var(rng, {4, 2, 1, 1});
  auto bp = random_var(rng, {4});
  auto pointwise_loss = [&] {
    auto out = conv2d(x, wp, bp);
    return mean_all(mul(out, out));
  };
  CHECK(gradcheck({x, wp, bp}, pointwise_loss, 50, 15) < 1e-6);
}

TEST_CASE("pooling and resize gradients") {
  Rng rng(31);
  auto x = random_var(rng, {1, 2, 6, 6});
  CHECK(gradcheck({x}, [&] {
          auto y = maxpool2d(x, 3, 2, 1);
          return mean_all(mul(y, y));
        }, 40, 16) < 1e-6);
  CHECK(gradcheck({x}, [&] {
          auto y = avgpool_grid(x, 3);
          return mean_all(mul(y, y));
        }, 40, 17) < 1e-7);
  CHECK(gradcheck({x}, [&] {
          auto y = bilinear_resize(x, 9, 4);
          return mean_all(mul(y, y));
        }, 40, 18) < 1e-7);
}

TEST_CASE("avgpool_grid computes block means") {
  TensorF t({1, 1, 4, 4});
  for (Index i = 0; i < 16; ++i) t[i] = static_cast<float>(i);
  auto y = avgpool_grid(Var<float>(t), 2);
  CHECK(y.value()[0] == doctest::Approx((0 + 1 + 4 + 5) / 4.0));
  CHECK(y.value()[3] == doctest::Approx((10 + 11 + 14 + 15) / 4.0));
}

TEST_CASE("bilinear_resize reproduces affine ramps exactly") {
  Tensor<double> t({1, 1, 8, 8});
  for (Index y = 0; y < 8; ++y)
    for (Index x = 0; x < 8; ++x) t.at({0, 0, y, x}) = 0.3 * x - 0.7 * y + 2.0;
  auto up = bilinear_resize(Var<double>(t), 16, 16);
  for (Index y = 0; y < 16; ++y)
    for (Index x = 0; x < 16; ++x) {
      const double sx = (x + 0.5) * 0.5 - 0.5, sy = (y + 0.5) * 0.5 - 0.5;
      CHECK(up.value().at({0, 0, y, x}) == doctest::Approx(0.3 * sx - 0.7 * sy + 2.0).epsilon(1e-12));
    }
}

TEST_CASE("batchnorm and layernorm gradients") {
  Rng rng(37);
  auto x = random_var(rng, {2, 3, 4, 4});
  auto bn = BatchNorm2dLayer<double>::create(3);
  auto train_loss = [&] {
    auto y = bn.forward(x, true);
    return mean_all(mul(y, y));
  };
  CHECK(gradcheck({x, bn.gamma, bn.beta}, train_loss, 50, 19) < 1e-6);

  auto eval_loss = [&] {
    auto y = bn.forward(x, false);
    return mean_all(mul(y, y));
  };
  CHECK(gradcheck({x, bn.gamma, bn.beta}, eval_loss, 50, 20) < 1e-6);

  auto ln = LayerNormLayer<double>::create(6);
  auto x2 = random_var(rng, {5, 6});
  auto ln_loss = [&] {
    auto y = ln.forward(x2);
    return mean_all(mul(y, y));
  };
  CHECK(gradcheck({x2, ln.gamma, ln.beta}, ln_loss, 42, 21) < 1e-6);
}

TEST_CASE("bce loss value and gradient") {
  // p = 0.5 everywhere gives ln 2 regardless of targets
  auto logits = Var<double>::param(Tensor<double>::zeros({8}));
  Tensor<double> targets({8});
  for (Index i = 0; i < 4; ++i) targets[i] = 1.0;
  auto t = Var<double>(targets);
  CHECK(bce_with_logits_mean(logits, t).value()[0] == doctest::Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("bce gradient check") {
  Rng rng(43);
  auto logits = random_var(rng, {12});
  Tensor<double> targets({12});
  for (Index i = 0; i < 12; ++i) targets[i] = (i % 3 == 0) ? 1.0 : 0.0;
  auto t = Var<double>(targets);
  CHECK(gradcheck({logits}, [&] { return bce_with_logits_mean(logits, t); }, 12, 23) < 1e-7);
}

TEST_CASE("no-grad mode builds no graph") {
  Rng rng(47);
  auto a = random_var(rng, {3});
  NoGradGuard guard;
  auto y = mul(a, a);
  CHECK(!y.requires_grad());
}

TEST_CASE("cosine schedule endpoints") {
  CHECK(cosine_lr(0, 1000, 1e-3, 1e-9) == doctest::Approx(1e-3).epsilon(1e-15));
  CHECK(std::abs(cosine_lr(999, 1000, 1e-3, 1e-9) - 1e-9) < 1e-12);
  const double mid = cosine_lr(500, 1001, 1e-3, 1e-9);
  CHECK(mid == doctest::Approx(0.5 * (1e-3 + 1e-9)).epsilon(1e-9));
}

TEST_CASE("adam minimizes a quadratic") {
  auto x = Var<double>::param(Tensor<double>::from({2}, {3.0, -2.0}));
  NamedParams<double> np;
  np.add_param("x", x);
  Adam<double> opt(np);
  for (int i = 0; i < 400; ++i) {
    opt.zero_grad();
    auto loss = sum_all(mul(x, x));
    backward(loss);
    opt.step(0.05);
  }
  CHECK(std::abs(x.value()[0]) < 1e-2);
  CHECK(std::abs(x.value()[1]) < 1e-2);
}
