#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "sdrf/nn.hpp"
#include "testutil.hpp"

using namespace sdrf;
using ag::Var;
using testutil::gradcheck;
using testutil::randn;

namespace {
Var<double> leaf(Tensor<double> t) { return Var<double>(std::move(t), true); }

// keep values away from the ReLU kink so central differences are clean
Tensor<double> randn_off_zero(Shape s, Rng& rng) {
  Tensor<double> t = randn(std::move(s), rng);
  for (int64_t i = 0; i < t.numel(); ++i) t[i] += t[i] >= 0 ? 0.2 : -0.2;
  return t;
}
}  // namespace

TEST_CASE("elementwise op gradients") {
  Rng rng(1);
  auto a = leaf(randn({2, 3, 4}, rng));
  auto b = leaf(randn({2, 3, 4}, rng));

  CHECK(gradcheck([&] { return ag::sum_all(ag::add(a, b)); }, {a, b}) < 1e-6);
  CHECK(gradcheck([&] { return ag::sum_all(ag::sub(a, b)); }, {a, b}) < 1e-6);
  CHECK(gradcheck([&] { return ag::sum_all(ag::mul(a, b)); }, {a, b}) < 1e-6);
  CHECK(gradcheck([&] { return ag::mean_all(ag::scale(a, 2.5)); }, {a}) < 1e-6);
  CHECK(gradcheck([&] { return ag::sum_all(ag::sigmoid(a)); }, {a}) < 1e-6);
  CHECK(gradcheck([&] { return ag::sum_all(ag::gelu(a)); }, {a}) < 1e-6);

  auto c = leaf(randn_off_zero({2, 3, 4}, rng));
  CHECK(gradcheck([&] { return ag::sum_all(ag::relu(c)); }, {c}) < 1e-6);
}

TEST_CASE("shape op gradients") {
  Rng rng(2);
  auto a = leaf(randn({2, 3, 4, 5}, rng));
  CHECK(gradcheck([&] { return ag::sum_all(ag::mul(ag::reshape(a, {6, 20}),
                                                   ag::reshape(a, {6, 20}))); },
                  {a}) < 1e-6);
  CHECK(gradcheck(
            [&] {
              auto p = ag::permute(a, {2, 0, 3, 1});
              return ag::sum_all(ag::mul(p, p));
            },
            {a}) < 1e-6);

  auto x = leaf(randn({2, 3, 4}, rng));
  auto y = leaf(randn({2, 2, 4}, rng));
  CHECK(gradcheck(
            [&] {
              auto cc = ag::concat<double>({x, y}, 1);
              return ag::sum_all(ag::mul(cc, cc));
            },
            {x, y}) < 1e-6);
  CHECK(gradcheck(
            [&] {
              auto s = ag::slice(x, 1, 1, 2);
              return ag::sum_all(ag::mul(s, s));
            },
            {x}) < 1e-6);

  auto f = leaf(randn({1, 2, 3, 4, 5}, rng));
  CHECK(gradcheck(
            [&] {
              auto r = ag::roll3d(f, 1, 2, -1);
              return ag::sum_all(ag::mul(r, r));
            },
            {f}) < 1e-6);
  CHECK(gradcheck(
            [&] {
              auto p = ag::pad3d(f, {1, 0, 0, 2, 1, 1});
              return ag::sum_all(ag::mul(p, p));
            },
            {f}) < 1e-6);
  CHECK(gradcheck(
            [&] {
              auto csub = ag::crop3d(f, {1, 1, 0}, {2, 2, 3});
              return ag::sum_all(ag::mul(csub, csub));
            },
            {f}) < 1e-6);
}

TEST_CASE("permute value correctness") {
  Rng rng(3);
  Tensor<double> t = randn({2, 3, 4}, rng);
  auto v = Var<double>(t, false);
  auto p = ag::permute(v, {2, 0, 1});
  for (int64_t i = 0; i < 2; ++i)
    for (int64_t j = 0; j < 3; ++j)
      for (int64_t k = 0; k < 4; ++k)
        CHECK(p.value()[(k * 2 + i) * 3 + j] == t[(i * 3 + j) * 4 + k]);
}

TEST_CASE("roll3d wraps cyclically") {
  Tensor<double> t(Shape{1, 1, 1, 1, 4});
  for (int64_t i = 0; i < 4; ++i) t[i] = static_cast<double>(i);
  auto r = ag::roll3d(Var<double>(t, false), 0, 0, 1);
  CHECK(r.value()[0] == 3.0);
  CHECK(r.value()[1] == 0.0);
  CHECK(r.value()[3] == 2.0);
}

TEST_CASE("softmax, layer norm, channel scale gradients") {
  Rng rng(4);
  auto a = leaf(randn({3, 5}, rng));
  auto w = leaf(randn({3, 5}, rng));
  CHECK(gradcheck([&] { return ag::sum_all(ag::mul(ag::softmax_lastdim(a), w)); }, {a}) < 1e-6);

  SUBCASE("softmax rows sum to one") {
    auto p = ag::softmax_lastdim(a);
    for (int64_t r = 0; r < 3; ++r) {
      double s = 0;
      for (int64_t j = 0; j < 5; ++j) s += p.value()[r * 5 + j];
      CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
    }
  }

  auto g = leaf(randn({6}, rng));
  auto be = leaf(randn({6}, rng));
  auto x = leaf(randn({4, 6}, rng));
  CHECK(gradcheck(
            [&] {
              auto y = ag::layer_norm_lastdim(x, g, be, 1e-5);
              return ag::sum_all(ag::mul(y, y));
            },
            {x, g, be}) < 1e-5);

  auto field = leaf(randn({2, 3, 2, 2, 2}, rng));
  auto gate = leaf(randn({2, 3}, rng));
  CHECK(gradcheck(
            [&] {
              auto y = ag::channel_scale(field, gate);
              return ag::sum_all(ag::mul(y, y));
            },
            {field, gate}) < 1e-6);
}

TEST_CASE("matmul and linear gradients") {
  Rng rng(5);
  auto a = leaf(randn({2, 3, 4}, rng));
  auto b = leaf(randn({2, 4, 5}, rng));
  CHECK(gradcheck(
            [&] {
              auto c = ag::matmul(a, b);
              return ag::sum_all(ag::mul(c, c));
            },
            {a, b}) < 1e-6);
  auto bt = leaf(randn({2, 5, 4}, rng));
  CHECK(gradcheck(
            [&] {
              auto c = ag::matmul(a, bt, /*trans_b=*/true);
              return ag::sum_all(ag::mul(c, c));
            },
            {a, bt}) < 1e-6);

  auto x = leaf(randn({3, 4}, rng));
  auto w = leaf(randn({6, 4}, rng));
  auto bias = leaf(randn({6}, rng));
  CHECK(gradcheck(
            [&] {
              auto y = ag::linear(x, w, bias);
              return ag::sum_all(ag::mul(y, y));
            },
            {x, w, bias}) < 1e-6);
}

TEST_CASE("cross entropy gradient and value") {
  Rng rng(6);
  auto logits = leaf(randn({4, 3}, rng));
  std::vector<int> labels{0, 2, 1, 2};
  CHECK(gradcheck([&] { return ag::cross_entropy(logits, labels); }, {logits}) < 1e-6);

  // uniform logits -> loss = ln K
  auto z = Var<double>(Tensor<double>(Shape{2, 5}), true);
  auto l = ag::cross_entropy(z, std::vector<int>{1, 3});
  CHECK(l.value()[0] == doctest::Approx(std::log(5.0)).epsilon(1e-9));
}

TEST_CASE("conv3d gradients") {
  Rng rng(7);
  auto x = leaf(randn({2, 2, 3, 4, 4}, rng));
  auto w = leaf(randn({3, 2, 3, 3, 3}, rng, 0.5));
  auto b = leaf(randn({3}, rng));
  ag::Conv3dGeom geom{3, 3, 3, 1, 1, 1, 1, 1, 1};
  CHECK(gradcheck(
            [&] {
              auto y = ag::conv3d(x, w, b, geom);
              return ag::sum_all(ag::mul(y, y));
            },
            {x, w, b}) < 1e-5);

  SUBCASE("strided, asymmetric") {
    ag::Conv3dGeom g2{1, 3, 3, 1, 2, 2, 0, 1, 1};
    auto w2 = leaf(randn({4, 2, 1, 3, 3}, rng, 0.5));
    auto b2 = leaf(randn({4}, rng));
    auto y = ag::conv3d(x, w2, b2, g2);
    CHECK(y.shape() == Shape{2, 4, 3, 2, 2});
    CHECK(gradcheck(
              [&] {
                auto z = ag::conv3d(x, w2, b2, g2);
                return ag::sum_all(ag::mul(z, z));
              },
              {x, w2, b2}) < 1e-5);
  }
}

TEST_CASE("batch norm gradients, train and eval") {
  Rng rng(8);
  auto x = leaf(randn({2, 3, 2, 2, 2}, rng));
  auto gamma = leaf(randn({3}, rng));
  auto beta = leaf(randn({3}, rng));
  Tensor<double> rm(Shape{3}), rv(Shape{3}, 1.0);
  CHECK(gradcheck(
            [&] {
              auto y = ag::batch_norm3d(x, gamma, beta, rm, rv, /*training=*/true, 0.1, 1e-5);
              return ag::sum_all(ag::mul(y, y));
            },
            {x, gamma, beta}) < 1e-5);

  Tensor<double> rm2(Shape{3}), rv2(Shape{3});
  for (int i = 0; i < 3; ++i) {
    rm2[i] = 0.2 * i;
    rv2[i] = 1.0 + 0.3 * i;
  }
  CHECK(gradcheck(
            [&] {
              auto y = ag::batch_norm3d(x, gamma, beta, rm2, rv2, /*training=*/false, 0.1, 1e-5);
              return ag::sum_all(ag::mul(y, y));
            },
            {x, gamma, beta}) < 1e-6);

  SUBCASE("running stats move toward batch stats") {
    Tensor<double> m(Shape{3}), v(Shape{3}, 1.0);
    auto y = ag::batch_norm3d(x, gamma, beta, m, v, true, 0.1, 1e-5);
    bool moved = false;
    for (int i = 0; i < 3; ++i)
      if (m[i] != 0.0) moved = true;
    CHECK(moved);
  }
}

TEST_CASE("pooling and upsample gradients") {
  Rng rng(9);
  auto x = leaf(randn({2, 2, 2, 4, 4}, rng));
  CHECK(gradcheck(
            [&] {
              auto y = ag::avg_pool3d(x, 1, 2, 2);
              return ag::sum_all(ag::mul(y, y));
            },
            {x}) < 1e-6);
  CHECK(gradcheck(
            [&] {
              auto y = ag::global_avg_pool(x);
              return ag::sum_all(ag::mul(y, y));
            },
            {x}) < 1e-6);
  CHECK(gradcheck(
            [&] {
              auto y = ag::upsample_trilinear(x, 3, 8, 8);
              return ag::sum_all(ag::mul(y, y));
            },
            {x}) < 1e-6);
}

TEST_CASE("no-grad mode builds value-only graphs") {
  Rng rng(10);
  auto x = leaf(randn({2, 2}, rng));
  ag::NoGradGuard ng;
  auto y = ag::mul(x, x);
  CHECK_FALSE(y.requires_grad());
}
