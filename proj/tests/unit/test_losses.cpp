#include <doctest.h>

#include <cmath>

#include "../support/grad_check.hpp"
#include "glean/errors.hpp"
#include "glean/imaging.hpp"
#include "glean/losses.hpp"

using namespace glean;
using glean::testing::check_gradients;

namespace {

ag::Var logits(std::vector<float> v) {
  const int n = static_cast<int>(v.size());
  return ag::Var(Tensor({n, 1}, std::move(v)));
}

double value(const ag::Var& v) { return v.value()[0]; }

// Plain nested-loop forward pass of the feature network in double precision.
std::vector<double> reference_features(const Tensor& img, const FeatureNet& net, Shape& shape) {
  int c = img.c(), h = img.h(), w = img.w();
  std::vector<double> x(img.values().begin(), img.values().end());
  for (std::size_t l = 0; l < net.convs.size(); ++l) {
    const Tensor& wt = net.convs[l].weight.value();
    const Tensor& b = net.convs[l].bias.value();
    const int co = wt.dim(0), ho = (h + 2 - 3) / 2 + 1, wo = (w + 2 - 3) / 2 + 1;
    std::vector<double> y(static_cast<std::size_t>(co) * ho * wo);
    for (int o = 0; o < co; ++o)
      for (int oy = 0; oy < ho; ++oy)
        for (int ox = 0; ox < wo; ++ox) {
          double s = b[o];
          for (int i = 0; i < c; ++i)
            for (int ky = 0; ky < 3; ++ky)
              for (int kx = 0; kx < 3; ++kx) {
                const int iy = oy * 2 - 1 + ky, ix = ox * 2 - 1 + kx;
                if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
                s += wt.at(o, i, ky, kx) * x[(static_cast<std::size_t>(i) * h + iy) * w + ix];
              }
          if (l + 1 < net.convs.size() && s < 0.0) s *= 0.2;
          y[(static_cast<std::size_t>(o) * ho + oy) * wo + ox] = s;
        }
    x = std::move(y);
    c = co;
    h = ho;
    w = wo;
  }
  shape = {1, c, h, w};
  return x;
}

}  // namespace

TEST_CASE("mse loss") {
  const ag::Var a(Tensor({1, 3, 4, 4}, 0.25f));
  const ag::Var b(Tensor({1, 3, 4, 4}, -0.25f));
  CHECK(value(mse_loss(a, a)) == 0.0);
  CHECK(value(mse_loss(a, b)) == doctest::Approx(0.25).epsilon(1e-7));
  CounterRng rng(1);
  const ag::Var x(normal_tensor({2, 3, 4, 4}, rng)), y(normal_tensor({2, 3, 4, 4}, rng));
  CHECK(value(mse_loss(x, y)) == value(mse_loss(y, x)));
  CHECK_THROWS_AS(mse_loss(a, ag::Var(Tensor({1, 3, 4, 5}))), ShapeError);
}

TEST_CASE("generator adversarial loss") {
  CHECK(value(generator_adv_loss(logits({0.0f}))) == doctest::Approx(std::log(0.5)).epsilon(1e-6));
  CHECK(value(generator_adv_loss(logits({2.0f}))) < value(generator_adv_loss(logits({0.0f}))));
  const double big = value(generator_adv_loss(logits({80.0f})));
  CHECK(std::isfinite(big));
  CHECK(big == doctest::Approx(-80.0).epsilon(1e-6));
  CHECK(std::isfinite(value(generator_adv_loss(logits({-80.0f})))));
  CHECK(value(generator_adv_loss(logits({0.0f}), true)) == doctest::Approx(std::log(2.0)).epsilon(1e-6));
  CHECK(value(generator_adv_loss(logits({1.0f, -3.0f}))) ==
        doctest::Approx(0.5 * (std::log(1.0 - 1.0 / (1.0 + std::exp(-1.0))) + std::log(1.0 - 1.0 / (1.0 + std::exp(3.0)))))
            .epsilon(1e-6));
}

TEST_CASE("discriminator loss") {
  CHECK(value(discriminator_loss(logits({0.0f}), logits({0.0f}))) == doctest::Approx(2.0 * std::log(2.0)).epsilon(1e-6));
  CHECK(value(discriminator_loss(logits({-10.0f}), logits({10.0f}))) < 1e-4);
  CHECK(value(discriminator_loss(logits({0.0f}), logits({0.0f}))) >
        value(discriminator_loss(logits({-2.0f}), logits({2.0f}))));
  CHECK(std::isfinite(value(discriminator_loss(logits({100.0f}), logits({-100.0f})))));
}

TEST_CASE("loss gradients with respect to the prediction match finite differences") {
  CounterRng rng(2);
  auto pred = ag::Var(normal_tensor({1, 3, 8, 8}, rng, 0.5f), true);
  const ag::Var target(normal_tensor({1, 3, 8, 8}, rng, 0.5f));
  CHECK(check_gradients([&] { return mse_loss(pred, target); }, {{"pred", pred}}).max_rel_error < 1e-2);
  CHECK(check_gradients([&] { return perceptual_loss(pred, target); }, {{"pred", pred}}).max_rel_error < 1e-2);
  auto l = ag::Var(normal_tensor({3, 1}, rng, 2.0f), true);
  auto r = ag::Var(normal_tensor({3, 1}, rng, 2.0f), true);
  CHECK(check_gradients([&] { return generator_adv_loss(l); }, {{"l", l}}).max_rel_error < 1e-2);
  CHECK(check_gradients([&] { return discriminator_loss(l, r); }, {{"fake", l}, {"real", r}}).max_rel_error < 1e-2);
}

TEST_CASE("feature network is fixed by its seed") {
  const FeatureNet a = FeatureNet::create(), b = FeatureNet::create();
  const auto pa = a.parameters(), pb = b.parameters();
  REQUIRE(pa.size() == 10);
  for (std::size_t i = 0; i < pa.size(); ++i) {
    CHECK(pa[i].second.value() == pb[i].second.value());
    CHECK_FALSE(pa[i].second.requires_grad());
  }
  CHECK(FeatureNet::create(7).parameters()[0].second.value() != pa[0].second.value());
  CHECK(a.features(ag::Var(Tensor({1, 3, 32, 32}))).shape() == Shape{1, 64, 1, 1});
  CHECK(a.features(ag::Var(Tensor({2, 3, 64, 64}))).shape() == Shape{2, 64, 2, 2});
}

TEST_CASE("perceptual loss matches a reference forward pass") {
  const Tensor s0 = generate_synthetic_scene({0, 64, 0});
  const Tensor s1 = generate_synthetic_scene({1, 64, 0});
  const FeatureNet& net = FeatureNet::shared();
  Shape shape;
  const auto f0 = reference_features(s0, net, shape);
  const auto f1 = reference_features(s1, net, shape);
  CHECK(shape == Shape{1, 64, 2, 2});
  double ref = 0.0;
  for (std::size_t i = 0; i < f0.size(); ++i) ref += (f0[i] - f1[i]) * (f0[i] - f1[i]);
  ref /= static_cast<double>(f0.size());
  const double got = value(perceptual_loss(ag::Var(s0), ag::Var(s1)));
  CHECK(ref > 0.0);
  CHECK(got == doctest::Approx(ref).epsilon(1e-5));
}

TEST_CASE("perceptual loss properties") {
  CounterRng rng(3);
  const Tensor a = normal_tensor({3, 3, 16, 16}, rng, 0.5f), b = normal_tensor({3, 3, 16, 16}, rng, 0.5f);
  CHECK(value(perceptual_loss(ag::Var(a), ag::Var(a))) == 0.0);
  CHECK(value(perceptual_loss(ag::Var(a), ag::Var(b))) > 0.0);
  std::vector<Tensor> ai, bi;
  for (int i : {2, 0, 1}) {
    ai.push_back(a.item(i));
    bi.push_back(b.item(i));
  }
  const double perm = value(perceptual_loss(ag::Var(Tensor::stack(ai)), ag::Var(Tensor::stack(bi))));
  CHECK(perm == doctest::Approx(value(perceptual_loss(ag::Var(a), ag::Var(b)))).epsilon(1e-6));
  CHECK_THROWS_AS(perceptual_loss(ag::Var(a), ag::Var(Tensor({3, 3, 16, 8}))), ShapeError);
}

TEST_CASE("total generator loss composition") {
  CounterRng rng(4);
  const ag::Var pred(normal_tensor({2, 3, 32, 32}, rng, 0.5f)), target(normal_tensor({2, 3, 32, 32}, rng, 0.5f));
  const ag::Var fake = logits({0.3f, -1.2f});

  const LossReport d = total_generator_loss(pred, target, fake);
  CHECK(d.alpha_percep == 0.01);
  CHECK(d.alpha_gen == 0.01);
  CHECK(kDefaultAlphaPercep == 0.01);
  CHECK(kDefaultAlphaGen == 0.01);
  const double sum = d.l_mse + 0.01 * d.l_percep + 0.01 * d.l_gen;
  CHECK(std::abs(d.l_total - sum) <= 1e-6 * std::abs(sum));
  CHECK(std::abs(value(d.total) - sum) <= 1e-6 * std::abs(sum));
  CHECK(d.l_gen == doctest::Approx(value(generator_adv_loss(fake))));

  const LossReport z = total_generator_loss(pred, target, ag::Var(), 0.0, 0.0);
  CHECK(z.l_total == z.l_mse);
  CHECK(value(z.total) == z.l_mse);
  CHECK_THROWS_AS(total_generator_loss(pred, target, ag::Var(), 0.01, 0.01), InvalidArgument);
}
