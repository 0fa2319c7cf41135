#include "glean/losses.hpp"

#include "glean/errors.hpp"
#include "glean/imaging.hpp"

namespace glean {

FeatureNet FeatureNet::create(std::uint64_t seed) {
  CounterRng rng(seed, /*stream=*/0xfea7);
  FeatureNet net;
  const int widths[] = {3, 16, 32, 64, 64, 64};
  for (int i = 0; i < 5; ++i) net.convs.push_back(Conv2d::create(widths[i], widths[i + 1], 3, 2, rng));
  set_trainable(net.parameters(), false);
  return net;
}

const FeatureNet& FeatureNet::shared() {
  static const FeatureNet net = create(kFeatureNetSeed);
  return net;
}

ParamList FeatureNet::parameters() const {
  ParamList out;
  for (std::size_t i = 0; i < convs.size(); ++i) convs[i].collect("featnet.conv" + std::to_string(i), out);
  return out;
}

ag::Var FeatureNet::features(const ag::Var& img) const {
  const Tensor& t = img.value();
  if (t.rank() != 4 || t.c() != 3) throw ShapeError("feature net expects N×3×H×W, got " + shape_str(t.shape()));
  ag::Var h = img;
  if (t.h() < kFeatureNetMinInput || t.w() < kFeatureNetMinInput) {
    h = resize_bicubic(h, std::max(t.h(), kFeatureNetMinInput), std::max(t.w(), kFeatureNetMinInput));
  }
  for (std::size_t i = 0; i < convs.size(); ++i) {
    h = convs[i](h);
    if (i + 1 < convs.size()) h = ag::leaky_relu(h, kLeakySlope);
  }
  return h;
}

ag::Var mse_loss(const ag::Var& pred, const ag::Var& target) { return ag::mse(pred, target); }

ag::Var perceptual_loss(const ag::Var& pred, const ag::Var& target, const FeatureNet& net) {
  if (!pred.value().same_shape(target.value())) {
    throw ShapeError("perceptual_loss: " + shape_str(pred.shape()) + " vs " + shape_str(target.shape()));
  }
  return ag::mse(net.features(pred), net.features(target));
}

ag::Var generator_adv_loss(const ag::Var& fake_logits, bool non_saturating) {
  if (non_saturating) return ag::mean_softplus(fake_logits, -1.0f);
  return ag::scale(ag::mean_softplus(fake_logits, 1.0f), -1.0f);
}

ag::Var discriminator_loss(const ag::Var& fake_logits, const ag::Var& real_logits) {
  return ag::add(ag::mean_softplus(fake_logits, 1.0f), ag::mean_softplus(real_logits, -1.0f));
}

LossReport total_generator_loss(const ag::Var& pred, const ag::Var& target, const ag::Var& fake_logits,
                                double alpha_percep, double alpha_gen, const FeatureNet& net, bool non_saturating) {
  LossReport r;
  r.alpha_percep = alpha_percep;
  r.alpha_gen = alpha_gen;
  const ag::Var mse = mse_loss(pred, target);
  r.l_mse = mse.value()[0];
  ag::Var total = mse;

  const ag::Var percep = perceptual_loss(pred, target, net);
  r.l_percep = percep.value()[0];
  if (alpha_percep != 0.0) total = ag::lin_comb(total, 1.0f, percep, static_cast<float>(alpha_percep));

  if (fake_logits.defined()) {
    const ag::Var gen = generator_adv_loss(fake_logits, non_saturating);
    r.l_gen = gen.value()[0];
    if (alpha_gen != 0.0) total = ag::lin_comb(total, 1.0f, gen, static_cast<float>(alpha_gen));
  } else if (alpha_gen != 0.0) {
    throw InvalidArgument("adversarial weight is nonzero but no discriminator logits were given");
  }
  r.l_total = r.l_mse + alpha_percep * r.l_percep + alpha_gen * r.l_gen;
  r.total = total;
  return r;
}

}  // namespace glean
