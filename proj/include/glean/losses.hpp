#pragma once

#include <cstdint>

#include "glean/blocks.hpp"

namespace glean {

inline constexpr double kDefaultAlphaPercep = 1e-2;
inline constexpr double kDefaultAlphaGen = 1e-2;
inline constexpr std::uint64_t kFeatureNetSeed = 2021;
inline constexpr int kFeatureNetMinInput = 32;

/// Fixed random convolutional feature extractor: five stride-2 3×3 convs
/// 3→16→32→64→64→64 with LeakyReLU(0.2) between them. Weights come from a
/// counter-based generator, so they are identical everywhere for one seed.
struct FeatureNet {
  std::vector<Conv2d> convs;

  static FeatureNet create(std::uint64_t seed = kFeatureNetSeed);
  /// Process-wide instance for the default seed.
  static const FeatureNet& shared();

  ParamList parameters() const;
  /// Final feature map; inputs smaller than 32×32 are bicubically enlarged first.
  ag::Var features(const ag::Var& img) const;
};

ag::Var mse_loss(const ag::Var& pred, const ag::Var& target);

/// Mean squared difference of final-layer features.
ag::Var perceptual_loss(const ag::Var& pred, const ag::Var& target, const FeatureNet& net = FeatureNet::shared());

/// mean log(1 − σ(logit)) = −mean softplus(logit); the non-saturating
/// alternative is mean −log σ(logit) = mean softplus(−logit).
ag::Var generator_adv_loss(const ag::Var& fake_logits, bool non_saturating = false);

/// −[mean log(1−σ(fake)) + mean log σ(real)], minimized by the discriminator.
ag::Var discriminator_loss(const ag::Var& fake_logits, const ag::Var& real_logits);

struct LossReport {
  double l_mse = 0.0;
  double l_percep = 0.0;
  double l_gen = 0.0;
  double l_total = 0.0;
  double alpha_percep = kDefaultAlphaPercep;
  double alpha_gen = kDefaultAlphaGen;
  ag::Var total;  // differentiable l_total
};

/// l_total = l_mse + α_percep·l_percep + α_gen·l_gen. Terms with a zero weight
/// are still reported but do not enter the graph; `fake_logits` may be
/// undefined when α_gen is zero.
LossReport total_generator_loss(const ag::Var& pred, const ag::Var& target, const ag::Var& fake_logits,
                                double alpha_percep = kDefaultAlphaPercep, double alpha_gen = kDefaultAlphaGen,
                                const FeatureNet& net = FeatureNet::shared(), bool non_saturating = false);

}  // namespace glean
