#pragma once

#include <string>
#include <utility>
#include <vector>

#include "glean/autograd.hpp"
#include "glean/rng.hpp"

namespace glean {

inline constexpr float kLeakySlope = 0.2f;

/// Ordered (name, parameter) pairs; the order defines checkpoint layout.
using ParamList = std::vector<std::pair<std::string, ag::Var>>;

std::size_t count_elements(const ParamList& params);
void set_trainable(const ParamList& params, bool trainable);

struct Conv2d {
  ag::Var weight;  // out×in×k×k
  ag::Var bias;    // out
  int stride = 1;
  int pad = 1;

  /// Kaiming-normal weights scaled by `gain`, zero bias. Stride-1 convs keep resolution.
  static Conv2d create(int in_ch, int out_ch, int kernel, int stride, CounterRng& rng, float gain = 1.0f);

  int in_channels() const { return weight.shape()[1]; }
  int out_channels() const { return weight.shape()[0]; }
  int kernel() const { return weight.shape()[2]; }

  ag::Var operator()(const ag::Var& x) const;
  void collect(const std::string& prefix, ParamList& out) const;
};

/// in·out·k² + out.
std::size_t conv_parameter_count(int in_ch, int out_ch, int kernel);

struct Linear {
  ag::Var weight;  // out×in
  ag::Var bias;    // out

  static Linear create(int in_f, int out_f, CounterRng& rng, float gain = 1.0f);
  ag::Var operator()(const ag::Var& x) const;
  void collect(const std::string& prefix, ParamList& out) const;
};

// ---------------------------------------------------------------------------
// Residual-in-residual dense blocks.

/// Three densely connected 3×3 convs: base→g, base+g→g, base+2g→base.
struct DenseUnit {
  Conv2d c1, c2, c3;
};

struct Rrdb {
  int channels = 32;
  int growth = 16;
  std::vector<DenseUnit> blocks;

  static Rrdb create(int channels, int growth, int num_blocks, CounterRng& rng);
  void collect(const std::string& prefix, ParamList& out) const;
  /// Zeroes every dense unit's output conv, making the module the identity.
  void zero_output_convs();
};

inline constexpr float kResidualScale = 0.2f;

/// Each dense unit adds 0.2× its output to its input; the chain of units is
/// wrapped in an outer residual x + 0.2·(chain(x) − x). Resolution unchanged.
ag::Var rrdb_forward(const ag::Var& x, const Rrdb& params);

// ---------------------------------------------------------------------------
// Style-modulated convolution.

struct StyleBlock {
  Linear affine;  // latent d → 2·out_ch (γ | β)
  Conv2d conv;    // 3×3, stride 1
  bool upsample = false;

  static StyleBlock create(int in_ch, int out_ch, int latent_dim, bool upsample, CounterRng& rng);
  int out_channels() const { return conv.out_channels(); }
  int latent_dim() const { return affine.weight.shape()[1]; }
  void collect(const std::string& prefix, ParamList& out) const;
};

/// [×2 nearest upsample] → conv → instance norm → y·(1+γ)+β → LeakyReLU(0.2).
ag::Var style_block_forward(const ag::Var& x, const ag::Var& latent, const StyleBlock& params);

/// Fusion conv for an augmented style block: (out_ch + enc_ch) → out_ch,
/// initialized to pass the styled half through unchanged.
Conv2d make_fusion_conv(int out_ch, int enc_ch, CounterRng& rng);

/// 3×3 conv feeding pixel_shuffle(·, r): in_ch → out_ch·r², with the r² kernels
/// of each output channel initialized equal, so the shuffled result starts as
/// a nearest-neighbour upsample of an ordinary conv.
Conv2d make_subpixel_conv(int in_ch, int out_ch, int r, CounterRng& rng);

/// style_block_forward, then (when enc_feature is defined) channel concat with
/// enc_feature and the fusion conv back to out_ch.
ag::Var augmented_style_block_forward(const ag::Var& x_prev, const ag::Var& latent, const ag::Var& enc_feature,
                                      const StyleBlock& params, const Conv2d* fusion);

/// Applies `fusion` to concat(styled, enc_feature) after checking shapes.
ag::Var fuse_features(const ag::Var& styled, const ag::Var& enc_feature, const Conv2d& fusion);

// ---------------------------------------------------------------------------
// Discriminator.

struct Discriminator {
  int resolution = 0;
  std::vector<Conv2d> convs;  // stride-2, down to 4×4
  Linear head;                // flatten → 1

  static Discriminator create(int resolution, CounterRng& rng);
  void collect(const std::string& prefix, ParamList& out) const;
};

/// Raw logits, shape N×1.
ag::Var discriminator_forward(const ag::Var& img, const Discriminator& params);

}  // namespace glean
