#include "glean/blocks.hpp"

#include <algorithm>
#include <cmath>

#include "glean/errors.hpp"

namespace glean {

std::size_t count_elements(const ParamList& params) {
  std::size_t n = 0;
  for (const auto& [name, v] : params) n += v.value().numel();
  return n;
}

void set_trainable(const ParamList& params, bool trainable) {
  for (const auto& [name, v] : params) {
    ag::Var p = v;
    p.set_requires_grad(trainable);
  }
}

std::size_t conv_parameter_count(int in_ch, int out_ch, int kernel) {
  return static_cast<std::size_t>(in_ch) * out_ch * kernel * kernel + out_ch;
}

Conv2d Conv2d::create(int in_ch, int out_ch, int kernel, int stride, CounterRng& rng, float gain) {
  const float std = gain * std::sqrt(2.0f / static_cast<float>(in_ch * kernel * kernel));
  Conv2d c;
  c.weight = ag::Var(normal_tensor({out_ch, in_ch, kernel, kernel}, rng, std), true);
  c.bias = ag::Var(Tensor({out_ch}), true);
  c.stride = stride;
  c.pad = kernel / 2;
  return c;
}

ag::Var Conv2d::operator()(const ag::Var& x) const { return ag::conv2d(x, weight, bias, stride, pad); }

void Conv2d::collect(const std::string& prefix, ParamList& out) const {
  out.emplace_back(prefix + ".weight", weight);
  out.emplace_back(prefix + ".bias", bias);
}

Linear Linear::create(int in_f, int out_f, CounterRng& rng, float gain) {
  Linear l;
  l.weight = ag::Var(normal_tensor({out_f, in_f}, rng, gain / std::sqrt(static_cast<float>(in_f))), true);
  l.bias = ag::Var(Tensor({out_f}), true);
  return l;
}

ag::Var Linear::operator()(const ag::Var& x) const { return ag::linear(x, weight, bias); }

void Linear::collect(const std::string& prefix, ParamList& out) const {
  out.emplace_back(prefix + ".weight", weight);
  out.emplace_back(prefix + ".bias", bias);
}

Rrdb Rrdb::create(int channels, int growth, int num_blocks, CounterRng& rng) {
  Rrdb r;
  r.channels = channels;
  r.growth = growth;
  for (int b = 0; b < num_blocks; ++b) {
    DenseUnit u;
    u.c1 = Conv2d::create(channels, growth, 3, 1, rng);
    u.c2 = Conv2d::create(channels + growth, growth, 3, 1, rng);
    u.c3 = Conv2d::create(channels + 2 * growth, channels, 3, 1, rng, 0.1f);
    r.blocks.push_back(std::move(u));
  }
  return r;
}

void Rrdb::collect(const std::string& prefix, ParamList& out) const {
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    const std::string p = prefix + ".block" + std::to_string(b);
    blocks[b].c1.collect(p + ".conv1", out);
    blocks[b].c2.collect(p + ".conv2", out);
    blocks[b].c3.collect(p + ".conv3", out);
  }
}

void Rrdb::zero_output_convs() {
  for (auto& u : blocks) {
    u.c3.weight.mutable_value().fill(0.0f);
    u.c3.bias.mutable_value().fill(0.0f);
  }
}

ag::Var rrdb_forward(const ag::Var& x, const Rrdb& params) {
  if (x.value().rank() != 4 || x.value().c() != params.channels) {
    throw ShapeError("rrdb_forward: expected " + std::to_string(params.channels) + " channels, got " + shape_str(x.shape()));
  }
  ag::Var h = x;
  for (const auto& u : params.blocks) {
    const ag::Var x1 = ag::leaky_relu(u.c1(h), kLeakySlope);
    const ag::Var hx1 = ag::concat_channels(h, x1);
    const ag::Var x2 = ag::leaky_relu(u.c2(hx1), kLeakySlope);
    const ag::Var x3 = u.c3(ag::concat_channels(hx1, x2));
    h = ag::lin_comb(h, 1.0f, x3, kResidualScale);
  }
  // x + 0.2·(h − x)
  return ag::lin_comb(x, 1.0f, ag::sub(h, x), kResidualScale);
}

StyleBlock StyleBlock::create(int in_ch, int out_ch, int latent_dim, bool upsample, CounterRng& rng) {
  StyleBlock s;
  s.affine = Linear::create(latent_dim, 2 * out_ch, rng, 0.5f);
  s.conv = Conv2d::create(in_ch, out_ch, 3, 1, rng);
  s.upsample = upsample;
  return s;
}

void StyleBlock::collect(const std::string& prefix, ParamList& out) const {
  affine.collect(prefix + ".affine", out);
  conv.collect(prefix + ".conv", out);
}

ag::Var style_block_forward(const ag::Var& x, const ag::Var& latent, const StyleBlock& params) {
  if (latent.value().rank() != 2 || latent.shape()[1] != params.latent_dim()) {
    throw ShapeError("style block latent " + shape_str(latent.shape()) + " but latent dim " +
                     std::to_string(params.latent_dim()));
  }
  if (x.value().rank() != 4 || latent.shape()[0] != x.shape()[0]) {
    throw ShapeError("style block batch mismatch: " + shape_str(x.shape()) + " vs latent " + shape_str(latent.shape()));
  }
  ag::Var h = params.upsample ? ag::upsample_nearest2x(x) : x;
  h = ag::instance_norm(params.conv(h));
  h = ag::modulate(h, params.affine(latent));
  return ag::leaky_relu(h, kLeakySlope);
}

Conv2d make_fusion_conv(int out_ch, int enc_ch, CounterRng& rng) {
  Conv2d c = Conv2d::create(out_ch + enc_ch, out_ch, 3, 1, rng);
  Tensor& w = c.weight.mutable_value();
  w.fill(0.0f);
  for (int o = 0; o < out_ch; ++o) w.at(o, o, 1, 1) = 1.0f;
  return c;
}

Conv2d make_subpixel_conv(int in_ch, int out_ch, int r, CounterRng& rng) {
  Conv2d c = Conv2d::create(in_ch, out_ch * r * r, 3, 1, rng);
  Tensor& w = c.weight.mutable_value();
  const std::size_t kernel_size = static_cast<std::size_t>(in_ch) * 9;
  for (int o = 0; o < out_ch * r * r; ++o) {
    const int src = (o / (r * r)) * r * r;
    std::copy_n(w.data() + src * kernel_size, kernel_size, w.data() + o * kernel_size);
  }
  return c;
}

ag::Var fuse_features(const ag::Var& styled, const ag::Var& enc_feature, const Conv2d& fusion) {
  const Tensor& s = styled.value();
  const Tensor& e = enc_feature.value();
  if (e.rank() != 4 || e.n() != s.n() || e.h() != s.h() || e.w() != s.w()) {
    throw ShapeError("encoder feature " + shape_str(e.shape()) + " does not match styled output " + shape_str(s.shape()));
  }
  if (fusion.in_channels() != s.c() + e.c()) {
    throw ShapeError("fusion conv expects " + std::to_string(fusion.in_channels()) + " input channels, got " +
                     std::to_string(s.c() + e.c()));
  }
  return fusion(ag::concat_channels(styled, enc_feature));
}

ag::Var augmented_style_block_forward(const ag::Var& x_prev, const ag::Var& latent, const ag::Var& enc_feature,
                                      const StyleBlock& params, const Conv2d* fusion) {
  const ag::Var styled = style_block_forward(x_prev, latent, params);
  if (!enc_feature.defined()) return styled;
  if (!fusion) throw InvalidArgument("encoder feature supplied to a block without a fusion conv");
  return fuse_features(styled, enc_feature, *fusion);
}

Discriminator Discriminator::create(int resolution, CounterRng& rng) {
  if (resolution < 8 || (resolution & (resolution - 1)) != 0) {
    throw InvalidArgument("discriminator resolution must be a power of two >= 8");
  }
  Discriminator d;
  d.resolution = resolution;
  int in_ch = 3, ch = 32;
  for (int r = resolution; r > 4; r /= 2) {
    d.convs.push_back(Conv2d::create(in_ch, ch, 3, 2, rng));
    in_ch = ch;
    ch = std::min(ch * 2, 256);
  }
  d.head = Linear::create(in_ch * 16, 1, rng, 0.1f);
  return d;
}

void Discriminator::collect(const std::string& prefix, ParamList& out) const {
  for (std::size_t i = 0; i < convs.size(); ++i) convs[i].collect(prefix + ".conv" + std::to_string(i), out);
  head.collect(prefix + ".head", out);
}

ag::Var discriminator_forward(const ag::Var& img, const Discriminator& params) {
  const Tensor& t = img.value();
  if (t.rank() != 4 || t.c() != 3 || t.h() != params.resolution || t.w() != params.resolution) {
    throw ShapeError("discriminator expects N×3×" + std::to_string(params.resolution) + "×" +
                     std::to_string(params.resolution) + ", got " + shape_str(t.shape()));
  }
  ag::Var h = img;
  for (const auto& c : params.convs) h = ag::leaky_relu(c(h), kLeakySlope);
  return params.head(ag::flatten(h));
}

}  // namespace glean
