#include "glean/glean_model.hpp"

#include <bit>

#include "glean/config.hpp"
#include "glean/errors.hpp"

namespace glean {

namespace {
bool pow2(int v) { return v > 0 && std::has_single_bit(static_cast<unsigned>(v)); }
int log2i(int v) { return std::countr_zero(static_cast<unsigned>(v)); }
}  // namespace

int GleanConfig::encoder_depth() const { return log2i(lr_res / 4); }
int GleanConfig::bank_levels() const { return log2i(hr_res() / 4) + 1; }
int GleanConfig::decoder_levels() const { return log2i(scale) + 1; }

BankConfig GleanConfig::bank_config() const { return {hr_res(), latent_dim, bank_max_width, bank_min_width}; }

GleanConfig GleanConfig::resolved() const {
  if (!pow2(scale) || scale < 2) throw InvalidArgument("scale must be a power of two >= 2, got " + std::to_string(scale));
  if (!pow2(lr_res) || lr_res < 4) throw InvalidArgument("lr_res must be a power of two >= 4, got " + std::to_string(lr_res));
  if (latent_dim < 1 || base_channels < 1 || growth < 1 || rrdb_blocks < 0 || decoder_channels < 1) {
    throw InvalidArgument("model widths must be positive");
  }
  GleanConfig c = *this;
  const int max_inject = encoder_depth() + 1;
  const int max_bank = decoder_levels();
  if (c.enc_inject_depth < 0) c.enc_inject_depth = max_inject;
  if (c.bank_feature_depth < 0) c.bank_feature_depth = max_bank;
  if (c.enc_inject_depth > max_inject) {
    throw InvalidArgument("enc_inject_depth " + std::to_string(c.enc_inject_depth) + " exceeds " + std::to_string(max_inject));
  }
  if (c.bank_feature_depth > max_bank) {
    throw InvalidArgument("bank_feature_depth " + std::to_string(c.bank_feature_depth) + " exceeds " + std::to_string(max_bank));
  }
  return c;
}

void Encoder::collect(ParamList& out) const {
  stem.collect("encoder.stem", out);
  rrdb.collect("encoder.rrdb", out);
  for (std::size_t i = 0; i < downs.size(); ++i) {
    downs[i].first.collect("encoder.down" + std::to_string(i + 1) + ".conv_s2", out);
    downs[i].second.collect("encoder.down" + std::to_string(i + 1) + ".conv_s1", out);
  }
  latent_conv.collect("encoder.latent_conv", out);
  latent_fc.collect("encoder.latent_fc", out);
}

void Decoder::collect(ParamList& out_params) const {
  first.collect("decoder.first", out_params);
  for (std::size_t i = 0; i < fusions.size(); ++i) fusions[i].collect("decoder.fuse" + std::to_string(i), out_params);
  out.collect("decoder.out", out_params);
}

GleanModel GleanModel::create(const GleanConfig& raw, LatentBank bank) {
  const GleanConfig cfg = raw.resolved();
  const BankConfig expected = cfg.bank_config();
  if (bank.config.out_res != expected.out_res || bank.config.latent_dim != expected.latent_dim ||
      bank.config.max_width != expected.max_width || bank.config.min_width != expected.min_width) {
    throw InvalidArgument("bank configuration does not match model (bank out_res " + std::to_string(bank.config.out_res) +
                          ", model hr_res " + std::to_string(cfg.hr_res()) + ")");
  }
  CounterRng rng(cfg.seed, /*stream=*/0xe2c0);
  GleanModel m;
  m.config = cfg;
  const int c = cfg.base_channels;
  m.encoder.stem = Conv2d::create(3, c, 3, 1, rng);
  m.encoder.rrdb = Rrdb::create(c, cfg.growth, cfg.rrdb_blocks, rng);
  for (int i = 0; i < cfg.encoder_depth(); ++i) {
    m.encoder.downs.emplace_back(Conv2d::create(c, c, 3, 2, rng), Conv2d::create(c, c, 3, 1, rng));
  }
  m.encoder.latent_conv = Conv2d::create(c, c, 3, 1, rng);
  m.encoder.latent_fc = Linear::create(c * 16, cfg.bank_levels() * cfg.latent_dim, rng);

  const int dc = cfg.decoder_channels;
  m.decoder.first = Conv2d::create(c, dc, 3, 1, rng);
  const BankConfig bc = cfg.bank_config();
  auto bank_width_at = [&](int res) { return bc.width(log2i(res / 4)); };
  for (int j = 0; j + 1 < cfg.decoder_levels(); ++j) {
    const int res = cfg.lr_res << j;
    const int in = dc + (j < cfg.bank_feature_depth ? bank_width_at(res) : 0);
    m.decoder.fusions.push_back(make_subpixel_conv(in, dc, 2, rng));
  }
  const int last = cfg.decoder_levels() - 1;
  const int out_in = dc + (last < cfg.bank_feature_depth ? bank_width_at(cfg.hr_res()) : 0);
  m.decoder.out = Conv2d::create(out_in, 3, 3, 1, rng, 0.5f);

  for (int i = 0; i <= cfg.encoder_depth(); ++i) {
    if (!bank.levels[i].fusion) bank.attach_fusion(i, c, rng);
  }
  m.bank = freeze(std::move(bank));
  return m;
}

ParamList GleanModel::parameters() const {
  ParamList out;
  encoder.collect(out);
  for (auto& p : bank.parameters()) out.push_back(std::move(p));
  decoder.collect(out);
  return out;
}

ParamList GleanModel::trainable_parameters() const {
  ParamList out;
  encoder.collect(out);
  for (auto& p : bank.trainable_parameters()) out.push_back(std::move(p));
  decoder.collect(out);
  return out;
}

Encoded encode(const ag::Var& lr, const GleanModel& model) {
  const GleanConfig& cfg = model.config;
  const Tensor& t = lr.value();
  if (t.rank() != 4 || t.c() != 3 || t.h() != cfg.lr_res || t.w() != cfg.lr_res) {
    throw ShapeError("encoder expects N×3×" + std::to_string(cfg.lr_res) + "×" + std::to_string(cfg.lr_res) + ", got " +
                     shape_str(t.shape()));
  }
  Encoded e;
  ag::Var f = rrdb_forward(model.encoder.stem(lr), model.encoder.rrdb);
  e.features.push_back(f);
  for (const auto& [s2, s1] : model.encoder.downs) {
    f = ag::leaky_relu(s2(f), kLeakySlope);
    f = ag::leaky_relu(s1(f), kLeakySlope);
    e.features.push_back(f);
  }
  const ag::Var h = ag::leaky_relu(model.encoder.latent_conv(f), kLeakySlope);
  const ag::Var flat = model.encoder.latent_fc(ag::flatten(h));
  e.latents = ag::reshape(flat, {t.n(), cfg.bank_levels(), cfg.latent_dim});
  return e;
}

FeaturePyramid mask_features(const FeaturePyramid& feats, int depth) {
  FeaturePyramid out(feats.size());
  const int n = static_cast<int>(feats.size());
  for (int j = 0; j < std::min(depth, n); ++j) out[n - 1 - j] = feats[n - 1 - j];
  return out;
}

ag::Var decode(const ag::Var& f0, const BankFeaturePyramid& bank_feats, const GleanModel& model) {
  const GleanConfig& cfg = model.config;
  if (f0.value().rank() != 4 || f0.value().h() != cfg.lr_res) {
    throw ShapeError("decoder expects f_0 at " + std::to_string(cfg.lr_res) + ", got " + shape_str(f0.shape()));
  }
  auto bank_at = [&](int res) -> ag::Var {
    const std::size_t idx = static_cast<std::size_t>(log2i(res / 4));
    if (idx >= bank_feats.size() || !bank_feats[idx].defined()) {
      throw InvalidArgument("decoder requires a bank feature at " + std::to_string(res) + "×" + std::to_string(res));
    }
    const ag::Var& g = bank_feats[idx];
    if (g.value().h() != res) throw ShapeError("bank feature at level " + std::to_string(idx) + " has wrong resolution");
    return g;
  };

  ag::Var d = ag::leaky_relu(model.decoder.first(f0), kLeakySlope);
  for (int j = 0; j + 1 < cfg.decoder_levels(); ++j) {
    const int res = cfg.lr_res << j;
    const ag::Var in = j < cfg.bank_feature_depth ? ag::concat_channels(d, bank_at(res)) : d;
    d = ag::leaky_relu(ag::pixel_shuffle(model.decoder.fusions[j](in), 2), kLeakySlope);
  }
  const int last = cfg.decoder_levels() - 1;
  const ag::Var in = last < cfg.bank_feature_depth ? ag::concat_channels(d, bank_at(cfg.hr_res())) : d;
  return ag::tanh(model.decoder.out(in));
}

ag::Var glean_forward(const ag::Var& lr, const GleanModel& model) {
  const GleanConfig& cfg = model.config;
  const Encoded e = encode(lr, model);
  const BankFeaturePyramid g = bank_forward(e.latents, mask_features(e.features, cfg.enc_inject_depth), model.bank);
  if (!cfg.use_decoder) return bank_to_image(g.back(), model.bank);
  return decode(e.features.front(), g, model);
}

Tensor glean_forward(const Tensor& lr, const GleanModel& model) {
  ag::NoGradGuard guard;
  return glean_forward(ag::Var(lr), model).value();
}

std::size_t count_parameters(const GleanModel& model, bool include_frozen) {
  return count_elements(include_frozen ? model.parameters() : model.trainable_parameters());
}

void save_glean(const GleanModel& model, const std::filesystem::path& path, const ParamList& extra,
                const nlohmann::json& extra_config) {
  ParamList params = model.parameters();
  for (const auto& p : extra) params.push_back(p);
  nlohmann::json config = extra_config;
  config["model"] = to_json(model.config);
  config["bank"] = to_json(model.bank.config);
  write_checkpoint(path, "glean", config, {{"frozen", model.bank.frozen}}, params);
}

GleanModel glean_from_checkpoint(const CheckpointData& data) {
  if (data.kind != "glean") throw CheckpointError("expected a glean checkpoint, found '" + data.kind + "'");
  const GleanConfig cfg = glean_config_from_json(data.config.at("model"));
  GleanModel m = GleanModel::create(cfg, bank_from_checkpoint(data));
  assign_parameters(data, m.parameters());
  return m;
}

GleanModel load_glean(const std::filesystem::path& path) { return glean_from_checkpoint(read_checkpoint(path)); }

}  // namespace glean
