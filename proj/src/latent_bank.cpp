#include "glean/latent_bank.hpp"

#include <bit>

#include "glean/config.hpp"
#include "glean/errors.hpp"

namespace glean {

int BankConfig::num_levels() const { return std::countr_zero(static_cast<unsigned>(out_res / 4)) + 1; }

int BankConfig::width(int level) const { return std::max(max_width >> level, min_width); }

void BankConfig::validate() const {
  if (out_res < 4 || !std::has_single_bit(static_cast<unsigned>(out_res))) {
    throw InvalidArgument("bank out_res must be a power of two >= 4, got " + std::to_string(out_res));
  }
  if (latent_dim < 1 || max_width < 1 || min_width < 1) throw InvalidArgument("bank dimensions must be positive");
}

LatentBank LatentBank::create(const BankConfig& config, std::uint64_t seed) {
  config.validate();
  CounterRng rng(seed, /*stream=*/0xba4c);
  LatentBank bank;
  bank.config = config;
  bank.constant = ag::Var(normal_tensor({1, config.width(0), 4, 4}, rng), true);
  int prev = config.width(0);
  for (int i = 0; i < config.num_levels(); ++i) {
    const int w = config.width(i);
    BankLevel level{StyleBlock::create(prev, w, config.latent_dim, i > 0, rng),
                    StyleBlock::create(w, w, config.latent_dim, false, rng), std::nullopt};
    bank.levels.push_back(std::move(level));
    prev = w;
  }
  bank.to_rgb = Conv2d::create(prev, 3, 1, 1, rng, 0.5f);
  return bank;
}

void LatentBank::attach_fusion(int level, int enc_ch, CounterRng& rng) {
  if (level < 0 || level >= static_cast<int>(levels.size())) throw InvalidArgument("fusion level out of range");
  levels[level].fusion = make_fusion_conv(config.width(level), enc_ch, rng);
}

ParamList LatentBank::core_parameters() const {
  ParamList out;
  out.emplace_back("bank.constant", constant);
  for (std::size_t i = 0; i < levels.size(); ++i) {
    const std::string p = "bank.level" + std::to_string(i);
    levels[i].conv1.collect(p + ".conv1", out);
    levels[i].conv2.collect(p + ".conv2", out);
  }
  to_rgb.collect("bank.to_rgb", out);
  return out;
}

ParamList LatentBank::fusion_parameters() const {
  ParamList out;
  for (std::size_t i = 0; i < levels.size(); ++i) {
    if (levels[i].fusion) levels[i].fusion->collect("bank.level" + std::to_string(i) + ".fusion", out);
  }
  return out;
}

ParamList LatentBank::parameters() const {
  ParamList out = core_parameters();
  for (auto& p : fusion_parameters()) out.push_back(std::move(p));
  return out;
}

ParamList LatentBank::trainable_parameters() const { return frozen ? fusion_parameters() : parameters(); }

LatentBank freeze(LatentBank bank) {
  bank.frozen = true;
  set_trainable(bank.core_parameters(), false);
  set_trainable(bank.fusion_parameters(), true);
  return bank;
}

BankFeaturePyramid bank_forward(const ag::Var& latents, const FeaturePyramid& feats, const LatentBank& bank) {
  const BankConfig& cfg = bank.config;
  const int k = cfg.num_levels();
  const Tensor& c = latents.value();
  if (c.rank() != 3 || c.dim(1) != k || c.dim(2) != cfg.latent_dim) {
    throw ShapeError("latent matrix " + shape_str(c.shape()) + " but bank expects N×" + std::to_string(k) + "×" +
                     std::to_string(cfg.latent_dim));
  }
  const int n = c.dim(0);
  const int depth = static_cast<int>(feats.size()) - 1;  // N
  if (!feats.empty()) {
    // The deepest entry may be masked (undefined) but must exist at 4×4 when provided.
    const ag::Var& deepest = feats.back();
    if (deepest.defined() && (deepest.value().rank() != 4 || deepest.value().h() != 4)) {
      throw InvalidArgument("feature pyramid is missing f_N at 4×4 (deepest level is " + shape_str(deepest.shape()) + ")");
    }
  }

  BankFeaturePyramid out;
  ag::Var h = ag::repeat_batch(bank.constant, n);
  for (int i = 0; i < k; ++i) {
    const BankLevel& level = bank.levels[i];
    const ag::Var latent = ag::select_row(latents, i);
    h = style_block_forward(h, latent, level.conv1);
    ag::Var enc;
    if (depth - i >= 0) enc = feats[depth - i];
    if (enc.defined()) {
      if (enc.value().h() != cfg.resolution(i)) {
        throw ShapeError("encoder feature " + shape_str(enc.shape()) + " does not match bank level " +
                         std::to_string(i) + " at " + std::to_string(cfg.resolution(i)));
      }
      if (!level.fusion) throw InvalidArgument("bank level " + std::to_string(i) + " has no fusion conv");
    }
    h = augmented_style_block_forward(h, latent, enc, level.conv2, level.fusion ? &*level.fusion : nullptr);
    out.push_back(h);
  }
  return out;
}

ag::Var bank_to_image(const ag::Var& finest_feature, const LatentBank& bank) { return ag::tanh(bank.to_rgb(finest_feature)); }

ag::Var bank_generate(const ag::Var& latents, const LatentBank& bank) {
  return bank_to_image(bank_forward(latents, {}, bank).back(), bank);
}

Tensor sample_latents(int batch, const BankConfig& config, CounterRng& rng) {
  return normal_tensor({batch, config.num_levels(), config.latent_dim}, rng);
}

void save_bank(const LatentBank& bank, const std::filesystem::path& path, const ParamList& extra,
               const nlohmann::json& extra_config) {
  ParamList params = bank.parameters();
  for (const auto& p : extra) params.push_back(p);
  nlohmann::json config = extra_config;
  config["bank"] = to_json(bank.config);
  write_checkpoint(path, "bank", config, {{"frozen", bank.frozen}}, params);
}

LatentBank bank_from_checkpoint(const CheckpointData& data, const std::string& prefix) {
  if (!data.config.contains("bank")) throw CheckpointError("checkpoint has no bank config");
  LatentBank bank = LatentBank::create(bank_config_from_json(data.config.at("bank")), 0);
  CounterRng rng(0);
  for (int i = 0; i < bank.config.num_levels(); ++i) {
    const std::string name = prefix + ".level" + std::to_string(i) + ".fusion.weight";
    if (data.has(name)) {
      const int in_ch = data.tensors.at(name).shape().at(1);
      bank.attach_fusion(i, in_ch - bank.config.width(i), rng);
    }
  }
  assign_parameters(data, bank.parameters());
  const bool frozen = data.metadata.value("frozen", false);
  return frozen ? freeze(std::move(bank)) : bank;
}

LatentBank load_bank(const std::filesystem::path& path) { return bank_from_checkpoint(read_checkpoint(path)); }

}  // namespace glean
