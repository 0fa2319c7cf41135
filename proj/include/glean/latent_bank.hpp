#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "glean/blocks.hpp"
#include "glean/checkpoint.hpp"

namespace glean {

/// Encoder features f_0…f_N (finest first). Undefined entries are masked out.
using FeaturePyramid = std::vector<ag::Var>;
/// Bank features g_0…g_{k−1} at 4, 8, …, out_res.
using BankFeaturePyramid = std::vector<ag::Var>;

struct BankConfig {
  int out_res = 32;
  int latent_dim = 128;
  int max_width = 256;  // width at 4×4; halves per level
  int min_width = 16;

  /// k = log2(out_res / 4) + 1.
  int num_levels() const;
  int width(int level) const;
  int resolution(int level) const { return 4 << level; }
  void validate() const;
};

/// One resolution level: two styled convs sharing the level's latent vector,
/// plus an optional fusion conv for encoder features.
struct BankLevel {
  StyleBlock conv1;  // upsamples for levels > 0
  StyleBlock conv2;
  std::optional<Conv2d> fusion;
};

struct LatentBank {
  BankConfig config;
  ag::Var constant;  // 1×width(0)×4×4 learned input
  std::vector<BankLevel> levels;
  Conv2d to_rgb;  // 1×1, last width → 3
  bool frozen = false;

  static LatentBank create(const BankConfig& config, std::uint64_t seed);

  /// Adds a pass-through-initialized fusion conv for `enc_ch`-channel features at `level`.
  void attach_fusion(int level, int enc_ch, CounterRng& rng);

  /// Pretrained generator weights (everything except fusion convs).
  ParamList core_parameters() const;
  ParamList fusion_parameters() const;
  ParamList parameters() const;
  /// Parameters an optimizer may update: all when unfrozen, fusion convs only when frozen.
  ParamList trainable_parameters() const;
};

/// Marks the pretrained weights frozen; fusion convs stay trainable.
LatentBank freeze(LatentBank bank);

/// Runs the augmented style blocks. Level i receives f_{N−i} while N−i ≥ 0
/// and that entry is defined; an empty pyramid means pure generation.
BankFeaturePyramid bank_forward(const ag::Var& latents, const FeaturePyramid& feats, const LatentBank& bank);

/// tanh(to_rgb(g)) for the finest bank feature.
ag::Var bank_to_image(const ag::Var& finest_feature, const LatentBank& bank);

/// bank_forward without encoder features followed by bank_to_image.
ag::Var bank_generate(const ag::Var& latents, const LatentBank& bank);

/// Standard-normal latent matrix N×k×d.
Tensor sample_latents(int batch, const BankConfig& config, CounterRng& rng);

void save_bank(const LatentBank& bank, const std::filesystem::path& path, const ParamList& extra = {},
               const nlohmann::json& extra_config = nlohmann::json::object());
LatentBank bank_from_checkpoint(const CheckpointData& data, const std::string& prefix = "bank");
LatentBank load_bank(const std::filesystem::path& path);

}  // namespace glean
