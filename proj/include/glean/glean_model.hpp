#pragma once

#include <cstdint>
#include <filesystem>
#include <utility>

#include "glean/blocks.hpp"
#include "glean/latent_bank.hpp"

namespace glean {

/// Architecture, ablation switches and generator loss weights.
/// Depth fields set to -1 resolve to their maximum (no ablation).
struct GleanConfig {
  int scale = 4;
  int lr_res = 8;
  int latent_dim = 128;
  int base_channels = 32;  // stem, RRDB and every pyramid level
  int growth = 16;
  int rrdb_blocks = 4;
  int decoder_channels = 16;
  int bank_max_width = 256;
  int bank_min_width = 16;
  int enc_inject_depth = -1;    // 0…N+1 encoder features fed to the bank, coarse-first
  int bank_feature_depth = -1;  // 0…log2(scale)+1 bank features fed to the decoder, coarse-first
  bool use_decoder = true;
  double alpha_percep = 1e-2;
  double alpha_gen = 1e-2;
  bool non_saturating = false;
  std::uint64_t seed = 0;  // parameter initialization

  int hr_res() const { return scale * lr_res; }
  /// N = log2(lr_res / 4): index of the 4×4 pyramid level.
  int encoder_depth() const;
  /// k = log2(hr_res / 4) + 1.
  int bank_levels() const;
  /// Decoder fusion points at lr_res, 2·lr_res, …, hr_res.
  int decoder_levels() const;
  BankConfig bank_config() const;

  /// Validates and replaces -1 depths with their maxima.
  GleanConfig resolved() const;
};

struct Encoder {
  Conv2d stem;
  Rrdb rrdb;
  std::vector<std::pair<Conv2d, Conv2d>> downs;  // E_1…E_N: stride-2 then stride-1
  Conv2d latent_conv;
  Linear latent_fc;

  void collect(ParamList& out) const;
};

struct Decoder {
  Conv2d first;                // D_0: base → decoder_channels at lr_res
  std::vector<Conv2d> fusions;  // one per ×2 step; output 4·decoder_channels before pixel shuffle
  Conv2d out;                  // 3×3 → 3 at hr_res

  void collect(ParamList& out) const;
};

struct GleanModel {
  GleanConfig config;
  Encoder encoder;
  LatentBank bank;
  Decoder decoder;

  /// Fresh encoder/decoder around `bank`; attaches fusion convs for levels ≤ lr_res and freezes the bank.
  static GleanModel create(const GleanConfig& config, LatentBank bank);

  ParamList parameters() const;
  /// Encoder, trainable fusion convs and decoder.
  ParamList trainable_parameters() const;
};

struct Encoded {
  FeaturePyramid features;  // f_0…f_N
  ag::Var latents;          // N×k×d
};

Encoded encode(const ag::Var& lr, const GleanModel& model);

/// Progressive fusion decoder; levels beyond bank_feature_depth use the previous decoder state alone.
ag::Var decode(const ag::Var& f0, const BankFeaturePyramid& bank_feats, const GleanModel& model);

/// Keeps the `depth` coarsest pyramid entries (f_N, f_{N−1}, …) and masks the rest.
FeaturePyramid mask_features(const FeaturePyramid& feats, int depth);

ag::Var glean_forward(const ag::Var& lr, const GleanModel& model);
Tensor glean_forward(const Tensor& lr, const GleanModel& model);

/// Exact parameter count; include_frozen=false omits the frozen bank weights.
std::size_t count_parameters(const GleanModel& model, bool include_frozen);

void save_glean(const GleanModel& model, const std::filesystem::path& path, const ParamList& extra = {},
                const nlohmann::json& extra_config = nlohmann::json::object());
GleanModel glean_from_checkpoint(const CheckpointData& data);
GleanModel load_glean(const std::filesystem::path& path);

}  // namespace glean
