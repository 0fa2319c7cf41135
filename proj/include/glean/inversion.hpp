#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include <json.hpp>

#include "glean/glean_model.hpp"
#include "glean/latent_bank.hpp"

namespace glean {

enum class LatentMode {
  Single,  // one d-vector broadcast to all k rows
  Multi,   // independent k×d matrix
};

struct InversionConfig {
  int steps = 200;
  double opt_lr = 0.05;
  LatentMode mode = LatentMode::Multi;
  int downsample_to = 0;  // 0: the LR input's own resolution
  std::uint64_t seed = 0;
  double latent_prior = 0.0;  // optional weight on mean ‖z‖²

  void validate() const;
};

std::string to_string(LatentMode mode);
LatentMode latent_mode_from_string(const std::string& s);

struct InversionResult {
  Tensor image;              // 1×3×out_res×out_res
  Tensor latents;            // 1×k×d
  std::vector<double> trace;  // objective per step (before that step's update)
};

/// Adam on the latent code minimizing mse(bicubic_resize(G(z), lr size), lr)
/// through the frozen bank.
InversionResult invert(const Tensor& lr, const LatentBank& bank, const InversionConfig& cfg);

/// Trailing moving average with the given window.
std::vector<double> smoothed(const std::vector<double>& trace, int window);

void write_trace(const std::vector<double>& trace, const std::filesystem::path& path);

struct SpeedReport {
  double glean_ms = 0.0;
  double invert_ms = 0.0;
  double ratio = 0.0;
  int steps = 0;
  int images = 0;

  nlohmann::json to_json() const;
};

/// Mean wall-clock per image of glean_forward versus invert on the same inputs.
SpeedReport compare_speed(const std::vector<Tensor>& lr_batch, const GleanModel& model, const InversionConfig& cfg);

}  // namespace glean
