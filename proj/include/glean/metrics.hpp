#pragma once

#include <functional>
#include <limits>
#include <string>
#include <vector>

#include <json.hpp>

#include "glean/tensor.hpp"

namespace glean {

inline constexpr double kPsnrInfinity = std::numeric_limits<double>::infinity();

/// PSNR in dB after mapping [−1,1] to real-valued [0,255]; identical inputs give +∞.
double psnr(const Tensor& a, const Tensor& b, double peak = 255.0);

/// PSNR from an MSE already expressed in the peak's units.
double psnr_from_mse(double mse, double peak = 255.0);

/// Perceptual distance under the frozen feature net (same code path as perceptual_loss).
double perceptual_distance(const Tensor& a, const Tensor& b);

/// Global-average-pooled final feature map of the frozen feature net, one row per batch item.
std::vector<std::vector<double>> embedding(const Tensor& img);

/// Cosine of two vectors; 0 when either has zero norm.
double cosine_similarity(const std::vector<double>& a, const std::vector<double>& b);

/// Mean over batch items of the embedding cosine similarity.
double embedding_cosine(const Tensor& a, const Tensor& b);

/// Rounds through 8-bit storage, reproducing file-based evaluation.
Tensor quantize_8bit(const Tensor& img);

struct MetricRow {
  std::string id;
  double psnr = 0.0;
  double lpips_proxy = 0.0;
  double embcos_proxy = 0.0;
};

struct EvalTable {
  std::string method;
  std::string split;
  std::vector<MetricRow> rows;
  MetricRow means;  // id = "mean"

  nlohmann::json to_json() const;
  /// Aligned text table: one line per image plus the mean row.
  std::string to_text() const;
};

/// Maps an LR image (1×3×h×w) to an SR image (1×3×sh×sw).
using Upscaler = std::function<Tensor(const Tensor&)>;

/// Per-image metrics for `upscale(make_pair(hr, scale).lr)` against hr, plus
/// index-order means.
EvalTable evaluate_split(const std::string& method, const std::string& split, const std::vector<std::string>& ids,
                         const std::vector<Tensor>& hr_images, int scale, const Upscaler& upscale,
                         bool quantize = false);

/// Bicubic enlargement of an LR image by `scale`.
Upscaler bicubic_upscaler(int scale);

/// JSON numbers cannot hold ±∞; those are written as the strings "inf" / "-inf".
nlohmann::json json_number(double v);

}  // namespace glean
