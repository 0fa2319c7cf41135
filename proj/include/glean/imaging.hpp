#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "glean/autograd.hpp"
#include "glean/tensor.hpp"

namespace glean {

/// Parameters of one synthetic scene. n_shapes = 0 means "draw 3–6 from seed".
struct SceneSpec {
  std::uint64_t seed = 0;
  int size = 64;
  int n_shapes = 0;

  bool operator==(const SceneSpec&) const = default;
};

/// Resolves n_shapes when it was left to the seed.
SceneSpec resolve_scene_spec(SceneSpec spec);

/// Two-color linear-gradient background plus anti-aliased rotated ellipses.
/// Returns a 1×3×size×size tensor in [−1, 1]; a pure function of the spec.
Tensor generate_synthetic_scene(const SceneSpec& spec);

/// Deterministic scene specs for a corpus: scene i gets a seed hashed from (seed, i).
std::vector<SceneSpec> corpus_specs(std::uint64_t seed, int count, int size);

/// Separable resampling weights along one axis.
struct ResampleAxis {
  int in = 0;
  int out = 0;
  int taps = 0;
  std::vector<int> index;      // out × taps, already border-reflected
  std::vector<float> weights;  // out × taps, each row sums to 1
};

/// Cubic convolution kernel with a = −0.5 (Keys / Catmull-Rom family).
double cubic_kernel(double x);

/// Area-aligned bicubic weights; when shrinking, the kernel is widened by the
/// inverse scale (anti-aliasing). Borders use half-sample symmetric reflection.
ResampleAxis bicubic_axis(int in, int out);

/// Bicubic resize of an N×C×H×W tensor, output clamped to [−1, 1].
Tensor bicubic_resize(const Tensor& img, int out_h, int out_w);

/// Differentiable counterpart of bicubic_resize (gradient masked where clamped).
ag::Var resize_bicubic(const ag::Var& img, int out_h, int out_w);

struct PairedSample {
  Tensor lr;
  Tensor hr;
  int scale = 1;
};

PairedSample make_pair(const Tensor& hr, int scale);

/// 8-bit RGB PNG; [−1,1] ↦ round((v+1)·127.5).
void save_image(const Tensor& img, const std::filesystem::path& path);
Tensor load_image(const std::filesystem::path& path);

/// Byte quantization used by save_image, exposed for tests and `--quantize`.
std::uint8_t to_byte(float v);
float from_byte(std::uint8_t b);

}  // namespace glean
