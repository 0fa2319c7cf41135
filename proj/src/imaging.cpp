#include "glean/imaging.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "glean/errors.hpp"
#include "glean/rng.hpp"

namespace glean {

namespace {

constexpr int kSuperSamples = 4;

bool is_power_of_two(int v) { return v > 0 && (v & (v - 1)) == 0; }

struct Ellipse {
  double cx, cy, rx, ry, cos_t, sin_t;
  float color[3];

  bool contains(double x, double y) const {
    const double dx = x - cx, dy = y - cy;
    const double u = (dx * cos_t + dy * sin_t) / rx;
    const double v = (-dx * sin_t + dy * cos_t) / ry;
    return u * u + v * v <= 1.0;
  }
};

}  // namespace

SceneSpec resolve_scene_spec(SceneSpec spec) {
  if (spec.n_shapes <= 0) {
    CounterRng rng(spec.seed, /*stream=*/1);
    spec.n_shapes = 3 + static_cast<int>(rng.below(4));
  }
  return spec;
}

Tensor generate_synthetic_scene(const SceneSpec& raw) {
  if (raw.size < 8 || !is_power_of_two(raw.size)) {
    throw InvalidArgument("scene size must be a power of two >= 8, got " + std::to_string(raw.size));
  }
  const SceneSpec spec = resolve_scene_spec(raw);
  const int s = spec.size;
  CounterRng rng(spec.seed, /*stream=*/2);

  float c0[3], c1[3];
  for (float& v : c0) v = static_cast<float>(rng.uniform(-0.9, 0.9));
  for (float& v : c1) v = static_cast<float>(rng.uniform(-0.9, 0.9));
  const double phi = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const double gx = std::cos(phi), gy = std::sin(phi);

  std::vector<Ellipse> shapes;
  for (int i = 0; i < spec.n_shapes; ++i) {
    Ellipse e{};
    e.cx = rng.uniform(0.15, 0.85) * s;
    e.cy = rng.uniform(0.15, 0.85) * s;
    e.rx = rng.uniform(0.08, 0.30) * s;
    e.ry = rng.uniform(0.08, 0.30) * s;
    const double theta = rng.uniform(0.0, std::numbers::pi);
    e.cos_t = std::cos(theta);
    e.sin_t = std::sin(theta);
    for (float& v : e.color) v = static_cast<float>(rng.uniform(-1.0, 1.0));
    shapes.push_back(e);
  }

  Tensor img({1, 3, s, s});
  const double inv_ss = 1.0 / (kSuperSamples * kSuperSamples);
  for (int y = 0; y < s; ++y)
    for (int x = 0; x < s; ++x) {
      const double u = (x + 0.5) / s - 0.5, v = (y + 0.5) / s - 0.5;
      const double t = std::clamp(0.5 + 0.7 * (u * gx + v * gy), 0.0, 1.0);
      double px[3];
      for (int c = 0; c < 3; ++c) px[c] = (1.0 - t) * c0[c] + t * c1[c];
      for (const auto& e : shapes) {
        int hits = 0;
        for (int sy = 0; sy < kSuperSamples; ++sy)
          for (int sx = 0; sx < kSuperSamples; ++sx) {
            hits += e.contains(x + (sx + 0.5) / kSuperSamples, y + (sy + 0.5) / kSuperSamples);
          }
        const double cover = hits * inv_ss;
        if (cover > 0.0) {
          for (int c = 0; c < 3; ++c) px[c] = (1.0 - cover) * px[c] + cover * e.color[c];
        }
      }
      for (int c = 0; c < 3; ++c) img.at(0, c, y, x) = static_cast<float>(std::clamp(px[c], -1.0, 1.0));
    }
  return img;
}

std::vector<SceneSpec> corpus_specs(std::uint64_t seed, int count, int size) {
  if (count < 0) throw InvalidArgument("negative corpus size");
  std::vector<SceneSpec> specs;
  specs.reserve(count);
  for (int i = 0; i < count; ++i) specs.push_back(resolve_scene_spec({hash_u64(seed, 0x5ce7e, i), size, 0}));
  return specs;
}

double cubic_kernel(double x) {
  constexpr double a = -0.5;
  const double ax = std::abs(x);
  if (ax <= 1.0) return ((a + 2.0) * ax - (a + 3.0)) * ax * ax + 1.0;
  if (ax < 2.0) return ((a * ax - 5.0 * a) * ax + 8.0 * a) * ax - 4.0 * a;
  return 0.0;
}

namespace {
int reflect_index(int i, int n) {
  const int period = 2 * n;
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - 1 - i;
}
}  // namespace

ResampleAxis bicubic_axis(int in, int out) {
  if (in < 1 || out < 1) throw InvalidArgument("resize sizes must be positive");
  ResampleAxis ax;
  ax.in = in;
  ax.out = out;
  const double scale = static_cast<double>(out) / in;
  const double support = scale < 1.0 ? 4.0 / scale : 4.0;
  ax.taps = static_cast<int>(std::ceil(support)) + 2;
  ax.index.resize(static_cast<std::size_t>(out) * ax.taps);
  ax.weights.resize(static_cast<std::size_t>(out) * ax.taps);
  for (int i = 0; i < out; ++i) {
    const double u = (i + 0.5) / scale - 0.5;
    const int left = static_cast<int>(std::floor(u - support / 2.0));
    std::vector<double> w(ax.taps);
    double total = 0.0;
    for (int j = 0; j < ax.taps; ++j) {
      const double dist = u - (left + j);
      w[j] = scale < 1.0 ? scale * cubic_kernel(scale * dist) : cubic_kernel(dist);
      total += w[j];
    }
    for (int j = 0; j < ax.taps; ++j) {
      ax.index[i * ax.taps + j] = reflect_index(left + j, in);
      ax.weights[i * ax.taps + j] = static_cast<float>(w[j] / total);
    }
  }
  return ax;
}

namespace {

// Unclamped separable resize: columns (W) first, then rows (H).
Tensor resample(const Tensor& img, const ResampleAxis& ay, const ResampleAxis& ax) {
  const int planes = img.n() * img.c();
  const int h = img.h(), w = img.w();
  Tensor out({img.n(), img.c(), ay.out, ax.out});
  std::vector<float> tmp(static_cast<std::size_t>(h) * ax.out);
  for (int p = 0; p < planes; ++p) {
    const float* src = img.data() + static_cast<std::size_t>(p) * h * w;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < ax.out; ++x) {
        double s = 0.0;
        for (int t = 0; t < ax.taps; ++t) s += static_cast<double>(ax.weights[x * ax.taps + t]) * src[y * w + ax.index[x * ax.taps + t]];
        tmp[y * ax.out + x] = static_cast<float>(s);
      }
    float* dst = out.data() + static_cast<std::size_t>(p) * ay.out * ax.out;
    for (int y = 0; y < ay.out; ++y)
      for (int x = 0; x < ax.out; ++x) {
        double s = 0.0;
        for (int t = 0; t < ay.taps; ++t) s += static_cast<double>(ay.weights[y * ay.taps + t]) * tmp[ay.index[y * ay.taps + t] * ax.out + x];
        dst[y * ax.out + x] = static_cast<float>(s);
      }
  }
  return out;
}

// Adjoint of resample: scatters an output-space gradient back to input space.
void resample_adjoint_add(const Tensor& grad_out, const ResampleAxis& ay, const ResampleAxis& ax, Tensor& grad_in) {
  const int planes = grad_in.n() * grad_in.c();
  const int h = grad_in.h(), w = grad_in.w();
  std::vector<float> tmp(static_cast<std::size_t>(h) * ax.out);
  for (int p = 0; p < planes; ++p) {
    std::fill(tmp.begin(), tmp.end(), 0.0f);
    const float* go = grad_out.data() + static_cast<std::size_t>(p) * ay.out * ax.out;
    for (int y = 0; y < ay.out; ++y)
      for (int x = 0; x < ax.out; ++x) {
        const float g = go[y * ax.out + x];
        for (int t = 0; t < ay.taps; ++t) tmp[ay.index[y * ay.taps + t] * ax.out + x] += ay.weights[y * ay.taps + t] * g;
      }
    float* gi = grad_in.data() + static_cast<std::size_t>(p) * h * w;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < ax.out; ++x) {
        const float g = tmp[y * ax.out + x];
        for (int t = 0; t < ax.taps; ++t) gi[y * w + ax.index[x * ax.taps + t]] += ax.weights[x * ax.taps + t] * g;
      }
  }
}

void check_resize_args(const Tensor& img, int out_h, int out_w) {
  if (out_h < 1 || out_w < 1) throw InvalidArgument("resize target must be positive");
  if (img.rank() != 4) throw ShapeError("resize expects N×C×H×W, got " + shape_str(img.shape()));
}

}  // namespace

Tensor bicubic_resize(const Tensor& img, int out_h, int out_w) {
  check_resize_args(img, out_h, out_w);
  Tensor out = resample(img, bicubic_axis(img.h(), out_h), bicubic_axis(img.w(), out_w));
  for (float& v : out.values()) v = std::clamp(v, -1.0f, 1.0f);
  return out;
}

ag::Var resize_bicubic(const ag::Var& img, int out_h, int out_w) {
  check_resize_args(img.value(), out_h, out_w);
  auto ay = std::make_shared<ResampleAxis>(bicubic_axis(img.value().h(), out_h));
  auto ax = std::make_shared<ResampleAxis>(bicubic_axis(img.value().w(), out_w));
  Tensor raw = resample(img.value(), *ay, *ax);
  auto inside = std::make_shared<std::vector<bool>>(raw.numel());
  for (std::size_t i = 0; i < raw.numel(); ++i) {
    (*inside)[i] = raw[i] >= -1.0f && raw[i] <= 1.0f;
    raw[i] = std::clamp(raw[i], -1.0f, 1.0f);
  }
  return ag::make_result(std::move(raw), {img}, [ay, ax, inside](ag::Node& self) {
    Tensor masked = self.grad;
    for (std::size_t i = 0; i < masked.numel(); ++i)
      if (!(*inside)[i]) masked[i] = 0.0f;
    resample_adjoint_add(masked, *ay, *ax, self.parents[0]->grad_buffer());
  });
}

PairedSample make_pair(const Tensor& hr, int scale) {
  if (hr.rank() != 4) throw ShapeError("make_pair expects N×C×H×W");
  if (scale < 1 || hr.h() % scale != 0 || hr.w() % scale != 0) {
    throw InvalidArgument("HR size " + shape_str(hr.shape()) + " not divisible by scale " + std::to_string(scale));
  }
  return {bicubic_resize(hr, hr.h() / scale, hr.w() / scale), hr, scale};
}

}  // namespace glean
