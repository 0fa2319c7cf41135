#include <doctest.h>

#include <png.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "glean/errors.hpp"
#include "glean/imaging.hpp"
#include "../support/grad_check.hpp"

using namespace glean;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("glean_imaging_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

// Independent evaluation of the resampling formula: sum over every integer
// source position within reach, reflecting indices at the border and
// normalizing each axis' weights.
std::vector<double> axis_weights(int in, int out, int i, std::vector<int>& src) {
  const double scale = static_cast<double>(out) / in;
  const double u = (i + 0.5) / scale - 0.5;
  std::vector<double> w;
  src.clear();
  double total = 0.0;
  for (int p = static_cast<int>(std::floor(u)) - 40; p <= static_cast<int>(std::ceil(u)) + 40; ++p) {
    const double d = u - p;
    const double k = scale < 1.0 ? scale * cubic_kernel(scale * d) : cubic_kernel(d);
    if (k == 0.0) continue;
    int q = p;
    while (q < 0 || q >= in) q = q < 0 ? -q - 1 : 2 * in - 1 - q;
    src.push_back(q);
    w.push_back(k);
    total += k;
  }
  for (double& v : w) v /= total;
  return w;
}

Tensor direct_resize(const Tensor& img, int oh, int ow) {
  Tensor out({img.n(), img.c(), oh, ow});
  std::vector<int> sy, sx;
  for (int n = 0; n < img.n(); ++n)
    for (int c = 0; c < img.c(); ++c)
      for (int i = 0; i < oh; ++i) {
        const auto wy = axis_weights(img.h(), oh, i, sy);
        for (int j = 0; j < ow; ++j) {
          const auto wx = axis_weights(img.w(), ow, j, sx);
          double s = 0.0;
          for (std::size_t a = 0; a < wy.size(); ++a)
            for (std::size_t b = 0; b < wx.size(); ++b) s += wy[a] * wx[b] * img.at(n, c, sy[a], sx[b]);
          out.at(n, c, i, j) = static_cast<float>(std::clamp(s, -1.0, 1.0));
        }
      }
  return out;
}

}  // namespace

TEST_CASE("synthetic scenes are deterministic, bounded and seed-dependent") {
  const Tensor a = generate_synthetic_scene({0, 32, 0});
  CHECK(a.shape() == Shape{1, 3, 32, 32});
  for (float v : a.values()) {
    CHECK(v >= -1.0f);
    CHECK(v <= 1.0f);
  }
  CHECK(a == generate_synthetic_scene({0, 32, 0}));
  CHECK(mean_abs_diff(a, generate_synthetic_scene({1, 32, 0})) > 0.0);
  CHECK(a.all_finite());
}

TEST_CASE("scene spec resolution and validation") {
  const SceneSpec s = resolve_scene_spec({42, 64, 0});
  CHECK(s.n_shapes >= 3);
  CHECK(s.n_shapes <= 6);
  CHECK(resolve_scene_spec({42, 64, 2}).n_shapes == 2);
  CHECK_THROWS_AS(generate_synthetic_scene({0, 48, 0}), InvalidArgument);
  CHECK_THROWS_AS(generate_synthetic_scene({0, 4, 0}), InvalidArgument);
  const auto specs = corpus_specs(7, 5, 16);
  CHECK(specs.size() == 5);
  CHECK(specs[0].seed != specs[1].seed);
  CHECK(specs == corpus_specs(7, 5, 16));
}

TEST_CASE("bicubic kernel values") {
  CHECK(cubic_kernel(0.0) == 1.0);
  CHECK(cubic_kernel(1.0) == doctest::Approx(0.0));
  CHECK(cubic_kernel(2.0) == 0.0);
  CHECK(cubic_kernel(0.5) == doctest::Approx(0.5625));
  CHECK(cubic_kernel(1.5) == doctest::Approx(-0.0625));
  CHECK(cubic_kernel(-0.5) == cubic_kernel(0.5));
}

TEST_CASE("bicubic resize preserves constants") {
  const Tensor c({1, 3, 32, 32}, 0.5f);
  for (auto [h, w] : {std::pair{8, 8}, std::pair{64, 64}, std::pair{13, 40}}) {
    const Tensor r = bicubic_resize(c, h, w);
    CHECK(r.shape() == Shape{1, 3, h, w});
    for (float v : r.values()) CHECK(std::abs(v - 0.5f) <= 1e-6f);
  }
  CHECK_THROWS_AS(bicubic_resize(c, 0, 8), InvalidArgument);
}

TEST_CASE("bicubic downscale of an impulse matches direct evaluation") {
  Tensor img({1, 1, 32, 32});
  img.at(0, 0, 13, 18) = 1.0f;
  img.at(0, 0, 0, 31) = -1.0f;
  const Tensor fast = bicubic_resize(img, 8, 8);
  const Tensor oracle = direct_resize(img, 8, 8);
  CHECK(max_abs_diff(fast, oracle) <= 1e-6f);
}

TEST_CASE("bicubic upscale of a scene matches direct evaluation") {
  const Tensor img = generate_synthetic_scene({3, 8, 0});
  CHECK(max_abs_diff(bicubic_resize(img, 32, 32), direct_resize(img, 32, 32)) <= 1e-5f);
}

TEST_CASE("paired samples") {
  const Tensor hr = generate_synthetic_scene({5, 32, 0});
  const PairedSample p = make_pair(hr, 4);
  CHECK(p.lr.shape() == Shape{1, 3, 8, 8});
  CHECK(p.hr == hr);
  CHECK(p.scale == 4);
  CHECK(make_pair(p.hr, 4).lr == p.lr);
  const PairedSample c = make_pair(Tensor({1, 3, 32, 32}, -0.25f), 4);
  for (float v : c.lr.values()) CHECK(std::abs(v + 0.25f) <= 1e-6f);
  CHECK_THROWS_AS(make_pair(Tensor({1, 3, 30, 30}), 4), InvalidArgument);
}

TEST_CASE("differentiable resize matches the plain resize and finite differences") {
  CounterRng rng(1, 1);
  ag::Var x(normal_tensor({1, 3, 16, 16}, rng, 0.3f), true);
  CHECK(ag::Var(bicubic_resize(x.value(), 4, 4)).value() == resize_bicubic(x, 4, 4).value());
  const auto r = glean::testing::check_gradients([&] { return glean::testing::project(resize_bicubic(x, 4, 4)); },
                                                 {{"x", x}});
  CHECK(r.max_rel_error < 1e-2);
}

TEST_CASE("byte mapping endpoints") {
  CHECK(to_byte(-1.0f) == 0);
  CHECK(to_byte(1.0f) == 255);
  CHECK(to_byte(0.0f) == 128);
  CHECK(to_byte(-3.0f) == 0);
  CHECK(to_byte(7.0f) == 255);
  CHECK(from_byte(0) == -1.0f);
  CHECK(from_byte(255) == 1.0f);
}

TEST_CASE("PNG round trip and payload bytes") {
  const fs::path dir = temp_dir("png");
  const Tensor img = generate_synthetic_scene({9, 16, 0});
  save_image(img, dir / "a.png");
  const Tensor back = load_image(dir / "a.png");
  CHECK(back.shape() == img.shape());
  CHECK(max_abs_diff(back, img) <= 1.0f / 127.5f);

  save_image(Tensor({1, 3, 4, 4}, -1.0f), dir / "black.png");
  png_image pi{};
  pi.version = PNG_IMAGE_VERSION;
  REQUIRE(png_image_begin_read_from_file(&pi, (dir / "black.png").c_str()));
  pi.format = PNG_FORMAT_RGB;
  std::vector<unsigned char> buf(PNG_IMAGE_SIZE(pi));
  REQUIRE(png_image_finish_read(&pi, nullptr, buf.data(), 0, nullptr));
  for (unsigned char b : buf) CHECK(b == 0);
}

TEST_CASE("image I/O errors") {
  const fs::path dir = temp_dir("errors");
  CHECK_THROWS_AS(load_image(dir / "missing.png"), IoError);
  {
    std::ofstream f(dir / "text.png");
    f << "not a png";
  }
  CHECK_THROWS_AS(load_image(dir / "text.png"), UnsupportedFormat);

  png_image pi{};
  pi.version = PNG_IMAGE_VERSION;
  pi.width = 2;
  pi.height = 2;
  pi.format = PNG_FORMAT_GRAY;
  const unsigned char gray[4] = {0, 50, 100, 150};
  REQUIRE(png_image_write_to_file(&pi, (dir / "gray.png").c_str(), 0, gray, 0, nullptr));
  CHECK_THROWS_AS(load_image(dir / "gray.png"), UnsupportedFormat);

  CHECK_THROWS_AS(save_image(Tensor({1, 1, 4, 4}), dir / "one_channel.png"), ShapeError);
}
