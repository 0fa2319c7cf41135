#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "glean/errors.hpp"
#include "glean/inversion.hpp"
#include "glean/training.hpp"

using namespace glean;

namespace {

BankConfig toy_bank() {
  BankConfig c;
  c.out_res = 16;
  c.latent_dim = 8;
  c.max_width = 16;
  c.min_width = 8;
  return c;
}

Tensor planted_lr(const LatentBank& bank, std::uint64_t seed, int lr_res) {
  CounterRng rng(seed);
  const Tensor z = sample_latents(1, bank.config, rng);
  return bicubic_resize(bank_generate(ag::Var(z), bank).value(), lr_res, lr_res);
}

}  // namespace

TEST_CASE("latent mode names") {
  CHECK(to_string(LatentMode::Single) == "single");
  CHECK(latent_mode_from_string("multi") == LatentMode::Multi);
  CHECK_THROWS_AS(latent_mode_from_string("pulse"), InvalidArgument);
  InversionConfig c;
  CHECK(c.steps == 200);
  CHECK(c.opt_lr == 0.05);
  c.steps = 0;
  CHECK_THROWS_AS(c.validate(), InvalidArgument);
}

TEST_CASE("inversion trace, shapes and bank immutability") {
  const LatentBank bank = freeze(LatentBank::create(toy_bank(), 1));
  const auto before = snapshot(bank.parameters());
  InversionConfig cfg;
  cfg.steps = 25;
  const InversionResult r = invert(planted_lr(bank, 2, 4), bank, cfg);
  CHECK(r.trace.size() == 25);
  CHECK(r.image.shape() == Shape{1, 3, 16, 16});
  CHECK(r.latents.shape() == Shape{1, 3, 8});
  CHECK(bitwise_equal(before, bank.parameters()));
  CHECK(r.trace.back() < r.trace.front());
}

TEST_CASE("single-latent mode keeps identical rows") {
  const LatentBank bank = freeze(LatentBank::create(toy_bank(), 1));
  InversionConfig cfg;
  cfg.steps = 15;
  cfg.mode = LatentMode::Single;
  const InversionResult r = invert(planted_lr(bank, 3, 4), bank, cfg);
  for (int row = 1; row < 3; ++row)
    for (int j = 0; j < 8; ++j) CHECK(r.latents[row * 8 + j] == r.latents[j]);
}

TEST_CASE("planted solutions are approached and multi-latent fits at least as well") {
  const LatentBank bank = freeze(LatentBank::create(toy_bank(), 4));
  const Tensor lr = planted_lr(bank, 5, 4);
  InversionConfig cfg;
  const InversionResult multi = invert(lr, bank, cfg);
  CHECK(multi.trace.size() == 200);
  CHECK(multi.trace.back() <= 0.2 * multi.trace.front());
  const auto s = smoothed(multi.trace, 20);
  CHECK(s.back() < s[50]);
  CHECK(s[50] < s.front());

  cfg.mode = LatentMode::Single;
  const InversionResult single = invert(lr, bank, cfg);
  CHECK(multi.trace.back() <= single.trace.back() + 1e-6);
  MESSAGE("multi " << multi.trace.front() << " -> " << multi.trace.back() << ", single " << single.trace.back());
}

TEST_CASE("smoothing and trace output") {
  const auto s = smoothed({4.0, 2.0, 0.0, 6.0}, 2);
  REQUIRE(s.size() == 4);
  CHECK(s[0] == 4.0);
  CHECK(s[1] == 3.0);
  CHECK(s[2] == 1.0);
  CHECK(s[3] == 3.0);

  const auto path = std::filesystem::temp_directory_path() / "glean_trace.jsonl";
  write_trace({0.5, 0.25}, path);
  std::ifstream in(path);
  std::string line;
  REQUIRE(std::getline(in, line));
  const auto j = nlohmann::json::parse(line);
  CHECK(j.at("step") == 0);
  CHECK(j.at("objective") == 0.5);
}

TEST_CASE("speed comparison report") {
  GleanConfig mc;
  mc.scale = 4;
  mc.lr_res = 4;
  mc.latent_dim = 8;
  mc.base_channels = 8;
  mc.growth = 4;
  mc.rrdb_blocks = 1;
  mc.decoder_channels = 4;
  mc.bank_max_width = 16;
  mc.bank_min_width = 8;
  const GleanModel model = GleanModel::create(mc, LatentBank::create(mc.resolved().bank_config(), 6));
  InversionConfig cfg;
  cfg.steps = 50;
  const SpeedReport r = compare_speed({planted_lr(model.bank, 7, 4)}, model, cfg);
  CHECK(r.steps == 50);
  CHECK(r.images == 1);
  CHECK(r.ratio > 1.0);
  CHECK(r.ratio == doctest::Approx(r.invert_ms / r.glean_ms));
  const auto j = r.to_json();
  CHECK(j.at("steps") == 50);
  CHECK(j.contains("glean_ms"));
}
