#include "glean/inversion.hpp"

#include <chrono>
#include <cmath>
#include <fstream>

#include "glean/errors.hpp"
#include "glean/imaging.hpp"
#include "glean/losses.hpp"
#include "glean/optim.hpp"

namespace glean {

void InversionConfig::validate() const {
  if (steps <= 0) throw InvalidArgument("inversion steps must be positive");
  if (!(opt_lr > 0.0)) throw InvalidArgument("inversion opt_lr must be positive");
  if (downsample_to < 0) throw InvalidArgument("downsample_to must be >= 0");
  if (latent_prior < 0.0) throw InvalidArgument("latent_prior must be >= 0");
}

std::string to_string(LatentMode mode) { return mode == LatentMode::Single ? "single" : "multi"; }

LatentMode latent_mode_from_string(const std::string& s) {
  if (s == "single") return LatentMode::Single;
  if (s == "multi") return LatentMode::Multi;
  throw InvalidArgument("latent mode must be 'single' or 'multi', got '" + s + "'");
}

InversionResult invert(const Tensor& lr, const LatentBank& bank, const InversionConfig& cfg) {
  cfg.validate();
  if (!bank.frozen) throw ContractViolation("inversion requires a frozen bank");
  if (lr.rank() != 4 || lr.n() != 1 || lr.c() != 3) throw ShapeError("invert expects a 1×3×h×w image, got " + shape_str(lr.shape()));
  const int target_h = cfg.downsample_to > 0 ? cfg.downsample_to : lr.h();
  const int target_w = cfg.downsample_to > 0 ? cfg.downsample_to : lr.w();
  const Tensor target_img = (target_h == lr.h() && target_w == lr.w()) ? lr : bicubic_resize(lr, target_h, target_w);
  const ag::Var target(target_img);

  const BankConfig& bc = bank.config;
  const int k = bc.num_levels();
  CounterRng rng(cfg.seed, /*stream=*/0x1f7e);
  const bool single = cfg.mode == LatentMode::Single;
  ag::Var code(single ? normal_tensor({1, bc.latent_dim}, rng) : sample_latents(1, bc, rng), true);
  Adam opt({{"latent", code}}, AdamOptions{0.9, 0.999, 1e-8});

  auto latents_of = [&](const ag::Var& c) { return single ? ag::repeat_rows(c, k) : c; };

  InversionResult result;
  result.trace.reserve(cfg.steps);
  for (int step = 0; step < cfg.steps; ++step) {
    opt.zero_grad();
    const ag::Var hr = bank_generate(latents_of(code), bank);
    ag::Var objective = mse_loss(resize_bicubic(hr, target_h, target_w), target);
    const double value = objective.value()[0];
    if (!std::isfinite(value)) {
      throw NonFiniteLoss("inversion objective became non-finite at step " + std::to_string(step));
    }
    result.trace.push_back(value);
    if (cfg.latent_prior > 0.0) {
      const ag::Var zero(Tensor(code.shape()));
      objective = ag::lin_comb(objective, 1.0f, ag::mse(code, zero), static_cast<float>(cfg.latent_prior));
    }
    ag::backward(objective);
    opt.step(cfg.opt_lr);
  }

  ag::NoGradGuard guard;
  const ag::Var final_latents = latents_of(ag::Var(code.value()));
  result.latents = final_latents.value();
  result.image = bank_generate(final_latents, bank).value();
  return result;
}

std::vector<double> smoothed(const std::vector<double>& trace, int window) {
  if (window < 1) throw InvalidArgument("smoothing window must be >= 1");
  std::vector<double> out(trace.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < trace.size(); ++i) {
    acc += trace[i];
    if (i >= static_cast<std::size_t>(window)) acc -= trace[i - window];
    out[i] = acc / static_cast<double>(std::min<std::size_t>(i + 1, window));
  }
  return out;
}

void write_trace(const std::vector<double>& trace, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write trace " + path.string());
  for (std::size_t i = 0; i < trace.size(); ++i) {
    out << nlohmann::json{{"step", i}, {"objective", trace[i]}}.dump() << '\n';
  }
}

nlohmann::json SpeedReport::to_json() const {
  return {{"glean_ms", glean_ms}, {"invert_ms", invert_ms}, {"ratio", ratio}, {"steps", steps}, {"images", images}};
}

SpeedReport compare_speed(const std::vector<Tensor>& lr_batch, const GleanModel& model, const InversionConfig& cfg) {
  using Clock = std::chrono::steady_clock;
  if (lr_batch.empty()) throw InvalidArgument("compare_speed: no images");
  SpeedReport r;
  r.steps = cfg.steps;
  r.images = static_cast<int>(lr_batch.size());
  double glean_total = 0.0, invert_total = 0.0;
  for (const auto& lr : lr_batch) {
    auto t0 = Clock::now();
    (void)glean_forward(lr, model);
    auto t1 = Clock::now();
    (void)invert(lr, model.bank, cfg);
    auto t2 = Clock::now();
    glean_total += std::chrono::duration<double, std::milli>(t1 - t0).count();
    invert_total += std::chrono::duration<double, std::milli>(t2 - t1).count();
  }
  r.glean_ms = glean_total / r.images;
  r.invert_ms = invert_total / r.images;
  r.ratio = r.glean_ms > 0.0 ? r.invert_ms / r.glean_ms : 0.0;
  return r;
}

}  // namespace glean
