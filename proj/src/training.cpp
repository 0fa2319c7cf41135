#include "glean/training.hpp"

#include <cblas.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iostream>

#include "glean/checkpoint.hpp"
#include "glean/config.hpp"
#include "glean/errors.hpp"
#include "glean/losses.hpp"
#include "glean/metrics.hpp"
#include "glean/optim.hpp"

namespace glean {

TrainConfig TrainConfig::bank_defaults() {
  TrainConfig c;
  c.iterations = 20000;
  return c;
}

TrainConfig TrainConfig::glean_defaults() {
  TrainConfig c;
  c.iterations = 5000;
  return c;
}

void TrainConfig::validate() const {
  if (iterations <= 0) throw InvalidArgument("iterations must be positive");
  if (batch_size <= 0) throw InvalidArgument("batch_size must be positive");
  if (!(lr_init > 0.0)) throw InvalidArgument("lr_init must be positive");
  if (lr_min < 0.0 || lr_min > lr_init) throw InvalidArgument("lr_min must lie in [0, lr_init]");
  if (checkpoint_every <= 0) throw InvalidArgument("checkpoint_every must be positive");
}

Corpus Corpus::slice(std::size_t begin, std::size_t end) const {
  end = std::min(end, size());
  Corpus c;
  for (std::size_t i = begin; i < end; ++i) {
    c.ids.push_back(ids[i]);
    c.images.push_back(images[i]);
  }
  return c;
}

namespace {
std::string scene_file(int i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "scene_%04d.png", i);
  return buf;
}
}  // namespace

Corpus make_corpus(std::uint64_t seed, int count, int size) {
  Corpus c;
  const auto specs = corpus_specs(seed, count, size);
  for (int i = 0; i < count; ++i) {
    c.ids.push_back(scene_file(i));
    c.images.push_back(generate_synthetic_scene(specs[i]));
  }
  return c;
}

void write_corpus(const std::filesystem::path& dir, std::uint64_t seed, int count, int size) {
  std::filesystem::create_directories(dir);
  const auto specs = corpus_specs(seed, count, size);
  nlohmann::json manifest = nlohmann::json::array();
  for (int i = 0; i < count; ++i) {
    const std::string file = scene_file(i);
    save_image(generate_synthetic_scene(specs[i]), dir / file);
    manifest.push_back(
        {{"seed", specs[i].seed}, {"size", specs[i].size}, {"n_shapes", specs[i].n_shapes}, {"file", file}});
  }
  std::ofstream out(dir / "manifest.json", std::ios::trunc);
  if (!out) throw IoError("cannot write " + (dir / "manifest.json").string());
  out << manifest.dump(2) << '\n';
}

Corpus load_corpus(const std::filesystem::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw IoError("corpus manifest not found in " + dir.string());
  nlohmann::json manifest;
  try {
    in >> manifest;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("corrupt corpus manifest: " + std::string(e.what()));
  }
  if (!manifest.is_array()) throw IoError("corpus manifest must be a JSON array");
  Corpus c;
  for (const auto& rec : manifest) {
    const auto file = rec.at("file").get<std::string>();
    c.ids.push_back(file);
    c.images.push_back(load_image(dir / file));
  }
  return c;
}

nlohmann::json LogRecord::to_json() const {
  return {{"step", step},       {"l_mse", l_mse},   {"l_percep", l_percep}, {"l_gen", l_gen},
          {"l_total", l_total}, {"l_disc", l_disc}, {"lr", lr},             {"wall_ms", wall_ms}};
}

void configure_threads(bool deterministic) {
  if (deterministic) openblas_set_num_threads(1);
}

std::vector<Tensor> snapshot(const ParamList& params) {
  std::vector<Tensor> out;
  out.reserve(params.size());
  for (const auto& [name, v] : params) out.push_back(v.value());
  return out;
}

bool bitwise_equal(const std::vector<Tensor>& snap, const ParamList& params) {
  if (snap.size() != params.size()) return false;
  for (std::size_t i = 0; i < snap.size(); ++i) {
    const Tensor& a = snap[i];
    const Tensor& b = params[i].second.value();
    if (!a.same_shape(b) || std::memcmp(a.data(), b.data(), a.numel() * sizeof(float)) != 0) return false;
  }
  return true;
}

namespace {

using Clock = std::chrono::steady_clock;

class LogSink {
 public:
  explicit LogSink(const TrainHooks& hooks) : hooks_(hooks) {
    if (hooks.log_path) {
      if (hooks.log_path->has_parent_path()) std::filesystem::create_directories(hooks.log_path->parent_path());
      file_.open(*hooks.log_path, std::ios::trunc);
      if (!file_) throw IoError("cannot open training log " + hooks.log_path->string());
    }
  }

  void write(const LogRecord& r) {
    if (file_.is_open()) file_ << r.to_json().dump() << '\n';
    if (hooks_.on_step) hooks_.on_step(r);
    if (hooks_.verbose && (r.step % 50 == 0)) {
      std::cerr << "step " << r.step << " total " << r.l_total << " mse " << r.l_mse << " gen " << r.l_gen << " disc "
                << r.l_disc << " lr " << r.lr << '\n';
    }
  }

 private:
  const TrainHooks& hooks_;
  std::ofstream file_;
};

void check_finite(const LogRecord& r, const char* phase) {
  const double vals[] = {r.l_mse, r.l_percep, r.l_gen, r.l_total, r.l_disc};
  for (double v : vals) {
    if (!std::isfinite(v)) {
      throw NonFiniteLoss(std::string(phase) + ": non-finite loss at step " + std::to_string(r.step) + " " +
                          r.to_json().dump());
    }
  }
}

Tensor gather(const std::vector<Tensor>& images, const std::vector<std::size_t>& idx) {
  std::vector<Tensor> picked;
  picked.reserve(idx.size());
  for (std::size_t i : idx) picked.push_back(images[i]);
  return Tensor::stack(picked);
}

std::vector<std::size_t> sample_indices(CounterRng& rng, std::size_t n, int batch) {
  std::vector<std::size_t> idx(batch);
  for (auto& i : idx) i = static_cast<std::size_t>(rng.below(n));
  return idx;
}

void check_corpus(const Corpus& corpus, int res, int batch, const char* what) {
  if (corpus.size() < static_cast<std::size_t>(2 * batch)) {
    throw InvalidArgument(std::string(what) + ": corpus has " + std::to_string(corpus.size()) +
                          " images, need at least 2× batch size (" + std::to_string(2 * batch) + ")");
  }
  for (const auto& img : corpus.images) {
    if (img.rank() != 4 || img.h() != res || img.w() != res || img.c() != 3) {
      throw ShapeError(std::string(what) + ": corpus image " + shape_str(img.shape()) + " is not at " +
                       std::to_string(res) + "×" + std::to_string(res));
    }
  }
}

double elapsed_ms(Clock::time_point start, bool deterministic) {
  if (deterministic) return 0.0;
  return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

// Tiles up to 16 samples into a 4-wide grid.
Tensor sample_grid(const Tensor& batch) {
  const int n = std::min(batch.n(), 16), s = batch.h();
  const int cols = std::min(n, 4), rows = (n + cols - 1) / cols;
  Tensor grid({1, 3, rows * s, cols * s}, -1.0f);
  for (int i = 0; i < n; ++i)
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < s; ++y)
        for (int x = 0; x < s; ++x) grid.at(0, c, (i / cols) * s + y, (i % cols) * s + x) = batch.at(i, c, y, x);
  return grid;
}

}  // namespace

BankTrainResult pretrain_bank(const Corpus& corpus, const BankConfig& bank_cfg, const TrainConfig& cfg,
                              const TrainHooks& hooks, std::optional<LatentBank> init) {
  cfg.validate();
  bank_cfg.validate();
  check_corpus(corpus, bank_cfg.out_res, cfg.batch_size, "pretrain_bank");
  configure_threads(cfg.deterministic);

  BankTrainResult result{init ? std::move(*init) : LatentBank::create(bank_cfg, cfg.seed), {}, {}};
  CounterRng disc_rng(cfg.seed, /*stream=*/0xd15c);
  result.discriminator = Discriminator::create(bank_cfg.out_res, disc_rng);
  LatentBank& bank = result.bank;
  bank.frozen = false;
  set_trainable(bank.parameters(), true);
  ParamList disc_params;
  result.discriminator.collect("disc", disc_params);

  const AdamOptions adam_opts{cfg.beta1, cfg.beta2, cfg.eps};
  Adam opt_g(bank.parameters(), adam_opts);
  Adam opt_d(disc_params, adam_opts);
  CounterRng batch_rng(cfg.seed, /*stream=*/0xba7c);
  CounterRng latent_rng(cfg.seed, /*stream=*/0x1a7e);
  CounterRng fixed_rng(cfg.seed, /*stream=*/0xf1ed);
  const Tensor fixed_latents = sample_latents(16, bank_cfg, fixed_rng);
  LogSink sink(hooks);
  const auto start = Clock::now();

  for (long step = 0; step < cfg.iterations; ++step) {
    const double lr = cosine_lr(step, cfg.iterations, cfg.lr_init, cfg.lr_min);
    const ag::Var real(gather(corpus.images, sample_indices(batch_rng, corpus.size(), cfg.batch_size)));
    const ag::Var z(sample_latents(cfg.batch_size, bank_cfg, latent_rng));
    const ag::Var fake = bank_generate(z, bank);

    LogRecord rec;
    rec.step = step;
    rec.lr = lr;

    // Discriminator step on detached samples.
    opt_d.zero_grad();
    const ag::Var l_disc = discriminator_loss(discriminator_forward(ag::detach(fake), result.discriminator),
                                              discriminator_forward(real, result.discriminator));
    rec.l_disc = l_disc.value()[0];
    ag::backward(l_disc);
    opt_d.step(lr);

    // Generator step through the frozen-for-now critic.
    set_trainable(disc_params, false);
    opt_g.zero_grad();
    const ag::Var l_gen = generator_adv_loss(discriminator_forward(fake, result.discriminator), cfg.non_saturating);
    rec.l_gen = l_gen.value()[0];
    rec.l_total = rec.l_gen;
    ag::backward(l_gen);
    opt_g.step(lr);
    set_trainable(disc_params, true);

    rec.wall_ms = elapsed_ms(start, cfg.deterministic);
    check_finite(rec, "pretrain_bank");
    result.log.push_back(rec);
    sink.write(rec);

    if (hooks.sample_dir && ((step + 1) % cfg.checkpoint_every == 0 || step + 1 == cfg.iterations)) {
      ag::NoGradGuard guard;
      std::filesystem::create_directories(*hooks.sample_dir);
      char name[64];
      std::snprintf(name, sizeof name, "samples_%06ld.png", step + 1);
      save_image(sample_grid(bank_generate(ag::Var(fixed_latents), bank).value()), *hooks.sample_dir / name);
    }
  }

  set_trainable(disc_params, false);
  if (hooks.checkpoint_path) {
    save_bank(bank, *hooks.checkpoint_path, disc_params, {{"train", to_json(cfg)}});
  }
  return result;
}

double validation_psnr(const GleanModel& model, const Corpus& val) {
  if (val.size() == 0) throw InvalidArgument("validation split is empty");
  double s = 0.0;
  for (const auto& hr : val.images) {
    const PairedSample pair = make_pair(hr, model.config.scale);
    s += psnr(glean_forward(pair.lr, model), hr);
  }
  return s / static_cast<double>(val.size());
}

GleanTrainResult train_glean(const Corpus& train, const Corpus& val, GleanModel model, const TrainConfig& cfg,
                             const TrainHooks& hooks, std::optional<Discriminator> pretrained_disc) {
  cfg.validate();
  const GleanConfig& mc = model.config;
  check_corpus(train, mc.hr_res(), cfg.batch_size, "train_glean");
  if (!model.bank.frozen) throw ContractViolation("train_glean requires a frozen latent bank");
  configure_threads(cfg.deterministic);

  const ParamList frozen = model.bank.core_parameters();
  for (const auto& [name, p] : frozen) {
    if (p.requires_grad()) throw ContractViolation("frozen bank parameter '" + name + "' is marked trainable");
  }
  const std::vector<Tensor> frozen_snapshot = snapshot(frozen);
  auto verify_frozen = [&] {
    if (!bitwise_equal(frozen_snapshot, frozen)) throw ContractViolation("frozen bank parameters changed during training");
  };

  std::vector<Tensor> lr_images;
  lr_images.reserve(train.size());
  for (const auto& hr : train.images) lr_images.push_back(make_pair(hr, mc.scale).lr);

  CounterRng disc_rng(cfg.seed, /*stream=*/0xd15c);
  Discriminator disc = (cfg.reuse_discriminator && pretrained_disc) ? *pretrained_disc
                                                                     : Discriminator::create(mc.hr_res(), disc_rng);
  ParamList disc_params;
  disc.collect("disc", disc_params);
  set_trainable(disc_params, true);
  const bool adversarial = mc.alpha_gen != 0.0;

  const AdamOptions adam_opts{cfg.beta1, cfg.beta2, cfg.eps};
  Adam opt_g(model.trainable_parameters(), adam_opts);
  Adam opt_d(disc_params, adam_opts);
  CounterRng batch_rng(cfg.seed, /*stream=*/0xba7c);
  LogSink sink(hooks);
  GleanTrainResult result{model, disc, {}, {}};
  const auto start = Clock::now();

  auto save = [&](long step) {
    if (!hooks.checkpoint_path) return;
    ParamList disc_snapshot = disc_params;
    save_glean(model, *hooks.checkpoint_path, disc_snapshot, {{"train", to_json(cfg)}, {"step", step}});
  };

  for (long step = 0; step < cfg.iterations; ++step) {
    const double lr = cosine_lr(step, cfg.iterations, cfg.lr_init, cfg.lr_min);
    const auto idx = sample_indices(batch_rng, train.size(), cfg.batch_size);
    const ag::Var hr(gather(train.images, idx));
    const ag::Var lr_batch(gather(lr_images, idx));

    opt_g.zero_grad();
    const ag::Var sr = glean_forward(lr_batch, model);
    ag::Var fake_logits;
    if (adversarial) {
      set_trainable(disc_params, false);
      fake_logits = discriminator_forward(sr, disc);
    }
    const LossReport report =
        total_generator_loss(sr, hr, fake_logits, mc.alpha_percep, mc.alpha_gen, FeatureNet::shared(), mc.non_saturating);
    ag::backward(report.total);
    opt_g.step(lr);

    LogRecord rec;
    rec.step = step;
    rec.lr = lr;
    rec.l_mse = report.l_mse;
    rec.l_percep = report.l_percep;
    rec.l_gen = report.l_gen;
    rec.l_total = report.l_total;

    if (adversarial) {
      set_trainable(disc_params, true);
      opt_d.zero_grad();
      const ag::Var l_disc = discriminator_loss(discriminator_forward(ag::detach(sr), disc), discriminator_forward(hr, disc));
      rec.l_disc = l_disc.value()[0];
      ag::backward(l_disc);
      opt_d.step(lr);
    }

    rec.wall_ms = elapsed_ms(start, cfg.deterministic);
    check_finite(rec, "train_glean");
    result.log.push_back(rec);
    sink.write(rec);

    if ((step + 1) % cfg.checkpoint_every == 0 && step + 1 < cfg.iterations) {
      verify_frozen();
      if (val.size() > 0) result.validation.push_back({step + 1, validation_psnr(model, val)});
      save(step + 1);
    }
  }

  verify_frozen();
  if (val.size() > 0) result.validation.push_back({cfg.iterations, validation_psnr(model, val)});
  set_trainable(disc_params, false);
  save(cfg.iterations);
  result.discriminator = disc;
  return result;
}

}  // namespace glean
