// End-to-end acceptance run: prints one PASS/FAIL line per criterion and
// exits non-zero if any criterion fails.

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>

#include "../support/grad_check.hpp"
#include "glean/ablation.hpp"
#include "glean/blas_dispatch.hpp"
#include "glean/checkpoint.hpp"
#include "glean/cli.hpp"
#include "glean/config.hpp"
#include "glean/errors.hpp"
#include "glean/inversion.hpp"
#include "glean/losses.hpp"
#include "glean/metrics.hpp"
#include "glean/training.hpp"

using namespace glean;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

constexpr int kTrainCount = 512;
constexpr int kValCount = 64;
constexpr int kHrSize = 64;
constexpr int kScale = 8;
constexpr long kCellIterations = 2000;
constexpr long kFrozenCheckStep = 500;
constexpr std::uint64_t kCorpusSeed = 0;
constexpr std::uint64_t kSeed = 1;

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

void log(const std::string& msg) { std::cerr << "[acceptance] " << msg << std::endl; }

GleanConfig model_config(int scale) {
  GleanConfig c;
  c.scale = scale;
  c.lr_res = 8;
  c.seed = kSeed;
  return c;
}

TrainConfig bank_train_config() {
  TrainConfig t = TrainConfig::bank_defaults();
  t.iterations = 2000;
  t.lr_init = 2e-4;
  t.non_saturating = true;
  t.seed = kSeed;
  t.checkpoint_every = 1000;
  return t;
}

TrainConfig glean_train_config() {
  TrainConfig t = TrainConfig::glean_defaults();
  t.iterations = kCellIterations;
  t.seed = kSeed;
  t.checkpoint_every = 1000;
  return t;
}

// ---------------------------------------------------------------------------
// Shared state built once: corpus, pretrained bank, ablation results.

struct Context {
  fs::path dir;
  bool reuse_bank = false;
  Corpus train, val;
  std::optional<LatentBank> bank;
  std::optional<AblationReport> ablation;
  std::optional<GleanModel> full_model;
  std::optional<Outcome> frozen_check;

  void prepare_data() {
    if (train.size() > 0) return;
    log("generating corpus");
    const fs::path data = dir / "data";
    if (!fs::exists(data / "manifest.json")) write_corpus(data, kCorpusSeed, kTrainCount + kValCount, kHrSize);
    const Corpus all = load_corpus(data);
    train = all.slice(0, kTrainCount);
    val = all.slice(kTrainCount, kTrainCount + kValCount);
  }

  const LatentBank& pretrained_bank() {
    if (bank) return *bank;
    prepare_data();
    const fs::path path = dir / "bank";
    if (reuse_bank && fs::exists(checkpoint_paths(path).manifest)) {
      log("reusing pretrained bank " + path.string());
    } else {
      const TrainConfig t = bank_train_config();
      log("pretraining bank for " + std::to_string(t.iterations) + " steps");
      const auto t0 = Clock::now();
      TrainHooks hooks;
      hooks.checkpoint_path = path;
      hooks.log_path = dir / "bank.log.jsonl";
      hooks.sample_dir = dir / "bank_samples";
      Corpus all = train;
      pretrain_bank(all, model_config(kScale).bank_config(), t, hooks);
      log(fmt("bank pretraining took %.0f s", seconds_since(t0)));
    }
    bank = freeze(load_bank(path));
    return *bank;
  }

  const AblationReport& run_grid() {
    if (ablation) return *ablation;
    const LatentBank& b = pretrained_bank();
    log("training ablation cells (" + std::to_string(kCellIterations) + " steps each)");
    auto hooks = [&](const AblationCell& cell, const GleanModel& model) {
      TrainHooks h;
      h.log_path = dir / ("ablation_" + cell.name + ".log.jsonl");
      if (cell.name != "full") return h;
      full_model = model;
      const ParamList core = model.bank.core_parameters();
      const ParamList fusion = model.bank.fusion_parameters();
      auto core_before = std::make_shared<std::vector<Tensor>>(snapshot(core));
      auto fusion_before = std::make_shared<std::vector<Tensor>>(snapshot(fusion));
      h.on_step = [this, core, fusion, core_before, fusion_before](const LogRecord& r) {
        if (r.step + 1 != kFrozenCheckStep) return;
        const bool core_same = bitwise_equal(*core_before, core);
        const bool fusion_changed = !bitwise_equal(*fusion_before, fusion);
        frozen_check = Outcome{core_same && fusion_changed,
                               "after " + std::to_string(kFrozenCheckStep) + " steps: " + std::to_string(core.size()) +
                                   " frozen tensors " + (core_same ? "bitwise unchanged" : "CHANGED") + ", " +
                                   std::to_string(fusion.size()) + " fusion tensors " +
                                   (fusion_changed ? "updated" : "NOT updated")};
      };
      return h;
    };
    const auto t0 = Clock::now();
    ablation = run_ablation(train, val, b, model_config(kScale), glean_train_config(), standard_cells(), false, hooks);
    log(fmt("ablation grid took %.0f s", seconds_since(t0)));
    std::ofstream(dir / "ablation_report.json") << ablation->to_json().dump(2) << '\n';
    save_glean(*full_model, dir / "full_model");
    return *ablation;
  }
};

// ---------------------------------------------------------------------------
// Criteria.

Outcome shapes_and_runtime(Context& ctx) {
  bool ok = true;
  std::ostringstream d;
  CounterRng rng(3);
  const Tensor lr = Tensor(normal_tensor({1, 3, 8, 8}, rng, 0.3f));
  for (int scale : {4, 8}) {
    const GleanConfig mc = model_config(scale);
    const GleanModel m = GleanModel::create(mc, LatentBank::create(mc.resolved().bank_config(), kSeed));
    const Tensor y = glean_forward(lr, m);
    const bool shape_ok = y.shape() == Shape{1, 3, 8 * scale, 8 * scale};
    ok = ok && shape_ok;
    d << "x" << scale << " -> " << shape_str(y.shape()) << (shape_ok ? "" : " (wrong)") << "; ";
  }
  ctx.run_grid();
  const GleanModel& m = *ctx.full_model;
  glean_forward(make_pair(ctx.val.images[0], kScale).lr, m);  // warm-up
  const int n = 16;
  const auto t0 = Clock::now();
  for (int i = 0; i < n; ++i) glean_forward(make_pair(ctx.val.images[i], kScale).lr, m);
  const double per_image = seconds_since(t0) / n;
  ok = ok && per_image < 1.0;
  d << fmt("trained x8 model %.1f ms/image (limit 1000 ms)", per_image * 1e3);
  return {ok, d.str()};
}

Outcome frozen_bank(Context& ctx) {
  ctx.run_grid();
  if (!ctx.frozen_check) return {false, "training never reached step 500"};
  return *ctx.frozen_check;
}

// Feature network with every LeakyReLU slope pinned to the sign pattern the
// network had at `anchor`. It agrees with the real network at the anchor and
// is smooth around it, so its central differences are free of kink error.
struct PinnedFeatureNet {
  std::vector<std::vector<bool>> positive;

  explicit PinnedFeatureNet(const Tensor& anchor) { run(anchor, true); }

  Tensor features(const Tensor& img) { return run(img, false); }

 private:
  Tensor run(const Tensor& img, bool record) {
    const FeatureNet& net = FeatureNet::shared();
    ag::Var h(img);
    if (img.h() < kFeatureNetMinInput) h = resize_bicubic(h, kFeatureNetMinInput, kFeatureNetMinInput);
    for (std::size_t i = 0; i < net.convs.size(); ++i) {
      h = net.convs[i](h);
      if (i + 1 == net.convs.size()) break;
      Tensor t = h.value();
      if (record) {
        positive.emplace_back();
        for (float v : t.values()) positive.back().push_back(v >= 0.0f);
      }
      for (std::size_t j = 0; j < t.numel(); ++j)
        if (!positive[i][j]) t[j] *= 0.2f;
      h = ag::Var(t);
    }
    return h.value();
  }
};

Outcome gradient_suite(Context&) {
  using glean::testing::check_gradients;
  using glean::testing::project;
  const auto t0 = Clock::now();
  auto var = [](Shape s, std::uint64_t seed, float sd = 1.0f) {
    CounterRng rng(seed, 5);
    return ag::Var(normal_tensor(std::move(s), rng, sd), true);
  };
  std::vector<std::pair<std::string, double>> errors;

  CounterRng rng(11);
  const StyleBlock style = StyleBlock::create(4, 4, 8, true, rng);
  auto x = var({1, 4, 4, 4}, 1), z = var({1, 8}, 2);
  errors.emplace_back("style block",
                      check_gradients([&] { return project(style_block_forward(x, z, style)); }, {{"x", x}, {"z", z}})
                          .max_rel_error);

  const StyleBlock plain = StyleBlock::create(4, 4, 8, false, rng);
  Conv2d fusion = make_fusion_conv(4, 4, rng);
  fusion.weight.mutable_value() = normal_tensor(fusion.weight.shape(), rng, 0.2f);
  auto e = var({1, 4, 4, 4}, 3);
  errors.emplace_back(
      "augmented style block",
      check_gradients([&] { return project(augmented_style_block_forward(x, z, e, plain, &fusion)); },
                      {{"x", x}, {"z", z}, {"enc", e}})
          .max_rel_error);

  auto ps = var({1, 8, 4, 4}, 4);
  errors.emplace_back("pixel shuffle",
                      check_gradients([&] { return project(ag::pixel_shuffle(ps, 2)); }, {{"x", ps}}).max_rel_error);

  GleanConfig tiny;
  tiny.scale = 2;
  tiny.lr_res = 4;
  tiny.latent_dim = 4;
  tiny.base_channels = 4;
  tiny.growth = 2;
  tiny.rrdb_blocks = 1;
  tiny.decoder_channels = 4;
  tiny.bank_max_width = 8;
  tiny.bank_min_width = 4;
  const GleanModel tm = GleanModel::create(tiny, LatentBank::create(tiny.resolved().bank_config(), 1));
  auto f0 = var({1, 4, 4, 4}, 5), g0 = var({1, 8, 4, 4}, 6), g1 = var({1, 4, 8, 8}, 7);
  errors.emplace_back("decoder fusion",
                      check_gradients([&] { return project(decode(f0, {g0, g1}, tm)); },
                                      {{"f0", f0}, {"g0", g0}, {"g1", g1}})
                          .max_rel_error);

  auto pred = var({1, 3, 8, 8}, 8, 0.5f);
  const ag::Var target(normal_tensor({1, 3, 8, 8}, rng, 0.5f));
  errors.emplace_back("mse loss", check_gradients([&] { return mse_loss(pred, target); }, {{"pred", pred}}).max_rel_error);
  PinnedFeatureNet pinned(pred.value());
  const Tensor target_features = FeatureNet::shared().features(target).value();
  auto pinned_loss = [&] { return mse_loss(ag::Var(pinned.features(pred.value())), ag::Var(target_features)); };
  const double anchor_gap = std::abs(pinned_loss().value()[0] - perceptual_loss(pred, target).value()[0]);
  errors.emplace_back("perceptual loss",
                      check_gradients([&] { return perceptual_loss(pred, target); }, {{"pred", pred}}, 1e-3, 4096,
                                      pinned_loss)
                          .max_rel_error);
  auto fake = var({4, 1}, 9, 2.0f), real = var({4, 1}, 10, 2.0f);
  errors.emplace_back("generator adversarial loss",
                      check_gradients([&] { return generator_adv_loss(fake); }, {{"fake", fake}}).max_rel_error);
  errors.emplace_back("discriminator loss",
                      check_gradients([&] { return discriminator_loss(fake, real); }, {{"fake", fake}, {"real", real}})
                          .max_rel_error);

  const double elapsed = seconds_since(t0);
  bool ok = elapsed < 300.0 && anchor_gap == 0.0;
  double worst = 0.0;
  std::string worst_name;
  for (const auto& [name, err] : errors) {
    ok = ok && err < 1e-2;
    if (err >= worst) {
      worst = err;
      worst_name = name;
    }
  }
  return {ok, std::to_string(errors.size()) + " checks, worst relative error " + fmt("%.2e", worst) + " (" +
                  worst_name + "), " + fmt("%.1f s", elapsed)};
}

Outcome loss_arithmetic(Context&) {
  CounterRng rng(21);
  const ag::Var pred(normal_tensor({2, 3, 32, 32}, rng, 0.5f)), target(normal_tensor({2, 3, 32, 32}, rng, 0.5f));
  const ag::Var logits(Tensor({2, 1}, std::vector<float>{0.7f, -1.3f}));
  const LossReport r = total_generator_loss(pred, target, logits);
  const double sum = r.l_mse + 0.01 * r.l_percep + 0.01 * r.l_gen;
  const double rel = std::abs(r.l_total - sum) / std::abs(sum);
  const double rel_graph = std::abs(r.total.value()[0] - sum) / std::abs(sum);
  const ag::Var zero(Tensor({1, 1}));
  const double disc = discriminator_loss(zero, zero).value()[0];
  const double gen = generator_adv_loss(zero).value()[0];
  const bool ok = r.alpha_percep == 0.01 && r.alpha_gen == 0.01 && rel <= 1e-6 && rel_graph <= 1e-6 &&
                  std::abs(disc - 2.0 * std::log(2.0)) <= 1e-6 && std::abs(gen + std::log(2.0)) <= 1e-6;
  return {ok, fmt("identity rel err %.1e", std::max(rel, rel_graph)) + fmt(", disc(0,0) = %.7f", disc) +
                  fmt(", gen(0) = %.7f", gen)};
}

Outcome metric_oracles(Context&) {
  const Tensor a = generate_synthetic_scene({5, 32, 0});
  Tensor b = a;
  for (float& v : b.storage()) v += 2.0f / 255.0f;  // one grey level everywhere
  const double p1 = psnr_from_mse(1.0);
  const double p2 = psnr(a, b);
  const bool inf = psnr(a, a) == kPsnrInfinity;
  const double cos = embedding_cosine(a, a);
  CounterRng rng(31);
  const Tensor x = normal_tensor({2, 12, 3, 5}, rng);
  const bool shuffle = ag::pixel_unshuffle(ag::pixel_shuffle(ag::Var(x), 2), 2).value() == x;
  const bool ok = std::abs(p1 - 48.1308) <= 1e-3 && std::abs(p2 - 48.1308) <= 1e-3 && inf &&
                  std::abs(cos - 1.0) <= 1e-6 && shuffle;
  return {ok, fmt("psnr(mse=1) = %.4f", p1) + fmt(", psnr(1 grey level) = %.4f", p2) +
                  ", psnr(a,a) = " + (inf ? "inf" : "finite") + fmt(", embcos(a,a) = %.8f", cos) +
                  ", shuffle round trip " + (shuffle ? "exact" : "inexact")};
}

Outcome ablation_ordering(Context& ctx) {
  const AblationReport& r = ctx.run_grid();
  const double full = r.find("full").val_psnr;
  const double nobank = r.find("no-bank-features").val_psnr;
  const double latent = r.find("latent-only").val_psnr;
  double wall = 0.0;
  for (const auto& c : r.cells) wall += c.wall_s;
  const bool ok = full - nobank >= 0.5 && full - latent >= 0.5 && full - r.bicubic_psnr >= 1.0 && wall <= 7200.0;
  return {ok, fmt("full %.2f dB", full) + fmt(", no-bank-features %.2f", nobank) + fmt(", latent-only %.2f", latent) +
                  fmt(", bicubic %.2f", r.bicubic_psnr) + fmt("; grid %.0f s", wall)};
}

Outcome forward_vs_inversion(Context& ctx) {
  ctx.run_grid();
  const GleanModel& m = *ctx.full_model;
  std::vector<Tensor> lr;
  std::vector<Tensor> hr;
  std::vector<std::string> ids;
  for (int i = 0; i < 16; ++i) {
    hr.push_back(ctx.val.images[i]);
    ids.push_back(ctx.val.ids[i]);
    lr.push_back(make_pair(ctx.val.images[i], kScale).lr);
  }
  InversionConfig cfg;
  cfg.steps = 200;
  cfg.mode = LatentMode::Multi;
  cfg.seed = kSeed;
  const SpeedReport speed = compare_speed(lr, m, cfg);
  const EvalTable glean_t =
      evaluate_split("glean", "val16", ids, hr, kScale, [&](const Tensor& x) { return glean_forward(x, m); });
  const EvalTable inv_t = evaluate_split("inversion", "val16", ids, hr, kScale,
                                         [&](const Tensor& x) { return invert(x, m.bank, cfg).image; });
  std::ofstream(ctx.dir / "inversion_comparison.json")
      << nlohmann::json{{"speed", speed.to_json()}, {"glean", glean_t.to_json()}, {"inversion", inv_t.to_json()}}.dump(2)
      << '\n';
  const bool ok = speed.ratio >= 20.0 && glean_t.means.psnr >= inv_t.means.psnr;
  return {ok, fmt("forward %.1f ms", speed.glean_ms) + fmt(", inversion %.0f ms", speed.invert_ms) +
                  fmt(", ratio %.0fx", speed.ratio) + fmt("; PSNR glean %.2f dB", glean_t.means.psnr) +
                  fmt(" vs inversion %.2f dB", inv_t.means.psnr)};
}

Outcome inversion_sanity(Context& ctx) {
  const LatentBank& bank = ctx.pretrained_bank();
  CounterRng rng(41);
  const Tensor z0 = sample_latents(1, bank.config, rng);
  const Tensor planted = bicubic_resize(bank_generate(ag::Var(z0), bank).value(), 8, 8);
  InversionConfig cfg;
  cfg.steps = 200;
  cfg.mode = LatentMode::Multi;
  cfg.seed = kSeed;
  const InversionResult r = invert(planted, bank, cfg);
  const double best = *std::min_element(r.trace.begin(), r.trace.end());
  const double final_obj =
      mse_loss(ag::Var(bicubic_resize(r.image, 8, 8)), ag::Var(planted)).value()[0];
  return {final_obj <= 1e-3, fmt("objective after 200 steps %.2e", final_obj) + fmt(" (best traced %.2e)", best)};
}

Outcome determinism(Context& ctx) {
  ctx.pretrained_bank();
  const fs::path d = ctx.dir / "determinism";
  fs::remove_all(d);
  fs::create_directories(d);
  nlohmann::json exp;
  exp["model"] = to_json(model_config(kScale));
  exp["train"] = {{"iterations", 60}, {"checkpoint_every", 1000}};
  std::ofstream(d / "exp.json") << exp.dump(2);
  for (const char* name : {"run_a", "run_b"}) {
    std::ostringstream out, err;
    const int code = cli_main({"train", "--data", (ctx.dir / "data").string(), "--bank", (ctx.dir / "bank").string(),
                               "--config", (d / "exp.json").string(), "--out", (d / name / "model").string(),
                               "--deterministic", "--seed", "7"},
                              out, err);
    if (code != 0) return {false, std::string("train exited with ") + std::to_string(code) + ": " + err.str()};
  }
  std::ifstream la(d / "run_a" / "model.log.jsonl"), lb(d / "run_b" / "model.log.jsonl");
  int same = 0;
  std::string a, b;
  for (int i = 0; i < 50; ++i) {
    if (!std::getline(la, a) || !std::getline(lb, b) || a != b) break;
    ++same;
  }
  int files = 0, identical = 0;
  for (const char* f : {"model.blob", "model.manifest.json"}) {
    ++files;
    identical += read_file(d / "run_a" / f) == read_file(d / "run_b" / f);
  }
  const bool ok = same == 50 && identical == files;
  return {ok, std::to_string(same) + "/50 log lines identical; " + std::to_string(identical) + "/" +
                  std::to_string(files) + " checkpoint files byte-identical"};
}

Outcome checkpoint_portability(Context& ctx) {
  ctx.run_grid();
  const fs::path d = ctx.dir / "portability";
  fs::remove_all(d);
  fs::create_directories(d);
  save_glean(*ctx.full_model, d / "first");
  const GleanModel loaded = load_glean(d / "first");
  save_glean(loaded, d / "first_copy");
  fs::create_directories(d / "again");
  save_glean(loaded, d / "again" / "first");
  const bool same_blob = read_file(d / "first.blob") == read_file(d / "first_copy.blob");
  const bool same_manifest = read_file(d / "first.manifest.json") == read_file(d / "again" / "first.manifest.json");

  fs::copy_file(d / "first.blob", d / "corrupt.blob");
  fs::copy_file(d / "first.manifest.json", d / "corrupt.manifest.json");
  {
    auto j = nlohmann::json::parse(read_file(d / "corrupt.manifest.json"));
    j["blob"] = "corrupt.blob";
    std::ofstream(d / "corrupt.manifest.json") << j.dump(2) << '\n';
    std::fstream f(d / "corrupt.blob", std::ios::in | std::ios::out | std::ios::binary);
    f.seekg(4096);
    char c = 0;
    f.read(&c, 1);
    c = static_cast<char>(c ^ 0x01);
    f.seekp(4096);
    f.write(&c, 1);
  }
  bool detected = false;
  std::string message;
  try {
    load_glean(d / "corrupt");
  } catch (const CheckpointError& e) {
    detected = true;
    message = e.what();
  }
  const bool ok = same_blob && same_manifest && detected;
  return {ok, std::string("resaved blob ") + (same_blob ? "byte-identical" : "DIFFERS") + ", manifest " +
                  (same_manifest ? "byte-identical" : "DIFFERS") + "; corruption " +
                  (detected ? "detected (" + message + ")" : "NOT detected")};
}

}  // namespace

int main(int argc, char** argv) {
  select_blas_kernel(argv);
  CLI::App app("Acceptance criteria");
  std::string dir = "acceptance_work";
  std::vector<int> only;
  bool reuse = false;
  app.add_option("--dir", dir, "Working directory for corpus, checkpoints and reports");
  app.add_option("--only", only, "Run only these criterion numbers");
  app.add_flag("--reuse-bank", reuse, "Reuse a bank checkpoint already present in --dir");
  CLI11_PARSE(app, argc, argv);

  Context ctx;
  ctx.dir = fs::absolute(dir);
  ctx.reuse_bank = reuse;
  fs::create_directories(ctx.dir);
  configure_threads(true);

  const std::vector<std::pair<std::string, std::function<Outcome(Context&)>>> criteria{
      {"shape and end-to-end runtime", shapes_and_runtime},
      {"frozen bank contract", frozen_bank},
      {"gradient suite", gradient_suite},
      {"loss arithmetic", loss_arithmetic},
      {"metric oracles", metric_oracles},
      {"ablation ordering", ablation_ordering},
      {"feed-forward vs inversion", forward_vs_inversion},
      {"inversion sanity", inversion_sanity},
      {"determinism", determinism},
      {"checkpoint portability", checkpoint_portability},
  };
  // Cheap criteria first; the shared ablation run is built lazily.
  const std::vector<int> order{4, 5, 3, 8, 6, 2, 1, 7, 10, 9};
  const std::set<int> selected(only.begin(), only.end());
  std::map<int, Outcome> results;
  const auto t0 = Clock::now();
  for (int id : order) {
    if (!selected.empty() && !selected.count(id)) continue;
    const auto& [name, fn] = criteria[id - 1];
    log("criterion " + std::to_string(id) + ": " + name);
    try {
      results[id] = fn(ctx);
    } catch (const std::exception& e) {
      results[id] = {false, std::string("exception: ") + e.what()};
    }
    log(std::string(results[id].pass ? "PASS" : "FAIL") + " " + results[id].detail);
  }

  nlohmann::json summary = nlohmann::json::array();
  bool all = true;
  for (const auto& [id, r] : results) {
    std::printf("%s  %2d  %-30s %s\n", r.pass ? "PASS" : "FAIL", id, criteria[id - 1].first.c_str(), r.detail.c_str());
    summary.push_back({{"criterion", id}, {"name", criteria[id - 1].first}, {"pass", r.pass}, {"detail", r.detail}});
    all = all && r.pass;
  }
  std::printf("total %.0f s\n", seconds_since(t0));
  std::ofstream(ctx.dir / "acceptance_summary.json") << summary.dump(2) << '\n';
  return all ? 0 : 1;
}
