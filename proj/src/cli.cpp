#include "glean/cli.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <optional>
#include <set>

#include "glean/ablation.hpp"
#include "glean/checkpoint.hpp"
#include "glean/config.hpp"
#include "glean/errors.hpp"
#include "glean/imaging.hpp"
#include "glean/inversion.hpp"
#include "glean/metrics.hpp"
#include "glean/training.hpp"

namespace glean {

namespace fs = std::filesystem;

namespace {

struct Common {
  std::optional<std::uint64_t> seed;
  bool deterministic = false;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--seed", c.seed, "Random seed (overrides config seeds)");
  cmd->add_flag("--deterministic", c.deterministic, "Single-threaded BLAS, zeroed wall-clock fields in logs");
}

void write_json(const fs::path& path, const nlohmann::json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

ExperimentConfig experiment_or_default(const std::string& path) {
  return path.empty() ? ExperimentConfig{} : load_experiment(path);
}

void apply_common(TrainConfig& t, const Common& c) {
  if (c.seed) t.seed = *c.seed;
  if (c.deterministic) t.deterministic = true;
}

std::vector<fs::path> png_inputs(const fs::path& in) {
  std::vector<fs::path> files;
  if (fs::is_directory(in)) {
    for (const auto& e : fs::directory_iterator(in))
      if (e.is_regular_file() && e.path().extension() == ".png") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    if (files.empty()) throw IoError("no PNG files in " + in.string());
  } else {
    files.push_back(in);
  }
  return files;
}

// ---- gen-data ----

struct GenDataArgs {
  std::string out;
  int count = 0;
  int size = 64;
};

void run_gen_data(const GenDataArgs& a, const Common& c, std::ostream& out) {
  if (a.count <= 0) throw InvalidArgument("--count must be positive");
  write_corpus(a.out, c.seed.value_or(0), a.count, a.size);
  out << "wrote " << a.count << " scenes to " << a.out << '\n';
}

// ---- pretrain-bank ----

struct PretrainArgs {
  std::string data, config, out, samples, log;
  long iterations = 0;
  bool verbose = false;
};

void run_pretrain(const PretrainArgs& a, const Common& c, std::ostream& out) {
  ExperimentConfig exp = experiment_or_default(a.config);
  TrainConfig t = exp.bank_train;
  apply_common(t, c);
  if (a.iterations > 0) t.iterations = a.iterations;
  const Corpus corpus = load_corpus(a.data);
  TrainHooks hooks;
  hooks.checkpoint_path = fs::path(a.out);
  if (!a.samples.empty()) hooks.sample_dir = fs::path(a.samples);
  if (!a.log.empty()) hooks.log_path = fs::path(a.log);
  hooks.verbose = a.verbose;
  const BankTrainResult r = pretrain_bank(corpus, exp.model.bank_config(), t, hooks);
  out << "bank pretrained for " << t.iterations << " steps; final l_disc " << r.log.back().l_disc << '\n';
}

// ---- train ----

struct TrainArgs {
  std::string data, bank, config, out, log, val;
  long iterations = 0;
  int val_count = 0;
  bool verbose = false;
};

void run_train(const TrainArgs& a, const Common& c, std::ostream& out) {
  ExperimentConfig exp = experiment_or_default(a.config);
  TrainConfig t = exp.train;
  apply_common(t, c);
  if (a.iterations > 0) t.iterations = a.iterations;
  GleanConfig mc = exp.model;
  if (c.seed) mc.seed = *c.seed;

  const CheckpointData bank_ckpt = read_checkpoint(a.bank);
  LatentBank bank = bank_from_checkpoint(bank_ckpt);
  std::optional<Discriminator> disc;
  if (t.reuse_discriminator && bank_ckpt.has("disc.head.weight")) {
    CounterRng rng(0, 0);
    disc = Discriminator::create(bank.config.out_res, rng);
    ParamList dp;
    disc->collect("disc", dp);
    assign_parameters(bank_ckpt, dp);
  }

  Corpus corpus = load_corpus(a.data);
  Corpus val;
  if (!a.val.empty()) {
    val = load_corpus(a.val);
  } else if (a.val_count > 0) {
    if (static_cast<std::size_t>(a.val_count) >= corpus.size()) throw InvalidArgument("--val-count exceeds corpus size");
    val = corpus.slice(corpus.size() - a.val_count, corpus.size());
    corpus = corpus.slice(0, corpus.size() - a.val_count);
  }

  TrainHooks hooks;
  hooks.checkpoint_path = fs::path(a.out);
  hooks.log_path = a.log.empty() ? fs::path(a.out + ".log.jsonl") : fs::path(a.log);
  hooks.verbose = a.verbose;
  const GleanTrainResult r = train_glean(corpus, val, GleanModel::create(mc, freeze(bank)), t, hooks, disc);
  out << "trained " << t.iterations << " steps; final l_total " << r.log.back().l_total;
  if (!r.validation.empty()) out << "; val psnr " << r.validation.back().psnr;
  out << '\n';
}

// ---- infer ----

struct InferArgs {
  std::string model, in, out;
  int scale = 0;
};

void run_infer(const InferArgs& a, std::ostream& out) {
  const GleanModel model = load_glean(a.model);
  if (a.scale != 0 && a.scale != model.config.scale) {
    throw InvalidArgument("--scale " + std::to_string(a.scale) + " does not match the model's scale " +
                          std::to_string(model.config.scale));
  }
  fs::create_directories(a.out);
  int n = 0;
  for (const auto& file : png_inputs(a.in)) {
    save_image(glean_forward(load_image(file), model), fs::path(a.out) / file.filename());
    ++n;
  }
  out << "upscaled " << n << " image(s) ×" << model.config.scale << " into " << a.out << '\n';
}

// ---- invert ----

struct InvertArgs {
  std::string bank, in, out, mode = "multi";
  int steps = 200;
  double opt_lr = 0.0;
  int downsample_to = 0;
};

void run_invert(const InvertArgs& a, const Common& c, std::ostream& out) {
  InversionConfig cfg;
  cfg.steps = a.steps;
  cfg.mode = latent_mode_from_string(a.mode);
  if (a.opt_lr > 0.0) cfg.opt_lr = a.opt_lr;
  cfg.downsample_to = a.downsample_to;
  cfg.seed = c.seed.value_or(0);
  configure_threads(c.deterministic);
  const LatentBank bank = freeze(load_bank(a.bank));
  const InversionResult r = invert(load_image(a.in), bank, cfg);
  const fs::path dir(a.out);
  fs::create_directories(dir);
  save_image(r.image, dir / "inverted.png");
  write_trace(r.trace, dir / "trace.jsonl");
  write_json(dir / "inversion.json", {{"config", to_json(cfg)},
                                      {"final_objective", r.trace.back()},
                                      {"latent_shape", r.latents.shape()},
                                      {"latents", r.latents.storage()}});
  out << "inversion finished; final objective " << r.trace.back() << '\n';
}

// ---- eval ----

struct EvalArgs {
  std::string model, data, method, report, split = "val";
  int scale = 0;
  int steps = 0;
  bool quantize = false;
};

void run_eval(const EvalArgs& a, const Common& c, std::ostream& out) {
  configure_threads(c.deterministic);
  const Corpus corpus = load_corpus(a.data);
  std::optional<GleanModel> model;
  if (a.method != "bicubic") {
    if (a.model.empty()) throw InvalidArgument("--model is required for method '" + a.method + "'");
    model = load_glean(a.model);
  }
  int scale = a.scale;
  if (model) {
    if (scale != 0 && scale != model->config.scale) throw InvalidArgument("--scale does not match the model's scale");
    scale = model->config.scale;
  }
  if (scale == 0) scale = 4;

  Upscaler up;
  if (a.method == "bicubic") {
    up = bicubic_upscaler(scale);
  } else if (a.method == "glean") {
    up = [&](const Tensor& lr) { return glean_forward(lr, *model); };
  } else if (a.method == "inversion") {
    InversionConfig cfg;
    if (a.steps > 0) cfg.steps = a.steps;
    cfg.seed = c.seed.value_or(0);
    up = [&, cfg](const Tensor& lr) { return invert(lr, model->bank, cfg).image; };
  } else {
    throw InvalidArgument("unknown method '" + a.method + "' (glean|inversion|bicubic)");
  }
  const EvalTable table = evaluate_split(a.method, a.split, corpus.ids, corpus.images, scale, up, a.quantize);
  write_json(a.report, table.to_json());
  out << table.to_text();
}

// ---- ablate ----

struct AblateArgs {
  std::string data, bank, grid, report;
  bool verbose = false;
};

std::vector<AblationCell> cells_from_grid(const nlohmann::json& g) {
  if (g.contains("cells")) {
    std::vector<AblationCell> cells;
    for (const auto& j : g.at("cells")) {
      AblationCell c;
      c.name = j.at("name").get<std::string>();
      c.enc_inject_depth = j.value("enc_inject_depth", -1);
      c.bank_feature_depth = j.value("bank_feature_depth", -1);
      c.use_decoder = j.value("use_decoder", true);
      cells.push_back(c);
    }
    return cells;
  }
  if (g.contains("enc_inject_depth") || g.contains("bank_feature_depth") || g.contains("use_decoder")) {
    return grid_cells(g.value("enc_inject_depth", std::vector<int>{-1}), g.value("bank_feature_depth", std::vector<int>{-1}),
                      g.value("use_decoder", std::vector<bool>{true}));
  }
  return standard_cells();
}

void run_ablate(const AblateArgs& a, const Common& c, std::ostream& out) {
  std::ifstream in(a.grid);
  if (!in) throw IoError("cannot open grid " + a.grid);
  nlohmann::json g;
  try {
    in >> g;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument("grid " + a.grid + " is not valid JSON: " + e.what());
  }
  for (auto it = g.begin(); it != g.end(); ++it) {
    static const std::set<std::string> known{"cells", "enc_inject_depth", "bank_feature_depth", "use_decoder",
                                             "model", "train", "val_count"};
    if (!known.count(it.key())) throw InvalidArgument("grid: unknown key '" + it.key() + "'");
  }
  GleanConfig mc = g.contains("model") ? glean_config_from_json(g.at("model")) : GleanConfig{};
  TrainConfig t = g.contains("train") ? train_config_from_json(g.at("train"), TrainConfig::glean_defaults())
                                      : TrainConfig::glean_defaults();
  apply_common(t, c);
  if (c.seed) mc.seed = *c.seed;
  const int val_count = g.value("val_count", 64);

  const Corpus corpus = load_corpus(a.data);
  if (val_count <= 0 || static_cast<std::size_t>(val_count) >= corpus.size()) {
    throw InvalidArgument("val_count must lie in (0, corpus size)");
  }
  const Corpus train = corpus.slice(0, corpus.size() - val_count);
  const Corpus val = corpus.slice(corpus.size() - val_count, corpus.size());
  const LatentBank bank = freeze(load_bank(a.bank));
  const AblationReport r = run_ablation(train, val, bank, mc, t, cells_from_grid(g), a.verbose);
  write_json(a.report, r.to_json());
  out << "bicubic: " << r.bicubic_psnr << " dB\n";
  for (const auto& o : r.cells) out << o.cell.name << ": " << o.val_psnr << " dB\n";
}

// ---- retouch ----

struct RetouchArgs {
  std::string model, in, out;
};

void run_retouch(const RetouchArgs& a, std::ostream& out) {
  const GleanModel model = load_glean(a.model);
  const Tensor img = load_image(a.in);
  const int hr = model.config.hr_res(), lr = model.config.lr_res;
  // The model runs at a fixed resolution; other sizes are resampled in and out.
  const Tensor work = (img.h() == hr && img.w() == hr) ? img : bicubic_resize(img, hr, hr);
  Tensor result = glean_forward(bicubic_resize(work, lr, lr), model);
  if (img.h() != hr || img.w() != hr) result = bicubic_resize(result, img.h(), img.w());
  if (fs::path(a.out).has_parent_path()) fs::create_directories(fs::path(a.out).parent_path());
  save_image(result, a.out);
  out << "retouched " << a.in << " -> " << a.out << '\n';
}

}  // namespace

int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"glean: generative latent bank super-resolution at desk scale", "glean"};
  app.require_subcommand(1);
  Common common;

  GenDataArgs gen;
  auto* c_gen = app.add_subcommand("gen-data", "Write a synthetic scene corpus (PNGs + manifest)");
  c_gen->add_option("--out", gen.out, "Output directory")->required();
  c_gen->add_option("--count", gen.count, "Number of scenes")->required();
  c_gen->add_option("--size", gen.size, "Scene size (power of two)");
  add_common(c_gen, common);

  PretrainArgs pre;
  auto* c_pre = app.add_subcommand("pretrain-bank", "Adversarially pretrain the latent bank");
  c_pre->add_option("--data", pre.data, "Corpus directory")->required();
  c_pre->add_option("--config", pre.config, "Experiment config JSON");
  c_pre->add_option("--out", pre.out, "Output checkpoint")->required();
  c_pre->add_option("--samples", pre.samples, "Directory for periodic sample grids");
  c_pre->add_option("--log", pre.log, "JSON-lines loss log");
  c_pre->add_option("--iterations", pre.iterations, "Override the configured iteration count");
  c_pre->add_flag("--verbose", pre.verbose);
  add_common(c_pre, common);

  TrainArgs tr;
  auto* c_tr = app.add_subcommand("train", "Train encoder, fusion convs and decoder around a frozen bank");
  c_tr->add_option("--data", tr.data, "Training corpus directory")->required();
  c_tr->add_option("--bank", tr.bank, "Pretrained bank checkpoint")->required();
  c_tr->add_option("--config", tr.config, "Experiment config JSON");
  c_tr->add_option("--out", tr.out, "Output checkpoint")->required();
  c_tr->add_option("--log", tr.log, "JSON-lines loss log (default <out>.log.jsonl)");
  c_tr->add_option("--val", tr.val, "Validation corpus directory");
  c_tr->add_option("--val-count", tr.val_count, "Hold out the last N training images for validation");
  c_tr->add_option("--iterations", tr.iterations, "Override the configured iteration count");
  c_tr->add_flag("--verbose", tr.verbose);
  add_common(c_tr, common);

  InferArgs inf;
  auto* c_inf = app.add_subcommand("infer", "Upscale LR images with a trained model");
  c_inf->add_option("--model", inf.model, "Trained checkpoint")->required();
  c_inf->add_option("--in", inf.in, "PNG file or directory")->required();
  c_inf->add_option("--out", inf.out, "Output directory")->required();
  c_inf->add_option("--scale", inf.scale, "Expected scale (must match the model)");
  add_common(c_inf, common);

  InvertArgs inv;
  auto* c_inv = app.add_subcommand("invert", "Reconstruct an LR image by latent optimization through the bank");
  c_inv->add_option("--bank", inv.bank, "Bank checkpoint")->required();
  c_inv->add_option("--in", inv.in, "LR PNG")->required();
  c_inv->add_option("--steps", inv.steps, "Optimization steps");
  c_inv->add_option("--mode", inv.mode, "single|multi")->check(CLI::IsMember({"single", "multi"}));
  c_inv->add_option("--opt-lr", inv.opt_lr, "Latent learning rate");
  c_inv->add_option("--downsample-to", inv.downsample_to, "Compare at this resolution instead of the input's");
  c_inv->add_option("--out", inv.out, "Output directory")->required();
  add_common(c_inv, common);

  EvalArgs ev;
  auto* c_ev = app.add_subcommand("eval", "Evaluate a method on a corpus");
  c_ev->add_option("--model", ev.model, "Trained checkpoint (not needed for bicubic)");
  c_ev->add_option("--data", ev.data, "HR corpus directory")->required();
  c_ev->add_option("--method", ev.method, "glean|inversion|bicubic")
      ->required()
      ->check(CLI::IsMember({"glean", "inversion", "bicubic"}));
  c_ev->add_option("--report", ev.report, "Results JSON")->required();
  c_ev->add_option("--split", ev.split, "Split label for the report");
  c_ev->add_option("--scale", ev.scale, "Scale for bicubic (default 4, or the model's)");
  c_ev->add_option("--steps", ev.steps, "Inversion steps");
  c_ev->add_flag("--quantize", ev.quantize, "Round SR output through 8-bit storage before scoring");
  add_common(c_ev, common);

  AblateArgs ab;
  auto* c_ab = app.add_subcommand("ablate", "Train and evaluate an ablation grid around a shared bank");
  c_ab->add_option("--data", ab.data, "Corpus directory (last val_count images are validation)")->required();
  c_ab->add_option("--bank", ab.bank, "Pretrained bank checkpoint")->required();
  c_ab->add_option("--grid", ab.grid, "Grid JSON")->required();
  c_ab->add_option("--report", ab.report, "Report JSON")->required();
  c_ab->add_flag("--verbose", ab.verbose);
  add_common(c_ab, common);

  RetouchArgs rt;
  auto* c_rt = app.add_subcommand("retouch", "Downsample by the model's scale, then restore with the model");
  c_rt->add_option("--model", rt.model, "Trained checkpoint")->required();
  c_rt->add_option("--in", rt.in, "Input PNG")->required();
  c_rt->add_option("--out", rt.out, "Output PNG")->required();
  add_common(c_rt, common);

  std::vector<std::string> argv_store{"glean"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& s : argv_store) argv.push_back(s.data());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return kExitUsage;
  }

  try {
    if (c_gen->parsed()) run_gen_data(gen, common, out);
    else if (c_pre->parsed()) run_pretrain(pre, common, out);
    else if (c_tr->parsed()) run_train(tr, common, out);
    else if (c_inf->parsed()) run_infer(inf, out);
    else if (c_inv->parsed()) run_invert(inv, common, out);
    else if (c_ev->parsed()) run_eval(ev, common, out);
    else if (c_ab->parsed()) run_ablate(ab, common, out);
    else if (c_rt->parsed()) run_retouch(rt, out);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitOk;
}

int cli_main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return cli_main(args, std::cout, std::cerr);
}

}  // namespace glean
