#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "glean/blocks.hpp"
#include "glean/glean_model.hpp"
#include "glean/imaging.hpp"
#include "glean/latent_bank.hpp"

namespace glean {

struct TrainConfig {
  long iterations = 5000;
  int batch_size = 8;
  double lr_init = 1e-4;
  double lr_min = 1e-7;
  double beta1 = 0.9;
  double beta2 = 0.99;
  double eps = 1e-8;
  std::uint64_t seed = 0;
  long checkpoint_every = 1000;  // GLEAN: validation + checkpoint; bank: sample grid
  bool deterministic = false;
  bool non_saturating = false;        // bank pretraining adversarial form
  bool reuse_discriminator = false;   // GLEAN: start from the pretraining critic

  static TrainConfig bank_defaults();
  static TrainConfig glean_defaults();
  void validate() const;
};

/// HR images plus identifiers, all 1×3×S×S.
struct Corpus {
  std::vector<std::string> ids;
  std::vector<Tensor> images;

  std::size_t size() const { return images.size(); }
  Corpus slice(std::size_t begin, std::size_t end) const;
};

Corpus make_corpus(std::uint64_t seed, int count, int size);

/// Writes `<dir>/scene_XXXX.png` and `<dir>/manifest.json` (array of SceneSpec records).
void write_corpus(const std::filesystem::path& dir, std::uint64_t seed, int count, int size);
/// Reads a corpus directory written by write_corpus (or any manifest listing `file` entries).
Corpus load_corpus(const std::filesystem::path& dir);

struct LogRecord {
  long step = 0;
  double l_mse = 0.0;
  double l_percep = 0.0;
  double l_gen = 0.0;
  double l_total = 0.0;
  double l_disc = 0.0;
  double lr = 0.0;
  double wall_ms = 0.0;

  nlohmann::json to_json() const;
};

struct TrainHooks {
  std::optional<std::filesystem::path> log_path;         // JSON-lines
  std::optional<std::filesystem::path> checkpoint_path;  // periodic + final checkpoint
  std::optional<std::filesystem::path> sample_dir;       // bank pretraining sample grids
  std::function<void(const LogRecord&)> on_step;
  bool verbose = false;
};

struct BankTrainResult {
  LatentBank bank;
  Discriminator discriminator;
  std::vector<LogRecord> log;
};

/// Adversarial pretraining of the bank as a pure generator on `corpus`.
BankTrainResult pretrain_bank(const Corpus& corpus, const BankConfig& bank_cfg, const TrainConfig& cfg,
                              const TrainHooks& hooks = {}, std::optional<LatentBank> init = std::nullopt);

struct ValidationPoint {
  long step = 0;
  double psnr = 0.0;
};

struct GleanTrainResult {
  GleanModel model;
  Discriminator discriminator;
  std::vector<LogRecord> log;
  std::vector<ValidationPoint> validation;
};

/// Trains encoder, decoder and fusion convs around a frozen bank.
/// `model.bank` must be frozen; a change to any frozen weight aborts with ContractViolation.
GleanTrainResult train_glean(const Corpus& train, const Corpus& val, GleanModel model, const TrainConfig& cfg,
                             const TrainHooks& hooks = {},
                             std::optional<Discriminator> pretrained_disc = std::nullopt);

/// Mean PSNR of glean_forward over `val` at the model's scale.
double validation_psnr(const GleanModel& model, const Corpus& val);

/// Sets OpenBLAS to a single thread when `deterministic`.
void configure_threads(bool deterministic);

/// Bitwise snapshot of parameter values for invariance checks.
std::vector<Tensor> snapshot(const ParamList& params);
bool bitwise_equal(const std::vector<Tensor>& snap, const ParamList& params);

}  // namespace glean
