#include "glean/config.hpp"

#include <fstream>
#include <set>

#include "glean/errors.hpp"

namespace glean {

namespace {

// Strict object reader: every key must be consumed, every value must have the
// requested type.
class Reader {
 public:
  Reader(const nlohmann::json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw InvalidArgument(where_ + ": expected a JSON object");
  }

  template <typename T>
  void read(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    const auto& v = j_.at(key);
    bool ok = false;
    if constexpr (std::is_same_v<T, bool>) ok = v.is_boolean();
    else if constexpr (std::is_integral_v<T>) ok = v.is_number_integer();
    else if constexpr (std::is_floating_point_v<T>) ok = v.is_number();
    else if constexpr (std::is_same_v<T, std::string>) ok = v.is_string();
    if (!ok) throw InvalidArgument(where_ + "." + key + ": wrong type (" + v.type_name() + ")");
    if constexpr (std::is_unsigned_v<T> && !std::is_same_v<T, bool>) {
      if (v.is_number_integer() && !v.is_number_unsigned() && v.get<long long>() < 0) {
        throw InvalidArgument(where_ + "." + key + ": must be non-negative");
      }
    }
    out = v.get<T>();
  }

  const nlohmann::json* sub(const char* key) {
    seen_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) throw InvalidArgument(where_ + ": unknown key '" + it.key() + "'");
    }
  }

 private:
  const nlohmann::json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

}  // namespace

nlohmann::json to_json(const BankConfig& c) {
  return {{"out_res", c.out_res}, {"latent_dim", c.latent_dim}, {"max_width", c.max_width}, {"min_width", c.min_width}};
}

BankConfig bank_config_from_json(const nlohmann::json& j) {
  BankConfig c;
  Reader r(j, "bank");
  r.read("out_res", c.out_res);
  r.read("latent_dim", c.latent_dim);
  r.read("max_width", c.max_width);
  r.read("min_width", c.min_width);
  r.finish();
  c.validate();
  return c;
}

nlohmann::json to_json(const GleanConfig& raw) {
  const GleanConfig c = raw.resolved();
  return {{"scale", c.scale},
          {"lr_res", c.lr_res},
          {"hr_res", c.hr_res()},
          {"latent_dim", c.latent_dim},
          {"base_channels", c.base_channels},
          {"growth", c.growth},
          {"rrdb_blocks", c.rrdb_blocks},
          {"decoder_channels", c.decoder_channels},
          {"bank_max_width", c.bank_max_width},
          {"bank_min_width", c.bank_min_width},
          {"enc_inject_depth", c.enc_inject_depth},
          {"bank_feature_depth", c.bank_feature_depth},
          {"use_decoder", c.use_decoder},
          {"alpha_percep", c.alpha_percep},
          {"alpha_gen", c.alpha_gen},
          {"non_saturating", c.non_saturating},
          {"seed", c.seed}};
}

GleanConfig glean_config_from_json(const nlohmann::json& j) {
  GleanConfig c;
  Reader r(j, "model");
  r.read("scale", c.scale);
  r.read("lr_res", c.lr_res);
  int hr_res = -1;
  r.read("hr_res", hr_res);
  r.read("latent_dim", c.latent_dim);
  r.read("base_channels", c.base_channels);
  r.read("growth", c.growth);
  r.read("rrdb_blocks", c.rrdb_blocks);
  r.read("decoder_channels", c.decoder_channels);
  r.read("bank_max_width", c.bank_max_width);
  r.read("bank_min_width", c.bank_min_width);
  r.read("enc_inject_depth", c.enc_inject_depth);
  r.read("bank_feature_depth", c.bank_feature_depth);
  r.read("use_decoder", c.use_decoder);
  r.read("alpha_percep", c.alpha_percep);
  r.read("alpha_gen", c.alpha_gen);
  r.read("non_saturating", c.non_saturating);
  r.read("seed", c.seed);
  r.finish();
  if (hr_res != -1 && hr_res != c.hr_res()) {
    throw InvalidArgument("model.hr_res " + std::to_string(hr_res) + " != scale·lr_res " + std::to_string(c.hr_res()));
  }
  return c.resolved();
}

nlohmann::json to_json(const TrainConfig& c) {
  return {{"iterations", c.iterations},
          {"batch_size", c.batch_size},
          {"lr_init", c.lr_init},
          {"lr_min", c.lr_min},
          {"beta1", c.beta1},
          {"beta2", c.beta2},
          {"eps", c.eps},
          {"seed", c.seed},
          {"checkpoint_every", c.checkpoint_every},
          {"deterministic", c.deterministic},
          {"non_saturating", c.non_saturating},
          {"reuse_discriminator", c.reuse_discriminator}};
}

TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig c) {
  Reader r(j, "train");
  r.read("iterations", c.iterations);
  r.read("batch_size", c.batch_size);
  r.read("lr_init", c.lr_init);
  r.read("lr_min", c.lr_min);
  r.read("beta1", c.beta1);
  r.read("beta2", c.beta2);
  r.read("eps", c.eps);
  r.read("seed", c.seed);
  r.read("checkpoint_every", c.checkpoint_every);
  r.read("deterministic", c.deterministic);
  r.read("non_saturating", c.non_saturating);
  r.read("reuse_discriminator", c.reuse_discriminator);
  r.finish();
  c.validate();
  return c;
}

nlohmann::json to_json(const InversionConfig& c) {
  return {{"steps", c.steps},
          {"opt_lr", c.opt_lr},
          {"mode", to_string(c.mode)},
          {"downsample_to", c.downsample_to},
          {"seed", c.seed},
          {"latent_prior", c.latent_prior}};
}

InversionConfig inversion_config_from_json(const nlohmann::json& j) {
  InversionConfig c;
  Reader r(j, "inversion");
  r.read("steps", c.steps);
  r.read("opt_lr", c.opt_lr);
  std::string mode = to_string(c.mode);
  r.read("mode", mode);
  c.mode = latent_mode_from_string(mode);
  r.read("downsample_to", c.downsample_to);
  r.read("seed", c.seed);
  r.read("latent_prior", c.latent_prior);
  r.finish();
  c.validate();
  return c;
}

ExperimentConfig experiment_from_json(const nlohmann::json& j) {
  ExperimentConfig c;
  Reader r(j, "config");
  if (const auto* m = r.sub("model")) c.model = glean_config_from_json(*m);
  c.model = c.model.resolved();
  if (const auto* b = r.sub("bank_train")) c.bank_train = train_config_from_json(*b, TrainConfig::bank_defaults());
  if (const auto* t = r.sub("train")) c.train = train_config_from_json(*t, TrainConfig::glean_defaults());
  if (const auto* i = r.sub("inversion")) c.inversion = inversion_config_from_json(*i);
  r.finish();
  return c;
}

nlohmann::json to_json(const ExperimentConfig& c) {
  return {{"model", to_json(c.model)},
          {"bank_train", to_json(c.bank_train)},
          {"train", to_json(c.train)},
          {"inversion", to_json(c.inversion)}};
}

ExperimentConfig load_experiment(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return experiment_from_json(j);
}

}  // namespace glean
