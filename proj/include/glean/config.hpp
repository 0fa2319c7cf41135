#pragma once

#include <json.hpp>

#include "glean/glean_model.hpp"
#include "glean/inversion.hpp"
#include "glean/latent_bank.hpp"
#include "glean/training.hpp"

// JSON (de)serialization for every configuration record. Readers reject
// unknown keys and wrong types; writers emit every field so snapshots stored
// in checkpoints are complete.

namespace glean {

nlohmann::json to_json(const BankConfig& c);
nlohmann::json to_json(const GleanConfig& c);
nlohmann::json to_json(const TrainConfig& c);
nlohmann::json to_json(const InversionConfig& c);

BankConfig bank_config_from_json(const nlohmann::json& j);
GleanConfig glean_config_from_json(const nlohmann::json& j);
TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig defaults = {});
InversionConfig inversion_config_from_json(const nlohmann::json& j);

/// Top-level experiment file: {"model": {...}, "bank_train": {...}, "train": {...}, "inversion": {...}}.
struct ExperimentConfig {
  GleanConfig model;
  TrainConfig bank_train = TrainConfig::bank_defaults();
  TrainConfig train = TrainConfig::glean_defaults();
  InversionConfig inversion;
};

ExperimentConfig experiment_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ExperimentConfig& c);
ExperimentConfig load_experiment(const std::filesystem::path& path);

}  // namespace glean
