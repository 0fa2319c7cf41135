#pragma once

#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "glean/glean_model.hpp"
#include "glean/training.hpp"

namespace glean {

struct AblationCell {
  std::string name;
  int enc_inject_depth = -1;
  int bank_feature_depth = -1;
  bool use_decoder = true;
};

struct AblationOutcome {
  AblationCell cell;
  double val_psnr = 0.0;
  double final_l_total = 0.0;
  double wall_s = 0.0;
};

struct AblationReport {
  std::vector<AblationOutcome> cells;
  double bicubic_psnr = 0.0;
  GleanConfig base_model;
  TrainConfig train;

  nlohmann::json to_json() const;
  const AblationOutcome& find(const std::string& name) const;
};

/// The three named variants used for directional comparisons:
/// "full", "no-bank-features" (decoder sees no bank features) and
/// "latent-only" (bank receives only the latent vectors).
std::vector<AblationCell> standard_cells();

/// Cartesian product of the listed axis values; names follow "e{E}_b{B}_d{0|1}".
std::vector<AblationCell> grid_cells(const std::vector<int>& enc_depths, const std::vector<int>& bank_depths,
                                     const std::vector<bool>& decoder);

/// Supplies training hooks for a cell given its freshly built model. The
/// model shares parameter storage with the one being trained.
using CellHooks = std::function<TrainHooks(const AblationCell&, const GleanModel&)>;

/// Trains every cell from the same initialization seed around the shared
/// frozen bank and reports mean validation PSNR.
AblationReport run_ablation(const Corpus& train, const Corpus& val, const LatentBank& bank, const GleanConfig& base,
                            const TrainConfig& cfg, const std::vector<AblationCell>& cells, bool verbose = false,
                            const CellHooks& cell_hooks = {});

}  // namespace glean
