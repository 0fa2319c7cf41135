#include "glean/ablation.hpp"

#include <chrono>
#include <iostream>

#include "glean/config.hpp"
#include "glean/errors.hpp"
#include "glean/metrics.hpp"

namespace glean {

std::vector<AblationCell> standard_cells() {
  return {{"full", -1, -1, true}, {"no-bank-features", -1, 0, true}, {"latent-only", 0, -1, true}};
}

std::vector<AblationCell> grid_cells(const std::vector<int>& enc_depths, const std::vector<int>& bank_depths,
                                     const std::vector<bool>& decoder) {
  std::vector<AblationCell> cells;
  for (int e : enc_depths)
    for (int b : bank_depths)
      for (bool d : decoder) {
        cells.push_back({"e" + std::to_string(e) + "_b" + std::to_string(b) + "_d" + (d ? "1" : "0"), e, b, d});
      }
  return cells;
}

nlohmann::json AblationReport::to_json() const {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& o : cells) {
    rows.push_back({{"name", o.cell.name},
                    {"enc_inject_depth", o.cell.enc_inject_depth},
                    {"bank_feature_depth", o.cell.bank_feature_depth},
                    {"use_decoder", o.cell.use_decoder},
                    {"val_psnr", json_number(o.val_psnr)},
                    {"final_l_total", o.final_l_total},
                    {"wall_s", o.wall_s}});
  }
  return {{"cells", rows},
          {"bicubic_psnr", json_number(bicubic_psnr)},
          {"model", glean::to_json(base_model)},
          {"train", glean::to_json(train)}};
}

const AblationOutcome& AblationReport::find(const std::string& name) const {
  for (const auto& o : cells)
    if (o.cell.name == name) return o;
  throw InvalidArgument("no ablation cell named '" + name + "'");
}

AblationReport run_ablation(const Corpus& train, const Corpus& val, const LatentBank& bank, const GleanConfig& base,
                            const TrainConfig& cfg, const std::vector<AblationCell>& cells, bool verbose,
                            const CellHooks& cell_hooks) {
  if (val.size() == 0) throw InvalidArgument("ablation needs a validation split");
  AblationReport report;
  report.base_model = base.resolved();
  report.train = cfg;

  double bicubic = 0.0;
  const Upscaler up = bicubic_upscaler(base.scale);
  for (const auto& hr : val.images) bicubic += psnr(up(make_pair(hr, base.scale).lr), hr);
  report.bicubic_psnr = bicubic / static_cast<double>(val.size());

  for (const auto& cell : cells) {
    GleanConfig mc = base;
    mc.enc_inject_depth = cell.enc_inject_depth;
    mc.bank_feature_depth = cell.bank_feature_depth;
    mc.use_decoder = cell.use_decoder;
    mc = mc.resolved();
    const auto t0 = std::chrono::steady_clock::now();
    const GleanModel model = GleanModel::create(mc, bank);
    TrainHooks hooks = cell_hooks ? cell_hooks(cell, model) : TrainHooks{};
    hooks.verbose = hooks.verbose || verbose;
    const GleanTrainResult r = train_glean(train, val, model, cfg, hooks);
    AblationOutcome o;
    o.cell = cell;
    o.val_psnr = r.validation.back().psnr;
    o.final_l_total = r.log.back().l_total;
    o.wall_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (verbose) std::cerr << "cell " << cell.name << " val psnr " << o.val_psnr << " (" << o.wall_s << " s)\n";
    report.cells.push_back(o);
  }
  return report;
}

}  // namespace glean
