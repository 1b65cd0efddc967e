#ifndef FLOODSEG_CONFIG_HPP
#define FLOODSEG_CONFIG_HPP

#include <filesystem>
#include <string>

#include "floodseg/dataset.hpp"
#include "floodseg/training.hpp"

namespace floodseg {

/// Resolved pipeline configuration; the config file is the single source of
/// truth and CLI flags override individual fields.
struct PipelineConfig {
  std::filesystem::path data_root;
  std::string layout_name = "flat";  // "flat" or "floodnet"
  TrainingConfig training;
  AlphaDerivationConfig alpha_derivation;

  DatasetLayout layout() const;
};

/// Defaults: FloodNet catalog alphas, gamma 4.0, eps 1e-5, w 0.5, lr 1e-3,
/// factor 0.75, patience 5, epochs 70, batches 8/16, input 448, p 14, E 384.
PipelineConfig default_config();

PipelineConfig load_config(const std::filesystem::path& path);
void save_config(const PipelineConfig& cfg, const std::filesystem::path& path);
std::string config_to_json(const PipelineConfig& cfg);
PipelineConfig config_from_json(const std::string& text);

}  // namespace floodseg

#endif
