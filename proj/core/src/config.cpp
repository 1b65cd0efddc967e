#include "floodseg/config.hpp"

#include <fstream>

#include <json.hpp>

using nlohmann::json;

namespace floodseg {

DatasetLayout PipelineConfig::layout() const {
  if (layout_name == "flat") return DatasetLayout::flat();
  if (layout_name == "floodnet") return DatasetLayout::floodnet();
  throw ContractError("unknown dataset layout: " + layout_name);
}

PipelineConfig default_config() {
  PipelineConfig cfg;
  cfg.training.loss.alpha = ClassCatalog::floodnet().alphas();
  cfg.training.loss.gamma = 4.0;
  cfg.training.loss.epsilon = 1e-5;
  cfg.training.loss.w = 0.5;
  cfg.training.model.variant = ModelVariant::UnetFused;
  cfg.training.model.num_classes = 10;
  cfg.training.model.input_size = 448;
  cfg.training.model.backbone = BackboneSpec{};
  return cfg;
}

std::string config_to_json(const PipelineConfig& cfg) {
  const TrainingConfig& t = cfg.training;
  json j;
  j["data"] = {{"root", cfg.data_root.string()}, {"layout", cfg.layout_name}};
  j["backbone"] = {{"kind", to_string(t.model.backbone.kind)},
                   {"patch_size", t.model.backbone.patch_size},
                   {"embed_dim", t.model.backbone.embed_dim},
                   {"weights_locator", t.model.backbone.weights_locator}};
  j["model"] = {{"variant", to_string(t.model.variant)},
                {"num_classes", t.model.num_classes},
                {"input_size", t.model.input_size},
                {"unet_channels", t.model.unet_channels},
                {"unet_bottleneck", t.model.unet_bottleneck},
                {"deeplab_aspp_channels", t.model.deeplab_aspp_channels},
                {"init_seed", t.model.init_seed}};
  j["loss"] = {{"alpha", t.loss.alpha},
               {"beta", cfg.alpha_derivation.beta},
               {"gamma", t.loss.gamma},
               {"epsilon", t.loss.epsilon},
               {"w", t.loss.w}};
  j["training"] = {{"lr0", t.lr0},
                   {"plateau_factor", t.plateau_factor},
                   {"plateau_patience", t.plateau_patience},
                   {"epochs", t.epochs},
                   {"train_batch", t.train_batch},
                   {"eval_batch", t.eval_batch},
                   {"optimizer", t.optimizer},
                   {"seed", t.seed},
                   {"checkpoint_dir", t.checkpoint_dir.string()}};
  j["augment"] = {{"hflip_prob", t.augment.hflip_prob},
                  {"vflip_prob", t.augment.vflip_prob},
                  {"zoom_min", t.augment.zoom_min},
                  {"zoom_max", t.augment.zoom_max},
                  {"seed", t.augment.seed}};
  return j.dump(2) + "\n";
}

PipelineConfig config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed config: ") + e.what());
  }
  PipelineConfig cfg = default_config();
  TrainingConfig& t = cfg.training;
  try {
    if (j.contains("data")) {
      cfg.data_root = j["data"].value("root", cfg.data_root.string());
      cfg.layout_name = j["data"].value("layout", cfg.layout_name);
    }
    if (j.contains("backbone")) {
      auto& b = j["backbone"];
      if (b.contains("kind")) t.model.backbone.kind = backbone_kind_from_string(b["kind"]);
      t.model.backbone.patch_size = b.value("patch_size", t.model.backbone.patch_size);
      t.model.backbone.embed_dim = b.value("embed_dim", t.model.backbone.embed_dim);
      t.model.backbone.weights_locator =
          b.value("weights_locator", t.model.backbone.weights_locator);
    }
    if (j.contains("model")) {
      auto& m = j["model"];
      if (m.contains("variant")) t.model.variant = model_variant_from_string(m["variant"]);
      t.model.num_classes = m.value("num_classes", t.model.num_classes);
      t.model.input_size = m.value("input_size", t.model.input_size);
      if (m.contains("unet_channels"))
        t.model.unet_channels = m["unet_channels"].get<std::vector<int>>();
      t.model.unet_bottleneck = m.value("unet_bottleneck", t.model.unet_bottleneck);
      t.model.deeplab_aspp_channels =
          m.value("deeplab_aspp_channels", t.model.deeplab_aspp_channels);
      t.model.init_seed = m.value("init_seed", t.model.init_seed);
    }
    if (j.contains("loss")) {
      auto& l = j["loss"];
      if (l.contains("alpha")) t.loss.alpha = l["alpha"].get<std::vector<double>>();
      if (l.contains("beta")) cfg.alpha_derivation.beta = l["beta"].get<std::vector<double>>();
      t.loss.gamma = l.value("gamma", t.loss.gamma);
      t.loss.epsilon = l.value("epsilon", t.loss.epsilon);
      t.loss.w = l.value("w", t.loss.w);
    }
    if (j.contains("training")) {
      auto& tr = j["training"];
      t.lr0 = tr.value("lr0", t.lr0);
      t.plateau_factor = tr.value("plateau_factor", t.plateau_factor);
      t.plateau_patience = tr.value("plateau_patience", t.plateau_patience);
      t.epochs = tr.value("epochs", t.epochs);
      t.train_batch = tr.value("train_batch", t.train_batch);
      t.eval_batch = tr.value("eval_batch", t.eval_batch);
      t.optimizer = tr.value("optimizer", t.optimizer);
      t.seed = tr.value("seed", t.seed);
      if (tr.contains("checkpoint_dir"))
        t.checkpoint_dir = tr["checkpoint_dir"].get<std::string>();
    }
    if (j.contains("augment")) {
      auto& a = j["augment"];
      t.augment.hflip_prob = a.value("hflip_prob", t.augment.hflip_prob);
      t.augment.vflip_prob = a.value("vflip_prob", t.augment.vflip_prob);
      t.augment.zoom_min = a.value("zoom_min", t.augment.zoom_min);
      t.augment.zoom_max = a.value("zoom_max", t.augment.zoom_max);
      t.augment.seed = a.value("seed", t.augment.seed);
    }
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed config: ") + e.what());
  }
  return cfg;
}

PipelineConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config: " + path.string());
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return config_from_json(text);
}

void save_config(const PipelineConfig& cfg, const std::filesystem::path& path) {
  if (!path.parent_path().empty()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write config: " + path.string());
  out << config_to_json(cfg);
}

}  // namespace floodseg
