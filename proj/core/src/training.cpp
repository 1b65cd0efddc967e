#include "floodseg/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include <json.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace floodseg {

void TrainingConfig::validate() const {
  if (lr0 <= 0) throw ContractError("training config: lr0 must be > 0");
  if (plateau_factor <= 0 || plateau_factor >= 1)
    throw ContractError("training config: plateau_factor must lie in (0, 1)");
  if (plateau_patience < 1) throw ContractError("training config: patience >= 1 required");
  if (epochs < 0) throw ContractError("training config: epochs must be >= 0");
  if (train_batch < 1 || eval_batch < 1)
    throw ContractError("training config: batch sizes must be >= 1");
  if (optimizer != "adam") throw ContractError("training config: unsupported optimizer " + optimizer);
  model.validate();
}

SchedulerState lr_on_plateau(SchedulerState state, double val_loss, const TrainingConfig& cfg) {
  if (!std::isfinite(val_loss))
    throw DivergenceError("validation loss is not finite");
  if (val_loss < state.best_val_loss) {
    state.best_val_loss = val_loss;
    state.epochs_since_improvement = 0;
  } else {
    state.epochs_since_improvement += 1;
    if (state.epochs_since_improvement >= cfg.plateau_patience) {
      state.current_lr *= cfg.plateau_factor;
      state.epochs_since_improvement = 0;
    }
  }
  return state;
}

void TrainingHistory::write_csv(const fs::path& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write history: " + path.string());
  out << "epoch,train_loss,val_loss,val_miou,lr\n";
  for (const auto& r : records)
    out << r.epoch << "," << r.train_loss << "," << r.val_loss << "," << r.val_miou << "," << r.lr
        << "\n";
}

namespace {

std::uint64_t digest_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read checkpoint blob: " + path.string());
  std::uint64_t h = 14695981039346656037ull;
  char buf[1 << 16];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 1099511628211ull;
    }
  }
  return h;
}

fs::path manifest_path(const fs::path& checkpoint) {
  return fs::path(checkpoint.string() + ".json");
}

torch::Tensor stack_images(const std::vector<Sample>& samples, std::size_t begin, std::size_t end) {
  std::vector<torch::Tensor> imgs;
  for (std::size_t i = begin; i < end; ++i) imgs.push_back(samples[i].image);
  return torch::stack(imgs);
}

torch::Tensor stack_masks(const std::vector<Sample>& samples, std::size_t begin, std::size_t end) {
  std::vector<torch::Tensor> masks;
  for (std::size_t i = begin; i < end; ++i) masks.push_back(samples[i].mask);
  return torch::stack(masks);
}

torch::Tensor forward_any(SegmentationModel& model, const Backbone* backbone,
                          const torch::Tensor& images) {
  if (is_fused(model.config().variant)) {
    if (!backbone) throw ContractError("fused variant requires a backbone");
    return model.forward_fused(images, backbone->extract(images));
  }
  return model.forward(images);
}

void set_lr(torch::optim::Optimizer& opt, double lr) {
  for (auto& group : opt.param_groups())
    static_cast<torch::optim::AdamOptions&>(group.options()).lr(lr);
}

}  // namespace

void save_checkpoint(SegmentationModel& model, const CheckpointManifest& manifest,
                     const fs::path& path) {
  if (!path.parent_path().empty()) fs::create_directories(path.parent_path());
  torch::serialize::OutputArchive archive;
  model.save(archive);
  archive.save_to(path.string());

  json j;
  j["variant"] = manifest.variant;
  j["num_classes"] = manifest.num_classes;
  j["input_size"] = manifest.input_size;
  j["seed"] = manifest.seed;
  j["epoch"] = manifest.epoch;
  j["val_miou"] = manifest.val_miou;
  j["val_loss"] = manifest.val_loss;
  j["blob_digest"] = digest_file(path);
  std::ofstream out(manifest_path(path));
  if (!out) throw IoError("cannot write checkpoint manifest: " + manifest_path(path).string());
  out << j.dump(2) << "\n";
}

CheckpointManifest read_manifest(const fs::path& checkpoint_path) {
  std::ifstream in(manifest_path(checkpoint_path));
  if (!in) throw IoError("missing checkpoint manifest: " + manifest_path(checkpoint_path).string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw IoError(std::string("corrupt checkpoint manifest: ") + e.what());
  }
  CheckpointManifest m;
  m.variant = j.at("variant").get<std::string>();
  m.num_classes = j.at("num_classes").get<int>();
  m.input_size = j.at("input_size").get<int>();
  m.seed = j.at("seed").get<std::uint64_t>();
  m.epoch = j.at("epoch").get<int>();
  m.val_miou = j.at("val_miou").get<double>();
  m.val_loss = j.at("val_loss").get<double>();
  m.blob_digest = j.at("blob_digest").get<std::uint64_t>();
  return m;
}

CheckpointManifest load_checkpoint(SegmentationModel& model, const fs::path& path) {
  if (!fs::exists(path)) throw IoError("checkpoint not found: " + path.string());
  CheckpointManifest m = read_manifest(path);
  if (m.variant != to_string(model.config().variant))
    throw IoError("checkpoint variant '" + m.variant + "' does not match model variant '" +
                  to_string(model.config().variant) + "'");
  if (m.num_classes != model.config().num_classes || m.input_size != model.config().input_size)
    throw IoError("checkpoint shape manifest does not match model config");
  if (digest_file(path) != m.blob_digest)
    throw IoError("checkpoint blob digest mismatch (corrupt file): " + path.string());
  torch::serialize::InputArchive archive;
  archive.load_from(path.string());
  model.load(archive);
  return m;
}

double train_epoch(SegmentationModel& model, const Backbone* backbone,
                   torch::optim::Optimizer& opt, const std::vector<Sample>& train_samples,
                   const TrainingConfig& cfg, int epoch) {
  if (train_samples.empty()) throw ContractError("train_epoch: empty training data");
  model.train();

  std::vector<std::size_t> order(train_samples.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 shuffle_rng(cfg.seed * 0x9e3779b97f4a7c15ull + static_cast<std::uint64_t>(epoch));
  std::shuffle(order.begin(), order.end(), shuffle_rng);

  double loss_sum = 0.0;
  int n_batches = 0;
  const std::size_t B = static_cast<std::size_t>(cfg.train_batch);
  for (std::size_t begin = 0; begin < order.size(); begin += B) {
    const std::size_t end = std::min(order.size(), begin + B);
    std::vector<Sample> batch;
    batch.reserve(end - begin);
    for (std::size_t i = begin; i < end; ++i) {
      const Sample& s = train_samples[order[i]];
      auto rng = sample_rng(cfg.augment.seed ? cfg.augment.seed : cfg.seed, s.sample_id,
                            static_cast<std::uint64_t>(epoch));
      batch.push_back(augment(s, cfg.augment, rng));
    }
    torch::Tensor images = stack_images(batch, 0, batch.size());
    torch::Tensor onehot = one_hot_map(stack_masks(batch, 0, batch.size()), cfg.model.num_classes);

    torch::Tensor probs = forward_any(model, backbone, images);
    torch::Tensor loss = total_loss(probs, onehot, cfg.loss);
    const double value = loss.item<double>();
    if (!std::isfinite(value))
      throw DivergenceError("non-finite training loss at epoch " + std::to_string(epoch) +
                            ", batch " + std::to_string(n_batches));
    opt.zero_grad();
    loss.backward();
    opt.step();
    loss_sum += value;
    ++n_batches;
  }
  return loss_sum / n_batches;
}

EvalResult eval_pass(SegmentationModel& model, const Backbone* backbone,
                     const std::vector<Sample>& samples, const TrainingConfig& cfg) {
  if (samples.empty()) throw ContractError("eval_pass: empty data");
  model.eval();
  torch::NoGradGuard ng;

  EvalResult res{0.0, ConfusionMatrix(cfg.model.num_classes)};
  double loss_sum = 0.0;
  int n_batches = 0;
  const std::size_t B = static_cast<std::size_t>(cfg.eval_batch);
  for (std::size_t begin = 0; begin < samples.size(); begin += B) {
    const std::size_t end = std::min(samples.size(), begin + B);
    torch::Tensor images = stack_images(samples, begin, end);
    torch::Tensor masks = stack_masks(samples, begin, end);
    torch::Tensor probs = forward_any(model, backbone, images);
    torch::Tensor loss = total_loss(probs, one_hot_map(masks, cfg.model.num_classes), cfg.loss);
    loss_sum += loss.item<double>();
    ++n_batches;
    res.confusion.accumulate(probability_to_labels(probs), masks);
  }
  res.loss = loss_sum / n_batches;
  return res;
}

FitResult fit(const TrainingConfig& cfg, const DatasetIndex& train_index,
              const DatasetIndex& val_index, const ClassCatalog& catalog,
              const fs::path& resume_checkpoint) {
  cfg.validate();
  if (train_index.entries.empty() || val_index.entries.empty())
    throw DataError("fit: empty dataset index");

  torch::manual_seed(cfg.seed);
  auto model = build_model(cfg.model);
  std::unique_ptr<Backbone> backbone;
  if (is_fused(cfg.model.variant)) backbone = make_backbone(cfg.model.backbone);

  int start_epoch = 0;
  if (!resume_checkpoint.empty()) {
    CheckpointManifest m = load_checkpoint(*model, resume_checkpoint);
    start_epoch = m.epoch;
  }

  std::vector<Sample> train_samples, val_samples;
  for (const auto& e : train_index.entries)
    train_samples.push_back(load_sample(e, catalog, cfg.model.input_size));
  for (const auto& e : val_index.entries)
    val_samples.push_back(load_sample(e, catalog, cfg.model.input_size));

  torch::optim::Adam opt(model->parameters(), torch::optim::AdamOptions(cfg.lr0));

  FitResult result;
  if (backbone) result.backbone_digest_before = backbone->parameter_digest();

  fs::create_directories(cfg.checkpoint_dir);
  const fs::path best_path = cfg.checkpoint_dir / "best.ckpt";
  const fs::path last_path = cfg.checkpoint_dir / "last.ckpt";

  SchedulerState sched;
  sched.current_lr = cfg.lr0;
  set_lr(opt, sched.current_lr);

  std::set<int> excluded = {catalog.background_id()};
  double best_miou = -1.0;

  for (int epoch = start_epoch + 1; epoch <= cfg.epochs; ++epoch) {
    double train_loss = train_epoch(*model, backbone.get(), opt, train_samples, cfg, epoch);
    EvalResult ev = eval_pass(*model, backbone.get(), val_samples, cfg);
    double val_miou = 0.0;
    try {
      val_miou = mean_iou(per_class_iou(ev.confusion), excluded);
    } catch (const ContractError&) {
      val_miou = 0.0;  // no scored class present yet
    }

    sched = lr_on_plateau(sched, ev.loss, cfg);
    set_lr(opt, sched.current_lr);

    EpochRecord rec{epoch, train_loss, ev.loss, val_miou, sched.current_lr};
    result.history.records.push_back(rec);

    CheckpointManifest manifest{to_string(cfg.model.variant), cfg.model.num_classes,
                                cfg.model.input_size, cfg.seed, epoch, val_miou, ev.loss, 0};
    save_checkpoint(*model, manifest, last_path);
    if (val_miou > best_miou) {
      best_miou = val_miou;
      save_checkpoint(*model, manifest, best_path);
      result.best_checkpoint = best_path;
    }
    result.last_checkpoint = last_path;
  }

  if (backbone) result.backbone_digest_after = backbone->parameter_digest();
  return result;
}

std::string to_string(AblationVariant v) {
  switch (v) {
    case AblationVariant::DiceOnly: return "dice";
    case AblationVariant::FocalOnly: return "focal";
    case AblationVariant::ModifiedFocal: return "modified_focal";
    case AblationVariant::DiceModifiedFocal: return "dice_modified_focal";
  }
  throw ContractError("unknown ablation variant");
}

AblationVariant ablation_variant_from_string(const std::string& s) {
  if (s == "dice") return AblationVariant::DiceOnly;
  if (s == "focal") return AblationVariant::FocalOnly;
  if (s == "modified_focal") return AblationVariant::ModifiedFocal;
  if (s == "dice_modified_focal") return AblationVariant::DiceModifiedFocal;
  throw ContractError("unknown ablation variant: " + s);
}

LossConfig ablation_loss(AblationVariant v, const LossConfig& base, int num_classes) {
  LossConfig cfg = base;
  switch (v) {
    case AblationVariant::DiceOnly:
      cfg.w = 1.0;
      break;
    case AblationVariant::FocalOnly:
      cfg.w = 0.0;
      cfg.alpha.assign(num_classes, 1.0 / num_classes);
      break;
    case AblationVariant::ModifiedFocal:
      cfg.w = 0.0;
      break;
    case AblationVariant::DiceModifiedFocal:
      cfg.w = 0.5;
      break;
  }
  return cfg;
}

std::vector<MetricsReport> run_ablation(const TrainingConfig& base_cfg,
                                        const std::vector<AblationVariant>& variants,
                                        const DatasetIndex& train_index,
                                        const DatasetIndex& val_index, const ClassCatalog& catalog,
                                        const fs::path& out_dir) {
  std::vector<MetricsReport> reports;
  for (AblationVariant v : variants) {
    TrainingConfig cfg = base_cfg;
    cfg.loss = ablation_loss(v, base_cfg.loss, cfg.model.num_classes);
    cfg.checkpoint_dir = out_dir / to_string(v);
    FitResult res = fit(cfg, train_index, val_index, catalog);

    auto model = build_model(cfg.model);
    fs::path ckpt = res.best_checkpoint.empty() ? res.last_checkpoint : res.best_checkpoint;
    if (!ckpt.empty()) load_checkpoint(*model, ckpt);
    std::unique_ptr<Backbone> backbone;
    if (is_fused(cfg.model.variant)) backbone = make_backbone(cfg.model.backbone);

    std::vector<Sample> val_samples;
    for (const auto& e : val_index.entries)
      val_samples.push_back(load_sample(e, catalog, cfg.model.input_size));
    EvalResult ev = eval_pass(*model, backbone.get(), val_samples, cfg);

    std::vector<std::string> names;
    for (const auto& c : catalog.classes()) names.push_back(c.name);
    MetricsReport report = make_report(ev.confusion, {catalog.background_id()}, names,
                                       to_string(cfg.model.variant) + "+" + to_string(v),
                                       ckpt.string(), to_string(val_index.split));
    reports.push_back(std::move(report));
  }
  return reports;
}

}  // namespace floodseg
