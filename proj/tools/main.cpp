#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "floodseg/config.hpp"
#include "floodseg/reporting.hpp"

namespace fs = std::filesystem;
using namespace floodseg;

namespace {

struct CommonFlags {
  std::string config_path;
  std::string data_root;
  std::string layout;
  std::string model;
  std::string backbone;
  std::string weights;
  int input_size = -1;
  int patch_size = -1;
  int embed_dim = -1;
  int num_classes = -1;
  long long seed = -1;
  int workers = 0;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--config", f.config_path, "Pipeline config file (JSON); flags override it");
  cmd->add_option("--data-root", f.data_root, "Dataset root directory");
  cmd->add_option("--layout", f.layout, "Dataset layout: flat or floodnet");
  cmd->add_option("--model", f.model, "Variant: unet, unet_fused, deeplabv3, deeplabv3_fused");
  cmd->add_option("--backbone", f.backbone, "Backbone: deterministic_stub or pretrained_vit_s14");
  cmd->add_option("--weights", f.weights, "Backbone weights locator (pretrained kind)");
  cmd->add_option("--input-size", f.input_size, "Model input resolution")->default_str("448");
  cmd->add_option("--patch-size", f.patch_size, "Backbone patch size p")->default_str("14");
  cmd->add_option("--embed-dim", f.embed_dim, "Backbone embedding dim E")->default_str("384");
  cmd->add_option("--classes", f.num_classes, "Number of classes")->default_str("10");
  cmd->add_option("--seed", f.seed, "Global RNG seed")->default_str("0");
  cmd->add_option("--workers", f.workers, "Intra-op worker threads (0 = library default)");
}

PipelineConfig resolve(const CommonFlags& f) {
  PipelineConfig cfg = f.config_path.empty() ? default_config() : load_config(f.config_path);
  if (!f.data_root.empty()) cfg.data_root = f.data_root;
  if (!f.layout.empty()) cfg.layout_name = f.layout;
  TrainingConfig& t = cfg.training;
  if (!f.model.empty()) t.model.variant = model_variant_from_string(f.model);
  if (!f.backbone.empty()) t.model.backbone.kind = backbone_kind_from_string(f.backbone);
  if (!f.weights.empty()) t.model.backbone.weights_locator = f.weights;
  if (f.input_size > 0) t.model.input_size = f.input_size;
  if (f.patch_size > 0) t.model.backbone.patch_size = f.patch_size;
  if (f.embed_dim > 0) t.model.backbone.embed_dim = f.embed_dim;
  if (f.num_classes > 0) t.model.num_classes = f.num_classes;
  if (f.seed >= 0) {
    t.seed = static_cast<std::uint64_t>(f.seed);
    t.model.init_seed = t.seed;
  }
  if (f.num_classes > 0 && static_cast<int>(t.loss.alpha.size()) != f.num_classes)
    t.loss.alpha.assign(f.num_classes, 1.0 / f.num_classes);
  if (f.workers > 0) torch::set_num_threads(f.workers);
  return cfg;
}

ClassCatalog catalog_for(const PipelineConfig& cfg) {
  if (cfg.training.model.num_classes == 10) {
    ClassCatalog cat = ClassCatalog::floodnet();
    // Honor a non-default alpha vector from the config.
    if (cfg.training.loss.alpha != cat.alphas() &&
        cfg.training.loss.alpha.size() == 10) {
      std::vector<ClassEntry> cs = cat.classes();
      for (int i = 0; i < 10; ++i) cs[i].alpha = cfg.training.loss.alpha[i];
      return ClassCatalog(cs);
    }
    return cat;
  }
  ClassCatalog cat = ClassCatalog::generic(cfg.training.model.num_classes);
  if (static_cast<int>(cfg.training.loss.alpha.size()) == cat.num_classes()) {
    std::vector<ClassEntry> cs = cat.classes();
    for (int i = 0; i < cat.num_classes(); ++i) cs[i].alpha = cfg.training.loss.alpha[i];
    return ClassCatalog(cs);
  }
  return cat;
}

std::unique_ptr<Backbone> backbone_for(const PipelineConfig& cfg) {
  if (!is_fused(cfg.training.model.variant)) return nullptr;
  return make_backbone(cfg.training.model.backbone);
}

void write_text(const fs::path& path, const std::string& text) {
  if (!path.parent_path().empty()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write: " + path.string());
  out << text;
}

int run_synth(const std::string& out, int n, int size, int classes, long long seed) {
  SyntheticLedger ledger;
  DatasetIndex index = make_synthetic_dataset(n, size, classes, static_cast<std::uint64_t>(seed),
                                              out, &ledger);
  std::cout << "wrote " << index.entries.size() << " samples to " << out << "\n";
  return 0;
}

int run_stats(const CommonFlags& f, const std::string& split, const std::string& beta_file,
              const std::string& out) {
  PipelineConfig cfg = resolve(f);
  if (cfg.data_root.empty()) throw ContractError("stats: --data-root (or config data.root) required");
  ClassCatalog catalog = catalog_for(cfg);
  DatasetIndex index = scan_dataset(cfg.data_root, split_from_string(split), cfg.layout());
  PixelCounts counts = class_pixel_counts(index, catalog, cfg.training.model.input_size);

  AlphaDerivationConfig ad = cfg.alpha_derivation;
  if (!beta_file.empty()) {
    std::ifstream in(beta_file);
    if (!in) throw IoError("cannot read beta file: " + beta_file);
    ad.beta.clear();
    double b;
    while (in >> b) ad.beta.push_back(b);
  }
  std::vector<double> alpha = compute_alpha(counts, ad);

  nlohmann::json j;
  j["counts"] = counts.counts;
  j["alpha"] = alpha;
  j["total_pixels"] = counts.total();
  j["split"] = split;
  write_text(out, j.dump(2) + "\n");
  std::cout << "wrote pixel counts and alphas for " << counts.counts.size() << " classes to "
            << out << "\n";
  return 0;
}

TrainingConfig training_from(const PipelineConfig& cfg, const fs::path& out_dir) {
  TrainingConfig t = cfg.training;
  t.checkpoint_dir = out_dir / "checkpoints";
  if (static_cast<int>(t.loss.alpha.size()) != t.model.num_classes)
    t.loss.alpha.assign(t.model.num_classes, 1.0 / t.model.num_classes);
  return t;
}

struct TrainOverrides {
  double lr = 1e-3, factor = 0.75, w = 0.5, gamma = 4.0, epsilon = 1e-5;
  int epochs = 70, batch = 8, eval_batch = 16, patience = 5;
};

int run_train(const CLI::App& cmd, const CommonFlags& f, const std::string& train_split,
              const std::string& val_split, const std::string& out_dir, const std::string& resume,
              const TrainOverrides& o) {
  PipelineConfig cfg = resolve(f);
  // Flags override the config file only when explicitly given.
  if (f.config_path.empty() || cmd.count("--lr")) cfg.training.lr0 = o.lr;
  if (f.config_path.empty() || cmd.count("--epochs")) cfg.training.epochs = o.epochs;
  if (f.config_path.empty() || cmd.count("--batch")) cfg.training.train_batch = o.batch;
  if (f.config_path.empty() || cmd.count("--eval-batch")) cfg.training.eval_batch = o.eval_batch;
  if (f.config_path.empty() || cmd.count("--plateau-factor")) cfg.training.plateau_factor = o.factor;
  if (f.config_path.empty() || cmd.count("--patience")) cfg.training.plateau_patience = o.patience;
  if (f.config_path.empty() || cmd.count("--w")) cfg.training.loss.w = o.w;
  if (f.config_path.empty() || cmd.count("--gamma")) cfg.training.loss.gamma = o.gamma;
  if (f.config_path.empty() || cmd.count("--epsilon")) cfg.training.loss.epsilon = o.epsilon;
  if (cfg.data_root.empty()) throw ContractError("train: --data-root (or config data.root) required");

  ClassCatalog catalog = catalog_for(cfg);
  DatasetIndex train_index = scan_dataset(cfg.data_root, split_from_string(train_split), cfg.layout());
  DatasetIndex val_index = scan_dataset(cfg.data_root, split_from_string(val_split), cfg.layout());

  TrainingConfig t = training_from(cfg, out_dir);
  PipelineConfig resolved = cfg;
  resolved.training = t;
  save_config(resolved, fs::path(out_dir) / "config.json");

  FitResult res = fit(t, train_index, val_index, catalog, resume);
  res.history.write_csv(fs::path(out_dir) / "history.csv");
  std::cout << "trained " << res.history.records.size() << " epochs; best checkpoint: "
            << res.best_checkpoint.string() << "\n";
  if (!res.history.records.empty()) {
    const auto& last = res.history.records.back();
    std::cout << "final train loss " << last.train_loss << ", val loss " << last.val_loss
              << ", val mIoU " << last.val_miou << "\n";
  }
  return 0;
}

std::shared_ptr<SegmentationModel> load_model(const PipelineConfig& cfg, const std::string& ckpt) {
  ModelConfig mc = cfg.training.model;
  auto model = build_model(mc);
  load_checkpoint(*model, ckpt);
  return model;
}

int run_eval(const CommonFlags& f, const std::string& checkpoint, const std::string& split,
             const std::string& out_base) {
  PipelineConfig cfg = resolve(f);
  if (cfg.data_root.empty()) throw ContractError("eval: --data-root (or config data.root) required");
  ClassCatalog catalog = catalog_for(cfg);
  DatasetIndex index = scan_dataset(cfg.data_root, split_from_string(split), cfg.layout());

  auto model = load_model(cfg, checkpoint);
  auto backbone = backbone_for(cfg);
  MetricsReport report = evaluate(*model, backbone.get(), index, catalog,
                                  cfg.training.eval_batch, checkpoint);
  write_text(out_base + ".json", render_report(report, ReportFormat::StructuredText));
  write_text(out_base + ".csv", render_report(report, ReportFormat::Delimited));
  write_text(out_base + ".txt", render_report(report, ReportFormat::HumanReadable));
  std::cout << render_report(report, ReportFormat::HumanReadable);
  return 0;
}

int run_predict(const CommonFlags& f, const std::string& checkpoint, const std::string& image,
                const std::string& out, const std::string& labels_out) {
  PipelineConfig cfg = resolve(f);
  ClassCatalog catalog = catalog_for(cfg);
  ColorMap cmap = ColorMap::defaults(catalog.num_classes());
  auto model = load_model(cfg, checkpoint);
  auto backbone = backbone_for(cfg);
  predict_and_colorize(*model, backbone.get(), image, catalog, cmap, out, labels_out);
  std::cout << "wrote colorized mask to " << out << "\n";
  return 0;
}

int run_ablate(const CommonFlags& f, const std::string& train_split, const std::string& val_split,
               const std::string& out_dir, int epochs, int batch, int eval_batch,
               const std::vector<std::string>& variant_names) {
  PipelineConfig cfg = resolve(f);
  if (epochs >= 0) cfg.training.epochs = epochs;
  if (batch > 0) cfg.training.train_batch = batch;
  if (eval_batch > 0) cfg.training.eval_batch = eval_batch;
  if (cfg.data_root.empty()) throw ContractError("ablate: --data-root (or config data.root) required");

  ClassCatalog catalog = catalog_for(cfg);
  DatasetIndex train_index = scan_dataset(cfg.data_root, split_from_string(train_split), cfg.layout());
  DatasetIndex val_index = scan_dataset(cfg.data_root, split_from_string(val_split), cfg.layout());

  std::vector<AblationVariant> variants;
  if (variant_names.empty()) {
    variants = {AblationVariant::DiceOnly, AblationVariant::FocalOnly,
                AblationVariant::ModifiedFocal, AblationVariant::DiceModifiedFocal};
  } else {
    for (const auto& n : variant_names) variants.push_back(ablation_variant_from_string(n));
  }

  TrainingConfig t = training_from(cfg, out_dir);
  std::vector<MetricsReport> reports = run_ablation(t, variants, train_index, val_index, catalog,
                                                    fs::path(out_dir));
  for (std::size_t i = 0; i < reports.size(); ++i) {
    write_text(fs::path(out_dir) / (to_string(variants[i]) + "_report.json"),
               render_report(reports[i], ReportFormat::StructuredText));
  }
  ComparisonTable table = comparison_report(reports, reports.front().model_name);
  write_text(fs::path(out_dir) / "ablation.csv", render_table(table, ReportFormat::Delimited));
  write_text(fs::path(out_dir) / "ablation.txt", render_table(table, ReportFormat::HumanReadable));
  std::cout << render_table(table, ReportFormat::HumanReadable);
  return 0;
}

int run_report(const std::vector<std::string>& inputs, const std::string& baseline,
               const std::string& out_base) {
  if (inputs.size() < 2) throw ContractError("report: need at least two --inputs files");
  std::vector<MetricsReport> reports;
  std::string baseline_name;
  for (const auto& path : inputs) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read report: " + path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    reports.push_back(parse_report(text));
    if (path == baseline || reports.back().model_name == baseline)
      baseline_name = reports.back().model_name;
  }
  if (baseline_name.empty())
    throw ContractError("report: baseline '" + baseline + "' matches no input");

  ComparisonTable table = comparison_report(reports, baseline_name);
  write_text(out_base + ".json", render_table(table, ReportFormat::StructuredText));
  write_text(out_base + ".csv", render_table(table, ReportFormat::Delimited));
  write_text(out_base + ".txt", render_table(table, ReportFormat::HumanReadable));
  for (const auto& r : reports)
    write_text(out_base + "_" + r.model_name + ".chart.tsv", chart_data(r));
  std::cout << render_table(table, ReportFormat::HumanReadable);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Flooded-region segmentation with frozen self-supervised feature fusion"};
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "Generate a deterministic toy dataset");
  std::string synth_out;
  int synth_n = 8, synth_size = 64, synth_classes = 4;
  long long synth_seed = 0;
  synth->add_option("--out", synth_out, "Output directory")->required();
  synth->add_option("--n", synth_n, "Number of images")->capture_default_str();
  synth->add_option("--size", synth_size, "Image side length")->capture_default_str();
  synth->add_option("--num-classes", synth_classes, "Number of classes")->capture_default_str();
  synth->add_option("--seed", synth_seed, "RNG seed")->capture_default_str();

  // stats
  auto* stats = app.add_subcommand("stats", "Pixel counts and derived alpha weights");
  CommonFlags stats_f;
  std::string stats_split = "train", stats_beta, stats_out;
  add_common(stats, stats_f);
  stats->add_option("--split", stats_split, "Dataset split")->capture_default_str();
  stats->add_option("--beta-file", stats_beta, "Per-class beta offsets, whitespace separated");
  stats->add_option("--out", stats_out, "Output file (JSON)")->required();

  // train
  auto* train = app.add_subcommand("train", "Train a segmentation model");
  CommonFlags train_f;
  std::string train_split = "train", train_val_split = "val", train_out = "runs/train",
              train_resume;
  double train_lr = 1e-3;
  int train_epochs = 70, train_batch = 8, train_eval_batch = 16;
  add_common(train, train_f);
  train->add_option("--train-split", train_split, "Training split")->capture_default_str();
  train->add_option("--val-split", train_val_split, "Validation split")->capture_default_str();
  train->add_option("--out", train_out, "Output directory")->capture_default_str();
  train->add_option("--resume", train_resume, "Checkpoint to resume from");
  train->add_option("--lr", train_lr, "Initial learning rate")->capture_default_str();
  train->add_option("--epochs", train_epochs, "Training epochs")->capture_default_str();
  train->add_option("--batch", train_batch, "Training batch size")->capture_default_str();
  train->add_option("--eval-batch", train_eval_batch, "Validation batch size")->capture_default_str();
  double train_factor = 0.75, train_w = 0.5, train_gamma = 4.0, train_eps = 1e-5;
  int train_patience = 5;
  train->add_option("--plateau-factor", train_factor, "LR reduction factor on plateau")->capture_default_str();
  train->add_option("--patience", train_patience, "Plateau patience in epochs")->capture_default_str();
  train->add_option("--w", train_w, "Dice/focal mixture weight")->capture_default_str();
  train->add_option("--gamma", train_gamma, "Focal focusing parameter")->capture_default_str();
  train->add_option("--epsilon", train_eps, "Dice stabilizer")->capture_default_str();

  // eval
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a split");
  CommonFlags eval_f;
  std::string eval_ckpt, eval_split = "test", eval_out = "runs/eval/report";
  add_common(eval, eval_f);
  eval->add_option("--checkpoint", eval_ckpt, "Checkpoint path")->required();
  eval->add_option("--split", eval_split, "Dataset split")->capture_default_str();
  eval->add_option("--out", eval_out, "Report basename (writes .json/.csv/.txt)")->capture_default_str();

  // predict
  auto* predict = app.add_subcommand("predict", "Colorized mask for one image");
  CommonFlags pred_f;
  std::string pred_ckpt, pred_image, pred_out = "prediction.png", pred_labels;
  add_common(predict, pred_f);
  predict->add_option("--checkpoint", pred_ckpt, "Checkpoint path")->required();
  predict->add_option("--image", pred_image, "Input image")->required();
  predict->add_option("--out", pred_out, "Colorized mask output (PNG)")->capture_default_str();
  predict->add_option("--labels-out", pred_labels, "Raw label-map output (PNG)");

  // ablate
  auto* ablate = app.add_subcommand("ablate", "Loss-function ablation study");
  CommonFlags abl_f;
  std::string abl_train_split = "train", abl_val_split = "val", abl_out = "runs/ablation";
  int abl_epochs = -1, abl_batch = -1, abl_eval_batch = -1;
  std::vector<std::string> abl_variants;
  add_common(ablate, abl_f);
  ablate->add_option("--train-split", abl_train_split, "Training split")->capture_default_str();
  ablate->add_option("--val-split", abl_val_split, "Validation split")->capture_default_str();
  ablate->add_option("--out", abl_out, "Output directory")->capture_default_str();
  ablate->add_option("--epochs", abl_epochs, "Epochs per variant");
  ablate->add_option("--batch", abl_batch, "Training batch size");
  ablate->add_option("--eval-batch", abl_eval_batch, "Validation batch size");
  ablate->add_option("--variants", abl_variants,
                     "Subset of: dice focal modified_focal dice_modified_focal");

  // report
  auto* report = app.add_subcommand("report", "Cross-model comparison from report files");
  std::vector<std::string> report_inputs;
  std::string report_baseline, report_out = "comparison";
  report->add_option("--inputs", report_inputs, "Structured-text report files")->required();
  report->add_option("--baseline", report_baseline, "Baseline (input path or model name)")->required();
  report->add_option("--out", report_out, "Output basename")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : static_cast<int>(ExitCode::Usage);
  }

  try {
    if (synth->parsed()) return run_synth(synth_out, synth_n, synth_size, synth_classes, synth_seed);
    if (stats->parsed()) return run_stats(stats_f, stats_split, stats_beta, stats_out);
    if (train->parsed()) {
      TrainOverrides o;
      o.lr = train_lr;
      o.epochs = train_epochs;
      o.batch = train_batch;
      o.eval_batch = train_eval_batch;
      o.factor = train_factor;
      o.patience = train_patience;
      o.w = train_w;
      o.gamma = train_gamma;
      o.epsilon = train_eps;
      return run_train(*train, train_f, train_split, train_val_split, train_out, train_resume, o);
    }
    if (eval->parsed()) return run_eval(eval_f, eval_ckpt, eval_split, eval_out);
    if (predict->parsed()) return run_predict(pred_f, pred_ckpt, pred_image, pred_out, pred_labels);
    if (ablate->parsed())
      return run_ablate(abl_f, abl_train_split, abl_val_split, abl_out, abl_epochs, abl_batch,
                        abl_eval_batch, abl_variants);
    if (report->parsed()) return run_report(report_inputs, report_baseline, report_out);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(ExitCode::Usage);
  }
  return 0;
}
