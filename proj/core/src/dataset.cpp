#include "floodseg/dataset.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

namespace fs = std::filesystem;

namespace floodseg {

std::string to_string(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
  }
  throw ContractError("unknown split");
}

Split split_from_string(const std::string& s) {
  if (s == "train") return Split::Train;
  if (s == "val") return Split::Val;
  if (s == "test") return Split::Test;
  throw ContractError("unknown split name: " + s);
}

DatasetLayout DatasetLayout::floodnet() {
  return {"{split}/{split}-org-img", "{split}/{split}-label-img", "_lab", ".png"};
}

DatasetLayout DatasetLayout::flat() { return {"images", "masks", "", ".png"}; }

std::int64_t PixelCounts::total() const {
  return std::accumulate(counts.begin(), counts.end(), std::int64_t{0});
}

namespace {

std::string substitute_split(std::string pattern, Split split) {
  const std::string key = "{split}";
  const std::string name = to_string(split);
  for (auto pos = pattern.find(key); pos != std::string::npos; pos = pattern.find(key))
    pattern.replace(pos, key.size(), name);
  return pattern;
}

bool is_image_file(const fs::path& p) {
  static const std::set<std::string> exts = {".png", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff"};
  std::string e = p.extension().string();
  std::transform(e.begin(), e.end(), e.begin(), [](unsigned char c) { return std::tolower(c); });
  return exts.count(e) > 0;
}

}  // namespace

DatasetIndex scan_dataset(const fs::path& root, Split split, const DatasetLayout& layout) {
  if (!fs::exists(root)) throw DataError("dataset root does not exist: " + root.string());
  fs::path image_dir = root / substitute_split(layout.image_subdir, split);
  fs::path mask_dir = root / substitute_split(layout.mask_subdir, split);
  if (!fs::exists(image_dir)) throw DataError("image directory missing: " + image_dir.string());
  if (!fs::exists(mask_dir)) throw DataError("mask directory missing: " + mask_dir.string());

  std::vector<fs::path> images;
  for (const auto& de : fs::directory_iterator(image_dir))
    if (de.is_regular_file() && is_image_file(de.path())) images.push_back(de.path());
  std::sort(images.begin(), images.end());

  DatasetIndex index;
  index.split = split;
  std::vector<std::string> unpaired;
  for (const auto& img : images) {
    fs::path mask = mask_dir / (img.stem().string() + layout.mask_suffix + layout.mask_ext);
    if (!fs::exists(mask)) {
      unpaired.push_back(img.filename().string());
      continue;
    }
    index.entries.push_back({img.stem().string(), img, mask});
  }
  if (!unpaired.empty()) {
    std::ostringstream oss;
    oss << "images without a paired mask:";
    for (const auto& u : unpaired) oss << " " << u;
    throw DataError(oss.str());
  }
  if (index.entries.empty())
    throw DataError("empty split: no images found under " + image_dir.string());
  return index;
}

Sample preprocess(const cv::Mat& raw_image, const cv::Mat& raw_mask, const ClassCatalog& catalog,
                  int target, const std::string& sample_id) {
  if (raw_image.empty() || raw_mask.empty()) throw ContractError("preprocess: empty input");
  if (raw_image.channels() != 3) throw ContractError("preprocess: image must have 3 channels");
  if (raw_mask.channels() != 1) throw ContractError("preprocess: mask must be single-channel");

  const int c = catalog.num_classes();
  double min_label, max_label;
  cv::minMaxLoc(raw_mask, &min_label, &max_label);
  if (min_label < 0 || max_label >= c)
    throw DataError("mask label " + std::to_string(static_cast<int>(max_label)) +
                    " outside catalog of " + std::to_string(c) + " classes");

  cv::Mat imgf;
  raw_image.convertTo(imgf, CV_32FC3, 1.0 / 255.0);
  cv::Mat resized;
  if (imgf.rows == target && imgf.cols == target)
    resized = imgf;
  else
    cv::resize(imgf, resized, cv::Size(target, target), 0, 0, cv::INTER_CUBIC);
  // Bicubic overshoots near edges; probabilities stay in [0,1].
  cv::min(resized, 1.0f, resized);
  cv::max(resized, 0.0f, resized);

  cv::Mat mask8;
  raw_mask.convertTo(mask8, CV_8UC1);
  cv::Mat mask_resized;
  if (mask8.rows == target && mask8.cols == target)
    mask_resized = mask8;
  else
    cv::resize(mask8, mask_resized, cv::Size(target, target), 0, 0, cv::INTER_NEAREST);

  Sample s;
  s.sample_id = sample_id;
  torch::Tensor img = torch::from_blob(resized.data, {target, target, 3}, torch::kFloat32).clone();
  s.image = img.permute({2, 0, 1}).contiguous();
  torch::Tensor m = torch::from_blob(mask_resized.data, {target, target}, torch::kUInt8).clone();
  s.mask = m.to(torch::kLong);
  return s;
}

Sample load_sample(const DatasetEntry& entry, const ClassCatalog& catalog, int target) {
  cv::Mat img = cv::imread(entry.image_path.string(), cv::IMREAD_COLOR);
  if (img.empty()) throw IoError("cannot read image: " + entry.image_path.string());
  cv::cvtColor(img, img, cv::COLOR_BGR2RGB);
  cv::Mat mask = cv::imread(entry.mask_path.string(), cv::IMREAD_GRAYSCALE);
  if (mask.empty()) throw IoError("cannot read mask: " + entry.mask_path.string());
  return preprocess(img, mask, catalog, target, entry.sample_id);
}

std::mt19937_64 sample_rng(std::uint64_t seed, const std::string& sample_id, std::uint64_t salt) {
  // FNV-1a over the id, mixed with seed and salt.
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char ch : sample_id) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  std::seed_seq seq{seed, h, salt};
  return std::mt19937_64(seq);
}

namespace {

// Zoom: bicubic-resize (nearest for labels) to round(S*scale), then center
// crop back down or zero/background pad back up to S.
Sample apply_zoom(const Sample& s, double scale) {
  const auto S = s.image.size(1);
  const auto new_size = std::max<std::int64_t>(1, std::llround(static_cast<double>(S) * scale));
  if (new_size == S && scale == 1.0) return s;

  namespace F = torch::nn::functional;
  torch::Tensor img = F::interpolate(
      s.image.unsqueeze(0),
      F::InterpolateFuncOptions().size(std::vector<std::int64_t>{new_size, new_size})
          .mode(torch::kBicubic).align_corners(false))
      .squeeze(0).clamp(0.0, 1.0);
  torch::Tensor mask = F::interpolate(
      s.mask.to(torch::kFloat32).unsqueeze(0).unsqueeze(0),
      F::InterpolateFuncOptions().size(std::vector<std::int64_t>{new_size, new_size})
          .mode(torch::kNearest))
      .squeeze(0).squeeze(0).to(torch::kLong);

  Sample out;
  out.sample_id = s.sample_id;
  if (new_size >= S) {
    const auto off = (new_size - S) / 2;
    out.image = img.index({torch::indexing::Slice(), torch::indexing::Slice(off, off + S),
                           torch::indexing::Slice(off, off + S)}).contiguous();
    out.mask = mask.index({torch::indexing::Slice(off, off + S),
                           torch::indexing::Slice(off, off + S)}).contiguous();
  } else {
    const auto off = (S - new_size) / 2;
    out.image = torch::zeros_like(s.image);
    out.mask = torch::zeros_like(s.mask);
    out.image.index_put_({torch::indexing::Slice(), torch::indexing::Slice(off, off + new_size),
                          torch::indexing::Slice(off, off + new_size)}, img);
    out.mask.index_put_({torch::indexing::Slice(off, off + new_size),
                         torch::indexing::Slice(off, off + new_size)}, mask);
  }
  return out;
}

}  // namespace

Sample augment(const Sample& sample, const AugmentationConfig& cfg, std::mt19937_64& rng) {
  if (cfg.zoom_min <= 0 || cfg.zoom_min > cfg.zoom_max)
    throw ContractError("augment: require 0 < zoom_min <= zoom_max");
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  Sample out{sample.image, sample.mask, sample.sample_id};
  if (unit(rng) < cfg.hflip_prob) {
    out.image = out.image.flip({2});
    out.mask = out.mask.flip({1});
  }
  if (unit(rng) < cfg.vflip_prob) {
    out.image = out.image.flip({1});
    out.mask = out.mask.flip({0});
  }
  std::uniform_real_distribution<double> zoom(cfg.zoom_min, cfg.zoom_max);
  double scale = std::clamp(zoom(rng), cfg.zoom_min, cfg.zoom_max);
  out = apply_zoom(out, scale);
  out.image = out.image.contiguous();
  out.mask = out.mask.contiguous();
  return out;
}

PixelCounts class_pixel_counts(const DatasetIndex& index, const ClassCatalog& catalog, int target) {
  PixelCounts pc;
  pc.counts.assign(catalog.num_classes(), 0);
  for (const auto& entry : index.entries) {
    Sample s = load_sample(entry, catalog, target);
    torch::Tensor binc = torch::bincount(s.mask.reshape({-1}), {}, catalog.num_classes());
    auto acc = binc.accessor<std::int64_t, 1>();
    for (int i = 0; i < catalog.num_classes(); ++i) pc.counts[i] += acc[i];
  }
  return pc;
}

DatasetIndex make_synthetic_dataset(int n_images, int size, int n_classes, std::uint64_t seed,
                                    const fs::path& out, SyntheticLedger* ledger) {
  if (n_images < 1) throw ContractError("make_synthetic_dataset: n_images >= 1 required");
  if (size < 32) throw ContractError("make_synthetic_dataset: size >= 32 required");
  if (n_classes < 2) throw ContractError("make_synthetic_dataset: n_classes >= 2 required");

  std::error_code ec;
  fs::create_directories(out / "images", ec);
  fs::create_directories(out / "masks", ec);
  if (!fs::exists(out / "images") || !fs::exists(out / "masks"))
    throw IoError("cannot create synthetic dataset directories under " + out.string());

  ColorMap cmap = ColorMap::defaults(n_classes);
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> cls_dist(1, n_classes - 1);
  std::uniform_int_distribution<int> nshape_dist(2, 4);
  std::uniform_int_distribution<int> coord(0, size - 1);
  std::uniform_int_distribution<int> extent(size / 8, size / 3);
  std::uniform_int_distribution<int> shape_kind(0, 1);

  DatasetIndex index;
  index.split = Split::Train;
  SyntheticLedger local;
  std::ostringstream manifest;

  for (int n = 0; n < n_images; ++n) {
    cv::Mat mask = cv::Mat::zeros(size, size, CV_8UC1);
    int n_shapes = nshape_dist(rng);
    for (int k = 0; k < n_shapes; ++k) {
      int cls = cls_dist(rng);
      int cx = coord(rng), cy = coord(rng), ext = extent(rng);
      if (shape_kind(rng) == 0) {
        cv::rectangle(mask, cv::Point(cx - ext / 2, cy - ext / 2),
                      cv::Point(cx + ext / 2, cy + ext / 2), cv::Scalar(cls), cv::FILLED);
      } else {
        cv::circle(mask, cv::Point(cx, cy), ext / 2, cv::Scalar(cls), cv::FILLED);
      }
    }

    // Image: per-class base color plus deterministic per-pixel noise.
    cv::Mat image(size, size, CV_8UC3);
    std::uniform_int_distribution<int> noise(-12, 12);
    for (int y = 0; y < size; ++y) {
      for (int x = 0; x < size; ++x) {
        Rgb base = cmap.color(mask.at<std::uint8_t>(y, x));
        auto jitter = [&](int v) {
          return static_cast<std::uint8_t>(std::clamp(v + noise(rng), 0, 255));
        };
        image.at<cv::Vec3b>(y, x) = cv::Vec3b(jitter(base.b), jitter(base.g), jitter(base.r));
      }
    }

    std::ostringstream id;
    id << "synth_" << std::setfill('0') << std::setw(4) << n;
    fs::path img_path = out / "images" / (id.str() + ".png");
    fs::path mask_path = out / "masks" / (id.str() + ".png");
    if (!cv::imwrite(img_path.string(), image)) throw IoError("cannot write " + img_path.string());
    if (!cv::imwrite(mask_path.string(), mask)) throw IoError("cannot write " + mask_path.string());

    std::vector<std::int64_t> counts(n_classes, 0);
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x) counts[mask.at<std::uint8_t>(y, x)]++;
    local.per_sample_counts.push_back(counts);

    manifest << id.str() << " " << img_path.string() << " " << mask_path.string();
    for (int i = 0; i < n_classes; ++i) manifest << " " << i << ":" << counts[i];
    manifest << "\n";

    index.entries.push_back({id.str(), img_path, mask_path});
  }

  std::ofstream mf(out / "manifest.txt");
  if (!mf) throw IoError("cannot write manifest under " + out.string());
  mf << manifest.str();
  mf.close();

  if (ledger) *ledger = std::move(local);
  return index;
}

SyntheticLedger read_synthetic_ledger(const fs::path& manifest, int n_classes) {
  std::ifstream in(manifest);
  if (!in) throw IoError("cannot read manifest: " + manifest.string());
  SyntheticLedger ledger;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream iss(line);
    std::string id, img, mask;
    iss >> id >> img >> mask;
    std::vector<std::int64_t> counts(n_classes, 0);
    std::string tok;
    while (iss >> tok) {
      auto colon = tok.find(':');
      if (colon == std::string::npos) throw DataError("malformed ledger token: " + tok);
      int cls = std::stoi(tok.substr(0, colon));
      if (cls < 0 || cls >= n_classes) throw DataError("ledger class out of range: " + tok);
      counts[cls] = std::stoll(tok.substr(colon + 1));
    }
    ledger.per_sample_counts.push_back(counts);
  }
  return ledger;
}

}  // namespace floodseg
