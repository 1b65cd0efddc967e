#ifndef FLOODSEG_DATASET_HPP
#define FLOODSEG_DATASET_HPP

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <opencv2/core.hpp>
#include <torch/torch.h>

#include "floodseg/catalog.hpp"

namespace floodseg {

enum class Split { Train, Val, Test };
std::string to_string(Split s);
Split split_from_string(const std::string& s);

struct DatasetEntry {
  std::string sample_id;
  std::filesystem::path image_path;
  std::filesystem::path mask_path;
};

struct DatasetIndex {
  std::vector<DatasetEntry> entries;
  Split split = Split::Train;
};

/// Naming convention pairing images with masks inside a dataset root.
/// Placeholders "{split}" in the subdirectory patterns are substituted with
/// the split name. A mask for image "<stem><image_ext>" is expected at
/// "<mask_subdir>/<stem><mask_suffix><mask_ext>".
struct DatasetLayout {
  std::string image_subdir;
  std::string mask_subdir;
  std::string mask_suffix;
  std::string mask_ext = ".png";

  /// FloodNet convention: <split>/<split>-org-img + <split>/<split>-label-img,
  /// masks named <stem>_lab.png.
  static DatasetLayout floodnet();
  /// Flat convention used by the synthetic generator: images/ + masks/.
  static DatasetLayout flat();
};

struct Sample {
  torch::Tensor image;  // float32 [3, H, W] in [0, 1]
  torch::Tensor mask;   // int64 [H, W] labels in 0..C-1
  std::string sample_id;
};

struct AugmentationConfig {
  double hflip_prob = 0.5;
  double vflip_prob = 0.5;
  double zoom_min = 0.8;
  double zoom_max = 1.25;
  std::uint64_t seed = 0;
};

struct PixelCounts {
  std::vector<std::int64_t> counts;
  std::int64_t total() const;
};

DatasetIndex scan_dataset(const std::filesystem::path& root, Split split, const DatasetLayout& layout);

/// Bicubic-resize + [0,1] normalization for the image, nearest-neighbor
/// resize for the label map.
Sample preprocess(const cv::Mat& raw_image, const cv::Mat& raw_mask, const ClassCatalog& catalog,
                  int target = 448, const std::string& sample_id = "");

/// Load entry from disk and preprocess.
Sample load_sample(const DatasetEntry& entry, const ClassCatalog& catalog, int target = 448);

/// Per-sample deterministic RNG stream from (seed, sample_id).
std::mt19937_64 sample_rng(std::uint64_t seed, const std::string& sample_id, std::uint64_t salt = 0);

/// Identical geometric transform on image (bicubic zoom) and mask (nearest).
Sample augment(const Sample& sample, const AugmentationConfig& cfg, std::mt19937_64& rng);

PixelCounts class_pixel_counts(const DatasetIndex& index, const ClassCatalog& catalog, int target = 448);

/// Per-sample exact per-class pixel areas recorded during synthesis.
struct SyntheticLedger {
  std::vector<std::vector<std::int64_t>> per_sample_counts;  // [n_images][n_classes]
};

/// Writes a deterministic toy dataset of colored rectangles/discs under
/// out/{images,masks} plus a manifest.txt; returns its index.
DatasetIndex make_synthetic_dataset(int n_images, int size, int n_classes, std::uint64_t seed,
                                    const std::filesystem::path& out, SyntheticLedger* ledger = nullptr);

/// Parse the region ledger back out of a synthetic manifest file.
SyntheticLedger read_synthetic_ledger(const std::filesystem::path& manifest, int n_classes);

}  // namespace floodseg

#endif
