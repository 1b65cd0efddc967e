#ifndef FLOODSEG_METRICS_HPP
#define FLOODSEG_METRICS_HPP

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "floodseg/errors.hpp"

namespace floodseg {

/// C x C pixel counts; at(t, p) = pixels with true class t predicted as p.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(int num_classes);

  int num_classes() const { return num_classes_; }
  std::int64_t at(int truth, int pred) const;
  std::int64_t total() const;

  /// Adds one pixel-wise comparison; label maps are int64 [H, W] or [B, H, W].
  void accumulate(const torch::Tensor& pred, const torch::Tensor& truth);

  /// Elementwise sum; associative and commutative.
  static ConfusionMatrix merge(const ConfusionMatrix& a, const ConfusionMatrix& b);

 private:
  int num_classes_;
  std::vector<std::int64_t> counts_;
};

/// IoU_c = TP / (TP + FP + FN); nullopt when the class is absent from both
/// prediction and truth.
std::vector<std::optional<double>> per_class_iou(const ConfusionMatrix& conf);

/// Mean over classes neither excluded nor undefined.
double mean_iou(const std::vector<std::optional<double>>& ious, const std::set<int>& excluded);

struct MetricsReport {
  std::vector<std::optional<double>> per_class_iou;
  double miou = 0.0;
  std::set<int> excluded_class_ids;
  std::int64_t pixels_scored = 0;
  std::string model_name;
  std::string checkpoint_id;
  std::string split;
  std::vector<std::string> class_names;
};

MetricsReport make_report(const ConfusionMatrix& conf, const std::set<int>& excluded,
                          std::vector<std::string> class_names, std::string model_name = "",
                          std::string checkpoint_id = "", std::string split = "");

}  // namespace floodseg

#endif
