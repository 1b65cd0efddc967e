#include "floodseg/metrics.hpp"

#include <numeric>

namespace floodseg {

ConfusionMatrix::ConfusionMatrix(int num_classes) : num_classes_(num_classes) {
  if (num_classes < 1) throw ContractError("confusion matrix needs >= 1 class");
  counts_.assign(static_cast<std::size_t>(num_classes) * num_classes, 0);
}

std::int64_t ConfusionMatrix::at(int truth, int pred) const {
  if (truth < 0 || truth >= num_classes_ || pred < 0 || pred >= num_classes_)
    throw ContractError("confusion matrix index out of range");
  return counts_[static_cast<std::size_t>(truth) * num_classes_ + pred];
}

std::int64_t ConfusionMatrix::total() const {
  return std::accumulate(counts_.begin(), counts_.end(), std::int64_t{0});
}

void ConfusionMatrix::accumulate(const torch::Tensor& pred, const torch::Tensor& truth) {
  if (!pred.sizes().equals(truth.sizes()))
    throw ContractError("accumulate: pred and truth shapes differ");
  torch::Tensor p = pred.reshape({-1}).to(torch::kLong);
  torch::Tensor t = truth.reshape({-1}).to(torch::kLong);
  if (p.numel() == 0) return;
  if (p.min().item<std::int64_t>() < 0 || p.max().item<std::int64_t>() >= num_classes_ ||
      t.min().item<std::int64_t>() < 0 || t.max().item<std::int64_t>() >= num_classes_)
    throw ContractError("accumulate: label outside 0..C-1");
  torch::Tensor joint = torch::bincount(t * num_classes_ + p, {},
                                        static_cast<std::int64_t>(num_classes_) * num_classes_);
  auto acc = joint.accessor<std::int64_t, 1>();
  for (std::int64_t i = 0; i < joint.numel(); ++i) counts_[i] += acc[i];
}

ConfusionMatrix ConfusionMatrix::merge(const ConfusionMatrix& a, const ConfusionMatrix& b) {
  if (a.num_classes_ != b.num_classes_)
    throw ContractError("merge: confusion matrices of different size");
  ConfusionMatrix out(a.num_classes_);
  for (std::size_t i = 0; i < out.counts_.size(); ++i) out.counts_[i] = a.counts_[i] + b.counts_[i];
  return out;
}

std::vector<std::optional<double>> per_class_iou(const ConfusionMatrix& conf) {
  const int c = conf.num_classes();
  std::vector<std::optional<double>> ious(c);
  for (int k = 0; k < c; ++k) {
    std::int64_t tp = conf.at(k, k);
    std::int64_t row = 0, col = 0;
    for (int j = 0; j < c; ++j) {
      row += conf.at(k, j);
      col += conf.at(j, k);
    }
    std::int64_t denom = tp + (row - tp) + (col - tp);
    if (denom == 0)
      ious[k] = std::nullopt;
    else
      ious[k] = static_cast<double>(tp) / static_cast<double>(denom);
  }
  return ious;
}

double mean_iou(const std::vector<std::optional<double>>& ious, const std::set<int>& excluded) {
  double sum = 0.0;
  int n = 0;
  for (int k = 0; k < static_cast<int>(ious.size()); ++k) {
    if (excluded.count(k) || !ious[k]) continue;
    sum += *ious[k];
    ++n;
  }
  if (n == 0) throw ContractError("mean_iou: no included, defined classes");
  return sum / n;
}

MetricsReport make_report(const ConfusionMatrix& conf, const std::set<int>& excluded,
                          std::vector<std::string> class_names, std::string model_name,
                          std::string checkpoint_id, std::string split) {
  MetricsReport r;
  r.per_class_iou = per_class_iou(conf);
  r.excluded_class_ids = excluded;
  r.miou = mean_iou(r.per_class_iou, excluded);
  r.pixels_scored = conf.total();
  r.class_names = std::move(class_names);
  r.model_name = std::move(model_name);
  r.checkpoint_id = std::move(checkpoint_id);
  r.split = std::move(split);
  return r;
}

}  // namespace floodseg
