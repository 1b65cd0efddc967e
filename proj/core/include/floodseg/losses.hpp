#ifndef FLOODSEG_LOSSES_HPP
#define FLOODSEG_LOSSES_HPP

#include <vector>

#include <torch/torch.h>

#include "floodseg/dataset.hpp"
#include "floodseg/errors.hpp"

namespace floodseg {

/// Combined dice + class-frequency-weighted focal loss configuration.
/// total = w * dice + (1 - w) * focal.
struct LossConfig {
  std::vector<double> alpha;   // per-class balancing factors
  double gamma = 4.0;          // focusing parameter
  double epsilon = 1e-5;       // dice stabilizer
  double w = 0.5;              // mixture weight

  void validate(int num_classes) const;
};

struct AlphaDerivationConfig {
  std::vector<double> beta;       // per-class offsets, each in [-0.20, 0.20]
  double floor_constant = 1e-6;   // added to counts before inversion
};

/// alpha_i = inv_freq_i / sum_j inv_freq_j + beta_i with
/// inv_freq_i = 1 / (counts_i + floor_constant).
std::vector<double> compute_alpha(const PixelCounts& counts, const AlphaDerivationConfig& cfg = {});

/// Per pixel: sum_c -alpha_c * y_true * log(clamp(y_pred)) * (1 - y_pred)^gamma,
/// mean over batch and pixels. y_pred clamped to [1e-7, 1] inside the log.
torch::Tensor weighted_focal_loss(const torch::Tensor& y_pred, const torch::Tensor& y_true,
                                  const std::vector<double>& alpha, double gamma);

/// Global soft dice: 1 - (2*inter + eps) / (union + eps), where inter sums
/// y_pred*y_true and union sums y_pred + y_true over all pixels and classes.
torch::Tensor dice_loss(const torch::Tensor& y_pred, const torch::Tensor& y_true, double epsilon);

torch::Tensor total_loss(const torch::Tensor& y_pred, const torch::Tensor& y_true,
                         const LossConfig& cfg);

/// d(total_loss)/d(y_pred), same shape as y_pred.
torch::Tensor loss_gradient(const torch::Tensor& y_pred, const torch::Tensor& y_true,
                            const LossConfig& cfg);

/// [B, H, W] labels -> [B, C, H, W] one-hot of the given dtype.
torch::Tensor one_hot_map(const torch::Tensor& labels, int num_classes,
                          torch::Dtype dtype = torch::kFloat32);

}  // namespace floodseg

#endif
