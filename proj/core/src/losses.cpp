#include "floodseg/losses.hpp"

#include <cmath>
#include <numeric>

namespace floodseg {

namespace {

constexpr double kLogClamp = 1e-7;
// Loose enough to admit finite-difference probes of the loss surface.
constexpr double kSimplexTol = 1e-3;

void check_pair(const torch::Tensor& y_pred, const torch::Tensor& y_true) {
  if (y_pred.dim() != 4 || y_true.dim() != 4)
    throw ContractError("loss: expected [B, C, H, W] tensors");
  if (!y_pred.sizes().equals(y_true.sizes()))
    throw ContractError("loss: y_pred and y_true shapes differ");
  auto row_sums = y_pred.sum(1);
  if ((row_sums - 1.0).abs().max().item<double>() > kSimplexTol)
    throw ContractError("loss: y_pred pixel distributions must sum to 1");
}

torch::Tensor alpha_tensor(const std::vector<double>& alpha, const torch::Tensor& like) {
  torch::Tensor a = torch::from_blob(const_cast<double*>(alpha.data()),
                                     {static_cast<std::int64_t>(alpha.size())}, torch::kFloat64)
                        .clone()
                        .to(like.dtype());
  return a.view({1, -1, 1, 1});
}

}  // namespace

void LossConfig::validate(int num_classes) const {
  if (static_cast<int>(alpha.size()) != num_classes)
    throw ContractError("loss config: alpha length != number of classes");
  for (double a : alpha)
    if (a < 0) throw ContractError("loss config: alpha entries must be >= 0");
  if (gamma < 0) throw ContractError("loss config: gamma must be >= 0");
  if (epsilon <= 0) throw ContractError("loss config: epsilon must be > 0");
  if (w < 0 || w > 1) throw ContractError("loss config: w must lie in [0, 1]");
}

std::vector<double> compute_alpha(const PixelCounts& counts, const AlphaDerivationConfig& cfg) {
  const std::size_t c = counts.counts.size();
  std::vector<double> beta = cfg.beta;
  if (beta.empty()) beta.assign(c, 0.0);
  if (beta.size() != c) throw ContractError("compute_alpha: beta length != counts length");
  for (double b : beta)
    if (b < -0.20 || b > 0.20)
      throw ContractError("compute_alpha: beta offsets must lie in [-0.20, 0.20]");

  std::vector<double> inv(c);
  for (std::size_t i = 0; i < c; ++i)
    inv[i] = 1.0 / (static_cast<double>(counts.counts[i]) + cfg.floor_constant);
  double norm = std::accumulate(inv.begin(), inv.end(), 0.0);

  std::vector<double> alpha(c);
  for (std::size_t i = 0; i < c; ++i) {
    alpha[i] = inv[i] / norm + beta[i];
    if (alpha[i] < 0)
      throw ContractError("compute_alpha: beta offset drives alpha below 0 for class " +
                          std::to_string(i));
  }
  return alpha;
}

torch::Tensor weighted_focal_loss(const torch::Tensor& y_pred, const torch::Tensor& y_true,
                                  const std::vector<double>& alpha, double gamma) {
  check_pair(y_pred, y_true);
  if (static_cast<std::int64_t>(alpha.size()) != y_pred.size(1))
    throw ContractError("focal loss: alpha length != class dimension");

  torch::Tensor a = alpha_tensor(alpha, y_pred);
  torch::Tensor p = y_pred.clamp(kLogClamp, 1.0);
  torch::Tensor term = -a * y_true * torch::log(p) * torch::pow(1.0 - y_pred, gamma);
  // Sum over classes (one-hot picks one term per pixel), mean over pixels.
  return term.sum(1).mean();
}

torch::Tensor dice_loss(const torch::Tensor& y_pred, const torch::Tensor& y_true, double epsilon) {
  check_pair(y_pred, y_true);
  torch::Tensor inter = (y_pred * y_true).sum();
  torch::Tensor uni = y_pred.sum() + y_true.sum();
  return 1.0 - (2.0 * inter + epsilon) / (uni + epsilon);
}

torch::Tensor total_loss(const torch::Tensor& y_pred, const torch::Tensor& y_true,
                         const LossConfig& cfg) {
  cfg.validate(static_cast<int>(y_pred.size(1)));
  return cfg.w * dice_loss(y_pred, y_true, cfg.epsilon) +
         (1.0 - cfg.w) * weighted_focal_loss(y_pred, y_true, cfg.alpha, cfg.gamma);
}

torch::Tensor loss_gradient(const torch::Tensor& y_pred, const torch::Tensor& y_true,
                            const LossConfig& cfg) {
  torch::Tensor p = y_pred.detach().clone().requires_grad_(true);
  torch::Tensor loss = total_loss(p, y_true, cfg);
  loss.backward();
  return p.grad().detach();
}

torch::Tensor one_hot_map(const torch::Tensor& labels, int num_classes, torch::Dtype dtype) {
  if (labels.dim() != 3) throw ContractError("one_hot_map: expected [B, H, W] labels");
  return torch::one_hot(labels, num_classes).permute({0, 3, 1, 2}).to(dtype).contiguous();
}

}  // namespace floodseg
