#ifndef FLOODSEG_MODELS_HPP
#define FLOODSEG_MODELS_HPP

#include <memory>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "floodseg/backbone.hpp"

namespace floodseg {

enum class ModelVariant { Unet, UnetFused, Deeplabv3, Deeplabv3Fused };
std::string to_string(ModelVariant v);
ModelVariant model_variant_from_string(const std::string& s);
bool is_fused(ModelVariant v);

struct ModelConfig {
  ModelVariant variant = ModelVariant::UnetFused;
  int num_classes = 10;
  int input_size = 448;
  std::vector<int> unet_channels = {64, 128, 256};  // encoder stages
  int unet_bottleneck = 512;
  int deeplab_aspp_channels = 256;
  BackboneSpec backbone;
  std::uint64_t init_seed = 0;

  void validate() const;
};

/// 1x1 projection E -> out_channels followed by bicubic resampling of the
/// patch grid to the fusion resolution.
torch::Tensor project_embeddings(torch::nn::Conv2d& projection, const PatchEmbeddingGrid& grid,
                                 std::int64_t target_h, std::int64_t target_w);

/// Encoder-decoder segmentation network with an optional frozen-feature
/// fusion block at the bottleneck. Output is a per-pixel class distribution
/// [B, C, H, W] (softmax applied).
class SegmentationModel : public torch::nn::Module {
 public:
  ~SegmentationModel() override = default;

  /// Baseline variants; fused variants require a grid from the backbone.
  virtual torch::Tensor forward(const torch::Tensor& images) = 0;
  virtual torch::Tensor forward_fused(const torch::Tensor& images,
                                      const PatchEmbeddingGrid& grid) = 0;

  const ModelConfig& config() const { return config_; }
  std::int64_t trainable_parameter_count() const;

 protected:
  explicit SegmentationModel(ModelConfig cfg) : config_(std::move(cfg)) {}
  ModelConfig config_;
};

std::shared_ptr<SegmentationModel> build_model(const ModelConfig& cfg);

/// Argmax over the class dimension: [B, C, H, W] -> int64 [B, H, W].
torch::Tensor probability_to_labels(const torch::Tensor& probs);

}  // namespace floodseg

#endif
