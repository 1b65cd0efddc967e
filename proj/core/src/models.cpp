#include "floodseg/models.hpp"

namespace F = torch::nn::functional;

namespace floodseg {

std::string to_string(ModelVariant v) {
  switch (v) {
    case ModelVariant::Unet: return "unet";
    case ModelVariant::UnetFused: return "unet_fused";
    case ModelVariant::Deeplabv3: return "deeplabv3";
    case ModelVariant::Deeplabv3Fused: return "deeplabv3_fused";
  }
  throw ContractError("unknown model variant");
}

ModelVariant model_variant_from_string(const std::string& s) {
  if (s == "unet") return ModelVariant::Unet;
  if (s == "unet_fused") return ModelVariant::UnetFused;
  if (s == "deeplabv3") return ModelVariant::Deeplabv3;
  if (s == "deeplabv3_fused") return ModelVariant::Deeplabv3Fused;
  throw ContractError("unknown model variant: " + s);
}

bool is_fused(ModelVariant v) {
  return v == ModelVariant::UnetFused || v == ModelVariant::Deeplabv3Fused;
}

void ModelConfig::validate() const {
  if (num_classes < 2) throw ContractError("model config: num_classes >= 2 required");
  if (input_size < 8) throw ContractError("model config: input_size too small");
  if (unet_channels.size() != 3) throw ContractError("model config: three U-Net encoder stages expected");
  if (input_size % 16 != 0)
    throw ContractError("model config: input_size must be divisible by 16");
  if (is_fused(variant) && input_size % backbone.patch_size != 0)
    throw ContractError("model config: input_size not divisible by backbone patch size " +
                        std::to_string(backbone.patch_size));
}

torch::Tensor project_embeddings(torch::nn::Conv2d& projection, const PatchEmbeddingGrid& grid,
                                 std::int64_t target_h, std::int64_t target_w) {
  if (target_h < 1 || target_w < 1)
    throw ContractError("project_embeddings: target dims must be positive");
  torch::Tensor x = projection(grid.data);
  if (x.size(2) == target_h && x.size(3) == target_w) return x;
  return F::interpolate(x, F::InterpolateFuncOptions()
                               .size(std::vector<std::int64_t>{target_h, target_w})
                               .mode(torch::kBicubic)
                               .align_corners(false));
}

std::int64_t SegmentationModel::trainable_parameter_count() const {
  std::int64_t n = 0;
  for (const auto& p : parameters())
    if (p.requires_grad()) n += p.numel();
  return n;
}

torch::Tensor probability_to_labels(const torch::Tensor& probs) {
  if (probs.dim() != 4) throw ContractError("probability_to_labels: expected [B, C, H, W]");
  return probs.argmax(1);
}

namespace {

void check_input(const torch::Tensor& images, int input_size) {
  if (images.dim() != 4 || images.size(1) != 3)
    throw ContractError("model: expected [B, 3, H, W] images");
  if (images.size(2) != input_size || images.size(3) != input_size)
    throw ContractError("model: expected " + std::to_string(input_size) + "x" +
                        std::to_string(input_size) + " input, got " +
                        std::to_string(images.size(2)) + "x" + std::to_string(images.size(3)));
}

// Two 3x3 conv + batch-norm + ReLU stages.
struct DoubleConvImpl : torch::nn::Module {
  DoubleConvImpl(int in, int out) {
    conv1 = register_module("conv1", torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, 3).padding(1)));
    bn1 = register_module("bn1", torch::nn::BatchNorm2d(out));
    conv2 = register_module("conv2", torch::nn::Conv2d(torch::nn::Conv2dOptions(out, out, 3).padding(1)));
    bn2 = register_module("bn2", torch::nn::BatchNorm2d(out));
  }
  torch::Tensor forward(torch::Tensor x) {
    x = torch::relu(bn1(conv1(x)));
    return torch::relu(bn2(conv2(x)));
  }
  torch::nn::Conv2d conv1{nullptr}, conv2{nullptr};
  torch::nn::BatchNorm2d bn1{nullptr}, bn2{nullptr};
};
TORCH_MODULE(DoubleConv);

class UnetModel final : public SegmentationModel {
 public:
  explicit UnetModel(ModelConfig cfg) : SegmentationModel(std::move(cfg)) {
    const auto& ch = config_.unet_channels;
    const int bott = config_.unet_bottleneck;
    enc1_ = register_module("enc1", DoubleConv(3, ch[0]));
    enc2_ = register_module("enc2", DoubleConv(ch[0], ch[1]));
    enc3_ = register_module("enc3", DoubleConv(ch[1], ch[2]));
    pool_ = register_module("pool", torch::nn::MaxPool2d(torch::nn::MaxPool2dOptions(2)));
    if (is_fused(config_.variant)) {
      proj_ = register_module("dino_proj", torch::nn::Conv2d(torch::nn::Conv2dOptions(
                                               config_.backbone.embed_dim, bott, 1)));
      bottleneck_ = register_module("bottleneck", DoubleConv(ch[2] + bott, bott));
    } else {
      bottleneck_ = register_module("bottleneck", DoubleConv(ch[2], bott));
    }
    up1_ = register_module("up1", torch::nn::ConvTranspose2d(
                                      torch::nn::ConvTranspose2dOptions(bott, ch[2], 2).stride(2)));
    dec1_ = register_module("dec1", DoubleConv(ch[2] * 2, ch[2]));
    up2_ = register_module("up2", torch::nn::ConvTranspose2d(
                                      torch::nn::ConvTranspose2dOptions(ch[2], ch[1], 2).stride(2)));
    dec2_ = register_module("dec2", DoubleConv(ch[1] * 2, ch[1]));
    up3_ = register_module("up3", torch::nn::ConvTranspose2d(
                                      torch::nn::ConvTranspose2dOptions(ch[1], ch[0], 2).stride(2)));
    dec3_ = register_module("dec3", DoubleConv(ch[0] * 2, ch[0]));
    head_ = register_module("head", torch::nn::Conv2d(torch::nn::Conv2dOptions(
                                        ch[0], config_.num_classes, 1)));
  }

  torch::Tensor forward(const torch::Tensor& images) override {
    if (is_fused(config_.variant))
      throw ContractError("fused U-Net variant requires a patch-embedding grid");
    auto [deep, skips] = encode(images);
    return decode(bottleneck_(deep), skips);
  }

  torch::Tensor forward_fused(const torch::Tensor& images, const PatchEmbeddingGrid& grid) override {
    if (!is_fused(config_.variant))
      throw ContractError("baseline U-Net variant takes no patch-embedding grid");
    auto [deep, skips] = encode(images);
    torch::Tensor dino = project_embeddings(proj_, grid, deep.size(2), deep.size(3));
    if (dino.size(2) != deep.size(2) || dino.size(3) != deep.size(3))
      throw ContractError("fuse: spatial dims of encoder and projected grid differ");
    torch::Tensor fused = bottleneck_(torch::cat({deep, dino}, 1));
    return decode(fused, skips);
  }

 private:
  std::pair<torch::Tensor, std::array<torch::Tensor, 3>> encode(const torch::Tensor& images) {
    check_input(images, config_.input_size);
    torch::Tensor s1 = enc1_(images);          // S,   ch0
    torch::Tensor s2 = enc2_(pool_(s1));       // S/2, ch1
    torch::Tensor s3 = enc3_(pool_(s2));       // S/4, ch2
    torch::Tensor deep = pool_(s3);            // S/8, ch2
    return {deep, {s1, s2, s3}};
  }

  torch::Tensor decode(torch::Tensor x, const std::array<torch::Tensor, 3>& skips) {
    x = dec1_(torch::cat({up1_(x), skips[2]}, 1));
    x = dec2_(torch::cat({up2_(x), skips[1]}, 1));
    x = dec3_(torch::cat({up3_(x), skips[0]}, 1));
    return torch::softmax(head_(x), 1);
  }

  DoubleConv enc1_{nullptr}, enc2_{nullptr}, enc3_{nullptr}, bottleneck_{nullptr},
      dec1_{nullptr}, dec2_{nullptr}, dec3_{nullptr};
  torch::nn::MaxPool2d pool_{nullptr};
  torch::nn::Conv2d proj_{nullptr}, head_{nullptr};
  torch::nn::ConvTranspose2d up1_{nullptr}, up2_{nullptr}, up3_{nullptr};
};

// ResNet bottleneck residual unit (1x1 -> 3x3 -> 1x1, expansion 4).
struct ResBottleneckImpl : torch::nn::Module {
  ResBottleneckImpl(int in, int mid, int stride, int dilation) {
    const int out = mid * 4;
    conv1 = register_module("conv1", torch::nn::Conv2d(
                                         torch::nn::Conv2dOptions(in, mid, 1).bias(false)));
    bn1 = register_module("bn1", torch::nn::BatchNorm2d(mid));
    conv2 = register_module("conv2", torch::nn::Conv2d(torch::nn::Conv2dOptions(mid, mid, 3)
                                                           .stride(stride)
                                                           .padding(dilation)
                                                           .dilation(dilation)
                                                           .bias(false)));
    bn2 = register_module("bn2", torch::nn::BatchNorm2d(mid));
    conv3 = register_module("conv3", torch::nn::Conv2d(
                                         torch::nn::Conv2dOptions(mid, out, 1).bias(false)));
    bn3 = register_module("bn3", torch::nn::BatchNorm2d(out));
    if (stride != 1 || in != out) {
      down_conv = register_module("down_conv", torch::nn::Conv2d(
                                                   torch::nn::Conv2dOptions(in, out, 1)
                                                       .stride(stride).bias(false)));
      down_bn = register_module("down_bn", torch::nn::BatchNorm2d(out));
    }
  }
  torch::Tensor forward(torch::Tensor x) {
    torch::Tensor identity = down_conv ? down_bn(down_conv(x)) : x;
    x = torch::relu(bn1(conv1(x)));
    x = torch::relu(bn2(conv2(x)));
    x = bn3(conv3(x));
    return torch::relu(x + identity);
  }
  torch::nn::Conv2d conv1{nullptr}, conv2{nullptr}, conv3{nullptr}, down_conv{nullptr};
  torch::nn::BatchNorm2d bn1{nullptr}, bn2{nullptr}, bn3{nullptr}, down_bn{nullptr};
};
TORCH_MODULE(ResBottleneck);

struct ConvBnReluImpl : torch::nn::Module {
  ConvBnReluImpl(int in, int out, int k, int dilation = 1) {
    conv = register_module("conv", torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, k)
                                                         .padding(k / 2 * dilation)
                                                         .dilation(dilation)
                                                         .bias(false)));
    bn = register_module("bn", torch::nn::BatchNorm2d(out));
  }
  torch::Tensor forward(torch::Tensor x) { return torch::relu(bn(conv(x))); }
  torch::nn::Conv2d conv{nullptr};
  torch::nn::BatchNorm2d bn{nullptr};
};
TORCH_MODULE(ConvBnRelu);

// Atrous spatial pyramid pooling with an image-level branch.
struct AsppImpl : torch::nn::Module {
  AsppImpl(int in, int out) {
    b0 = register_module("b0", ConvBnRelu(in, out, 1));
    b1 = register_module("b1", ConvBnRelu(in, out, 3, 12));
    b2 = register_module("b2", ConvBnRelu(in, out, 3, 24));
    b3 = register_module("b3", ConvBnRelu(in, out, 3, 36));
    pool_proj = register_module("pool_proj", ConvBnRelu(in, out, 1));
    project = register_module("project", ConvBnRelu(out * 5, out, 1));
  }
  torch::Tensor forward(torch::Tensor x) {
    const auto h = x.size(2), w = x.size(3);
    torch::Tensor g = F::adaptive_avg_pool2d(x, F::AdaptiveAvgPool2dFuncOptions(1));
    g = pool_proj(g);
    g = F::interpolate(g, F::InterpolateFuncOptions()
                              .size(std::vector<std::int64_t>{h, w})
                              .mode(torch::kBilinear)
                              .align_corners(false));
    return project(torch::cat({b0(x), b1(x), b2(x), b3(x), g}, 1));
  }
  ConvBnRelu b0{nullptr}, b1{nullptr}, b2{nullptr}, b3{nullptr}, pool_proj{nullptr},
      project{nullptr};
};
TORCH_MODULE(Aspp);

class DeeplabModel final : public SegmentationModel {
 public:
  explicit DeeplabModel(ModelConfig cfg) : SegmentationModel(std::move(cfg)) {
    const int aspp_ch = config_.deeplab_aspp_channels;
    stem_conv_ = register_module("stem_conv", torch::nn::Conv2d(torch::nn::Conv2dOptions(3, 64, 7)
                                                                    .stride(2).padding(3).bias(false)));
    stem_bn_ = register_module("stem_bn", torch::nn::BatchNorm2d(64));
    stem_pool_ = register_module("stem_pool", torch::nn::MaxPool2d(
                                                  torch::nn::MaxPool2dOptions(3).stride(2).padding(1)));
    layer1_ = make_layer("layer1", 64, 64, 3, 1, 1);
    layer2_ = make_layer("layer2", 256, 128, 4, 2, 1);
    layer3_ = make_layer("layer3", 512, 256, 6, 2, 1);
    // Output stride 16: last stage keeps resolution via dilation.
    layer4_ = make_layer("layer4", 1024, 512, 3, 1, 2);
    aspp_ = register_module("aspp", Aspp(2048, aspp_ch));
    if (is_fused(config_.variant)) {
      proj_ = register_module("dino_proj", torch::nn::Conv2d(torch::nn::Conv2dOptions(
                                               config_.backbone.embed_dim, aspp_ch, 1)));
      fuse_ = register_module("fuse", ConvBnRelu(aspp_ch * 2, aspp_ch, 3));
    }
    head_ = register_module("head", ConvBnRelu(aspp_ch, aspp_ch, 3));
    classifier_ = register_module("classifier", torch::nn::Conv2d(torch::nn::Conv2dOptions(
                                                    aspp_ch, config_.num_classes, 1)));
  }

  torch::Tensor forward(const torch::Tensor& images) override {
    if (is_fused(config_.variant))
      throw ContractError("fused DeepLabV3 variant requires a patch-embedding grid");
    return head(encode(images));
  }

  torch::Tensor forward_fused(const torch::Tensor& images, const PatchEmbeddingGrid& grid) override {
    if (!is_fused(config_.variant))
      throw ContractError("baseline DeepLabV3 variant takes no patch-embedding grid");
    torch::Tensor feat = encode(images);
    torch::Tensor dino = project_embeddings(proj_, grid, feat.size(2), feat.size(3));
    return head(fuse_(torch::cat({feat, dino}, 1)));
  }

  /// ResNet-50 trunk + ASPP at output stride 16.
  torch::Tensor encode(const torch::Tensor& images) {
    check_input(images, config_.input_size);
    torch::Tensor x = stem_pool_(torch::relu(stem_bn_(stem_conv_(images))));
    for (auto& b : layer1_) x = b->forward(x);
    for (auto& b : layer2_) x = b->forward(x);
    for (auto& b : layer3_) x = b->forward(x);
    for (auto& b : layer4_) x = b->forward(x);
    return aspp_(x);
  }

 private:
  std::vector<ResBottleneck> make_layer(const std::string& name, int in, int mid, int blocks,
                                        int stride, int dilation) {
    std::vector<ResBottleneck> layer;
    layer.push_back(register_module(name + "_0", ResBottleneck(in, mid, stride, dilation)));
    for (int i = 1; i < blocks; ++i)
      layer.push_back(register_module(name + "_" + std::to_string(i),
                                      ResBottleneck(mid * 4, mid, 1, dilation)));
    return layer;
  }

  torch::Tensor head(torch::Tensor x) {
    x = classifier_(head_(x));
    x = F::interpolate(x, F::InterpolateFuncOptions()
                              .size(std::vector<std::int64_t>{config_.input_size, config_.input_size})
                              .mode(torch::kBicubic)
                              .align_corners(false));
    return torch::softmax(x, 1);
  }

  torch::nn::Conv2d stem_conv_{nullptr}, proj_{nullptr}, classifier_{nullptr};
  torch::nn::BatchNorm2d stem_bn_{nullptr};
  torch::nn::MaxPool2d stem_pool_{nullptr};
  std::vector<ResBottleneck> layer1_, layer2_, layer3_, layer4_;
  Aspp aspp_{nullptr};
  ConvBnRelu fuse_{nullptr}, head_{nullptr};
};

}  // namespace

std::shared_ptr<SegmentationModel> build_model(const ModelConfig& cfg) {
  cfg.validate();
  torch::manual_seed(cfg.init_seed);
  switch (cfg.variant) {
    case ModelVariant::Unet:
    case ModelVariant::UnetFused:
      return std::make_shared<UnetModel>(cfg);
    case ModelVariant::Deeplabv3:
    case ModelVariant::Deeplabv3Fused:
      return std::make_shared<DeeplabModel>(cfg);
  }
  throw ContractError("unknown model variant");
}

}  // namespace floodseg
