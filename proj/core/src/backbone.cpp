#include "floodseg/backbone.hpp"

#include <cmath>
#include <filesystem>
#include <random>

namespace F = torch::nn::functional;

namespace floodseg {

std::string to_string(BackboneKind k) {
  switch (k) {
    case BackboneKind::PretrainedVitS14: return "pretrained_vit_s14";
    case BackboneKind::DeterministicStub: return "deterministic_stub";
  }
  throw ContractError("unknown backbone kind");
}

BackboneKind backbone_kind_from_string(const std::string& s) {
  if (s == "pretrained_vit_s14") return BackboneKind::PretrainedVitS14;
  if (s == "deterministic_stub") return BackboneKind::DeterministicStub;
  throw ContractError("unknown backbone kind: " + s);
}

std::uint64_t digest_tensors(const std::vector<torch::Tensor>& tensors) {
  std::uint64_t h = 14695981039346656037ull;
  auto mix = [&h](const unsigned char* data, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
      h ^= data[i];
      h *= 1099511628211ull;
    }
  };
  for (const auto& t : tensors) {
    torch::Tensor c = t.detach().to(torch::kCPU).contiguous();
    mix(static_cast<const unsigned char*>(c.data_ptr()), c.numel() * c.element_size());
  }
  return h;
}

namespace {

void check_divisible(const torch::Tensor& images, int p) {
  if (images.dim() != 4 || images.size(1) != 3)
    throw ContractError("backbone: expected [B, 3, H, W] images");
  if (images.size(2) % p != 0 || images.size(3) % p != 0)
    throw ContractError("backbone: spatial dims " + std::to_string(images.size(2)) + "x" +
                        std::to_string(images.size(3)) + " not divisible by patch size " +
                        std::to_string(p));
}

// Content-derived patch features: per-channel mean/std plus sinusoidal patch
// coordinates, projected to E dims by a fixed seeded matrix.
class StubBackbone final : public Backbone {
 public:
  explicit StubBackbone(BackboneSpec spec) : spec_(std::move(spec)) {
    if (spec_.patch_size < 1 || spec_.embed_dim < 1)
      throw ContractError("stub backbone: patch_size and embed_dim must be >= 1");
    constexpr int kBaseFeatures = 14;
    std::mt19937_64 rng(0x5eedf00dull ^ (static_cast<std::uint64_t>(spec_.patch_size) << 32) ^
                        static_cast<std::uint64_t>(spec_.embed_dim));
    std::normal_distribution<double> gauss(0.0, 1.0 / std::sqrt(kBaseFeatures));
    projection_ = torch::empty({kBaseFeatures, spec_.embed_dim}, torch::kFloat32);
    auto acc = projection_.accessor<float, 2>();
    for (int i = 0; i < kBaseFeatures; ++i)
      for (int j = 0; j < spec_.embed_dim; ++j) acc[i][j] = static_cast<float>(gauss(rng));
  }

  PatchEmbeddingGrid extract(const torch::Tensor& images) const override {
    torch::NoGradGuard ng;
    const int p = spec_.patch_size;
    check_divisible(images, p);
    const auto B = images.size(0);
    const auto gh = images.size(2) / p, gw = images.size(3) / p;

    // [B, 3*p*p, L] -> [B, 3, p*p, L]
    torch::Tensor cols = F::unfold(images.to(torch::kFloat32),
                                   F::UnfoldFuncOptions({p, p}).stride({p, p}))
                             .view({B, 3, static_cast<std::int64_t>(p) * p, gh * gw});
    torch::Tensor mean = cols.mean(2);                       // [B, 3, L]
    torch::Tensor stdev = cols.std(2, /*unbiased=*/false);   // [B, 3, L]

    torch::Tensor ys = torch::arange(gh, torch::kFloat32).div(std::max<std::int64_t>(gh - 1, 1));
    torch::Tensor xs = torch::arange(gw, torch::kFloat32).div(std::max<std::int64_t>(gw - 1, 1));
    auto mesh = torch::meshgrid({ys, xs}, "ij");
    torch::Tensor v = mesh[0].reshape({-1}), u = mesh[1].reshape({-1});  // [L]
    torch::Tensor pos = torch::stack({torch::sin(M_PI * u), torch::cos(M_PI * u),
                                      torch::sin(M_PI * v), torch::cos(M_PI * v),
                                      torch::sin(2 * M_PI * u), torch::cos(2 * M_PI * u),
                                      torch::sin(2 * M_PI * v), torch::cos(2 * M_PI * v)},
                                     0);                    // [8, L]
    torch::Tensor base = torch::cat({mean, stdev, pos.unsqueeze(0).expand({B, 8, gh * gw})}, 1);
    torch::Tensor emb = base.permute({0, 2, 1}).matmul(projection_);  // [B, L, E]
    PatchEmbeddingGrid grid;
    grid.data = emb.view({B, gh, gw, spec_.embed_dim}).permute({0, 3, 1, 2}).contiguous();
    grid.patch_size = p;
    grid.source = spec_.kind;
    return grid;
  }

  std::uint64_t parameter_digest() const override { return digest_tensors({projection_}); }
  const BackboneSpec& spec() const override { return spec_; }

 private:
  BackboneSpec spec_;
  torch::Tensor projection_;
};

struct VitBlockImpl : torch::nn::Module {
  VitBlockImpl(int dim, int heads) {
    norm1 = register_module("norm1", torch::nn::LayerNorm(torch::nn::LayerNormOptions({dim})));
    attn = register_module("attn", torch::nn::MultiheadAttention(
                                       torch::nn::MultiheadAttentionOptions(dim, heads)));
    norm2 = register_module("norm2", torch::nn::LayerNorm(torch::nn::LayerNormOptions({dim})));
    fc1 = register_module("fc1", torch::nn::Linear(dim, 4 * dim));
    fc2 = register_module("fc2", torch::nn::Linear(4 * dim, dim));
  }

  torch::Tensor forward(torch::Tensor x) {  // [L, B, D]
    torch::Tensor h = norm1(x);
    auto [out, w] = attn(h, h, h);
    x = x + out;
    x = x + fc2(torch::gelu(fc1(norm2(x))));
    return x;
  }

  torch::nn::LayerNorm norm1{nullptr}, norm2{nullptr};
  torch::nn::MultiheadAttention attn{nullptr};
  torch::nn::Linear fc1{nullptr}, fc2{nullptr};
};
TORCH_MODULE(VitBlock);

struct VitSmallImpl : torch::nn::Module {
  VitSmallImpl(int patch_size, int embed_dim, int depth = 12, int heads = 6, int base_grid = 32) {
    patch_embed = register_module(
        "patch_embed", torch::nn::Conv2d(torch::nn::Conv2dOptions(3, embed_dim, patch_size)
                                             .stride(patch_size)));
    cls_token = register_parameter("cls_token", torch::zeros({1, 1, embed_dim}));
    pos_embed = register_parameter(
        "pos_embed", torch::randn({1, base_grid * base_grid + 1, embed_dim}) * 0.02);
    for (int i = 0; i < depth; ++i)
      blocks.push_back(register_module("block" + std::to_string(i),
                                       VitBlock(embed_dim, heads)));
    norm = register_module("norm", torch::nn::LayerNorm(torch::nn::LayerNormOptions({embed_dim})));
    grid_ = base_grid;
  }

  torch::Tensor interpolated_pos_embed(std::int64_t gh, std::int64_t gw) {
    if (gh == grid_ && gw == grid_) return pos_embed;
    torch::Tensor cls = pos_embed.index({torch::indexing::Slice(), torch::indexing::Slice(0, 1)});
    torch::Tensor patch = pos_embed.index({torch::indexing::Slice(), torch::indexing::Slice(1)});
    const auto dim = patch.size(2);
    patch = patch.view({1, grid_, grid_, dim}).permute({0, 3, 1, 2});
    patch = F::interpolate(patch, F::InterpolateFuncOptions()
                                      .size(std::vector<std::int64_t>{gh, gw})
                                      .mode(torch::kBicubic)
                                      .align_corners(false));
    patch = patch.permute({0, 2, 3, 1}).reshape({1, gh * gw, dim});
    return torch::cat({cls, patch}, 1);
  }

  /// Final normalized patch tokens, class token dropped: [B, E, gh, gw].
  torch::Tensor forward(torch::Tensor images) {
    const auto B = images.size(0);
    torch::Tensor x = patch_embed(images);  // [B, E, gh, gw]
    const auto gh = x.size(2), gw = x.size(3);
    const auto dim = x.size(1);
    x = x.flatten(2).permute({0, 2, 1});  // [B, L, E]
    x = torch::cat({cls_token.expand({B, 1, dim}), x}, 1);
    x = x + interpolated_pos_embed(gh, gw);
    x = x.permute({1, 0, 2});  // [L+1, B, E] for MultiheadAttention
    for (auto& blk : blocks) x = blk->forward(x);
    x = norm(x.permute({1, 0, 2}));  // [B, L+1, E]
    torch::Tensor patches = x.index({torch::indexing::Slice(), torch::indexing::Slice(1)});
    return patches.permute({0, 2, 1}).reshape({B, dim, gh, gw}).contiguous();
  }

  torch::nn::Conv2d patch_embed{nullptr};
  torch::Tensor cls_token, pos_embed;
  std::vector<VitBlock> blocks;
  torch::nn::LayerNorm norm{nullptr};
  int grid_ = 32;
};
TORCH_MODULE(VitSmall);

class VitBackbone final : public Backbone {
 public:
  explicit VitBackbone(BackboneSpec spec) : spec_(std::move(spec)) {
    if (spec_.weights_locator.empty())
      throw IoError("pretrained backbone requires a weights_locator");
    if (!std::filesystem::exists(spec_.weights_locator))
      throw IoError("backbone weights not found: " + spec_.weights_locator);
    vit_ = VitSmall(spec_.patch_size, spec_.embed_dim);
    torch::serialize::InputArchive archive;
    archive.load_from(spec_.weights_locator);
    vit_->load(archive);
    vit_->eval();
    for (auto& p : vit_->parameters()) p.set_requires_grad(false);
  }

  PatchEmbeddingGrid extract(const torch::Tensor& images) const override {
    torch::NoGradGuard ng;
    check_divisible(images, spec_.patch_size);
    PatchEmbeddingGrid grid;
    grid.data = vit_->forward(images.to(torch::kFloat32));
    grid.patch_size = spec_.patch_size;
    grid.source = spec_.kind;
    return grid;
  }

  std::uint64_t parameter_digest() const override {
    std::vector<torch::Tensor> ps;
    for (const auto& p : vit_->parameters()) ps.push_back(p);
    return digest_tensors(ps);
  }

  const BackboneSpec& spec() const override { return spec_; }

 private:
  BackboneSpec spec_;
  mutable VitSmall vit_{nullptr};
};

}  // namespace

void write_random_vit_weights(const BackboneSpec& spec, int input_size, const std::string& path) {
  torch::manual_seed(0);
  VitSmall vit(spec.patch_size, spec.embed_dim, 12, 6, input_size / spec.patch_size);
  torch::serialize::OutputArchive archive;
  vit->save(archive);
  archive.save_to(path);
}

std::unique_ptr<Backbone> make_backbone(const BackboneSpec& spec) {
  switch (spec.kind) {
    case BackboneKind::DeterministicStub: return std::make_unique<StubBackbone>(spec);
    case BackboneKind::PretrainedVitS14: return std::make_unique<VitBackbone>(spec);
  }
  throw ContractError("unknown backbone kind");
}

}  // namespace floodseg
