#ifndef FLOODSEG_BACKBONE_HPP
#define FLOODSEG_BACKBONE_HPP

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "floodseg/errors.hpp"

namespace floodseg {

enum class BackboneKind { PretrainedVitS14, DeterministicStub };
std::string to_string(BackboneKind k);
BackboneKind backbone_kind_from_string(const std::string& s);

struct BackboneSpec {
  BackboneKind kind = BackboneKind::DeterministicStub;
  int patch_size = 14;   // p
  int embed_dim = 384;   // E
  std::string weights_locator;  // file path for the pretrained kind
};

/// [B, E, H/p, W/p] frozen-backbone feature grid.
struct PatchEmbeddingGrid {
  torch::Tensor data;
  int patch_size = 0;
  BackboneKind source = BackboneKind::DeterministicStub;
};

/// Frozen patch-embedding extractor. Extraction never mutates state and is
/// deterministic for identical input.
class Backbone {
 public:
  virtual ~Backbone() = default;
  /// images: float [B, 3, H, W] in [0, 1], H and W divisible by patch_size.
  virtual PatchEmbeddingGrid extract(const torch::Tensor& images) const = 0;
  /// Order-stable hash of all parameter bytes.
  virtual std::uint64_t parameter_digest() const = 0;
  virtual const BackboneSpec& spec() const = 0;
};

std::unique_ptr<Backbone> make_backbone(const BackboneSpec& spec);

/// True iff two parameter digests taken around a training step are equal.
inline bool assert_frozen(std::uint64_t before, std::uint64_t after) { return before == after; }

/// FNV-1a over the raw bytes of each tensor in order.
std::uint64_t digest_tensors(const std::vector<torch::Tensor>& tensors);

/// Saves a randomly initialized ViT-S weight archive loadable through
/// weights_locator (stand-in when real pretrained weights are not on disk).
void write_random_vit_weights(const BackboneSpec& spec, int input_size, const std::string& path);

}  // namespace floodseg

#endif
