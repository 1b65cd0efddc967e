#include <doctest.h>

#include "floodseg/models.hpp"

using namespace floodseg;

namespace {

ModelConfig small_config(ModelVariant v) {
  ModelConfig cfg;
  cfg.variant = v;
  cfg.num_classes = 4;
  cfg.input_size = 64;
  cfg.unet_channels = {8, 16, 32};
  cfg.unet_bottleneck = 64;
  cfg.deeplab_aspp_channels = 32;
  cfg.backbone.kind = BackboneKind::DeterministicStub;
  cfg.backbone.patch_size = 8;
  cfg.backbone.embed_dim = 48;
  cfg.init_seed = 7;
  return cfg;
}

torch::Tensor forward_any(SegmentationModel& model, const Backbone* bb,
                          const torch::Tensor& images) {
  if (is_fused(model.config().variant)) return model.forward_fused(images, bb->extract(images));
  return model.forward(images);
}

}  // namespace

TEST_CASE("model variant names round-trip") {
  for (auto v : {ModelVariant::Unet, ModelVariant::UnetFused, ModelVariant::Deeplabv3,
                 ModelVariant::Deeplabv3Fused})
    CHECK(model_variant_from_string(to_string(v)) == v);
  CHECK_THROWS_AS(model_variant_from_string("segnet"), ContractError);
  CHECK(is_fused(ModelVariant::UnetFused));
  CHECK(is_fused(ModelVariant::Deeplabv3Fused));
  CHECK_FALSE(is_fused(ModelVariant::Unet));
  CHECK_FALSE(is_fused(ModelVariant::Deeplabv3));
}

TEST_CASE("model config contracts") {
  ModelConfig cfg = small_config(ModelVariant::UnetFused);
  CHECK_NOTHROW(cfg.validate());
  cfg.num_classes = 1;
  CHECK_THROWS_AS(cfg.validate(), ContractError);
  cfg = small_config(ModelVariant::Unet);
  cfg.input_size = 72;  // not divisible by 16
  CHECK_THROWS_AS(cfg.validate(), ContractError);
  cfg = small_config(ModelVariant::UnetFused);
  cfg.backbone.patch_size = 7;  // 64 % 7 != 0
  CHECK_THROWS_AS(cfg.validate(), ContractError);
  cfg = small_config(ModelVariant::Unet);
  cfg.backbone.patch_size = 7;  // baseline ignores the backbone
  CHECK_NOTHROW(cfg.validate());
}

TEST_CASE("every variant emits a per-pixel class distribution") {
  torch::NoGradGuard ng;
  torch::Tensor images = torch::rand({2, 3, 64, 64});
  for (auto v : {ModelVariant::Unet, ModelVariant::UnetFused, ModelVariant::Deeplabv3,
                 ModelVariant::Deeplabv3Fused}) {
    CAPTURE(to_string(v));
    ModelConfig cfg = small_config(v);
    auto model = build_model(cfg);
    model->eval();
    auto bb = make_backbone(cfg.backbone);
    torch::Tensor out = forward_any(*model, bb.get(), images);
    CHECK(out.sizes() == torch::IntArrayRef({2, 4, 64, 64}));
    CHECK(out.min().item<float>() >= 0.0f);
    CHECK(out.max().item<float>() <= 1.0f);
    CHECK((out.sum(1) - 1.0).abs().max().item<float>() < 1e-5f);

    torch::Tensor labels = probability_to_labels(out);
    CHECK(labels.sizes() == torch::IntArrayRef({2, 64, 64}));
    CHECK(labels.min().item<std::int64_t>() >= 0);
    CHECK(labels.max().item<std::int64_t>() < 4);
  }
}

TEST_CASE("eval-mode forward is deterministic for a fixed init seed") {
  torch::NoGradGuard ng;
  torch::Tensor images = torch::rand({1, 3, 64, 64});
  ModelConfig cfg = small_config(ModelVariant::UnetFused);
  auto m1 = build_model(cfg);
  auto m2 = build_model(cfg);
  m1->eval();
  m2->eval();
  auto bb = make_backbone(cfg.backbone);
  CHECK(torch::equal(m1->forward_fused(images, bb->extract(images)),
                     m2->forward_fused(images, bb->extract(images))));

  ModelConfig other = cfg;
  other.init_seed = 8;
  auto m3 = build_model(other);
  m3->eval();
  CHECK_FALSE(torch::equal(m1->forward_fused(images, bb->extract(images)),
                           m3->forward_fused(images, bb->extract(images))));
}

TEST_CASE("fusion entry points enforce the variant") {
  torch::NoGradGuard ng;
  torch::Tensor images = torch::rand({1, 3, 64, 64});
  ModelConfig fused_cfg = small_config(ModelVariant::UnetFused);
  auto fused = build_model(fused_cfg);
  auto bb = make_backbone(fused_cfg.backbone);
  CHECK_THROWS_AS(fused->forward(images), ContractError);

  auto baseline = build_model(small_config(ModelVariant::Unet));
  CHECK_THROWS_AS(baseline->forward_fused(images, bb->extract(images)), ContractError);

  auto dl_fused = build_model(small_config(ModelVariant::Deeplabv3Fused));
  CHECK_THROWS_AS(dl_fused->forward(images), ContractError);
  auto dl = build_model(small_config(ModelVariant::Deeplabv3));
  CHECK_THROWS_AS(dl->forward_fused(images, bb->extract(images)), ContractError);
}

TEST_CASE("wrong input resolution is rejected") {
  auto model = build_model(small_config(ModelVariant::Unet));
  CHECK_THROWS_AS(model->forward(torch::rand({1, 3, 32, 32})), ContractError);
  CHECK_THROWS_AS(model->forward(torch::rand({1, 1, 64, 64})), ContractError);
}

TEST_CASE("fusion adds exactly the projection and widened-bottleneck weights") {
  SUBCASE("u-net family") {
    ModelConfig base = small_config(ModelVariant::Unet);
    ModelConfig fused = small_config(ModelVariant::UnetFused);
    std::int64_t delta = build_model(fused)->trainable_parameter_count() -
                         build_model(base)->trainable_parameter_count();
    const std::int64_t bott = base.unet_bottleneck;
    const std::int64_t e = fused.backbone.embed_dim;
    // dino_proj 1x1 (E*bott + bias) plus the widened first bottleneck conv.
    std::int64_t expected = e * bott + bott + bott * bott * 9;
    CHECK(delta == expected);
  }

  SUBCASE("deeplab family") {
    ModelConfig base = small_config(ModelVariant::Deeplabv3);
    ModelConfig fused = small_config(ModelVariant::Deeplabv3Fused);
    std::int64_t delta = build_model(fused)->trainable_parameter_count() -
                         build_model(base)->trainable_parameter_count();
    const std::int64_t a = base.deeplab_aspp_channels;
    const std::int64_t e = fused.backbone.embed_dim;
    // dino_proj 1x1 (E*a + bias) plus fuse block conv (2a->a, 3x3, no bias) + bn.
    std::int64_t expected = e * a + a + 2 * a * a * 9 + 2 * a;
    CHECK(delta == expected);
  }
}

TEST_CASE("baseline and fused variants share the trunk architecture") {
  auto base = build_model(small_config(ModelVariant::Unet));
  auto fused = build_model(small_config(ModelVariant::UnetFused));
  auto named_base = base->named_parameters();
  auto named_fused = fused->named_parameters();
  for (const auto& item : named_base.pairs()) {
    const std::string& name = item.first;
    if (name.rfind("bottleneck", 0) == 0) continue;  // widened by fusion
    torch::Tensor* match = named_fused.find(name);
    REQUIRE_MESSAGE(match != nullptr, name);
    CHECK(match->sizes() == item.second.sizes());
  }
}

TEST_CASE("project_embeddings resamples the patch grid to the fusion resolution") {
  torch::NoGradGuard ng;
  torch::manual_seed(0);
  torch::nn::Conv2d proj(torch::nn::Conv2dOptions(6, 5, 1));
  PatchEmbeddingGrid grid;
  grid.data = torch::rand({2, 6, 8, 8});
  grid.patch_size = 8;

  torch::Tensor out = project_embeddings(proj, grid, 16, 16);
  CHECK(out.sizes() == torch::IntArrayRef({2, 5, 16, 16}));

  SUBCASE("identity projection at matching resolution preserves values") {
    torch::nn::Conv2d ident(torch::nn::Conv2dOptions(6, 6, 1));
    ident->weight.set_data(torch::eye(6).view({6, 6, 1, 1}));
    ident->bias.set_data(torch::zeros({6}));
    torch::Tensor same = project_embeddings(ident, grid, 8, 8);
    CHECK((same - grid.data).abs().max().item<float>() < 1e-6f);
  }

  CHECK_THROWS_AS(project_embeddings(proj, grid, 0, 16), ContractError);
}
