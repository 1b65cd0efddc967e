#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>

#include <opencv2/imgcodecs.hpp>

#include "floodseg/dataset.hpp"

namespace fs = std::filesystem;
using namespace floodseg;

namespace {

fs::path temp_dir(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("floodseg_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

void write_pair(const fs::path& root, const DatasetLayout& layout, const std::string& stem,
                int size, int label) {
  fs::create_directories(root / layout.image_subdir);
  fs::create_directories(root / layout.mask_subdir);
  cv::Mat img(size, size, CV_8UC3, cv::Scalar(40, 80, 120));
  cv::Mat mask(size, size, CV_8UC1, cv::Scalar(label));
  cv::imwrite((root / layout.image_subdir / (stem + ".png")).string(), img);
  cv::imwrite((root / layout.mask_subdir / (stem + layout.mask_suffix + layout.mask_ext)).string(),
              mask);
}

std::set<std::int64_t> label_set(const torch::Tensor& mask) {
  std::set<std::int64_t> s;
  torch::Tensor flat = mask.reshape({-1});
  auto acc = flat.accessor<std::int64_t, 1>();
  for (std::int64_t i = 0; i < flat.numel(); ++i) s.insert(acc[i]);
  return s;
}

}  // namespace

TEST_CASE("floodnet catalog matches the published class table") {
  ClassCatalog cat = ClassCatalog::floodnet();
  CHECK(cat.num_classes() == 10);
  for (int i = 0; i < 10; ++i) CHECK(cat.at(i).id == i);
  CHECK(cat.at(0).name == "Background");
  CHECK(cat.at(0).is_background);
  CHECK(cat.background_id() == 0);
  int n_bg = 0;
  for (const auto& c : cat.classes()) n_bg += c.is_background ? 1 : 0;
  CHECK(n_bg == 1);

  std::vector<double> expected = {0.08, 0.14, 0.10, 0.10, 0.05, 0.015, 0.01, 0.25, 0.25, 0.005};
  std::vector<double> got = cat.alphas();
  for (int i = 0; i < 10; ++i) CHECK(got[i] == doctest::Approx(expected[i]).epsilon(1e-12));
  double sum = std::accumulate(got.begin(), got.end(), 0.0);
  CHECK(std::abs(sum - 1.0) < 1e-9);
}

TEST_CASE("colormap is injective and invertible over the catalog") {
  ColorMap cmap = ColorMap::defaults(10);
  for (int i = 0; i < 10; ++i) CHECK(cmap.class_of(cmap.color(i)) == i);
  CHECK_THROWS_AS(cmap.class_of({1, 2, 3}), DataError);
  CHECK_THROWS_AS(ColorMap({{0, 0, 0}, {0, 0, 0}}), ContractError);
}

TEST_CASE("scan_dataset pairs images with masks") {
  fs::path root = temp_dir("scan");
  DatasetLayout layout = DatasetLayout::flat();
  for (const auto& stem : {"a", "b", "c"}) write_pair(root, layout, stem, 32, 1);

  DatasetIndex index = scan_dataset(root, Split::Train, layout);
  CHECK(index.entries.size() == 3);
  std::set<std::string> ids;
  for (const auto& e : index.entries) {
    CHECK(fs::exists(e.image_path));
    CHECK(fs::exists(e.mask_path));
    ids.insert(e.sample_id);
  }
  CHECK(ids.size() == 3);
}

TEST_CASE("scan_dataset reports unpaired images by name") {
  fs::path root = temp_dir("scan_unpaired");
  DatasetLayout layout = DatasetLayout::flat();
  write_pair(root, layout, "ok", 32, 0);
  cv::Mat img(32, 32, CV_8UC3, cv::Scalar(0, 0, 0));
  cv::imwrite((root / "images" / "orphan.png").string(), img);

  try {
    scan_dataset(root, Split::Train, layout);
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("orphan") != std::string::npos);
  }
}

TEST_CASE("scan_dataset rejects empty splits and missing roots") {
  fs::path root = temp_dir("scan_empty");
  fs::create_directories(root / "images");
  fs::create_directories(root / "masks");
  CHECK_THROWS_AS(scan_dataset(root, Split::Train, DatasetLayout::flat()), DataError);
  CHECK_THROWS_AS(scan_dataset(root / "nope", Split::Train, DatasetLayout::flat()), DataError);
}

TEST_CASE("scan_dataset understands the floodnet directory convention") {
  fs::path root = temp_dir("scan_floodnet");
  DatasetLayout layout = DatasetLayout::floodnet();
  write_pair(root, DatasetLayout{"train/train-org-img", "train/train-label-img", "_lab", ".png"},
             "6543", 32, 2);
  DatasetIndex index = scan_dataset(root, Split::Train, layout);
  REQUIRE(index.entries.size() == 1);
  CHECK(index.entries[0].mask_path.filename() == "6543_lab.png");
}

TEST_CASE("preprocess resizes, normalizes and preserves the label alphabet") {
  ClassCatalog cat = ClassCatalog::floodnet();

  SUBCASE("constant 255 image maps to exactly 1.0") {
    cv::Mat img(448, 448, CV_8UC3, cv::Scalar(255, 255, 255));
    cv::Mat mask(448, 448, CV_8UC1, cv::Scalar(0));
    Sample s = preprocess(img, mask, cat, 448);
    CHECK(s.image.min().item<float>() == 1.0f);
    CHECK(s.image.max().item<float>() == 1.0f);
  }

  SUBCASE("large input lands at 448x448 in [0,1]") {
    cv::Mat img(300, 400, CV_8UC3);
    cv::randu(img, 0, 255);
    cv::Mat mask(300, 400, CV_8UC1, cv::Scalar(5));
    Sample s = preprocess(img, mask, cat, 448);
    CHECK(s.image.sizes() == torch::IntArrayRef({3, 448, 448}));
    CHECK(s.mask.sizes() == torch::IntArrayRef({448, 448}));
    CHECK(s.image.min().item<float>() >= 0.0f);
    CHECK(s.image.max().item<float>() <= 1.0f);
  }

  SUBCASE("label set never grows under resizing") {
    std::mt19937_64 rng(11);
    for (int iter = 0; iter < 10; ++iter) {
      cv::Mat mask(37 + iter, 53, CV_8UC1);
      std::uniform_int_distribution<int> lab(0, 9);
      for (int y = 0; y < mask.rows; ++y)
        for (int x = 0; x < mask.cols; ++x)
          mask.at<std::uint8_t>(y, x) = static_cast<std::uint8_t>(lab(rng));
      cv::Mat img(mask.rows, mask.cols, CV_8UC3, cv::Scalar(1, 2, 3));

      std::set<std::int64_t> before;
      for (int y = 0; y < mask.rows; ++y)
        for (int x = 0; x < mask.cols; ++x) before.insert(mask.at<std::uint8_t>(y, x));

      Sample s = preprocess(img, mask, cat, 64);
      for (std::int64_t v : label_set(s.mask)) CHECK(before.count(v) == 1);
    }
  }

  SUBCASE("labels outside the catalog are rejected") {
    cv::Mat img(16, 16, CV_8UC3, cv::Scalar(0, 0, 0));
    cv::Mat mask(16, 16, CV_8UC1, cv::Scalar(10));
    CHECK_THROWS_AS(preprocess(img, mask, cat, 64), DataError);
  }
}

TEST_CASE("augment applies one geometric map to image and mask") {
  ClassCatalog cat = ClassCatalog::generic(4);
  cv::Mat img(64, 64, CV_8UC3);
  cv::randu(img, 0, 255);
  cv::Mat mask(64, 64, CV_8UC1);
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 64; ++x) mask.at<std::uint8_t>(y, x) = static_cast<std::uint8_t>((x / 16) % 4);
  Sample s = preprocess(img, mask, cat, 64, "aug");

  SUBCASE("forced hflip is an involution") {
    AugmentationConfig cfg{1.0, 0.0, 1.0, 1.0, 0};
    auto rng1 = sample_rng(0, "aug");
    Sample once = augment(s, cfg, rng1);
    auto rng2 = sample_rng(0, "aug");
    Sample twice = augment(once, cfg, rng2);
    CHECK(torch::equal(twice.image, s.image));
    CHECK(torch::equal(twice.mask, s.mask));
  }

  SUBCASE("vflip reverses rows") {
    Sample rowpat = s;
    rowpat.mask = torch::cat({torch::zeros({32, 64}, torch::kLong),
                              torch::ones({32, 64}, torch::kLong)});
    AugmentationConfig cfg{0.0, 1.0, 1.0, 1.0, 0};
    auto rng = sample_rng(0, "aug");
    Sample out = augment(rowpat, cfg, rng);
    CHECK(torch::equal(out.mask, rowpat.mask.flip({0})));
    CHECK(out.mask[0][0].item<std::int64_t>() == 1);
  }

  SUBCASE("zoom at scale 1 is the identity on the mask") {
    AugmentationConfig cfg{0.0, 0.0, 1.0, 1.0, 0};
    auto rng = sample_rng(0, "aug");
    Sample out = augment(s, cfg, rng);
    CHECK(torch::equal(out.mask, s.mask));
    CHECK((out.image - s.image).abs().max().item<float>() < 1e-5);
  }

  SUBCASE("dims never change") {
    AugmentationConfig cfg{0.5, 0.5, 0.8, 1.25, 0};
    for (int i = 0; i < 6; ++i) {
      auto rng = sample_rng(7, "aug", i);
      Sample out = augment(s, cfg, rng);
      CHECK(out.image.sizes() == s.image.sizes());
      CHECK(out.mask.sizes() == s.mask.sizes());
    }
  }

  SUBCASE("flip moves mask pixels to the preimage coordinate") {
    Sample coords = s;
    coords.mask = torch::arange(64, torch::kLong).remainder(4).repeat({64, 1});
    AugmentationConfig cfg{1.0, 0.0, 1.0, 1.0, 0};
    auto rng = sample_rng(0, "aug");
    Sample out = augment(coords, cfg, rng);
    for (int x = 0; x < 64; ++x)
      CHECK(out.mask[5][x].item<std::int64_t>() == coords.mask[5][63 - x].item<std::int64_t>());
  }

  SUBCASE("degenerate zoom range is rejected") {
    AugmentationConfig cfg{0.5, 0.5, 0.0, 1.0, 0};
    auto rng = sample_rng(0, "aug");
    CHECK_THROWS_AS(augment(s, cfg, rng), ContractError);
  }
}

TEST_CASE("class_pixel_counts totals pixels per class") {
  ClassCatalog cat = ClassCatalog::floodnet();
  fs::path root = temp_dir("counts");
  DatasetLayout layout = DatasetLayout::flat();
  fs::create_directories(root / "images");
  fs::create_directories(root / "masks");

  auto write_mask = [&](const std::string& stem, const std::vector<std::uint8_t>& labels, int side) {
    cv::Mat img(side, side, CV_8UC3, cv::Scalar(9, 9, 9));
    cv::Mat mask(side, side, CV_8UC1);
    for (int i = 0; i < side * side; ++i) mask.at<std::uint8_t>(i / side, i % side) = labels[i];
    cv::imwrite((root / "images" / (stem + ".png")).string(), img);
    cv::imwrite((root / "masks" / (stem + ".png")).string(), mask);
  };

  SUBCASE("single-class mask") {
    write_mask("only3", std::vector<std::uint8_t>(16, 3), 4);
    DatasetIndex index = scan_dataset(root, Split::Train, layout);
    PixelCounts pc = class_pixel_counts(index, cat, 4);
    CHECK(pc.counts.size() == 10);
    CHECK(pc.counts[3] == 16);
    CHECK(pc.total() == 16);
  }

  SUBCASE("two masks add up") {
    write_mask("m1", {0, 0, 1, 1}, 2);
    write_mask("m2", {1, 1, 1, 9}, 2);
    DatasetIndex index = scan_dataset(root, Split::Train, layout);
    PixelCounts pc = class_pixel_counts(index, cat, 2);
    CHECK(pc.counts[0] == 2);
    CHECK(pc.counts[1] == 5);
    CHECK(pc.counts[9] == 1);
    CHECK(pc.total() == 8);

    // Additivity over a disjoint partition of the index.
    DatasetIndex a{ {index.entries[0]}, Split::Train };
    DatasetIndex b{ {index.entries[1]}, Split::Train };
    PixelCounts pa = class_pixel_counts(a, cat, 2);
    PixelCounts pb = class_pixel_counts(b, cat, 2);
    for (int i = 0; i < 10; ++i) CHECK(pa.counts[i] + pb.counts[i] == pc.counts[i]);
  }
}

TEST_CASE("synthetic dataset is deterministic and self-describing") {
  fs::path out1 = temp_dir("synth1");
  fs::path out2 = temp_dir("synth2");
  SyntheticLedger ledger;
  DatasetIndex idx1 = make_synthetic_dataset(8, 64, 4, 0, out1, &ledger);
  make_synthetic_dataset(8, 64, 4, 0, out2);

  SUBCASE("two runs are byte-identical") {
    for (const auto& e : idx1.entries) {
      fs::path other = out2 / "images" / e.image_path.filename();
      std::ifstream f1(e.image_path, std::ios::binary), f2(other, std::ios::binary);
      std::string b1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
      std::string b2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
      CHECK(b1 == b2);
    }
    std::ifstream m1(out1 / "manifest.txt"), m2(out2 / "manifest.txt");
    std::string t1((std::istreambuf_iterator<char>(m1)), std::istreambuf_iterator<char>());
    std::string t2((std::istreambuf_iterator<char>(m2)), std::istreambuf_iterator<char>());
    // Manifests carry absolute paths; compare ledgers instead of raw text.
    SyntheticLedger l1 = read_synthetic_ledger(out1 / "manifest.txt", 4);
    SyntheticLedger l2 = read_synthetic_ledger(out2 / "manifest.txt", 4);
    CHECK(l1.per_sample_counts == l2.per_sample_counts);
  }

  SUBCASE("labels stay inside the class alphabet") {
    ClassCatalog cat = ClassCatalog::generic(4);
    for (const auto& e : idx1.entries) {
      Sample s = load_sample(e, cat, 64);
      for (std::int64_t v : label_set(s.mask)) CHECK((v >= 0 && v < 4));
    }
  }

  SUBCASE("pixel counts match the generator ledger") {
    ClassCatalog cat = ClassCatalog::generic(4);
    PixelCounts pc = class_pixel_counts(idx1, cat, 64);
    std::vector<std::int64_t> summed(4, 0);
    for (const auto& per : ledger.per_sample_counts)
      for (int i = 0; i < 4; ++i) summed[i] += per[i];
    CHECK(pc.counts == summed);

    SyntheticLedger parsed = read_synthetic_ledger(out1 / "manifest.txt", 4);
    CHECK(parsed.per_sample_counts == ledger.per_sample_counts);
  }

  SUBCASE("argument contracts") {
    CHECK_THROWS_AS(make_synthetic_dataset(0, 64, 4, 0, out1), ContractError);
    CHECK_THROWS_AS(make_synthetic_dataset(4, 16, 4, 0, out1), ContractError);
  }
}

TEST_CASE("per-sample rng streams are reproducible and distinct") {
  auto a1 = sample_rng(1, "x");
  auto a2 = sample_rng(1, "x");
  auto b = sample_rng(1, "y");
  CHECK(a1() == a2());
  CHECK(a1() != b());
}
