#include <doctest.h>

#include <cmath>
#include <random>

#include "floodseg/metrics.hpp"

using namespace floodseg;

namespace {

// Brute-force IoU over raw label vectors, independent of ConfusionMatrix.
std::vector<std::optional<double>> iou_oracle(const std::vector<int>& truth,
                                              const std::vector<int>& pred, int C) {
  std::vector<std::optional<double>> out(C);
  for (int c = 0; c < C; ++c) {
    std::int64_t inter = 0, uni = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
      bool t = truth[i] == c, p = pred[i] == c;
      inter += (t && p) ? 1 : 0;
      uni += (t || p) ? 1 : 0;
    }
    if (uni > 0) out[c] = static_cast<double>(inter) / static_cast<double>(uni);
  }
  return out;
}

torch::Tensor labels_tensor(const std::vector<int>& v, std::int64_t h, std::int64_t w) {
  torch::Tensor t = torch::empty({h, w}, torch::kLong);
  auto a = t.accessor<std::int64_t, 2>();
  for (std::int64_t i = 0; i < h * w; ++i) a[i / w][i % w] = v[static_cast<std::size_t>(i)];
  return t;
}

}  // namespace

TEST_CASE("confusion matrix counts truth/pred pairs") {
  ConfusionMatrix cm(3);
  torch::Tensor truth = labels_tensor({0, 0, 1, 2}, 2, 2);
  torch::Tensor pred = labels_tensor({0, 1, 1, 1}, 2, 2);
  cm.accumulate(pred, truth);

  CHECK(cm.at(0, 0) == 1);
  CHECK(cm.at(0, 1) == 1);
  CHECK(cm.at(1, 1) == 1);
  CHECK(cm.at(2, 1) == 1);
  CHECK(cm.at(2, 2) == 0);
  CHECK(cm.total() == 4);

  SUBCASE("accumulation is additive") {
    ConfusionMatrix twice(3);
    twice.accumulate(pred, truth);
    twice.accumulate(pred, truth);
    for (int t = 0; t < 3; ++t)
      for (int p = 0; p < 3; ++p) CHECK(twice.at(t, p) == 2 * cm.at(t, p));
  }

  SUBCASE("batched 3-d label maps are accepted") {
    ConfusionMatrix batched(3);
    batched.accumulate(pred.unsqueeze(0).repeat({2, 1, 1}), truth.unsqueeze(0).repeat({2, 1, 1}));
    CHECK(batched.total() == 8);
    CHECK(batched.at(0, 1) == 2);
  }
}

TEST_CASE("confusion matrix rejects malformed inputs") {
  ConfusionMatrix cm(3);
  CHECK_THROWS_AS(cm.accumulate(labels_tensor({0, 0, 0, 3}, 2, 2), labels_tensor({0, 0, 0, 0}, 2, 2)),
                  ContractError);
  CHECK_THROWS_AS(cm.accumulate(labels_tensor({0, 0, 0, 0}, 2, 2), labels_tensor({0, -1, 0, 0}, 2, 2)),
                  ContractError);
  CHECK_THROWS_AS(cm.accumulate(torch::zeros({2, 2}, torch::kLong), torch::zeros({2, 3}, torch::kLong)),
                  ContractError);
  CHECK_THROWS_AS(ConfusionMatrix(0), ContractError);
  CHECK_THROWS_AS(cm.at(3, 0), ContractError);
}

TEST_CASE("merge is the elementwise sum with group properties") {
  std::mt19937_64 rng(9);
  auto random_cm = [&rng]() {
    ConfusionMatrix cm(4);
    std::vector<int> truth(36), pred(36);
    for (auto& v : truth) v = static_cast<int>(rng() % 4);
    for (auto& v : pred) v = static_cast<int>(rng() % 4);
    cm.accumulate(labels_tensor(pred, 6, 6), labels_tensor(truth, 6, 6));
    return cm;
  };

  ConfusionMatrix a = random_cm(), b = random_cm(), c = random_cm();
  ConfusionMatrix ab = ConfusionMatrix::merge(a, b);
  ConfusionMatrix ba = ConfusionMatrix::merge(b, a);
  ConfusionMatrix abc1 = ConfusionMatrix::merge(ab, c);
  ConfusionMatrix abc2 = ConfusionMatrix::merge(a, ConfusionMatrix::merge(b, c));
  for (int t = 0; t < 4; ++t)
    for (int p = 0; p < 4; ++p) {
      CHECK(ab.at(t, p) == a.at(t, p) + b.at(t, p));
      CHECK(ab.at(t, p) == ba.at(t, p));
      CHECK(abc1.at(t, p) == abc2.at(t, p));
    }
  CHECK(ab.total() == a.total() + b.total());

  ConfusionMatrix zero(4);
  ConfusionMatrix az = ConfusionMatrix::merge(a, zero);
  for (int t = 0; t < 4; ++t)
    for (int p = 0; p < 4; ++p) CHECK(az.at(t, p) == a.at(t, p));

  CHECK_THROWS_AS(ConfusionMatrix::merge(a, ConfusionMatrix(3)), ContractError);
}

TEST_CASE("sharded accumulation equals serial accumulation") {
  std::mt19937_64 rng(13);
  std::vector<int> truth(64), pred(64);
  for (auto& v : truth) v = static_cast<int>(rng() % 5);
  for (auto& v : pred) v = static_cast<int>(rng() % 5);

  ConfusionMatrix serial(5);
  serial.accumulate(labels_tensor(pred, 8, 8), labels_tensor(truth, 8, 8));

  ConfusionMatrix s1(5), s2(5);
  std::vector<int> t1(truth.begin(), truth.begin() + 32), t2(truth.begin() + 32, truth.end());
  std::vector<int> p1(pred.begin(), pred.begin() + 32), p2(pred.begin() + 32, pred.end());
  s1.accumulate(labels_tensor(p1, 4, 8), labels_tensor(t1, 4, 8));
  s2.accumulate(labels_tensor(p2, 4, 8), labels_tensor(t2, 4, 8));
  ConfusionMatrix merged = ConfusionMatrix::merge(s1, s2);
  for (int t = 0; t < 5; ++t)
    for (int p = 0; p < 5; ++p) CHECK(merged.at(t, p) == serial.at(t, p));
}

TEST_CASE("per-class IoU hand values") {
  ConfusionMatrix cm(2);
  // truth (0,0,1,1) vs pred (0,1,1,1): class0 TP=1 FP=0 FN=1, class1 TP=2 FP=1 FN=0.
  cm.accumulate(labels_tensor({0, 1, 1, 1}, 2, 2), labels_tensor({0, 0, 1, 1}, 2, 2));
  auto ious = per_class_iou(cm);
  REQUIRE(ious.size() == 2);
  CHECK(*ious[0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(*ious[1] == doctest::Approx(2.0 / 3.0).epsilon(1e-12));

  SUBCASE("perfect prediction scores 1 everywhere present") {
    ConfusionMatrix perfect(3);
    perfect.accumulate(labels_tensor({0, 1, 1, 2}, 2, 2), labels_tensor({0, 1, 1, 2}, 2, 2));
    for (auto v : per_class_iou(perfect)) CHECK(*v == doctest::Approx(1.0));
  }

  SUBCASE("a class absent from truth and prediction is undefined") {
    ConfusionMatrix cm3(3);
    cm3.accumulate(labels_tensor({0, 0, 1, 1}, 2, 2), labels_tensor({0, 0, 1, 1}, 2, 2));
    auto v = per_class_iou(cm3);
    CHECK(v[2] == std::nullopt);
    CHECK(v[0].has_value());
  }
}

TEST_CASE("per-class IoU matches the brute-force oracle on random label maps") {
  std::mt19937_64 rng(31);
  for (int iter = 0; iter < 30; ++iter) {
    int C = 2 + static_cast<int>(rng() % 5);
    int side = 2 + static_cast<int>(rng() % 7);
    std::vector<int> truth(static_cast<std::size_t>(side * side)), pred(truth.size());
    for (auto& v : truth) v = static_cast<int>(rng() % C);
    for (auto& v : pred) v = static_cast<int>(rng() % C);
    ConfusionMatrix cm(C);
    cm.accumulate(labels_tensor(pred, side, side), labels_tensor(truth, side, side));
    auto got = per_class_iou(cm);
    auto expected = iou_oracle(truth, pred, C);
    for (int c = 0; c < C; ++c) {
      CHECK(got[c].has_value() == expected[c].has_value());
      if (got[c] && expected[c]) CHECK(*got[c] == doctest::Approx(*expected[c]).epsilon(1e-12));
    }
  }
}

TEST_CASE("mean IoU averages included, defined classes") {
  SUBCASE("hand value with background excluded") {
    std::vector<std::optional<double>> ious = {0.9, 0.5, 2.0 / 3.0};
    CHECK(mean_iou(ious, {0}) == doctest::Approx((0.5 + 2.0 / 3.0) / 2.0).epsilon(1e-12));
    CHECK(mean_iou(ious, {}) == doctest::Approx((0.9 + 0.5 + 2.0 / 3.0) / 3.0).epsilon(1e-12));
  }

  SUBCASE("undefined classes are skipped") {
    std::vector<std::optional<double>> ious = {0.9, std::nullopt, 0.5};
    CHECK(mean_iou(ious, {}) == doctest::Approx(0.7).epsilon(1e-12));
  }

  SUBCASE("nothing left to score is a contract violation") {
    std::vector<std::optional<double>> empty = {std::nullopt, std::nullopt};
    CHECK_THROWS_AS(mean_iou(empty, {}), ContractError);
    std::vector<std::optional<double>> all = {0.5, 0.6};
    CHECK_THROWS_AS(mean_iou(all, {0, 1}), ContractError);
  }
}

TEST_CASE("published per-class rows reproduce their printed means") {
  // Per-class IoU rows (percent) with the printed mIoU; reproduced within
  // rounding of the printed two-decimal figures.
  struct Row {
    std::vector<double> ious;
    double printed;
  };
  std::vector<Row> rows = {
      {{21.82, 41.41, 14.76, 52.53, 47.14, 62.56, 26.21, 16.57, 75.57}, 39.84},
      {{41.00, 66.48, 32.55, 67.54, 57.30, 64.10, 36.65, 40.38, 75.23}, 53.47},
      {{31.00, 31.84, 27.25, 56.65, 57.98, 57.85, 13.58, 24.22, 68.93}, 41.03},
      {{37.42, 69.92, 33.78, 67.87, 65.98, 66.63, 36.97, 32.70, 77.06}, 54.26},
      {{33.33, 55.99, 33.92, 58.36, 65.32, 63.56, 16.13, 28.42, 71.43}, 47.39}};
  for (const auto& row : rows) {
    std::vector<std::optional<double>> ious(row.ious.begin(), row.ious.end());
    CHECK(std::abs(mean_iou(ious, {}) - row.printed) < 0.01);
  }
}

TEST_CASE("make_report wires confusion statistics into a report") {
  ConfusionMatrix cm(3);
  cm.accumulate(labels_tensor({0, 1, 1, 2}, 2, 2), labels_tensor({0, 1, 2, 2}, 2, 2));
  MetricsReport r = make_report(cm, {0}, {"bg", "a", "b"}, "unet", "ckpt-1", "val");
  CHECK(r.pixels_scored == 4);
  CHECK(r.per_class_iou.size() == 3);
  CHECK(r.class_names.size() == 3);
  CHECK(r.excluded_class_ids == std::set<int>{0});
  double expect = 0.0;
  int n = 0;
  for (int c = 1; c < 3; ++c)
    if (r.per_class_iou[c]) {
      expect += *r.per_class_iou[c];
      ++n;
    }
  CHECK(r.miou == doctest::Approx(expect / n).epsilon(1e-12));
}
