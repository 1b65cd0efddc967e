#include "floodseg/catalog.hpp"

#include <algorithm>

namespace floodseg {

ClassCatalog::ClassCatalog(std::vector<ClassEntry> classes) : classes_(std::move(classes)) {
  for (std::size_t i = 0; i < classes_.size(); ++i) {
    if (classes_[i].id != static_cast<int>(i))
      throw ContractError("catalog ids must be contiguous starting at 0");
  }
  int n_bg = static_cast<int>(
      std::count_if(classes_.begin(), classes_.end(), [](const ClassEntry& c) { return c.is_background; }));
  if (!classes_.empty() && n_bg != 1)
    throw ContractError("catalog must have exactly one background class");
}

ClassCatalog ClassCatalog::floodnet() {
  return ClassCatalog({
      {0, "Background", 0.08, true},
      {1, "Building Flooded", 0.14, false},
      {2, "Building Non-Flooded", 0.10, false},
      {3, "Road Flooded", 0.10, false},
      {4, "Road Non-Flooded", 0.05, false},
      {5, "Water", 0.015, false},
      {6, "Tree", 0.01, false},
      {7, "Vehicle", 0.25, false},
      {8, "Pool", 0.25, false},
      {9, "Grass", 0.005, false},
  });
}

ClassCatalog ClassCatalog::generic(int n) {
  if (n < 2) throw ContractError("catalog needs at least 2 classes");
  std::vector<ClassEntry> cs;
  cs.reserve(n);
  for (int i = 0; i < n; ++i)
    cs.push_back({i, i == 0 ? "Background" : "Class " + std::to_string(i), 1.0 / n, i == 0});
  return ClassCatalog(std::move(cs));
}

const ClassEntry& ClassCatalog::at(int id) const {
  if (id < 0 || id >= num_classes())
    throw ContractError("class id " + std::to_string(id) + " outside catalog");
  return classes_[id];
}

int ClassCatalog::background_id() const {
  for (const auto& c : classes_)
    if (c.is_background) return c.id;
  throw ContractError("catalog has no background class");
}

std::vector<double> ClassCatalog::alphas() const {
  std::vector<double> a;
  a.reserve(classes_.size());
  for (const auto& c : classes_) a.push_back(c.alpha);
  return a;
}

ColorMap::ColorMap(std::vector<Rgb> colors) : colors_(std::move(colors)) {
  for (std::size_t i = 0; i < colors_.size(); ++i)
    for (std::size_t j = i + 1; j < colors_.size(); ++j)
      if (colors_[i] == colors_[j]) throw ContractError("colormap colors must be distinct");
}

ColorMap ColorMap::defaults(int num_classes) {
  // Hand-picked high-contrast palette; extended by hue stepping past 10.
  static const std::vector<Rgb> base = {
      {0, 0, 0},       {230, 25, 75},  {60, 180, 75},  {255, 225, 25}, {0, 130, 200},
      {245, 130, 48},  {145, 30, 180}, {70, 240, 240}, {240, 50, 230}, {210, 245, 60},
  };
  std::vector<Rgb> cs;
  for (int i = 0; i < num_classes; ++i) {
    if (i < static_cast<int>(base.size()))
      cs.push_back(base[i]);
    else
      cs.push_back({static_cast<std::uint8_t>(37 * i % 256), static_cast<std::uint8_t>(91 * i % 256),
                    static_cast<std::uint8_t>(151 * i % 256)});
  }
  return ColorMap(std::move(cs));
}

Rgb ColorMap::color(int class_id) const {
  if (class_id < 0 || class_id >= size())
    throw ContractError("class id " + std::to_string(class_id) + " outside colormap");
  return colors_[class_id];
}

int ColorMap::class_of(Rgb color) const {
  for (int i = 0; i < size(); ++i)
    if (colors_[i] == color) return i;
  throw DataError("color not present in colormap");
}

}  // namespace floodseg
