#ifndef FLOODSEG_CATALOG_HPP
#define FLOODSEG_CATALOG_HPP

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "floodseg/errors.hpp"

namespace floodseg {

struct ClassEntry {
  int id = 0;
  std::string name;
  double alpha = 0.0;
  bool is_background = false;
};

/// Ordered list of semantic classes with per-class focal-loss weights.
class ClassCatalog {
 public:
  ClassCatalog() = default;
  explicit ClassCatalog(std::vector<ClassEntry> classes);

  /// The 10 FloodNet classes with their published alpha weights.
  static ClassCatalog floodnet();

  /// Uniform catalog with n generic classes (class 0 is background, alpha 1/n).
  static ClassCatalog generic(int n);

  int num_classes() const { return static_cast<int>(classes_.size()); }
  const std::vector<ClassEntry>& classes() const { return classes_; }
  const ClassEntry& at(int id) const;
  int background_id() const;
  std::vector<double> alphas() const;

 private:
  std::vector<ClassEntry> classes_;
};

struct Rgb {
  std::uint8_t r = 0, g = 0, b = 0;
  bool operator==(const Rgb&) const = default;
};

/// Injective class-id -> color assignment used for mask export.
class ColorMap {
 public:
  explicit ColorMap(std::vector<Rgb> colors);
  static ColorMap defaults(int num_classes);

  int size() const { return static_cast<int>(colors_.size()); }
  Rgb color(int class_id) const;
  /// Inverse lookup; throws DataError for a color not in the map.
  int class_of(Rgb color) const;

 private:
  std::vector<Rgb> colors_;
};

}  // namespace floodseg

#endif
