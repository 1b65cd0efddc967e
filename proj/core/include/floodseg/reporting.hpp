#ifndef FLOODSEG_REPORTING_HPP
#define FLOODSEG_REPORTING_HPP

#include <filesystem>
#include <string>
#include <vector>

#include "floodseg/backbone.hpp"
#include "floodseg/catalog.hpp"
#include "floodseg/dataset.hpp"
#include "floodseg/metrics.hpp"
#include "floodseg/models.hpp"
#include "floodseg/training.hpp"

namespace floodseg {

/// Score a checkpointed model over a dataset index.
MetricsReport evaluate(SegmentationModel& model, const Backbone* backbone,
                       const DatasetIndex& index, const ClassCatalog& catalog, int eval_batch = 16,
                       const std::string& checkpoint_id = "");

/// Write an RGB PNG with pixel color = colormap[argmax class]; returns the
/// predicted label map. A label-map PNG is written next to it when
/// labels_out is non-empty.
torch::Tensor predict_and_colorize(SegmentationModel& model, const Backbone* backbone,
                                   const std::filesystem::path& image_path,
                                   const ClassCatalog& catalog, const ColorMap& colormap,
                                   const std::filesystem::path& out_path,
                                   const std::filesystem::path& labels_out = {});

/// Decode a colorized mask PNG back to a label map through the inverse map.
torch::Tensor decode_colorized(const std::filesystem::path& image_path, const ColorMap& colormap);

struct ComparisonCell {
  double value = 0.0;
  double delta_abs = 0.0;  // value - baseline
  double delta_rel = 0.0;  // (value - baseline) / baseline
  bool defined = false;
};

struct ComparisonRow {
  std::string method;
  std::vector<ComparisonCell> per_class;
  ComparisonCell miou;
};

struct ComparisonTable {
  std::vector<std::string> class_names;
  std::string baseline_name;
  std::vector<ComparisonRow> rows;
};

/// Per-class and mIoU absolute deltas plus relative changes vs. a baseline.
ComparisonTable comparison_report(const std::vector<MetricsReport>& reports,
                                  const std::string& baseline_name);

enum class ReportFormat { StructuredText, Delimited, HumanReadable };

std::string render_report(const MetricsReport& report, ReportFormat format);
std::string render_table(const ComparisonTable& table, ReportFormat format);

/// Inverse of render_report(StructuredText).
MetricsReport parse_report(const std::string& text);

/// Chart-data file: one "name<TAB>value" line per class plus mIoU.
std::string chart_data(const MetricsReport& report);

}  // namespace floodseg

#endif
