#include "floodseg/reporting.hpp"

#include <fstream>
#include <iomanip>
#include <sstream>

#include <json.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace floodseg {

MetricsReport evaluate(SegmentationModel& model, const Backbone* backbone,
                       const DatasetIndex& index, const ClassCatalog& catalog, int eval_batch,
                       const std::string& checkpoint_id) {
  model.eval();
  torch::NoGradGuard ng;
  ConfusionMatrix conf(catalog.num_classes());

  std::vector<Sample> batch;
  auto flush = [&]() {
    if (batch.empty()) return;
    std::vector<torch::Tensor> imgs, masks;
    for (const auto& s : batch) {
      imgs.push_back(s.image);
      masks.push_back(s.mask);
    }
    torch::Tensor images = torch::stack(imgs);
    torch::Tensor probs;
    if (is_fused(model.config().variant)) {
      if (!backbone) throw ContractError("evaluate: fused variant requires a backbone");
      probs = model.forward_fused(images, backbone->extract(images));
    } else {
      probs = model.forward(images);
    }
    conf.accumulate(probability_to_labels(probs), torch::stack(masks));
    batch.clear();
  };

  for (const auto& entry : index.entries) {
    batch.push_back(load_sample(entry, catalog, model.config().input_size));
    if (static_cast<int>(batch.size()) == eval_batch) flush();
  }
  flush();

  std::vector<std::string> names;
  for (const auto& c : catalog.classes()) names.push_back(c.name);
  return make_report(conf, {catalog.background_id()}, names, to_string(model.config().variant),
                     checkpoint_id, to_string(index.split));
}

torch::Tensor predict_and_colorize(SegmentationModel& model, const Backbone* backbone,
                                   const fs::path& image_path, const ClassCatalog& catalog,
                                   const ColorMap& colormap, const fs::path& out_path,
                                   const fs::path& labels_out) {
  cv::Mat raw = cv::imread(image_path.string(), cv::IMREAD_COLOR);
  if (raw.empty()) throw IoError("cannot read image: " + image_path.string());
  cv::cvtColor(raw, raw, cv::COLOR_BGR2RGB);
  cv::Mat zero_mask = cv::Mat::zeros(raw.rows, raw.cols, CV_8UC1);
  Sample s = preprocess(raw, zero_mask, catalog, model.config().input_size,
                        image_path.stem().string());

  model.eval();
  torch::NoGradGuard ng;
  torch::Tensor images = s.image.unsqueeze(0);
  torch::Tensor probs;
  if (is_fused(model.config().variant)) {
    if (!backbone) throw ContractError("predict: fused variant requires a backbone");
    probs = model.forward_fused(images, backbone->extract(images));
  } else {
    probs = model.forward(images);
  }
  torch::Tensor labels = probability_to_labels(probs).squeeze(0).to(torch::kCPU);

  const int S = model.config().input_size;
  cv::Mat color(S, S, CV_8UC3);
  cv::Mat labmat(S, S, CV_8UC1);
  auto acc = labels.accessor<std::int64_t, 2>();
  for (int y = 0; y < S; ++y) {
    for (int x = 0; x < S; ++x) {
      const int cls = static_cast<int>(acc[y][x]);
      Rgb c = colormap.color(cls);
      color.at<cv::Vec3b>(y, x) = cv::Vec3b(c.b, c.g, c.r);
      labmat.at<std::uint8_t>(y, x) = static_cast<std::uint8_t>(cls);
    }
  }
  if (!out_path.parent_path().empty()) fs::create_directories(out_path.parent_path());
  if (!cv::imwrite(out_path.string(), color))
    throw IoError("cannot write colorized mask: " + out_path.string());
  if (!labels_out.empty()) {
    if (!labels_out.parent_path().empty()) fs::create_directories(labels_out.parent_path());
    if (!cv::imwrite(labels_out.string(), labmat))
      throw IoError("cannot write label map: " + labels_out.string());
  }
  return labels;
}

torch::Tensor decode_colorized(const fs::path& image_path, const ColorMap& colormap) {
  cv::Mat img = cv::imread(image_path.string(), cv::IMREAD_COLOR);
  if (img.empty()) throw IoError("cannot read colorized mask: " + image_path.string());
  torch::Tensor labels = torch::zeros({img.rows, img.cols}, torch::kLong);
  auto acc = labels.accessor<std::int64_t, 2>();
  for (int y = 0; y < img.rows; ++y) {
    for (int x = 0; x < img.cols; ++x) {
      cv::Vec3b px = img.at<cv::Vec3b>(y, x);
      acc[y][x] = colormap.class_of({px[2], px[1], px[0]});
    }
  }
  return labels;
}

ComparisonTable comparison_report(const std::vector<MetricsReport>& reports,
                                  const std::string& baseline_name) {
  if (reports.size() < 2) throw ContractError("comparison_report: need at least 2 reports");
  const MetricsReport* baseline = nullptr;
  for (const auto& r : reports)
    if (r.model_name == baseline_name) baseline = &r;
  if (!baseline) throw ContractError("comparison_report: baseline '" + baseline_name + "' not found");
  for (const auto& r : reports) {
    if (r.class_names != baseline->class_names ||
        r.per_class_iou.size() != baseline->per_class_iou.size())
      throw ContractError("comparison_report: reports use different catalogs");
  }

  auto cell = [](double value, double base, bool defined) {
    ComparisonCell c;
    c.value = value;
    c.defined = defined;
    c.delta_abs = value - base;
    c.delta_rel = base != 0.0 ? (value - base) / base : 0.0;
    return c;
  };

  ComparisonTable table;
  table.class_names = baseline->class_names;
  table.baseline_name = baseline_name;
  for (const auto& r : reports) {
    ComparisonRow row;
    row.method = r.model_name;
    for (std::size_t i = 0; i < r.per_class_iou.size(); ++i) {
      const bool defined = r.per_class_iou[i].has_value() && baseline->per_class_iou[i].has_value();
      const double v = r.per_class_iou[i].value_or(0.0);
      const double b = baseline->per_class_iou[i].value_or(0.0);
      row.per_class.push_back(cell(v, b, defined));
    }
    row.miou = cell(r.miou, baseline->miou, true);
    table.rows.push_back(std::move(row));
  }
  return table;
}

namespace {

json report_to_json(const MetricsReport& r) {
  json j;
  j["schema"] = "floodseg.metrics_report/1";
  j["miou"] = r.miou;
  j["pixels_scored"] = r.pixels_scored;
  j["excluded_class_ids"] = r.excluded_class_ids;
  j["model_name"] = r.model_name;
  j["checkpoint_id"] = r.checkpoint_id;
  j["split"] = r.split;
  j["class_names"] = r.class_names;
  json ious = json::array();
  for (const auto& v : r.per_class_iou)
    ious.push_back(v ? json(*v) : json(nullptr));
  j["per_class_iou"] = ious;
  return j;
}

std::string fmt(double v) {
  std::ostringstream oss;
  oss << std::fixed << std::setprecision(4) << v;
  return oss.str();
}

}  // namespace

std::string render_report(const MetricsReport& r, ReportFormat format) {
  switch (format) {
    case ReportFormat::StructuredText:
      return report_to_json(r).dump(2) + "\n";
    case ReportFormat::Delimited: {
      std::ostringstream oss;
      oss << "class,iou\n";
      for (std::size_t i = 0; i < r.per_class_iou.size(); ++i) {
        const std::string name = i < r.class_names.size() ? r.class_names[i] : std::to_string(i);
        oss << name << "," << (r.per_class_iou[i] ? fmt(*r.per_class_iou[i]) : "undefined") << "\n";
      }
      oss << "mIoU," << fmt(r.miou) << "\n";
      return oss.str();
    }
    case ReportFormat::HumanReadable: {
      std::ostringstream oss;
      oss << "Model: " << r.model_name << "  split: " << r.split
          << "  pixels: " << r.pixels_scored << "\n";
      for (std::size_t i = 0; i < r.per_class_iou.size(); ++i) {
        const std::string name = i < r.class_names.size() ? r.class_names[i] : std::to_string(i);
        oss << "  " << std::left << std::setw(24) << name
            << (r.per_class_iou[i] ? fmt(*r.per_class_iou[i]) : "   --  ");
        if (r.excluded_class_ids.count(static_cast<int>(i))) oss << "  (excluded)";
        oss << "\n";
      }
      oss << "  " << std::left << std::setw(24) << "mIoU" << fmt(r.miou) << "\n";
      return oss.str();
    }
  }
  throw ContractError("unsupported report format");
}

MetricsReport parse_report(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw DataError(std::string("cannot parse report: ") + e.what());
  }
  if (j.value("schema", "") != "floodseg.metrics_report/1")
    throw DataError("unknown report schema");
  MetricsReport r;
  r.miou = j.at("miou").get<double>();
  r.pixels_scored = j.at("pixels_scored").get<std::int64_t>();
  for (int id : j.at("excluded_class_ids")) r.excluded_class_ids.insert(id);
  r.model_name = j.at("model_name").get<std::string>();
  r.checkpoint_id = j.at("checkpoint_id").get<std::string>();
  r.split = j.at("split").get<std::string>();
  r.class_names = j.at("class_names").get<std::vector<std::string>>();
  for (const auto& v : j.at("per_class_iou"))
    r.per_class_iou.push_back(v.is_null() ? std::nullopt : std::make_optional(v.get<double>()));
  return r;
}

std::string render_table(const ComparisonTable& t, ReportFormat format) {
  switch (format) {
    case ReportFormat::StructuredText: {
      json j;
      j["schema"] = "floodseg.comparison_table/1";
      j["baseline"] = t.baseline_name;
      j["class_names"] = t.class_names;
      json rows = json::array();
      for (const auto& row : t.rows) {
        json jr;
        jr["method"] = row.method;
        json cells = json::array();
        for (const auto& c : row.per_class)
          cells.push_back({{"value", c.value}, {"delta_abs", c.delta_abs},
                           {"delta_rel", c.delta_rel}, {"defined", c.defined}});
        jr["per_class"] = cells;
        jr["miou"] = {{"value", row.miou.value}, {"delta_abs", row.miou.delta_abs},
                      {"delta_rel", row.miou.delta_rel}};
        rows.push_back(jr);
      }
      j["rows"] = rows;
      return j.dump(2) + "\n";
    }
    case ReportFormat::Delimited: {
      std::ostringstream oss;
      oss << "method";
      for (const auto& n : t.class_names) oss << "," << n;
      oss << ",mIoU\n";
      for (const auto& row : t.rows) {
        oss << row.method;
        for (const auto& c : row.per_class) oss << "," << (c.defined ? fmt(c.value) : "undefined");
        oss << "," << fmt(row.miou.value) << "\n";
        oss << row.method << " (delta vs " << t.baseline_name << ")";
        for (const auto& c : row.per_class) oss << "," << fmt(c.delta_abs);
        oss << "," << fmt(row.miou.delta_abs) << "\n";
      }
      return oss.str();
    }
    case ReportFormat::HumanReadable: {
      std::ostringstream oss;
      oss << "Baseline: " << t.baseline_name << "\n";
      oss << std::left << std::setw(32) << "Method";
      for (const auto& n : t.class_names) oss << std::setw(14) << n.substr(0, 12);
      oss << std::setw(10) << "mIoU" << "\n";
      for (const auto& row : t.rows) {
        oss << std::left << std::setw(32) << row.method;
        for (const auto& c : row.per_class)
          oss << std::setw(14) << (c.defined ? fmt(c.value) : "--");
        oss << std::setw(10) << fmt(row.miou.value) << "\n";
      }
      return oss.str();
    }
  }
  throw ContractError("unsupported report format");
}

std::string chart_data(const MetricsReport& r) {
  std::ostringstream oss;
  for (std::size_t i = 0; i < r.per_class_iou.size(); ++i) {
    const std::string name = i < r.class_names.size() ? r.class_names[i] : std::to_string(i);
    oss << name << "\t" << (r.per_class_iou[i] ? fmt(*r.per_class_iou[i]) : "nan") << "\n";
  }
  oss << "mIoU\t" << fmt(r.miou) << "\n";
  return oss.str();
}

}  // namespace floodseg
