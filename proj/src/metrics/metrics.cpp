#include "tbnet/metrics/metrics.hpp"

#include <cstdio>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "tbnet/core/error.hpp"

namespace tbnet {

ConfusionMatrix::ConfusionMatrix(int num_classes)
    : num_classes_(num_classes), counts_(static_cast<std::size_t>(num_classes) * num_classes, 0) {
  if (num_classes <= 0) throw ConfigError("confusion matrix needs at least one class");
}

ConfusionMatrix ConfusionMatrix::from_counts(const std::vector<std::vector<std::uint64_t>>& counts) {
  ConfusionMatrix cm(static_cast<int>(counts.size()));
  for (std::size_t i = 0; i < counts.size(); ++i) {
    if (counts[i].size() != counts.size()) throw ShapeError("confusion counts must be square");
    for (std::size_t j = 0; j < counts.size(); ++j) cm.add(static_cast<int>(i), static_cast<int>(j), counts[i][j]);
  }
  return cm;
}

std::uint64_t ConfusionMatrix::total() const {
  return std::accumulate(counts_.begin(), counts_.end(), std::uint64_t{0});
}

std::uint64_t ConfusionMatrix::row_sum(int truth) const {
  std::uint64_t s = 0;
  for (int j = 0; j < num_classes_; ++j) s += (*this)(truth, j);
  return s;
}

std::uint64_t ConfusionMatrix::col_sum(int pred) const {
  std::uint64_t s = 0;
  for (int i = 0; i < num_classes_; ++i) s += (*this)(i, pred);
  return s;
}

void ConfusionMatrix::add(int truth, int pred, std::uint64_t n) {
  if (truth < 0 || truth >= num_classes_ || pred < 0 || pred >= num_classes_)
    throw ValidationError("class id pair (" + std::to_string(truth) + ", " + std::to_string(pred) +
                          ") outside " + std::to_string(num_classes_) + " classes");
  counts_[static_cast<std::size_t>(truth) * num_classes_ + pred] += n;
}

void ConfusionMatrix::accumulate(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> truth) {
  if (pred.size() != truth.size())
    throw ShapeError("prediction has " + std::to_string(pred.size()) + " pixels, truth " +
                     std::to_string(truth.size()));
  for (std::size_t m = 0; m < pred.size(); ++m) add(truth[m], pred[m]);
}

void ConfusionMatrix::accumulate(const LabelMap& pred, const LabelMap& truth) {
  if (!pred.same_shape(truth)) throw ShapeError("prediction and truth shapes differ");
  accumulate(pred.values, truth.values);
}

void ConfusionMatrix::merge(const ConfusionMatrix& other) {
  if (other.num_classes_ != num_classes_) throw ShapeError("cannot merge confusion matrices of different sizes");
  for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
}

MetricsReport compute_metrics(const ConfusionMatrix& cm, const ClassTaxonomy& taxonomy) {
  if (taxonomy.num_classes() != cm.num_classes())
    throw ShapeError("taxonomy has " + std::to_string(taxonomy.num_classes()) + " classes, confusion matrix " +
                     std::to_string(cm.num_classes()));
  MetricsReport r;
  r.background_id = taxonomy.background_id();
  double sum_cpa = 0, sum_iou = 0;
  int n_cpa = 0, n_iou = 0;
  for (int i = 0; i < cm.num_classes(); ++i) {
    ClassMetrics m;
    m.name = taxonomy.name(i);
    const auto tp = static_cast<double>(cm(i, i));
    const auto row = cm.row_sum(i);
    const auto uni = row + cm.col_sum(i) - cm(i, i);
    m.support = row;
    if (row > 0) m.cpa = tp / static_cast<double>(row);
    if (uni > 0) m.iou = tp / static_cast<double>(uni);
    if (i != r.background_id) {
      if (m.cpa) sum_cpa += *m.cpa, ++n_cpa;
      if (m.iou) sum_iou += *m.iou, ++n_iou;
    }
    r.classes.push_back(std::move(m));
  }
  if (n_cpa) r.mean_cpa = sum_cpa / n_cpa;
  if (n_iou) r.mean_iou = sum_iou / n_iou;
  return r;
}

MetricsReport compute_metrics(const ConfusionMatrix& cm) {
  std::vector<ClassInfo> classes;
  for (int i = 0; i < cm.num_classes(); ++i) classes.push_back({i, "class" + std::to_string(i)});
  return compute_metrics(cm, ClassTaxonomy(std::move(classes), 0));
}

namespace {

nlohmann::json optional_json(const std::optional<double>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

std::string cell(const std::optional<double>& v) {
  if (!v) return "-";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", 100.0 * *v);
  return buf;
}

}  // namespace

std::string MetricsReport::to_json() const {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& c : classes)
    rows.push_back({{"name", c.name}, {"cpa", optional_json(c.cpa)}, {"iou", optional_json(c.iou)}, {"support", c.support}});
  nlohmann::json j;
  j["classes"] = rows;
  j["background"] = classes.empty() ? std::string() : classes[static_cast<std::size_t>(background_id)].name;
  j["mean"] = {{"cpa", optional_json(mean_cpa)}, {"iou", optional_json(mean_iou)}};
  return j.dump(2) + "\n";
}

std::string MetricsReport::to_table() const {
  std::vector<std::string> header{"Metric"};
  std::vector<std::string> cpa_row{"CPA"}, iou_row{"IoU"};
  for (std::size_t i = 0; i < classes.size(); ++i) {
    if (static_cast<ClassId>(i) == background_id) continue;
    header.push_back(classes[i].name);
    cpa_row.push_back(cell(classes[i].cpa));
    iou_row.push_back(cell(classes[i].iou));
  }
  header.push_back("Mean");
  cpa_row.push_back(cell(mean_cpa));
  iou_row.push_back(cell(mean_iou));

  std::vector<std::size_t> widths(header.size());
  for (const auto* row : {&header, &cpa_row, &iou_row})
    for (std::size_t k = 0; k < row->size(); ++k) widths[k] = std::max(widths[k], (*row)[k].size());
  std::ostringstream os;
  for (const auto* row : {&header, &cpa_row, &iou_row}) {
    for (std::size_t k = 0; k < row->size(); ++k) {
      if (k) os << "  ";
      const auto& s = (*row)[k];
      if (k == 0) os << s << std::string(widths[k] - s.size(), ' ');
      else os << std::string(widths[k] - s.size(), ' ') << s;
    }
    os << '\n';
  }
  return os.str();
}

}  // namespace tbnet
