#include "fedrg/metrics.hpp"

#include <cstdio>
#include <ostream>
#include <stdexcept>

namespace fedrg::metrics {

ClassificationMetrics classification_metrics(std::span<const int> preds, std::span<const int> truths,
                                             int num_classes) {
  if (preds.empty()) throw std::invalid_argument("classification_metrics on empty input");
  if (preds.size() != truths.size()) throw std::invalid_argument("prediction/truth length mismatch");
  if (num_classes < 1) throw std::invalid_argument("need at least one class");
  std::vector<double> tp(num_classes, 0.0), pred_pos(num_classes, 0.0), true_pos(num_classes, 0.0);
  double correct = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const int p = preds[i];
    const int t = truths[i];
    if (p < 0 || p >= num_classes || t < 0 || t >= num_classes) {
      throw std::invalid_argument("class index out of range");
    }
    pred_pos[p] += 1.0;
    true_pos[t] += 1.0;
    if (p == t) {
      tp[p] += 1.0;
      correct += 1.0;
    }
  }
  ClassificationMetrics m;
  m.accuracy = correct / preds.size();
  for (int c = 0; c < num_classes; ++c) {
    const double prec = pred_pos[c] > 0.0 ? tp[c] / pred_pos[c] : 0.0;
    const double rec = true_pos[c] > 0.0 ? tp[c] / true_pos[c] : 0.0;
    m.macro_precision += prec;
    m.macro_fscore += prec + rec > 0.0 ? 2.0 * prec * rec / (prec + rec) : 0.0;
  }
  m.macro_precision /= num_classes;
  m.macro_fscore /= num_classes;
  return m;
}

double cra(const std::vector<bool>& pred_clean, const std::vector<bool>& true_clean) {
  if (pred_clean.empty()) throw std::invalid_argument("cra on empty input");
  if (pred_clean.size() != true_clean.size()) throw std::invalid_argument("cra length mismatch");
  std::size_t match = 0;
  for (std::size_t i = 0; i < pred_clean.size(); ++i) match += pred_clean[i] == true_clean[i];
  return static_cast<double>(match) / pred_clean.size();
}

nlohmann::json MetricsRecord::to_json() const {
  nlohmann::json j = {{"round", round},
                      {"accuracy", accuracy},
                      {"macro_precision", macro_precision},
                      {"macro_fscore", macro_fscore},
                      {"per_client_cra", per_client_cra}};
  j["cra"] = cra ? nlohmann::json(*cra) : nlohmann::json(nullptr);
  j["cra_small_loss"] = cra_small_loss ? nlohmann::json(*cra_small_loss) : nlohmann::json(nullptr);
  return j;
}

void write_metrics_header(std::ostream& out) {
  out << "round,accuracy,macro_precision,macro_fscore,cra\n";
}

void write_metrics_row(std::ostream& out, const MetricsRecord& rec) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%d,%.10f,%.10f,%.10f,", rec.round, rec.accuracy,
                rec.macro_precision, rec.macro_fscore);
  out << buf;
  if (rec.cra) {
    std::snprintf(buf, sizeof buf, "%.10f", *rec.cra);
    out << buf;
  }
  out << '\n';
}

nlohmann::json summarize(const std::vector<MetricsRecord>& records) {
  nlohmann::json j;
  j["rounds"] = nlohmann::json::array();
  double cra_sum = 0.0, shadow_sum = 0.0;
  int cra_n = 0, shadow_n = 0;
  for (const auto& r : records) {
    j["rounds"].push_back(r.to_json());
    if (r.cra) {
      cra_sum += *r.cra;
      ++cra_n;
    }
    if (r.cra_small_loss) {
      shadow_sum += *r.cra_small_loss;
      ++shadow_n;
    }
  }
  if (!records.empty()) j["final"] = records.back().to_json();
  j["mean_cra"] = cra_n > 0 ? nlohmann::json(cra_sum / cra_n) : nlohmann::json(nullptr);
  j["mean_cra_small_loss"] = shadow_n > 0 ? nlohmann::json(shadow_sum / shadow_n) : nlohmann::json(nullptr);
  return j;
}

}  // namespace fedrg::metrics
