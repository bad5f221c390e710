#pragma once

// Evaluation metrics and per-round records.

#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include <json.hpp>

namespace fedrg::metrics {

struct ClassificationMetrics {
  double accuracy = 0.0;
  double macro_precision = 0.0;
  double macro_fscore = 0.0;
};

// Macro averages over all C classes; a class with no predicted (or no true)
// positives contributes 0 to the corresponding average.
ClassificationMetrics classification_metrics(std::span<const int> preds, std::span<const int> truths,
                                             int num_classes);

// Clean-noise recognition accuracy: fraction of matching clean flags.
double cra(const std::vector<bool>& pred_clean, const std::vector<bool>& true_clean);

struct MetricsRecord {
  int round = 0;
  double accuracy = 0.0;
  double macro_precision = 0.0;
  double macro_fscore = 0.0;
  std::optional<double> cra;              // absent during the contrastive stage
  std::vector<double> per_client_cra;
  std::optional<double> cra_small_loss;   // shadow small-loss detector, same checkpoint

  nlohmann::json to_json() const;
};

void write_metrics_header(std::ostream& out);
void write_metrics_row(std::ostream& out, const MetricsRecord& rec);

nlohmann::json summarize(const std::vector<MetricsRecord>& records);

}  // namespace fedrg::metrics
