#pragma once

// Label-dependent geometry evidence: the class-to-cluster matrix B, per-sample
// cleanliness scores and the two-component 1-D GMM split into clean/noisy.

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include <json.hpp>

#include "fedrg/directional_stats.hpp"

namespace fedrg::evidence {

using directional::ResponsibilityVector;

inline constexpr double kDefaultEta = 1e-2;

// C x G row-stochastic matrix over the vMF clusters (background excluded).
class ClassGeometryMatrix {
 public:
  ClassGeometryMatrix(int num_classes, int num_clusters, std::vector<double> rows, double smoothing);

  static ClassGeometryMatrix uniform(int num_classes, int num_clusters,
                                     double smoothing = kDefaultEta);

  int num_classes() const { return num_classes_; }
  int num_clusters() const { return num_clusters_; }
  double smoothing() const { return smoothing_; }
  double at(int c, int g) const { return rows_[static_cast<std::size_t>(c) * num_clusters_ + g]; }
  std::span<const double> row(int c) const {
    return std::span<const double>(rows_).subspan(static_cast<std::size_t>(c) * num_clusters_,
                                                  num_clusters_);
  }

  nlohmann::json to_json() const;
  static ClassGeometryMatrix from_json(const nlohmann::json& j);

 private:
  int num_classes_;
  int num_clusters_;
  std::vector<double> rows_;
  double smoothing_;
};

struct GmmConfig {
  int max_iters = 100;
  double tol = 1e-7;
  double var_floor = 1e-6;
  double degenerate_var = 1e-10;
  // Fitted components closer than this (on the GMM input scale) are treated
  // as one population: no evidence of noise, everything is clean.
  double min_mean_gap = 0.1;
  double threshold = 0.5;
  void validate() const;
};

struct PartitionResult {
  std::vector<bool> clean_mask;
  std::vector<double> clean_posterior;
  std::vector<double> scores;  // cleanliness scores P_i when partitioned from them
  std::array<double, 2> gmm_means{};    // [clean, noisy]
  std::array<double, 2> gmm_vars{};
  std::array<double, 2> gmm_weights{};
  std::vector<double> log_likelihood_trace;
  bool degenerate = false;

  std::size_t num_clean() const;
  nlohmann::json to_json() const;
};

// resp[i] covers components 0..G; only the 1..G part enters B.
ClassGeometryMatrix update_class_geometry(std::span<const ResponsibilityVector> resp,
                                          std::span<const int> labels, int num_classes,
                                          double eta = kDefaultEta);

// P_i = sum_{g>=1} B[y_i][g] * gamma_i[g].
std::vector<double> cleanliness_scores(std::span<const ResponsibilityVector> resp,
                                       std::span<const int> labels,
                                       const ClassGeometryMatrix& B);

// Two-component GMM on raw 1-D values; the lower-mean component is "clean".
PartitionResult gmm_partition_values(std::span<const double> values, const GmmConfig& cfg);

// Fits the GMM on x_i = 1 - P_i.
PartitionResult gmm_partition(std::span<const double> scores, const GmmConfig& cfg);

}  // namespace fedrg::evidence
