#include "fedrg/geometry_evidence.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace fedrg::evidence {

ClassGeometryMatrix::ClassGeometryMatrix(int num_classes, int num_clusters,
                                         std::vector<double> rows, double smoothing)
    : num_classes_(num_classes),
      num_clusters_(num_clusters),
      rows_(std::move(rows)),
      smoothing_(smoothing) {
  if (num_classes < 1 || num_clusters < 1) throw std::invalid_argument("B needs C >= 1 and G >= 1");
  if (rows_.size() != static_cast<std::size_t>(num_classes) * num_clusters) {
    throw std::invalid_argument("B has the wrong number of entries");
  }
  for (int c = 0; c < num_classes_; ++c) {
    double s = 0.0;
    for (double v : row(c)) {
      if (!(v > 0.0 && v <= 1.0)) {
        throw std::invalid_argument("B entries must lie in (0,1]");
      }
      s += v;
    }
    if (std::abs(s - 1.0) > 1e-9) throw std::invalid_argument("B rows must sum to 1");
  }
}

ClassGeometryMatrix ClassGeometryMatrix::uniform(int num_classes, int num_clusters,
                                                 double smoothing) {
  return ClassGeometryMatrix(
      num_classes, num_clusters,
      std::vector<double>(static_cast<std::size_t>(num_classes) * num_clusters, 1.0 / num_clusters),
      smoothing);
}

nlohmann::json ClassGeometryMatrix::to_json() const {
  return {{"num_classes", num_classes_},
          {"num_clusters", num_clusters_},
          {"eta", smoothing_},
          {"rows", rows_}};
}

ClassGeometryMatrix ClassGeometryMatrix::from_json(const nlohmann::json& j) {
  return ClassGeometryMatrix(j.at("num_classes").get<int>(), j.at("num_clusters").get<int>(),
                             j.at("rows").get<std::vector<double>>(), j.at("eta").get<double>());
}

void GmmConfig::validate() const {
  if (max_iters < 1) throw std::invalid_argument("gmm.max_iters must be >= 1");
  if (!(tol >= 0.0)) throw std::invalid_argument("gmm.tol must be >= 0");
  if (!(var_floor > 0.0)) throw std::invalid_argument("gmm.var_floor must be > 0");
  if (!(degenerate_var >= 0.0)) throw std::invalid_argument("gmm.degenerate_var must be >= 0");
  if (!(min_mean_gap >= 0.0)) throw std::invalid_argument("gmm.min_mean_gap must be >= 0");
  if (!(threshold > 0.0 && threshold < 1.0)) throw std::invalid_argument("gmm.threshold must be in (0,1)");
}

std::size_t PartitionResult::num_clean() const {
  return static_cast<std::size_t>(std::count(clean_mask.begin(), clean_mask.end(), true));
}

nlohmann::json PartitionResult::to_json() const {
  std::vector<int> mask(clean_mask.begin(), clean_mask.end());
  return {{"clean_mask", mask},
          {"gmm_means", gmm_means},
          {"gmm_vars", gmm_vars},
          {"gmm_weights", gmm_weights},
          {"degenerate", degenerate}};
}

ClassGeometryMatrix update_class_geometry(std::span<const ResponsibilityVector> resp,
                                          std::span<const int> labels, int num_classes,
                                          double eta) {
  if (!(eta > 0.0)) throw std::invalid_argument("eta must be > 0");
  if (resp.size() != labels.size()) throw std::invalid_argument("responsibility/label length mismatch");
  if (resp.empty()) throw std::invalid_argument("cannot infer G from an empty responsibility list");
  const int G = static_cast<int>(resp.front().size()) - 1;
  if (G < 1) throw std::invalid_argument("responsibility vectors need G >= 1 clusters");
  std::vector<double> counts(static_cast<std::size_t>(num_classes) * G, 0.0);
  for (std::size_t i = 0; i < resp.size(); ++i) {
    const int c = labels[i];
    if (c < 0 || c >= num_classes) throw std::invalid_argument("label out of range");
    if (static_cast<int>(resp[i].size()) != G + 1) throw std::invalid_argument("ragged responsibilities");
    for (int g = 0; g < G; ++g) counts[static_cast<std::size_t>(c) * G + g] += resp[i][g + 1];
  }
  for (int c = 0; c < num_classes; ++c) {
    double denom = 0.0;
    for (int g = 0; g < G; ++g) denom += counts[static_cast<std::size_t>(c) * G + g] + eta;
    for (int g = 0; g < G; ++g) {
      double& v = counts[static_cast<std::size_t>(c) * G + g];
      v = (v + eta) / denom;
    }
  }
  return ClassGeometryMatrix(num_classes, G, std::move(counts), eta);
}

std::vector<double> cleanliness_scores(std::span<const ResponsibilityVector> resp,
                                       std::span<const int> labels,
                                       const ClassGeometryMatrix& B) {
  if (resp.size() != labels.size()) throw std::invalid_argument("responsibility/label length mismatch");
  const int G = B.num_clusters();
  std::vector<double> scores(resp.size());
  for (std::size_t i = 0; i < resp.size(); ++i) {
    const int c = labels[i];
    if (c < 0 || c >= B.num_classes()) throw std::invalid_argument("label out of range for B");
    if (static_cast<int>(resp[i].size()) != G + 1) throw std::invalid_argument("responsibility/B shape mismatch");
    double p = 0.0;
    for (int g = 0; g < G; ++g) p += B.at(c, g) * resp[i][g + 1];
    scores[i] = std::clamp(p, 0.0, 1.0);
  }
  return scores;
}

namespace {

double log_normal(double x, double mean, double var) {
  const double d = x - mean;
  return -0.5 * (std::log(2.0 * std::numbers::pi * var) + d * d / var);
}

}  // namespace

PartitionResult gmm_partition_values(std::span<const double> values, const GmmConfig& cfg) {
  cfg.validate();
  const std::size_t n = values.size();
  if (n < 2) throw std::invalid_argument("gmm_partition needs at least 2 samples");
  double mean = 0.0;
  for (double x : values) {
    if (!std::isfinite(x)) throw std::invalid_argument("non-finite value in GMM input");
    mean += x;
  }
  mean /= n;
  double var = 0.0;
  for (double x : values) var += (x - mean) * (x - mean);
  var /= n;

  PartitionResult out;
  if (var < cfg.degenerate_var) {
    out.degenerate = true;
    out.clean_mask.assign(n, true);
    out.clean_posterior.assign(n, 1.0);
    out.gmm_means = {mean, mean};
    out.gmm_vars = {std::max(var, cfg.var_floor), std::max(var, cfg.var_floor)};
    out.gmm_weights = {1.0, 0.0};
    return out;
  }

  // k-means(2) initialization from the extremes.
  auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
  std::array<double, 2> m{*lo_it, *hi_it};
  std::vector<int> assign(n, 0);
  for (int it = 0; it < 100; ++it) {
    bool changed = false;
    std::array<double, 2> sum{0.0, 0.0};
    std::array<double, 2> cnt{0.0, 0.0};
    for (std::size_t i = 0; i < n; ++i) {
      const int a = std::abs(values[i] - m[0]) <= std::abs(values[i] - m[1]) ? 0 : 1;
      changed |= a != assign[i];
      assign[i] = a;
      sum[a] += values[i];
      cnt[a] += 1.0;
    }
    for (int k = 0; k < 2; ++k) {
      if (cnt[k] > 0.0) m[k] = sum[k] / cnt[k];
    }
    if (!changed && it > 0) break;
  }
  std::array<double, 2> v{0.0, 0.0};
  std::array<double, 2> w{0.0, 0.0};
  for (std::size_t i = 0; i < n; ++i) {
    v[assign[i]] += (values[i] - m[assign[i]]) * (values[i] - m[assign[i]]);
    w[assign[i]] += 1.0;
  }
  for (int k = 0; k < 2; ++k) {
    v[k] = w[k] > 0.0 ? std::max(v[k] / w[k], cfg.var_floor) : var;
    w[k] = std::max(w[k], 0.5) / (n + 1.0);
  }
  const double wsum = w[0] + w[1];
  w[0] /= wsum;
  w[1] /= wsum;

  std::vector<double> post(n);  // responsibility of component 0
  auto e_step = [&]() {
    double ll = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double a = std::log(w[0]) + log_normal(values[i], m[0], v[0]);
      const double b = std::log(w[1]) + log_normal(values[i], m[1], v[1]);
      const double mx = std::max(a, b);
      const double lse = mx + std::log(std::exp(a - mx) + std::exp(b - mx));
      post[i] = std::exp(a - lse);
      ll += lse;
    }
    return ll;
  };

  double ll = e_step();
  out.log_likelihood_trace.push_back(ll);
  for (int it = 0; it < cfg.max_iters; ++it) {
    std::array<double, 2> nk{0.0, 0.0};
    std::array<double, 2> sx{0.0, 0.0};
    for (std::size_t i = 0; i < n; ++i) {
      nk[0] += post[i];
      nk[1] += 1.0 - post[i];
      sx[0] += post[i] * values[i];
      sx[1] += (1.0 - post[i]) * values[i];
    }
    if (nk[0] <= 0.0 || nk[1] <= 0.0) break;
    for (int k = 0; k < 2; ++k) m[k] = sx[k] / nk[k];
    std::array<double, 2> sv{0.0, 0.0};
    for (std::size_t i = 0; i < n; ++i) {
      sv[0] += post[i] * (values[i] - m[0]) * (values[i] - m[0]);
      sv[1] += (1.0 - post[i]) * (values[i] - m[1]) * (values[i] - m[1]);
    }
    for (int k = 0; k < 2; ++k) {
      v[k] = std::max(sv[k] / nk[k], cfg.var_floor);
      w[k] = nk[k] / n;
    }
    const double next = e_step();
    out.log_likelihood_trace.push_back(next);
    const bool done = next - ll <= cfg.tol * std::max(1.0, std::abs(ll));
    ll = next;
    if (done) break;
  }

  const int clean = m[0] <= m[1] ? 0 : 1;
  const int noisy = 1 - clean;
  out.gmm_means = {m[clean], m[noisy]};
  out.gmm_vars = {v[clean], v[noisy]};
  out.gmm_weights = {w[clean], w[noisy]};
  out.clean_mask.resize(n);
  out.clean_posterior.resize(n);
  if (m[noisy] - m[clean] < cfg.min_mean_gap) {
    out.degenerate = true;
    std::fill(out.clean_mask.begin(), out.clean_mask.end(), true);
    std::fill(out.clean_posterior.begin(), out.clean_posterior.end(), 1.0);
    return out;
  }
  for (std::size_t i = 0; i < n; ++i) {
    const double pc = clean == 0 ? post[i] : 1.0 - post[i];
    out.clean_posterior[i] = pc;
    out.clean_mask[i] = pc >= cfg.threshold;
  }
  return out;
}

PartitionResult gmm_partition(std::span<const double> scores, const GmmConfig& cfg) {
  std::vector<double> x(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!(scores[i] >= 0.0 && scores[i] <= 1.0)) {
      throw std::invalid_argument("cleanliness scores must lie in [0,1]");
    }
    x[i] = 1.0 - scores[i];
  }
  PartitionResult out = gmm_partition_values(x, cfg);
  out.scores.assign(scores.begin(), scores.end());
  return out;
}

}  // namespace fedrg::evidence
