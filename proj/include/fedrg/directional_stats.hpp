#pragma once

// Densities, responsibilities and EM fitting for a mixture of von Mises-Fisher
// components plus a uniform background on the unit hypersphere S^{d-1}.

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include <json.hpp>

namespace fedrg::directional {

inline constexpr double kUnitNormTolerance = 1e-9;
inline constexpr double kDefaultKappaMax = 1e4;

class UnitVector {
 public:
  // Throws std::invalid_argument unless |coords| == 1 (within 1e-9) and d >= 2.
  explicit UnitVector(std::vector<double> coords);

  // Rescales a non-zero vector onto the sphere.
  static UnitVector normalized(std::span<const double> v);

  int dim() const { return static_cast<int>(coords_.size()); }
  std::span<const double> coords() const { return coords_; }
  double operator[](std::size_t i) const { return coords_[i]; }
  double dot(const UnitVector& other) const;

 private:
  std::vector<double> coords_;
};

struct VmfComponent {
  UnitVector mean_direction;
  double concentration = 0.0;
};

struct WeightedComponent {
  double weight = 0.0;
  VmfComponent vmf;
};

class VmfMixture {
 public:
  // Validates weights (non-negative, summing to 1 within 1e-9), G >= 1 and a
  // common dimension; throws std::invalid_argument otherwise.
  VmfMixture(double background_weight, std::vector<WeightedComponent> components);

  int dim() const { return dim_; }
  int num_components() const { return static_cast<int>(components_.size()); }
  double background_weight() const { return background_weight_; }
  const std::vector<WeightedComponent>& components() const { return components_; }

  nlohmann::json to_json() const;
  static VmfMixture from_json(const nlohmann::json& j);

 private:
  double background_weight_;
  std::vector<WeightedComponent> components_;
  int dim_;
};

// Entry 0 is the background, entries 1..G the vMF components.
using ResponsibilityVector = std::vector<double>;

struct TemperingConfig {
  double r_min = 0.1;
  void validate() const;
};

struct EmConfig {
  int max_iters = 50;
  double tol = 1e-5;          // relative log-likelihood change
  double pi0_init = 0.05;
  double pi0_floor = 0.01;
  double kappa_init = 10.0;
  double kappa_max = kDefaultKappaMax;
  double empty_mass_fraction = 1e-6;
  void validate() const;
};

double log_uniform_density(int d);

// log I_nu(x) for nu >= 0, x >= 0. Power series below x = 50, asymptotic
// expansions above.
double log_bessel_i(double nu, double x);

double log_vmf_density(const UnitVector& z, const VmfComponent& comp);

ResponsibilityVector responsibilities(const VmfMixture& mix, const UnitVector& z);

// Maps two-view agreement s = <z1, z2> to r = max(r_min, (1 + s) / 2).
double consistency_factor(const UnitVector& z1, const UnitVector& z2,
                          const TemperingConfig& cfg);

// Posterior with every component log-likelihood (background included) scaled
// by r. r == 1 reproduces responsibilities() exactly.
ResponsibilityVector tempered_responsibilities(const VmfMixture& mix, const UnitVector& z,
                                               double r);

struct KappaEstimate {
  double kappa = 0.0;
  bool saturated = false;
};

// Closed-form approximation kappa = R (d - R^2) / (1 - R^2) from the mean
// resultant length R, clamped to [0, kappa_max].
KappaEstimate estimate_kappa(double mean_resultant_length, int d,
                             double kappa_max = kDefaultKappaMax);

// Weighted log-likelihood sum_i w_i log p(z_i).
double mixture_log_likelihood(const VmfMixture& mix, std::span<const UnitVector> points,
                              std::span<const double> point_weights);

struct EmResult {
  VmfMixture mixture;
  std::vector<double> log_likelihood_trace;
  int iterations = 0;
  int reseeds = 0;
  bool converged = false;
};

// Fits a G-component mixture (plus background). When `warm_start` is given and
// matches (G, d) it seeds the iteration; otherwise spherical k-means++ seeding
// is used.
EmResult em_fit(std::span<const UnitVector> points, std::span<const double> point_weights,
                int G, const EmConfig& cfg, std::uint64_t rng_seed,
                const std::optional<VmfMixture>& warm_start = std::nullopt);

}  // namespace fedrg::directional
