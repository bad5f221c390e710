#include "fedrg/directional_stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>

#include "fedrg/rng.hpp"

namespace fedrg::directional {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kSeriesCutoff = 50.0;

double log_sum_exp(std::span<const double> v) {
  double m = kNegInf;
  for (double x : v) m = std::max(m, x);
  if (m == kNegInf) return kNegInf;
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

double log_bessel_series(double nu, double x) {
  // I_nu(x) = sum_k (x/2)^{2k+nu} / (k! Gamma(k+nu+1)); the terms are summed
  // relative to the k = 0 term through their ratio recursion.
  const double half = 0.5 * x;
  const double q = half * half;
  const double log_t0 = nu * std::log(half) - std::lgamma(nu + 1.0);
  double ratio = 1.0;
  double sum = 1.0;
  for (int k = 0; k < 2000; ++k) {
    ratio *= q / ((k + 1.0) * (k + 1.0 + nu));
    sum += ratio;
    if (k + 1.0 > half && ratio < sum * 1e-17) break;
  }
  return log_t0 + std::log(sum);
}

// Hankel expansion, used for nu = 0 where the uniform expansion degenerates.
double log_bessel_hankel(double nu, double x) {
  const double mu = 4.0 * nu * nu;
  double term = 1.0;
  double sum = 1.0;
  for (int k = 1; k < 30; ++k) {
    const double odd = 2.0 * k - 1.0;
    const double next = -term * (mu - odd * odd) / (k * 8.0 * x);
    if (std::abs(next) >= std::abs(term)) break;
    term = next;
    sum += term;
    if (std::abs(term) < 1e-17 * std::abs(sum)) break;
  }
  return x - 0.5 * std::log(2.0 * std::numbers::pi * x) + std::log(sum);
}

// Uniform (Debye) expansion in nu through the fourth-order polynomial.
double log_bessel_uniform(double nu, double x) {
  const double root = std::hypot(nu, x);
  const double t = nu / root;
  const double t2 = t * t;
  const double u1 = t * (3.0 - 5.0 * t2) / 24.0;
  const double u2 = t2 * (81.0 - 462.0 * t2 + 385.0 * t2 * t2) / 1152.0;
  const double u3 =
      t * t2 *
      (30375.0 - 369603.0 * t2 + 765765.0 * t2 * t2 - 425425.0 * t2 * t2 * t2) /
      414720.0;
  const double u4 = t2 * t2 *
                    (4465125.0 - 94121676.0 * t2 + 349922430.0 * t2 * t2 -
                     446185740.0 * t2 * t2 * t2 + 185910725.0 * t2 * t2 * t2 * t2) /
                    39813120.0;
  const double series = 1.0 + u1 / nu + u2 / (nu * nu) + u3 / (nu * nu * nu) +
                        u4 / (nu * nu * nu * nu);
  const double eta_nu = root + nu * std::log(x / (nu + root));
  return eta_nu - 0.5 * std::log(2.0 * std::numbers::pi) - 0.5 * std::log(root) +
         std::log(series);
}

double log_normalizer(int d, double kappa) {
  if (kappa == 0.0) return log_uniform_density(d);
  const double nu = 0.5 * d - 1.0;
  return nu * std::log(kappa) - 0.5 * d * std::log(2.0 * std::numbers::pi) -
         log_bessel_i(nu, kappa);
}

// Mean resultant length of a vMF with concentration kappa: I_{d/2} / I_{d/2-1}.
double mean_resultant(int d, double kappa) {
  if (kappa <= 0.0) return 0.0;
  const double nu = 0.5 * d - 1.0;
  return std::exp(log_bessel_i(nu + 1.0, kappa) - log_bessel_i(nu, kappa));
}

void check_dims(int a, int b) {
  if (a != b) {
    throw std::invalid_argument("dimension mismatch: " + std::to_string(a) + " vs " +
                                std::to_string(b));
  }
}

// Per-point component log terms log pi_g + r log p_g(z), entry 0 = background.
void component_log_terms(const VmfMixture& mix, const UnitVector& z, double r,
                         std::vector<double>& out) {
  check_dims(mix.dim(), z.dim());
  const auto& comps = mix.components();
  out.resize(comps.size() + 1);
  const double pi0 = mix.background_weight();
  out[0] = pi0 > 0.0 ? std::log(pi0) + r * log_uniform_density(mix.dim()) : kNegInf;
  for (std::size_t g = 0; g < comps.size(); ++g) {
    const double w = comps[g].weight;
    out[g + 1] = w > 0.0 ? std::log(w) + r * log_vmf_density(z, comps[g].vmf) : kNegInf;
  }
}

ResponsibilityVector normalize_log_terms(std::span<const double> logs) {
  double m = kNegInf;
  for (double x : logs) m = std::max(m, x);
  if (m == kNegInf) throw std::domain_error("degenerate mixture: all weights are zero");
  ResponsibilityVector gamma(logs.size());
  double s = 0.0;
  for (std::size_t g = 0; g < logs.size(); ++g) {
    gamma[g] = std::exp(logs[g] - m);
    s += gamma[g];
  }
  for (double& v : gamma) v /= s;
  return gamma;
}

}  // namespace

UnitVector::UnitVector(std::vector<double> coords) : coords_(std::move(coords)) {
  if (coords_.size() < 2) throw std::invalid_argument("unit vector needs dimension >= 2");
  double n2 = 0.0;
  for (double c : coords_) {
    if (!std::isfinite(c)) throw std::invalid_argument("unit vector has non-finite entry");
    n2 += c * c;
  }
  if (std::abs(std::sqrt(n2) - 1.0) > kUnitNormTolerance) {
    throw std::invalid_argument("vector is not unit norm");
  }
}

UnitVector UnitVector::normalized(std::span<const double> v) {
  double n2 = 0.0;
  for (double c : v) n2 += c * c;
  const double n = std::sqrt(n2);
  if (!(n > 0.0) || !std::isfinite(n)) {
    throw std::invalid_argument("cannot normalize a zero or non-finite vector");
  }
  std::vector<double> out(v.begin(), v.end());
  for (double& c : out) c /= n;
  return UnitVector(std::move(out));
}

double UnitVector::dot(const UnitVector& other) const {
  check_dims(dim(), other.dim());
  double s = 0.0;
  for (std::size_t i = 0; i < coords_.size(); ++i) s += coords_[i] * other.coords_[i];
  return s;
}

VmfMixture::VmfMixture(double background_weight, std::vector<WeightedComponent> components)
    : background_weight_(background_weight), components_(std::move(components)) {
  if (components_.empty()) throw std::invalid_argument("mixture needs G >= 1");
  dim_ = components_.front().vmf.mean_direction.dim();
  double total = background_weight_;
  if (!(background_weight_ >= 0.0) || background_weight_ > 1.0) {
    throw std::invalid_argument("background weight outside [0,1]");
  }
  for (const auto& c : components_) {
    if (c.vmf.mean_direction.dim() != dim_) {
      throw std::invalid_argument("mixture components differ in dimension");
    }
    if (!(c.weight >= 0.0)) throw std::invalid_argument("negative mixture weight");
    if (!(c.vmf.concentration >= 0.0) || !std::isfinite(c.vmf.concentration)) {
      throw std::invalid_argument("concentration must be finite and >= 0");
    }
    total += c.weight;
  }
  if (std::abs(total - 1.0) > 1e-9) throw std::invalid_argument("mixture weights must sum to 1");
}

nlohmann::json VmfMixture::to_json() const {
  nlohmann::json comps = nlohmann::json::array();
  for (const auto& c : components_) {
    std::vector<double> mu(c.vmf.mean_direction.coords().begin(),
                           c.vmf.mean_direction.coords().end());
    comps.push_back({{"weight", c.weight}, {"mu", mu}, {"kappa", c.vmf.concentration}});
  }
  return {{"pi0", background_weight_}, {"components", comps}, {"dim", dim_}};
}

VmfMixture VmfMixture::from_json(const nlohmann::json& j) {
  std::vector<WeightedComponent> comps;
  for (const auto& c : j.at("components")) {
    comps.push_back({c.at("weight").get<double>(),
                     {UnitVector(c.at("mu").get<std::vector<double>>()),
                      c.at("kappa").get<double>()}});
  }
  VmfMixture mix(j.at("pi0").get<double>(), std::move(comps));
  if (mix.dim() != j.at("dim").get<int>()) throw std::invalid_argument("mixture dim mismatch");
  return mix;
}

void TemperingConfig::validate() const {
  if (!(r_min > 0.0 && r_min <= 1.0)) throw std::invalid_argument("tempering.r_min must be in (0,1]");
}

void EmConfig::validate() const {
  if (max_iters < 0) throw std::invalid_argument("em.max_iters must be >= 0");
  if (!(tol >= 0.0)) throw std::invalid_argument("em.tol must be >= 0");
  if (!(pi0_floor >= 0.0 && pi0_floor < 1.0)) throw std::invalid_argument("em.pi0_floor must be in [0,1)");
  if (!(pi0_init >= pi0_floor && pi0_init < 1.0)) {
    throw std::invalid_argument("em.pi0_init must be in [pi0_floor,1)");
  }
  if (!(kappa_init >= 0.0) || !(kappa_max > 0.0) || kappa_init > kappa_max) {
    throw std::invalid_argument("em.kappa_init/kappa_max invalid");
  }
  if (!(empty_mass_fraction >= 0.0)) throw std::invalid_argument("em.empty_mass_fraction must be >= 0");
}

double log_uniform_density(int d) {
  if (d < 2) throw std::invalid_argument("sphere dimension must be >= 2");
  const double half = 0.5 * d;
  return -(std::log(2.0) + half * std::log(std::numbers::pi) - std::lgamma(half));
}

double log_bessel_i(double nu, double x) {
  if (nu < 0.0 || x < 0.0 || !std::isfinite(x)) {
    throw std::invalid_argument("log_bessel_i requires nu >= 0 and finite x >= 0");
  }
  if (x == 0.0) return nu == 0.0 ? 0.0 : kNegInf;
  if (x < kSeriesCutoff) return log_bessel_series(nu, x);
  return nu == 0.0 ? log_bessel_hankel(nu, x) : log_bessel_uniform(nu, x);
}

double log_vmf_density(const UnitVector& z, const VmfComponent& comp) {
  check_dims(z.dim(), comp.mean_direction.dim());
  const double kappa = comp.concentration;
  if (!std::isfinite(kappa) || kappa < 0.0) {
    throw std::invalid_argument("concentration must be finite and >= 0");
  }
  if (kappa == 0.0) return log_uniform_density(z.dim());
  return log_normalizer(z.dim(), kappa) + kappa * comp.mean_direction.dot(z);
}

ResponsibilityVector responsibilities(const VmfMixture& mix, const UnitVector& z) {
  return tempered_responsibilities(mix, z, 1.0);
}

double consistency_factor(const UnitVector& z1, const UnitVector& z2,
                          const TemperingConfig& cfg) {
  const double s = std::clamp(z1.dot(z2), -1.0, 1.0);
  return std::max(cfg.r_min, 0.5 * (1.0 + s));
}

ResponsibilityVector tempered_responsibilities(const VmfMixture& mix, const UnitVector& z,
                                               double r) {
  if (!(r > 0.0) || r > 1.0) throw std::invalid_argument("tempering factor must be in (0,1]");
  std::vector<double> logs;
  component_log_terms(mix, z, r, logs);
  return normalize_log_terms(logs);
}

KappaEstimate estimate_kappa(double mean_resultant_length, int d, double kappa_max) {
  const double rbar = mean_resultant_length;
  if (!(rbar >= 0.0)) throw std::invalid_argument("mean resultant length must be >= 0");
  if (rbar >= 1.0) return {kappa_max, true};
  const double k = rbar * (d - rbar * rbar) / (1.0 - rbar * rbar);
  if (k >= kappa_max) return {kappa_max, true};
  return {std::max(0.0, k), false};
}

double mixture_log_likelihood(const VmfMixture& mix, std::span<const UnitVector> points,
                              std::span<const double> point_weights) {
  std::vector<double> logs;
  double ll = 0.0;
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (point_weights[i] == 0.0) continue;
    component_log_terms(mix, points[i], 1.0, logs);
    ll += point_weights[i] * log_sum_exp(logs);
  }
  return ll;
}

namespace {

struct EStep {
  std::vector<ResponsibilityVector> gamma;
  double log_likelihood = 0.0;
};

EStep expectation(const VmfMixture& mix, std::span<const UnitVector> points,
                  std::span<const double> w) {
  EStep out;
  out.gamma.resize(points.size());
  std::vector<double> logs;
  for (std::size_t i = 0; i < points.size(); ++i) {
    component_log_terms(mix, points[i], 1.0, logs);
    const double lse = log_sum_exp(logs);
    if (lse == kNegInf) throw std::domain_error("degenerate mixture: all weights are zero");
    ResponsibilityVector g(logs.size());
    for (std::size_t k = 0; k < logs.size(); ++k) g[k] = std::exp(logs[k] - lse);
    out.gamma[i] = std::move(g);
    out.log_likelihood += w[i] * lse;
  }
  return out;
}

// Expected complete-data log-likelihood of one component as a function of
// kappa, given its mass and resultant length.
double component_objective(int d, double mass, double resultant, double kappa) {
  return mass * log_normalizer(d, kappa) + kappa * resultant;
}

double fit_kappa(int d, double mass, double resultant, double kappa_old, double kappa_max) {
  const double rbar = mass > 0.0 ? std::min(resultant / mass, 1.0) : 0.0;
  std::vector<double> candidates{kappa_old};
  const KappaEstimate approx = estimate_kappa(rbar, d, kappa_max);
  candidates.push_back(approx.kappa);
  if (!approx.saturated && approx.kappa > 0.0) {
    // Newton refinement of A_d(kappa) = rbar from the closed-form start.
    double k = approx.kappa;
    for (int step = 0; step < 3; ++step) {
      const double a = mean_resultant(d, k);
      const double deriv = 1.0 - a * a - (d - 1.0) / k * a;
      if (!(deriv > 0.0)) break;
      const double next = std::clamp(k - (a - rbar) / deriv, 1e-12, kappa_max);
      if (!std::isfinite(next)) break;
      k = next;
    }
    candidates.push_back(k);
  }
  double best = kappa_old;
  double best_q = component_objective(d, mass, resultant, kappa_old);
  for (double k : candidates) {
    const double q = component_objective(d, mass, resultant, k);
    if (q > best_q) {
      best_q = q;
      best = k;
    }
  }
  return best;
}

VmfMixture kmeanspp_init(std::span<const UnitVector> points, std::span<const double> w, int G,
                         const EmConfig& cfg, Rng& rng) {
  const std::size_t n = points.size();
  std::vector<std::size_t> centers;
  std::vector<double> dist(n, std::numeric_limits<double>::infinity());

  auto pick = [&](std::span<const double> scores) -> std::size_t {
    double total = 0.0;
    for (double s : scores) total += s;
    if (!(total > 0.0)) {
      // All remaining candidates coincide with a center; take the first
      // positive-weight point not already chosen, else any point.
      for (std::size_t i = 0; i < n; ++i) {
        if (w[i] > 0.0 && std::find(centers.begin(), centers.end(), i) == centers.end()) return i;
      }
      return static_cast<std::size_t>(rng() % n);
    }
    const double u = uniform01(rng) * total;
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      acc += scores[i];
      if (u < acc) return i;
    }
    return n - 1;
  };

  // Greedy variant: draw several candidates per step and keep the one that
  // lowers the weighted potential the most.
  const int trials = 2 + static_cast<int>(std::log(static_cast<double>(G)));
  auto update_dist = [&](std::vector<double>& dd, const UnitVector& c) {
    double potential = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      dd[i] = std::min(dd[i], std::max(0.0, 1.0 - points[i].dot(c)));
      potential += w[i] * dd[i];
    }
    return potential;
  };

  centers.push_back(pick(w));
  update_dist(dist, points[centers.back()]);
  std::vector<double> scores(n);
  while (static_cast<int>(centers.size()) < G) {
    for (std::size_t i = 0; i < n; ++i) scores[i] = w[i] * dist[i];
    std::size_t best = 0;
    double best_potential = std::numeric_limits<double>::infinity();
    std::vector<double> best_dist;
    for (int t = 0; t < trials; ++t) {
      const std::size_t cand = pick(scores);
      auto trial_dist = dist;
      const double potential = update_dist(trial_dist, points[cand]);
      if (potential < best_potential) {
        best_potential = potential;
        best = cand;
        best_dist = std::move(trial_dist);
      }
    }
    centers.push_back(best);
    dist = std::move(best_dist);
  }

  const double pi0 = std::max(cfg.pi0_init, cfg.pi0_floor);
  std::vector<WeightedComponent> comps;
  for (std::size_t c : centers) {
    comps.push_back({(1.0 - pi0) / G, {points[c], cfg.kappa_init}});
  }
  return VmfMixture(pi0, std::move(comps));
}

}  // namespace

EmResult em_fit(std::span<const UnitVector> points, std::span<const double> point_weights,
                int G, const EmConfig& cfg, std::uint64_t rng_seed,
                const std::optional<VmfMixture>& warm_start) {
  cfg.validate();
  if (G < 1) throw std::invalid_argument("G must be >= 1");
  if (points.size() < static_cast<std::size_t>(G)) {
    throw std::invalid_argument("em_fit needs at least G points");
  }
  if (point_weights.size() != points.size()) {
    throw std::invalid_argument("point weights length mismatch");
  }
  const int d = points.front().dim();
  double total_weight = 0.0;
  for (std::size_t i = 0; i < points.size(); ++i) {
    check_dims(points[i].dim(), d);
    const double wi = point_weights[i];
    if (std::isnan(wi)) throw std::invalid_argument("NaN point weight");
    if (wi < 0.0 || !std::isfinite(wi)) throw std::invalid_argument("point weights must be finite and >= 0");
    total_weight += wi;
  }
  if (!(total_weight > 0.0)) throw std::invalid_argument("point weights are all zero");

  Rng rng(rng_seed);
  VmfMixture mix = (warm_start && warm_start->num_components() == G && warm_start->dim() == d)
                       ? *warm_start
                       : kmeanspp_init(points, point_weights, G, cfg, rng);

  EStep e = expectation(mix, points, point_weights);
  EmResult result{mix, {e.log_likelihood}, 0, 0, false};

  const double empty_threshold = cfg.empty_mass_fraction * total_weight;
  for (int iter = 1; iter <= cfg.max_iters; ++iter) {
    std::vector<double> mass(G + 1, 0.0);
    std::vector<std::vector<double>> resultant(G, std::vector<double>(d, 0.0));
    for (std::size_t i = 0; i < points.size(); ++i) {
      const double wi = point_weights[i];
      if (wi == 0.0) continue;
      mass[0] += wi * e.gamma[i][0];
      const auto z = points[i].coords();
      for (int g = 0; g < G; ++g) {
        const double m = wi * e.gamma[i][g + 1];
        mass[g + 1] += m;
        for (int k = 0; k < d; ++k) resultant[g][k] += m * z[k];
      }
    }

    double pi0 = mass[0] / total_weight;
    double scale = 1.0;
    if (pi0 < cfg.pi0_floor) {
      const double rest = total_weight - mass[0];
      scale = rest > 0.0 ? (1.0 - cfg.pi0_floor) / (rest / total_weight) : 1.0;
      pi0 = cfg.pi0_floor;
    }

    std::vector<WeightedComponent> comps;
    std::vector<int> empty;
    for (int g = 0; g < G; ++g) {
      const auto& old = mix.components()[g].vmf;
      const double weight = scale * mass[g + 1] / total_weight;
      double norm = 0.0;
      for (double v : resultant[g]) norm += v * v;
      norm = std::sqrt(norm);
      if (mass[g + 1] < empty_threshold || !(norm > 0.0)) {
        if (mass[g + 1] < empty_threshold) empty.push_back(g);
        comps.push_back({weight, {old.mean_direction, old.concentration}});
        continue;
      }
      UnitVector mu = UnitVector::normalized(resultant[g]);
      const double kappa = fit_kappa(d, mass[g + 1], norm, old.concentration, cfg.kappa_max);
      comps.push_back({weight, {std::move(mu), kappa}});
    }
    // Remove rounding drift so the weights sum to one.
    double wsum = 0.0;
    for (const auto& c : comps) wsum += c.weight;
    if (wsum > 0.0) {
      for (auto& c : comps) c.weight *= (1.0 - pi0) / wsum;
    } else {
      pi0 = 1.0;
    }

    VmfMixture next(pi0, comps);
    EStep next_e = expectation(next, points, point_weights);

    if (!empty.empty()) {
      // Re-seed starved components at the least-explained point; keep the
      // re-seed only if it does not lower the likelihood.
      std::size_t worst = 0;
      double worst_max = std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < points.size(); ++i) {
        if (point_weights[i] == 0.0) continue;
        const double mx = *std::max_element(next_e.gamma[i].begin(), next_e.gamma[i].end());
        if (mx < worst_max) {
          worst_max = mx;
          worst = i;
        }
      }
      auto reseeded = comps;
      for (int g : empty) reseeded[g].vmf = {points[worst], cfg.kappa_init};
      VmfMixture candidate(pi0, std::move(reseeded));
      EStep cand_e = expectation(candidate, points, point_weights);
      if (cand_e.log_likelihood >= next_e.log_likelihood) {
        next = std::move(candidate);
        next_e = std::move(cand_e);
        result.reseeds += static_cast<int>(empty.size());
      }
    }

    const double prev = e.log_likelihood;
    mix = std::move(next);
    e = std::move(next_e);
    result.log_likelihood_trace.push_back(e.log_likelihood);
    result.iterations = iter;
    if (e.log_likelihood - prev <= cfg.tol * std::abs(prev)) {
      result.converged = true;
      break;
    }
  }
  result.mixture = std::move(mix);
  return result;
}

}  // namespace fedrg::directional
