// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// non-zero if any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>

#include "fedrg/cli.hpp"
#include "fedrg/federation.hpp"
#include "test_support.hpp"

using namespace fedrg;
using fedrg::testing::axis;
using fedrg::testing::numerical_gradient;
using fedrg::testing::relative_error;
using fedrg::testing::sample_vmf;
using fedrg::testing::uniform_on_sphere;
namespace fs = std::filesystem;

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr int kGradInstances = 25;
constexpr double kGradTol = 1e-4;
constexpr int kPropertyCases = 1000;

struct Outcome {
  bool pass = true;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string format(const char* fmt, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, fmt, args...);
  return buf;
}

std::vector<double> normal_vector(std::size_t n, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> v(n);
  for (double& x : v) x = normal(rng);
  return v;
}

std::vector<double> softmax(const std::vector<double>& logits) {
  const double m = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p(logits.size());
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) s += p[i] = std::exp(logits[i] - m);
  for (double& v : p) v /= s;
  return p;
}

int random_int(Rng& rng, int lo, int hi) {  // inclusive
  return lo + static_cast<int>(uniform01(rng) * (hi - lo + 1));
}

RunManifest comparative_manifest() { return load_manifest(FEDRG_CONFIG_DIR "/comparative.json"); }

Outcome density_normalization() {
  const auto t0 = Clock::now();
  Rng rng(2024);
  const auto mu = axis(3, 0);
  Outcome out;
  for (double kappa : {0.0, 1.0, 5.0, 20.0}) {
    double sum = 0.0;
    const int n = 1'000'000;
    for (int i = 0; i < n; ++i) sum += std::exp(directional::log_vmf_density(uniform_on_sphere(3, rng), {mu, kappa}));
    const double integral = 4.0 * kPi * sum / n;
    out.pass &= integral >= 0.98 && integral <= 1.02;
    out.detail += format("k=%g:%.4f ", kappa, integral);
  }
  const double secs = seconds_since(t0);
  out.pass &= secs < 30.0;
  out.detail += format("(%.1fs, bound [0.98,1.02], <30s)", secs);
  return out;
}

Outcome em_recovery() {
  const auto t0 = Clock::now();
  const auto m1 = axis(3, 0);
  const auto m2 = axis(3, 1);
  Outcome out;
  double worst_align = 1.0, worst_drop = 0.0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    Rng rng(seed);
    std::vector<directional::UnitVector> pts;
    for (int i = 0; i < 500; ++i) pts.push_back(sample_vmf(m1, 50.0, rng));
    for (int i = 0; i < 500; ++i) pts.push_back(sample_vmf(m2, 50.0, rng));
    const std::vector<double> w(pts.size(), 1.0);
    const auto res = directional::em_fit(pts, w, 2, directional::EmConfig{}, seed + 100);
    const auto& c = res.mixture.components();
    const double straight = std::min(std::abs(c[0].vmf.mean_direction.dot(m1)), std::abs(c[1].vmf.mean_direction.dot(m2)));
    const double swapped = std::min(std::abs(c[0].vmf.mean_direction.dot(m2)), std::abs(c[1].vmf.mean_direction.dot(m1)));
    worst_align = std::min(worst_align, std::max(straight, swapped));
    for (std::size_t t = 1; t < res.log_likelihood_trace.size(); ++t) {
      worst_drop = std::max(worst_drop, res.log_likelihood_trace[t - 1] - res.log_likelihood_trace[t]);
    }
  }
  const double secs = seconds_since(t0);
  out.pass = worst_align >= 0.99 && worst_drop <= 1e-9 && secs < 10.0;
  out.detail = format("min |<mu_hat,mu>| %.5f (>=0.99), max LL drop %.2e (<=1e-9), %.2fs (<10s), 5 seeds",
                      worst_align, worst_drop, secs);
  return out;
}

Outcome gradient_fidelity() {
  Rng rng(77);
  double worst[4] = {0, 0, 0, 0};
  for (int trial = 0; trial < kGradInstances; ++trial) {
    {  // NT-Xent on unit embeddings
      const int b = random_int(rng, 1, 4), d = random_int(rng, 2, 6);
      const double tau = 0.1 + uniform01(rng);
      std::vector<double> flat;
      for (int i = 0; i < 2 * b; ++i) {
        const auto z = directional::UnitVector::normalized(normal_vector(d, rng));
        flat.insert(flat.end(), z.coords().begin(), z.coords().end());
      }
      auto unpack = [&](const std::vector<double>& f) {
        std::vector<std::vector<double>> z(2 * b);
        for (int i = 0; i < 2 * b; ++i) z[i].assign(f.begin() + i * d, f.begin() + (i + 1) * d);
        return z;
      };
      const auto loss = learner::nt_xent_loss(unpack(flat), tau);
      std::vector<double> analytic;
      for (const auto& g : loss.grad) analytic.insert(analytic.end(), g.begin(), g.end());
      const auto numeric = numerical_gradient(
          [&](const std::vector<double>& f) { return learner::nt_xent_loss(unpack(f), tau).value; }, flat);
      worst[0] = std::max(worst[0], relative_error(analytic, numeric));
    }
    {  // SCE
      const int C = random_int(rng, 2, 7);
      learner::LossConfig cfg;
      cfg.sce_alpha = 0.05 + uniform01(rng);
      cfg.sce_beta = 2.0 * uniform01(rng);
      const auto p = softmax(normal_vector(C, rng));
      const int y = random_int(rng, 0, C - 1);
      const auto numeric = numerical_gradient(
          [&](const std::vector<double>& q) { return learner::sce_loss(q, y, cfg).value; }, p);
      worst[1] = std::max(worst[1], relative_error(learner::sce_loss(p, y, cfg).grad, numeric));
    }
    {  // forward-corrected, in both the probabilities and the T logits
      const int C = random_int(rng, 2, 5), n = random_int(rng, 1, 5);
      std::vector<std::vector<double>> p;
      std::vector<int> y;
      std::vector<bool> mask;
      for (int i = 0; i < n; ++i) {
        p.push_back(softmax(normal_vector(C, rng)));
        y.push_back(random_int(rng, 0, C - 1));
        mask.push_back(i == 0 || uniform01(rng) < 0.6);
      }
      const auto logits = normal_vector(static_cast<std::size_t>(C) * C, rng);
      const learner::NoiseAbsorptionMatrix T(C, logits);
      const auto loss = learner::forward_corrected_loss(p, T, y, mask, 1e-8);
      const auto num_t = numerical_gradient(
          [&](const std::vector<double>& l) {
            return learner::forward_corrected_loss(p, learner::NoiseAbsorptionMatrix(C, l), y, mask, 1e-8).value;
          },
          logits);
      std::vector<double> flat, analytic;
      for (int i = 0; i < n; ++i) {
        flat.insert(flat.end(), p[i].begin(), p[i].end());
        analytic.insert(analytic.end(), loss.grad_probs[i].begin(), loss.grad_probs[i].end());
      }
      const auto num_p = numerical_gradient(
          [&](const std::vector<double>& f) {
            std::vector<std::vector<double>> q(n);
            for (int i = 0; i < n; ++i) q[i].assign(f.begin() + i * C, f.begin() + (i + 1) * C);
            return learner::forward_corrected_loss(q, T, y, mask, 1e-8).value;
          },
          flat);
      worst[2] = std::max({worst[2], relative_error(loss.grad_logits, num_t), relative_error(analytic, num_p)});
    }
    {  // total objective through the network
      const learner::ModelShape shape{random_int(rng, 2, 4), random_int(rng, 3, 5), random_int(rng, 2, 4),
                                      random_int(rng, 2, 4)};
      const auto params = learner::ModelParams::initialize(shape, trial + 50);
      const int n = random_int(rng, 1, 4);
      std::vector<std::vector<double>> x;
      std::vector<int> y;
      std::vector<bool> mask;
      for (int i = 0; i < n; ++i) {
        x.push_back(normal_vector(shape.input_dim, rng));
        y.push_back(random_int(rng, 0, shape.num_classes - 1));
        mask.push_back(i == 0 || uniform01(rng) < 0.5);
      }
      learner::LossConfig cfg;
      cfg.lambda_s = 0.5 + uniform01(rng);
      cfg.lambda_n = 0.5 + uniform01(rng);
      const auto logits = normal_vector(static_cast<std::size_t>(shape.num_classes) * shape.num_classes, rng);
      const learner::NoiseAbsorptionMatrix T(shape.num_classes, logits);
      const auto loss = learner::total_loss(x, y, params, T, mask, cfg);
      const std::vector<double> theta(params.values().begin(), params.values().end());
      const auto num_params = numerical_gradient(
          [&](const std::vector<double>& th) {
            learner::ModelParams q(shape);
            std::copy(th.begin(), th.end(), q.values().begin());
            return learner::total_loss(x, y, q, T, mask, cfg).value;
          },
          theta);
      const std::vector<double> analytic(loss.grad.params.values().begin(), loss.grad.params.values().end());
      const auto num_t = numerical_gradient(
          [&](const std::vector<double>& l) {
            return learner::total_loss(x, y, params, learner::NoiseAbsorptionMatrix(shape.num_classes, l), mask, cfg)
                .value;
          },
          logits);
      worst[3] = std::max({worst[3], relative_error(analytic, num_params), relative_error(loss.grad.absorption, num_t)});
    }
  }
  Outcome out;
  out.pass = *std::max_element(worst, worst + 4) < kGradTol;
  out.detail = format("max rel err nt_xent %.1e, sce %.1e, forward %.1e, total %.1e (<1e-4, %d instances each)",
                      worst[0], worst[1], worst[2], worst[3], kGradInstances);
  return out;
}

Outcome kernel_fidelity() {
  Outcome out;
  const int n = 10000;
  std::vector<int> labels(n);
  for (int i = 0; i < n; ++i) labels[i] = i % 4;
  for (auto flavor : {noise::Flavor::kSymmetric, noise::Flavor::kPairflip}) {
    const auto k = noise::build_kernel({flavor, noise::Pattern::kGlobalized, 0.4}, 4, {0, 1, 2, 3});
    const auto rec = noise::inject_noise(labels, k, 99);
    std::vector<std::vector<double>> counts(4, std::vector<double>(4, 0.0));
    for (int i = 0; i < n; ++i) counts[rec.true_labels[i]][rec.observed_labels[i]] += 1.0;
    double dev = 0.0;
    for (int a = 0; a < 4; ++a) {
      const double row = std::accumulate(counts[a].begin(), counts[a].end(), 0.0);
      for (int b = 0; b < 4; ++b) dev = std::max(dev, std::abs(counts[a][b] / row - k.at(a, b)));
    }
    out.pass &= dev <= 0.02;
    out.detail += format("%s max dev %.4f; ", noise::to_string(flavor).c_str(), dev);
  }
  Rng rng(5);
  long outside = 0;
  for (int trial = 0; trial < kPropertyCases; ++trial) {
    const int C = random_int(rng, 2, 9);
    std::vector<int> support;
    for (int c = 0; c < C; ++c)
      if (uniform01(rng) < 0.5) support.push_back(c);
    if (support.empty()) support.push_back(random_int(rng, 0, C - 1));
    const noise::NoiseSpec spec{trial % 2 ? noise::Flavor::kPairflip : noise::Flavor::kSymmetric,
                                noise::Pattern::kLocalized, 0.45 * uniform01(rng)};
    const auto kernels = noise::build_client_kernels(spec, C, {support});
    std::vector<int> ys;
    for (int i = 0; i < 40; ++i) ys.push_back(support[i % support.size()]);
    for (int y : noise::inject_noise(ys, *kernels[0], trial).observed_labels) {
      outside += !std::binary_search(support.begin(), support.end(), y);
    }
  }
  out.pass &= outside == 0;
  out.detail += format("localized labels outside support: %ld (bound 0.02 / exact 0)", outside);
  return out;
}

Outcome aggregation_exactness() {
  RunManifest m = comparative_manifest();
  m.rounds.total_rounds = 10;
  m.rounds.stage1_rounds = 4;
  m.data.synthetic.n_per_class = 40;
  m.data.n_test_per_class = 20;
  m.rounds.local_epochs = 1;
  federation::Experiment exp(m);
  int rounds = 0;
  double worst = 0.0;
  exp.run([&](const federation::RoundReport& r) {
    ++rounds;
    long double total = 0.0L;
    for (const auto& u : r.updates) total += static_cast<long double>(u.num_samples);
    const std::size_t enc = r.aggregated.shape().encoder_size();
    for (std::size_t i = 0; i < r.aggregated.values().size(); ++i) {
      long double acc = 0.0L;
      for (const auto& u : r.updates) acc += static_cast<long double>(u.num_samples) * u.params.values()[i];
      // Stage I leaves the classifier untouched.
      const double expected =
          (!r.stage2 && i >= enc) ? r.previous_global.values()[i] : static_cast<double>(acc / total);
      worst = std::max(worst, std::abs(r.aggregated.values()[i] - expected));
    }
  });
  Outcome out;
  out.pass = rounds == 10 && worst <= 1e-12;
  out.detail = format("%d rounds checked, max |aggregate - brute force| %.2e (<=1e-12)", rounds, worst);
  return out;
}

Outcome oracle_detection() {
  const auto t0 = Clock::now();
  const int C = 4, d = 16, per_class = 100;
  const double sigma = 0.15;
  RunManifest m;
  m.rounds.clusters = C;
  Outcome out;
  double worst_cra = 1.0, worst_nn = 1.0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    Rng rng(seed * 31);
    std::normal_distribution<double> normal(0.0, sigma);
    auto jitter = [&](int c) {
      std::vector<double> v(d, 0.0);
      v[c] = 1.0;
      for (double& x : v) x += normal(rng);
      return directional::UnitVector::normalized(v);
    };
    federation::DetectionInput input;
    std::vector<int> truth;
    int nearest_ok = 0;
    for (int c = 0; c < C; ++c) {
      for (int i = 0; i < per_class; ++i) {
        input.embeddings.push_back(jitter(c));
        input.view1.push_back(jitter(c));
        input.view2.push_back(jitter(c));
        truth.push_back(c);
        const auto& z = input.embeddings.back();
        int best = 0;
        for (int a = 1; a < C; ++a)
          if (z[a] > z[best]) best = a;
        nearest_ok += best == c;
      }
    }
    worst_nn = std::min(worst_nn, static_cast<double>(nearest_ok) / truth.size());
    const auto kernel = noise::build_symmetric_kernel(C, {0, 1, 2, 3}, 0.4);
    const auto rec = noise::inject_noise(truth, kernel, seed * 31 + 1);
    input.observed_labels = rec.observed_labels;
    std::vector<bool> clean;
    for (bool noisy : rec.is_noisy_true) clean.push_back(!noisy);
    federation::ClientState client(data::ClientShard{}, C);
    federation::DetectionOutcome det;
    // Uniform B bootstraps the first pass; later passes use B learned from
    // the clean subset, as in consecutive Stage II rounds.
    for (int pass = 0; pass < 3; ++pass) det = federation::geometry_detection(client, input, C, m, seed + pass);
    worst_cra = std::min(worst_cra, metrics::cra(det.partition.clean_mask, clean));
  }
  const double secs = seconds_since(t0);
  out.pass = worst_nn >= 0.99 && worst_cra > 0.9 && worst_cra > 0.6 && secs < 60.0;
  out.detail = format("min CRA %.4f (>0.9, majority 0.6), nearest-anchor acc %.4f (>=0.99), %.2fs (<60s), 5 seeds",
                      worst_cra, worst_nn, secs);
  return out;
}

Outcome end_to_end() {
  const auto t0 = Clock::now();
  Outcome out;
  bool acc_ok = true;
  double geo_sum = 0.0, sl_sum = 0.0;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    RunManifest m = comparative_manifest();
    m.master_seed = seed;
    const auto full = federation::run_experiment(m);
    const auto plain = federation::run_experiment(cli::apply_ablation(m, "fedavg_ce"));
    double geo = 0.0, sl = 0.0;
    int n = 0;
    for (const auto& r : full) {
      if (!r.cra || !r.cra_small_loss) continue;
      geo += *r.cra;
      sl += *r.cra_small_loss;
      ++n;
    }
    geo /= n;
    sl /= n;
    geo_sum += geo;
    sl_sum += sl;
    acc_ok &= full.back().accuracy > plain.back().accuracy;
    out.detail += format("seed %llu acc %.4f vs %.4f, CRA %.4f vs %.4f; ", static_cast<unsigned long long>(seed),
                         full.back().accuracy, plain.back().accuracy, geo, sl);
  }
  const double secs = seconds_since(t0);
  const bool cra_ok = geo_sum > sl_sum;
  out.pass = acc_ok && cra_ok && secs < 600.0;
  out.detail += format("(a) accuracy %s, (b) mean CRA geometry %.4f vs small-loss %.4f %s, %.1fs (<600s)",
                       acc_ok ? "ok" : "FAILED", geo_sum / 3, sl_sum / 3, cra_ok ? "ok" : "FAILED", secs);
  return out;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Outcome determinism() {
  const fs::path root = fs::temp_directory_path() / "fedrg_acceptance_determinism";
  fs::remove_all(root);
  RunManifest m = comparative_manifest();
  cli::run_to_directory(m, (root / "first").string());
  const RunManifest resolved = load_manifest((root / "first" / "manifest.resolved.json").string());
  cli::run_to_directory(resolved, (root / "second").string());
  const auto a = slurp(root / "first" / "metrics.csv");
  const auto b = slurp(root / "second" / "metrics.csv");
  fs::remove_all(root);
  Outcome out;
  out.pass = !a.empty() && a == b;
  out.detail = format("metrics.csv %zu bytes, byte-identical across two runs of the resolved manifest: %s",
                      a.size(), a == b ? "yes" : "no");
  return out;
}

Outcome invariant_suites() {
  Rng rng(9001);
  int failures[5] = {0, 0, 0, 0, 0};

  for (int trial = 0; trial < kPropertyCases; ++trial) {  // responsibility normalization
    const int d = random_int(rng, 2, 16), G = random_int(rng, 1, 8);
    std::vector<double> raw(G + 1);
    for (double& w : raw) w = uniform01(rng) + 1e-3;
    const double total = std::accumulate(raw.begin(), raw.end(), 0.0);
    std::vector<directional::WeightedComponent> comps;
    double comp_sum = 0.0;
    for (int g = 0; g < G; ++g) {
      comps.push_back({raw[g + 1] / total, {uniform_on_sphere(d, rng), 200.0 * uniform01(rng)}});
      comp_sum += comps.back().weight;
    }
    const directional::VmfMixture mix(1.0 - comp_sum, comps);
    const auto z = uniform_on_sphere(d, rng);
    for (const auto& g : {directional::responsibilities(mix, z),
                          directional::tempered_responsibilities(mix, z, std::max(1e-3, uniform01(rng)))}) {
      const double s = std::accumulate(g.begin(), g.end(), 0.0);
      const bool neg = std::any_of(g.begin(), g.end(), [](double v) { return v < 0.0; });
      failures[0] += std::abs(s - 1.0) > 1e-9 || neg;
    }
  }

  for (int trial = 0; trial < kPropertyCases; ++trial) {  // class-geometry rows
    const int C = random_int(rng, 1, 10), G = random_int(rng, 1, 12), n = random_int(rng, 1, 60);
    const double eta = std::pow(10.0, -6.0 + 6.0 * uniform01(rng));
    std::vector<directional::ResponsibilityVector> resp;
    std::vector<int> labels;
    for (int i = 0; i < n; ++i) {
      std::vector<double> r(G + 1);
      for (double& v : r) v = uniform01(rng);
      const double s = std::accumulate(r.begin(), r.end(), 0.0);
      for (double& v : r) v /= s;
      resp.push_back(r);
      labels.push_back(random_int(rng, 0, C - 1));
    }
    const auto B = evidence::update_class_geometry(resp, labels, C, eta);
    for (int c = 0; c < C; ++c) {
      const auto row = B.row(c);
      const double s = std::accumulate(row.begin(), row.end(), 0.0);
      failures[1] += std::abs(s - 1.0) > 1e-12 || std::any_of(row.begin(), row.end(), [](double v) { return v <= 0.0; });
    }
  }

  for (int trial = 0; trial < kPropertyCases; ++trial) {  // absorption rows
    const int C = random_int(rng, 2, 10);
    auto logits = normal_vector(static_cast<std::size_t>(C) * C, rng);
    for (double& l : logits) l *= 20.0;
    const auto t = learner::NoiseAbsorptionMatrix(C, logits).effective();
    for (int c = 0; c < C; ++c) {
      double s = 0.0;
      bool neg = false;
      for (int j = 0; j < C; ++j) {
        s += t[c * C + j];
        neg |= t[c * C + j] < 0.0;
      }
      failures[2] += std::abs(s - 1.0) > 1e-12 || neg;
    }
  }

  for (int trial = 0; trial < kPropertyCases; ++trial) {  // partition exhaustiveness
    const int C = random_int(rng, 2, 6), per = random_int(rng, 1, 12);
    const auto ds = data::generate_synthetic({C, per, 3, 4.0, 1.0}, trial);
    const int K = random_int(rng, 1, static_cast<int>(std::min<std::size_t>(12, ds.samples.size())));
    const auto shards = data::dirichlet_partition(ds, K, std::pow(10.0, -2.0 + 4.0 * uniform01(rng)), trial + 7);
    std::multiset<int> ids;
    for (const auto& s : shards)
      for (const auto& x : s.samples) ids.insert(x.sample_id);
    failures[3] += ids.size() != ds.samples.size() || std::set<int>(ids.begin(), ids.end()).size() != ids.size();

    const int n = random_int(rng, 4, 80);
    std::vector<double> scores(n);
    for (double& v : scores) v = uniform01(rng);
    const auto part = evidence::gmm_partition(scores, evidence::GmmConfig{});
    const double wsum = part.gmm_weights[0] + part.gmm_weights[1];
    failures[3] += part.clean_mask.size() != static_cast<std::size_t>(n) || std::abs(wsum - 1.0) > 1e-9;
  }

  for (int trial = 0; trial < kPropertyCases; ++trial) {  // CRA symmetry
    const int n = random_int(rng, 1, 60);
    std::vector<bool> a(n), b(n);
    for (int i = 0; i < n; ++i) {
      a[i] = uniform01(rng) < 0.5;
      b[i] = uniform01(rng) < 0.5;
    }
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    shuffle(order, rng);
    std::vector<bool> pa(n), pb(n);
    for (int i = 0; i < n; ++i) {
      pa[i] = a[order[i]];
      pb[i] = b[order[i]];
    }
    failures[4] += metrics::cra(a, b) != metrics::cra(b, a) || metrics::cra(a, b) != metrics::cra(pa, pb);
  }

  Outcome out;
  out.pass = std::all_of(failures, failures + 5, [](int f) { return f == 0; });
  out.detail = format(
      "%d cases each; failures: responsibilities %d, B rows %d, T rows %d, partitions %d, CRA symmetry %d",
      kPropertyCases, failures[0], failures[1], failures[2], failures[3], failures[4]);
  return out;
}

}  // namespace

int main() {
  const std::pair<const char*, std::function<Outcome()>> criteria[] = {
      {"density normalization", density_normalization},
      {"EM planted recovery", em_recovery},
      {"gradient fidelity", gradient_fidelity},
      {"noise-kernel fidelity", kernel_fidelity},
      {"aggregation exactness", aggregation_exactness},
      {"oracle-geometry detection", oracle_detection},
      {"end-to-end comparative", end_to_end},
      {"determinism", determinism},
      {"invariant suites", invariant_suites},
  };
  int failed = 0;
  int index = 0;
  for (const auto& [name, check] : criteria) {
    ++index;
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("criterion %d %s: %s  %s\n", index, name, o.pass ? "PASS" : "FAIL", o.detail.c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
