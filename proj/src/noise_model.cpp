#include "fedrg/noise_model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "fedrg/rng.hpp"

namespace fedrg::noise {

std::string to_string(Flavor f) { return f == Flavor::kSymmetric ? "symmetric" : "pairflip"; }

std::string to_string(Pattern p) { return p == Pattern::kGlobalized ? "globalized" : "localized"; }

Flavor parse_flavor(const std::string& s) {
  if (s == "symmetric") return Flavor::kSymmetric;
  if (s == "pairflip") return Flavor::kPairflip;
  throw std::invalid_argument("unknown noise flavor '" + s + "'");
}

Pattern parse_pattern(const std::string& s) {
  if (s == "globalized") return Pattern::kGlobalized;
  if (s == "localized") return Pattern::kLocalized;
  throw std::invalid_argument("unknown noise pattern '" + s + "'");
}

void NoiseSpec::validate() const {
  if (!(rate >= 0.0 && rate < 1.0)) throw std::invalid_argument("noise.rate must satisfy 0 <= rate < 1");
  if (flavor == Flavor::kPairflip && !(rate < 0.5)) {
    throw std::invalid_argument("noise.rate must satisfy rate < 0.5 for pairflip noise");
  }
}

TransitionKernel::TransitionKernel(int num_classes, std::vector<int> support,
                                   std::vector<double> matrix)
    : num_classes_(num_classes), support_(std::move(support)), matrix_(std::move(matrix)) {
  if (num_classes_ < 1) throw std::invalid_argument("kernel needs at least one class");
  if (matrix_.size() != static_cast<std::size_t>(num_classes_) * num_classes_) {
    throw std::invalid_argument("kernel matrix has the wrong size");
  }
  std::sort(support_.begin(), support_.end());
  for (int c = 0; c < num_classes_; ++c) {
    double s = 0.0;
    for (int j = 0; j < num_classes_; ++j) {
      const double v = at(c, j);
      if (!(v >= 0.0 && v <= 1.0)) throw std::invalid_argument("kernel entries must lie in [0,1]");
      if (v > 0.0 && !(in_support(c) && in_support(j))) {
        throw std::invalid_argument("kernel puts mass outside its support");
      }
      s += v;
    }
    if (in_support(c) && std::abs(s - 1.0) > 1e-9) throw std::invalid_argument("kernel rows must sum to 1");
  }
}

bool TransitionKernel::in_support(int c) const {
  return std::binary_search(support_.begin(), support_.end(), c);
}

nlohmann::json TransitionKernel::to_json() const {
  return {{"num_classes", num_classes_}, {"support", support_}, {"matrix", matrix_}};
}

namespace {

std::vector<int> checked_classes(int num_classes, std::vector<int> classes, double rate) {
  std::sort(classes.begin(), classes.end());
  classes.erase(std::unique(classes.begin(), classes.end()), classes.end());
  if (classes.empty()) throw std::invalid_argument("kernel needs a non-empty class set");
  for (int c : classes) {
    if (c < 0 || c >= num_classes) throw std::invalid_argument("kernel class out of range");
  }
  if (!(rate >= 0.0 && rate < 1.0)) throw std::invalid_argument("noise rate must be in [0,1)");
  if (classes.size() < 2 && rate > 0.0) {
    throw std::invalid_argument("a single admissible class has no flip target");
  }
  return classes;
}

}  // namespace

TransitionKernel build_symmetric_kernel(int num_classes, std::vector<int> classes, double rate) {
  classes = checked_classes(num_classes, std::move(classes), rate);
  std::vector<double> m(static_cast<std::size_t>(num_classes) * num_classes, 0.0);
  const double off = classes.size() > 1 ? rate / (classes.size() - 1.0) : 0.0;
  for (int i : classes) {
    for (int j : classes) {
      m[static_cast<std::size_t>(i) * num_classes + j] = i == j ? 1.0 - rate : off;
    }
  }
  return TransitionKernel(num_classes, std::move(classes), std::move(m));
}

TransitionKernel build_pairflip_kernel(int num_classes, std::vector<int> classes, double rate) {
  if (!(rate < 0.5)) throw std::invalid_argument("pairflip rate must be < 0.5");
  classes = checked_classes(num_classes, std::move(classes), rate);
  std::vector<double> m(static_cast<std::size_t>(num_classes) * num_classes, 0.0);
  for (std::size_t k = 0; k < classes.size(); ++k) {
    const int i = classes[k];
    const int next = classes[(k + 1) % classes.size()];
    m[static_cast<std::size_t>(i) * num_classes + i] += 1.0 - rate;
    m[static_cast<std::size_t>(i) * num_classes + next] += rate;
  }
  return TransitionKernel(num_classes, std::move(classes), std::move(m));
}

TransitionKernel build_kernel(const NoiseSpec& spec, int num_classes, std::vector<int> classes) {
  spec.validate();
  // A localized client holding one class has nothing to flip to.
  const double rate = classes.size() < 2 ? 0.0 : spec.rate;
  return spec.flavor == Flavor::kSymmetric
             ? build_symmetric_kernel(num_classes, std::move(classes), rate)
             : build_pairflip_kernel(num_classes, std::move(classes), rate);
}

CorruptionRecord inject_noise(std::span<const int> labels, const TransitionKernel& kernel,
                              std::uint64_t rng_seed) {
  Rng rng(rng_seed);
  CorruptionRecord rec;
  rec.true_labels.assign(labels.begin(), labels.end());
  rec.observed_labels.resize(labels.size());
  rec.is_noisy_true.resize(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int y = labels[i];
    if (y < 0 || y >= kernel.num_classes() || !kernel.in_support(y)) {
      throw std::invalid_argument("label " + std::to_string(y) + " outside kernel support");
    }
    const auto row = kernel.row(y);
    const double u = uniform01(rng);
    int obs = y;
    double acc = 0.0;
    for (int j = 0; j < kernel.num_classes(); ++j) {
      if (row[j] == 0.0) continue;
      acc += row[j];
      obs = j;
      if (u < acc) break;
    }
    rec.observed_labels[i] = obs;
    rec.is_noisy_true[i] = obs != y;
  }
  return rec;
}

std::vector<KernelPtr> build_client_kernels(const NoiseSpec& spec, int num_classes,
                                            const std::vector<std::vector<int>>& supports) {
  std::vector<KernelPtr> out;
  if (spec.pattern == Pattern::kGlobalized) {
    std::vector<int> all(num_classes);
    for (int c = 0; c < num_classes; ++c) all[c] = c;
    auto shared = std::make_shared<const TransitionKernel>(build_kernel(spec, num_classes, all));
    out.assign(supports.size(), shared);
    return out;
  }
  for (const auto& s : supports) {
    out.push_back(std::make_shared<const TransitionKernel>(build_kernel(spec, num_classes, s)));
  }
  return out;
}

}  // namespace fedrg::noise
