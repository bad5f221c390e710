#pragma once

// Label-noise transition kernels and noise injection.

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace fedrg::noise {

enum class Flavor { kSymmetric, kPairflip };
enum class Pattern { kGlobalized, kLocalized };

std::string to_string(Flavor f);
std::string to_string(Pattern p);
Flavor parse_flavor(const std::string& s);
Pattern parse_pattern(const std::string& s);

struct NoiseSpec {
  Flavor flavor = Flavor::kSymmetric;
  Pattern pattern = Pattern::kGlobalized;
  double rate = 0.4;
  // Throws std::invalid_argument naming the violated constraint.
  void validate() const;
};

// C x C matrix, entry (i, j) = p(observed = j | true = i). Rows for classes
// outside the support are all zero and may not be sampled from.
class TransitionKernel {
 public:
  TransitionKernel(int num_classes, std::vector<int> support, std::vector<double> matrix);

  int num_classes() const { return num_classes_; }
  const std::vector<int>& support() const { return support_; }
  bool in_support(int c) const;
  double at(int from, int to) const {
    return matrix_[static_cast<std::size_t>(from) * num_classes_ + to];
  }
  std::span<const double> row(int from) const {
    return std::span<const double>(matrix_).subspan(static_cast<std::size_t>(from) * num_classes_,
                                                    num_classes_);
  }

  nlohmann::json to_json() const;

 private:
  int num_classes_;
  std::vector<int> support_;
  std::vector<double> matrix_;
};

using KernelPtr = std::shared_ptr<const TransitionKernel>;

// `classes` is the admissible set (the whole label space for the globalized
// pattern, a client's label support for the localized one).
TransitionKernel build_symmetric_kernel(int num_classes, std::vector<int> classes, double rate);

// Each class keeps 1 - rate and sends rate to its cyclic successor within the
// sorted admissible set.
TransitionKernel build_pairflip_kernel(int num_classes, std::vector<int> classes, double rate);

TransitionKernel build_kernel(const NoiseSpec& spec, int num_classes, std::vector<int> classes);

struct CorruptionRecord {
  std::vector<int> true_labels;
  std::vector<int> observed_labels;
  std::vector<bool> is_noisy_true;
};

CorruptionRecord inject_noise(std::span<const int> labels, const TransitionKernel& kernel,
                              std::uint64_t rng_seed);

// One kernel per client. Globalized specs share a single kernel object;
// localized specs build one per client from its label support.
std::vector<KernelPtr> build_client_kernels(const NoiseSpec& spec, int num_classes,
                                            const std::vector<std::vector<int>>& supports);

}  // namespace fedrg::noise
