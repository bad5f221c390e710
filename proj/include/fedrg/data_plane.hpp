#pragma once

// Synthetic data, Dirichlet non-IID partitioning and two-view augmentation.

#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

namespace fedrg::data {

struct Sample {
  std::vector<double> features;
  int true_label = 0;
  int observed_label = 0;
  int sample_id = 0;
};

struct Dataset {
  int num_classes = 0;
  int input_dim = 0;
  std::vector<Sample> samples;
  std::vector<std::vector<double>> anchors;  // empty for loaded datasets
};

struct ClientShard {
  int client_id = 0;
  std::vector<Sample> samples;
  std::vector<int> label_support;  // sorted distinct true labels
};

// Read-only view of a shard that exposes features but no labels; the
// contrastive stage only ever sees this type.
class UnlabeledView {
 public:
  explicit UnlabeledView(const ClientShard& shard) : shard_(&shard) {}
  std::size_t size() const { return shard_->samples.size(); }
  const std::vector<double>& features(std::size_t i) const { return shard_->samples[i].features; }
  int sample_id(std::size_t i) const { return shard_->samples[i].sample_id; }

 private:
  const ClientShard* shard_;
};

struct SyntheticConfig {
  int num_classes = 4;
  int n_per_class = 100;
  int input_dim = 16;
  double class_separation = 4.0;
  double feature_sigma = 1.0;
};

// Class anchors at distance `class_separation` from the origin, pairwise at
// least `class_separation` apart; samples are isotropic Gaussians around them.
Dataset generate_synthetic(const SyntheticConfig& cfg, std::uint64_t rng_seed);

// Fresh samples around existing anchors (e.g. a held-out test split). Sample
// ids start at `first_id`.
Dataset sample_from_anchors(const std::vector<std::vector<double>>& anchors, int n_per_class,
                            double feature_sigma, std::uint64_t rng_seed, int first_id = 0);

std::vector<ClientShard> dirichlet_partition(const Dataset& dataset, int num_clients, double alpha,
                                             std::uint64_t rng_seed);

struct AugmentationConfig {
  double jitter_sigma = 0.1;
  double mask_fraction = 0.2;
  void validate() const;
};

std::pair<std::vector<double>, std::vector<double>> augment_two_views(
    const std::vector<double>& x, const AugmentationConfig& cfg, std::uint64_t rng_seed);

// CSV with columns sample_id, label, f0..f{d-1}; label doubles as the true
// and observed label.
Dataset load_csv_dataset(std::istream& in);

void write_shards_csv(std::ostream& out, const std::vector<ClientShard>& shards);

}  // namespace fedrg::data
