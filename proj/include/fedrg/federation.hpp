#pragma once

// Round orchestration: client sampling, the contrastive stage, the detection
// and robust-training stage, and server aggregation. Client geometry (vMF
// mixture, B, T) stays with the client and never enters a payload unless the
// absorption-averaging ablation is switched on.

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "fedrg/data_plane.hpp"
#include "fedrg/directional_stats.hpp"
#include "fedrg/geometry_evidence.hpp"
#include "fedrg/learner.hpp"
#include "fedrg/manifest.hpp"
#include "fedrg/metrics.hpp"
#include "fedrg/noise_model.hpp"

namespace fedrg::federation {

class RunError : public std::runtime_error {
 public:
  RunError(int round, int client_id, const std::string& what)
      : std::runtime_error("round " + std::to_string(round) + ", client " +
                           std::to_string(client_id) + ": " + what),
        round_(round),
        client_id_(client_id) {}
  int round() const { return round_; }
  int client_id() const { return client_id_; }

 private:
  int round_;
  int client_id_;
};

struct ClientState {
  ClientState(data::ClientShard s, int num_classes)
      : client_id(s.client_id), shard(std::move(s)), absorption(num_classes) {}

  int client_id;
  data::ClientShard shard;
  std::optional<directional::VmfMixture> vmf;
  std::optional<evidence::ClassGeometryMatrix> geometry;
  learner::NoiseAbsorptionMatrix absorption;
  std::optional<evidence::PartitionResult> last_partition;

  nlohmann::json to_json() const;
};

// What a client sends to the server.
struct ClientUpdate {
  int client_id = 0;
  std::size_t num_samples = 0;
  learner::ModelParams params;
  std::optional<learner::NoiseAbsorptionMatrix> absorption;  // ablation only

  nlohmann::json to_json() const;
};

// Uniform sample of m distinct ids from [0, K), sorted; deterministic in
// (rng_seed, round).
std::vector<int> sample_clients(int K, int m, int round, std::uint64_t rng_seed);

// Coordinate-wise average with weights normalized to sum to one.
learner::ModelParams aggregate(std::span<const learner::ModelParams> models,
                               std::span<const double> weights);

// E epochs of NT-Xent on two-view augmentations. Only the unlabeled view of
// the shard is visible here.
learner::ModelParams stage1_client_round(const data::UnlabeledView& shard,
                                         const learner::ModelParams& global,
                                         const RunManifest& manifest, int client_id, int round);

struct DetectionInput {
  std::vector<directional::UnitVector> embeddings;
  std::vector<directional::UnitVector> view1;
  std::vector<directional::UnitVector> view2;
  std::vector<int> observed_labels;
};

struct DetectionOutcome {
  evidence::PartitionResult partition;
  std::vector<directional::ResponsibilityVector> tempered;
  std::vector<double> scores;
  bool vmf_fallback = false;
};

// Steps (2)-(6) of a detection round on precomputed embeddings: refit the
// mixture (warm-started from the client's previous one), temper with two-view
// consistency, score against B, split with the GMM, and refresh B from the
// clean subset. Updates the client's vmf / geometry / last_partition.
DetectionOutcome geometry_detection(ClientState& client, const DetectionInput& input,
                                    int num_classes, const RunManifest& manifest,
                                    std::uint64_t rng_seed);

// Small-loss comparator: GMM on per-sample cross-entropy of the observed label.
evidence::PartitionResult small_loss_detection(const learner::ModelParams& params,
                                               const data::ClientShard& shard,
                                               const evidence::GmmConfig& gmm);

struct Stage2Result {
  learner::ModelParams params;
  evidence::PartitionResult partition;
  std::optional<evidence::PartitionResult> shadow_partition;
  bool vmf_fallback = false;
};

Stage2Result stage2_client_round(ClientState& client, const learner::ModelParams& global,
                                 const RunManifest& manifest, int round);

struct RoundReport {
  int round = 0;  // 1-based index of the record this round produced
  bool stage2 = false;
  const std::vector<ClientUpdate>& updates;
  const learner::ModelParams& previous_global;
  const learner::ModelParams& aggregated;
  const std::vector<ClientState>& clients;
  const metrics::MetricsRecord& record;
};

using RoundObserver = std::function<void(const RoundReport&)>;

class Experiment {
 public:
  // Generates data, partitions it, builds kernels and injects noise.
  explicit Experiment(RunManifest manifest);

  const RunManifest& manifest() const { return manifest_; }
  const std::vector<ClientState>& clients() const { return clients_; }
  const std::vector<noise::KernelPtr>& kernels() const { return kernels_; }
  const std::vector<noise::CorruptionRecord>& corruption() const { return corruption_; }
  const data::Dataset& test_set() const { return test_; }
  const learner::ModelParams& global() const { return global_; }
  int num_classes() const { return num_classes_; }

  // Runs all rounds; returns total_rounds + 1 records (round 0 is the initial
  // model).
  std::vector<metrics::MetricsRecord> run(const RoundObserver& observer = {});

 private:
  metrics::MetricsRecord evaluate(int round) const;

  RunManifest manifest_;
  int num_classes_ = 0;
  std::vector<ClientState> clients_;
  std::vector<noise::KernelPtr> kernels_;
  // Ground truth per client, read only for metrics.
  std::vector<noise::CorruptionRecord> corruption_;
  data::Dataset test_;
  learner::ModelParams global_;
};

std::vector<metrics::MetricsRecord> run_experiment(const RunManifest& manifest,
                                                   const RoundObserver& observer = {});

}  // namespace fedrg::federation
