#pragma once

// Run manifest: every knob of an experiment plus the master seed. Parsed from
// JSON with strict unknown-field rejection.

#include <cstdint>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "fedrg/data_plane.hpp"
#include "fedrg/directional_stats.hpp"
#include "fedrg/geometry_evidence.hpp"
#include "fedrg/learner.hpp"
#include "fedrg/noise_model.hpp"

namespace fedrg {

class ManifestError : public std::runtime_error {
 public:
  ManifestError(const std::string& field, const std::string& message)
      : std::runtime_error(field + ": " + message), field_(field) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

struct DataConfig {
  data::SyntheticConfig synthetic;
  int n_test_per_class = 200;
  int num_clients = 10;
  double dirichlet_alpha = 0.1;
  std::string csv_path;  // optional external dataset; synthetic when empty
};

struct RoundConfig {
  int total_rounds = 60;
  int stage1_rounds = 15;
  int local_epochs = 2;
  int clients_per_round = 10;
  int clusters = 10;
  int batch_size = 32;
  double learning_rate = 0.05;
  int checkpoint_every = 0;
};

enum class Detector { kGeometry, kSmallLoss, kNone };

std::string to_string(Detector d);
Detector parse_detector(const std::string& s);

struct MethodConfig {
  Detector detector = Detector::kGeometry;
  bool aggregate_absorption = false;
  bool shadow_small_loss = true;  // also score the small-loss detector on every round
};

struct RunManifest {
  std::uint64_t master_seed = 0;
  std::string output_dir = "runs/default";
  DataConfig data;
  noise::NoiseSpec noise;
  RoundConfig rounds;
  learner::LossConfig loss;
  directional::TemperingConfig tempering;
  evidence::GmmConfig gmm;
  directional::EmConfig em;
  data::AugmentationConfig augmentation;
  int hidden = 32;
  int embed_dim = 16;
  double eta = evidence::kDefaultEta;
  MethodConfig method;

  // Throws ManifestError naming the offending field.
  void validate() const;
  learner::ModelShape model_shape() const;
};

RunManifest manifest_from_json(const nlohmann::json& j);
nlohmann::json manifest_to_json(const RunManifest& m);
RunManifest load_manifest(const std::string& path);

}  // namespace fedrg
