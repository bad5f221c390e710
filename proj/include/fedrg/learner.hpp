#pragma once

// Tiny differentiable model: a tanh MLP encoder projected onto the unit
// sphere, a linear classifier on the sphere, and a per-client noise
// absorption matrix. Gradients are hand-written reverse mode for this fixed
// architecture.

#include <cstdint>
#include <span>
#include <vector>

#include <json.hpp>

#include "fedrg/directional_stats.hpp"

namespace fedrg::learner {

struct ModelShape {
  int input_dim = 16;
  int hidden = 32;
  int embed_dim = 16;
  int num_classes = 4;

  bool operator==(const ModelShape&) const = default;
  std::size_t encoder_size() const;
  std::size_t total_size() const;
};

// Flat parameter vector. Layout: w1 (hidden x input), b1, w2 (embed x hidden),
// b2, wc (classes x embed), bc. The encoder is the prefix of length
// shape().encoder_size().
class ModelParams {
 public:
  explicit ModelParams(const ModelShape& shape);

  // Weights ~ N(0, 1/fan_in), biases zero.
  static ModelParams initialize(const ModelShape& shape, std::uint64_t rng_seed);

  const ModelShape& shape() const { return shape_; }
  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }

  double& w1(int h, int i) { return values_[off_w1() + h * shape_.input_dim + i]; }
  double w1(int h, int i) const { return values_[off_w1() + h * shape_.input_dim + i]; }
  double& b1(int h) { return values_[off_b1() + h]; }
  double b1(int h) const { return values_[off_b1() + h]; }
  double& w2(int e, int h) { return values_[off_w2() + e * shape_.hidden + h]; }
  double w2(int e, int h) const { return values_[off_w2() + e * shape_.hidden + h]; }
  double& b2(int e) { return values_[off_b2() + e]; }
  double b2(int e) const { return values_[off_b2() + e]; }
  double& wc(int c, int e) { return values_[off_wc() + c * shape_.embed_dim + e]; }
  double wc(int c, int e) const { return values_[off_wc() + c * shape_.embed_dim + e]; }
  double& bc(int c) { return values_[off_bc() + c]; }
  double bc(int c) const { return values_[off_bc() + c]; }

  nlohmann::json to_json() const;
  static ModelParams from_json(const nlohmann::json& j);

 private:
  std::size_t off_w1() const { return 0; }
  std::size_t off_b1() const { return off_w1() + std::size_t(shape_.hidden) * shape_.input_dim; }
  std::size_t off_w2() const { return off_b1() + shape_.hidden; }
  std::size_t off_b2() const { return off_w2() + std::size_t(shape_.embed_dim) * shape_.hidden; }
  std::size_t off_wc() const { return off_b2() + shape_.embed_dim; }
  std::size_t off_bc() const { return off_wc() + std::size_t(shape_.num_classes) * shape_.embed_dim; }

  ModelShape shape_;
  std::vector<double> values_;
};

// Row-softmax parameterization of T, with T[c][c'] ~ p(observed c' | true c).
class NoiseAbsorptionMatrix {
 public:
  explicit NoiseAbsorptionMatrix(int num_classes, double diag_logit = 2.0, double off_logit = 0.0);
  NoiseAbsorptionMatrix(int num_classes, std::vector<double> logits);

  int num_classes() const { return num_classes_; }
  std::span<double> logits() { return logits_; }
  std::span<const double> logits() const { return logits_; }
  std::vector<double> effective() const;

  nlohmann::json to_json() const;
  static NoiseAbsorptionMatrix from_json(const nlohmann::json& j);

 private:
  int num_classes_;
  std::vector<double> logits_;
};

struct LossConfig {
  double tau = 0.5;
  double sce_alpha = 0.1;
  double sce_beta = 1.0;
  double rce_clamp = -4.0;   // log 0 := rce_clamp in the reverse term
  double lambda_s = 1.0;
  double lambda_n = 1.0;
  double epsilon_guard = 1e-8;
  void validate() const;
};

struct ForwardPass {
  std::vector<double> hidden;      // tanh activations
  std::vector<double> raw_embed;   // f(x) before normalization
  double raw_norm = 0.0;
  std::vector<double> z;           // unit embedding
  std::vector<double> logits;
  std::vector<double> probs;
  bool guarded = false;            // raw embedding was (numerically) zero
};

ForwardPass forward(const ModelParams& params, std::span<const double> x, double epsilon_guard = 1e-12);

directional::UnitVector encode(std::span<const double> x, const ModelParams& params);

std::vector<double> predict_proba(const ModelParams& params, std::span<const double> x);
int predict(const ModelParams& params, std::span<const double> x);

struct EmbeddingLoss {
  double value = 0.0;
  std::vector<std::vector<double>> grad;  // d loss / d embedding
};

// Views 2k and 2k+1 form the positive pair k.
EmbeddingLoss nt_xent_loss(std::span<const std::vector<double>> embeddings, double tau);

struct DistLoss {
  double value = 0.0;
  std::vector<double> grad;  // d loss / d pred_dist
};

DistLoss sce_loss(std::span<const double> pred_dist, int label, const LossConfig& cfg);

struct ForwardCorrectedLoss {
  double value = 0.0;
  std::vector<std::vector<double>> grad_probs;
  std::vector<double> grad_logits;  // d loss / d T logits
};

ForwardCorrectedLoss forward_corrected_loss(std::span<const std::vector<double>> pred_dists,
                                            const NoiseAbsorptionMatrix& T,
                                            std::span<const int> labels,
                                            const std::vector<bool>& noisy_mask,
                                            double epsilon);

struct Gradients {
  explicit Gradients(const ModelShape& shape, int num_classes)
      : params(shape), absorption(static_cast<std::size_t>(num_classes) * num_classes, 0.0) {}
  ModelParams params;
  std::vector<double> absorption;
};

struct TotalLoss {
  double value = 0.0;
  double sce = 0.0;
  double noisy = 0.0;
  Gradients grad;
};

// lambda_s * mean SCE over the batch + lambda_n * forward-corrected loss over
// the noisy-masked samples.
TotalLoss total_loss(std::span<const std::vector<double>> features, std::span<const int> labels,
                     const ModelParams& params, const NoiseAbsorptionMatrix& T,
                     const std::vector<bool>& noisy_mask, const LossConfig& cfg);

struct ContrastiveLoss {
  double value = 0.0;
  ModelParams grad;
};

// NT-Xent over encoded views (pairs 2k, 2k+1), backpropagated to the encoder.
ContrastiveLoss contrastive_loss(std::span<const std::vector<double>> views,
                                 const ModelParams& params, double tau);

// Per-sample cross-entropy of the observed label (small-loss detector input).
std::vector<double> per_sample_ce(const ModelParams& params,
                                  std::span<const std::vector<double>> features,
                                  std::span<const int> labels);

// theta <- theta - lr * g. Throws std::domain_error on a non-finite gradient,
// leaving the parameters untouched.
void sgd_step(ModelParams& params, const ModelParams& grad, double lr);
void sgd_step(ModelParams& params, NoiseAbsorptionMatrix& T, const Gradients& grad, double lr);

}  // namespace fedrg::learner
