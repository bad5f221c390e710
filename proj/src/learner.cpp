#include "fedrg/learner.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>

#include "fedrg/rng.hpp"

namespace fedrg::learner {

std::size_t ModelShape::encoder_size() const {
  return std::size_t(hidden) * input_dim + hidden + std::size_t(embed_dim) * hidden + embed_dim;
}

std::size_t ModelShape::total_size() const {
  return encoder_size() + std::size_t(num_classes) * embed_dim + num_classes;
}

ModelParams::ModelParams(const ModelShape& shape) : shape_(shape) {
  if (shape.input_dim < 1 || shape.hidden < 1 || shape.embed_dim < 2 || shape.num_classes < 2) {
    throw std::invalid_argument("invalid model shape");
  }
  values_.assign(shape.total_size(), 0.0);
}

ModelParams ModelParams::initialize(const ModelShape& shape, std::uint64_t rng_seed) {
  ModelParams p(shape);
  Rng rng(rng_seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const double s1 = 1.0 / std::sqrt(double(shape.input_dim));
  const double s2 = 1.0 / std::sqrt(double(shape.hidden));
  const double sc = 1.0 / std::sqrt(double(shape.embed_dim));
  for (int h = 0; h < shape.hidden; ++h)
    for (int i = 0; i < shape.input_dim; ++i) p.w1(h, i) = s1 * normal(rng);
  for (int e = 0; e < shape.embed_dim; ++e)
    for (int h = 0; h < shape.hidden; ++h) p.w2(e, h) = s2 * normal(rng);
  for (int c = 0; c < shape.num_classes; ++c)
    for (int e = 0; e < shape.embed_dim; ++e) p.wc(c, e) = sc * normal(rng);
  return p;
}

nlohmann::json ModelParams::to_json() const {
  auto slice = [&](std::size_t from, std::size_t to) {
    return std::vector<double>(values_.begin() + from, values_.begin() + to);
  };
  return {{"shape",
           {{"input_dim", shape_.input_dim},
            {"hidden", shape_.hidden},
            {"embed_dim", shape_.embed_dim},
            {"num_classes", shape_.num_classes}}},
          {"tensors",
           {{"w1", {{"dims", {shape_.hidden, shape_.input_dim}}, {"values", slice(off_w1(), off_b1())}}},
            {"b1", {{"dims", {shape_.hidden}}, {"values", slice(off_b1(), off_w2())}}},
            {"w2", {{"dims", {shape_.embed_dim, shape_.hidden}}, {"values", slice(off_w2(), off_b2())}}},
            {"b2", {{"dims", {shape_.embed_dim}}, {"values", slice(off_b2(), off_wc())}}},
            {"wc", {{"dims", {shape_.num_classes, shape_.embed_dim}}, {"values", slice(off_wc(), off_bc())}}},
            {"bc", {{"dims", {shape_.num_classes}}, {"values", slice(off_bc(), values_.size())}}}}}};
}

ModelParams ModelParams::from_json(const nlohmann::json& j) {
  const auto& s = j.at("shape");
  ModelShape shape{s.at("input_dim").get<int>(), s.at("hidden").get<int>(),
                   s.at("embed_dim").get<int>(), s.at("num_classes").get<int>()};
  ModelParams p(shape);
  std::size_t pos = 0;
  for (const char* name : {"w1", "b1", "w2", "b2", "wc", "bc"}) {
    const auto v = j.at("tensors").at(name).at("values").get<std::vector<double>>();
    if (pos + v.size() > p.values_.size()) throw std::invalid_argument("checkpoint tensor too large");
    std::copy(v.begin(), v.end(), p.values_.begin() + pos);
    pos += v.size();
  }
  if (pos != p.values_.size()) throw std::invalid_argument("checkpoint tensors do not match shape");
  return p;
}

NoiseAbsorptionMatrix::NoiseAbsorptionMatrix(int num_classes, double diag_logit, double off_logit)
    : num_classes_(num_classes),
      logits_(static_cast<std::size_t>(num_classes) * num_classes, off_logit) {
  if (num_classes < 1) throw std::invalid_argument("T needs at least one class");
  for (int c = 0; c < num_classes; ++c) logits_[static_cast<std::size_t>(c) * num_classes + c] = diag_logit;
}

NoiseAbsorptionMatrix::NoiseAbsorptionMatrix(int num_classes, std::vector<double> logits)
    : num_classes_(num_classes), logits_(std::move(logits)) {
  if (logits_.size() != static_cast<std::size_t>(num_classes) * num_classes) {
    throw std::invalid_argument("T logits have the wrong size");
  }
}

std::vector<double> NoiseAbsorptionMatrix::effective() const {
  std::vector<double> t(logits_.size());
  for (int c = 0; c < num_classes_; ++c) {
    const double* row = logits_.data() + static_cast<std::size_t>(c) * num_classes_;
    const double m = *std::max_element(row, row + num_classes_);
    double s = 0.0;
    for (int j = 0; j < num_classes_; ++j) {
      t[static_cast<std::size_t>(c) * num_classes_ + j] = std::exp(row[j] - m);
      s += t[static_cast<std::size_t>(c) * num_classes_ + j];
    }
    for (int j = 0; j < num_classes_; ++j) t[static_cast<std::size_t>(c) * num_classes_ + j] /= s;
  }
  return t;
}

nlohmann::json NoiseAbsorptionMatrix::to_json() const {
  return {{"num_classes", num_classes_}, {"logits", logits_}, {"effective", effective()}};
}

NoiseAbsorptionMatrix NoiseAbsorptionMatrix::from_json(const nlohmann::json& j) {
  return NoiseAbsorptionMatrix(j.at("num_classes").get<int>(),
                               j.at("logits").get<std::vector<double>>());
}

void LossConfig::validate() const {
  if (!(tau > 0.0)) throw std::invalid_argument("loss.tau must be > 0");
  if (!(sce_alpha >= 0.0) || !(sce_beta >= 0.0)) throw std::invalid_argument("loss.sce_alpha/sce_beta must be >= 0");
  if (!(rce_clamp < 0.0)) throw std::invalid_argument("loss.rce_clamp must be < 0");
  if (!(lambda_s >= 0.0) || !(lambda_n >= 0.0)) throw std::invalid_argument("loss.lambda_s/lambda_n must be >= 0");
  if (!(epsilon_guard > 0.0)) throw std::invalid_argument("loss.epsilon_guard must be > 0");
}

ForwardPass forward(const ModelParams& params, std::span<const double> x, double epsilon_guard) {
  const ModelShape& s = params.shape();
  if (static_cast<int>(x.size()) != s.input_dim) throw std::invalid_argument("feature dimension mismatch");
  ForwardPass fp;
  fp.hidden.resize(s.hidden);
  for (int h = 0; h < s.hidden; ++h) {
    double a = params.b1(h);
    for (int i = 0; i < s.input_dim; ++i) a += params.w1(h, i) * x[i];
    fp.hidden[h] = std::tanh(a);
  }
  fp.raw_embed.resize(s.embed_dim);
  double n2 = 0.0;
  for (int e = 0; e < s.embed_dim; ++e) {
    double a = params.b2(e);
    for (int h = 0; h < s.hidden; ++h) a += params.w2(e, h) * fp.hidden[h];
    fp.raw_embed[e] = a;
    n2 += a * a;
  }
  fp.raw_norm = std::sqrt(n2);
  fp.z.assign(s.embed_dim, 0.0);
  if (fp.raw_norm < epsilon_guard) {
    fp.guarded = true;
    fp.z[0] = 1.0;
  } else {
    for (int e = 0; e < s.embed_dim; ++e) fp.z[e] = fp.raw_embed[e] / fp.raw_norm;
  }
  fp.logits.resize(s.num_classes);
  double m = -std::numeric_limits<double>::infinity();
  for (int c = 0; c < s.num_classes; ++c) {
    double a = params.bc(c);
    for (int e = 0; e < s.embed_dim; ++e) a += params.wc(c, e) * fp.z[e];
    fp.logits[c] = a;
    m = std::max(m, a);
  }
  fp.probs.resize(s.num_classes);
  double total = 0.0;
  for (int c = 0; c < s.num_classes; ++c) {
    fp.probs[c] = std::exp(fp.logits[c] - m);
    total += fp.probs[c];
  }
  for (double& p : fp.probs) p /= total;
  return fp;
}

directional::UnitVector encode(std::span<const double> x, const ModelParams& params) {
  return directional::UnitVector(forward(params, x).z);
}

std::vector<double> predict_proba(const ModelParams& params, std::span<const double> x) {
  return forward(params, x).probs;
}

int predict(const ModelParams& params, std::span<const double> x) {
  const auto p = predict_proba(params, x);
  return static_cast<int>(std::max_element(p.begin(), p.end()) - p.begin());
}

namespace {

// Accumulates d loss / d params for one sample given the gradient w.r.t. the
// logits and an additional gradient w.r.t. the unit embedding.
void backprop(const ModelParams& params, const ForwardPass& fp, std::span<const double> x,
              std::span<const double> g_logits, std::span<const double> g_z_extra,
              ModelParams& grad) {
  const ModelShape& s = params.shape();
  std::vector<double> g_z(s.embed_dim, 0.0);
  if (!g_z_extra.empty()) std::copy(g_z_extra.begin(), g_z_extra.end(), g_z.begin());
  if (!g_logits.empty()) {
    for (int c = 0; c < s.num_classes; ++c) {
      grad.bc(c) += g_logits[c];
      for (int e = 0; e < s.embed_dim; ++e) {
        grad.wc(c, e) += g_logits[c] * fp.z[e];
        g_z[e] += params.wc(c, e) * g_logits[c];
      }
    }
  }
  if (fp.guarded) return;
  double zg = 0.0;
  for (int e = 0; e < s.embed_dim; ++e) zg += fp.z[e] * g_z[e];
  std::vector<double> g_f(s.embed_dim);
  for (int e = 0; e < s.embed_dim; ++e) g_f[e] = (g_z[e] - fp.z[e] * zg) / fp.raw_norm;
  std::vector<double> g_h(s.hidden, 0.0);
  for (int e = 0; e < s.embed_dim; ++e) {
    grad.b2(e) += g_f[e];
    for (int h = 0; h < s.hidden; ++h) {
      grad.w2(e, h) += g_f[e] * fp.hidden[h];
      g_h[h] += params.w2(e, h) * g_f[e];
    }
  }
  for (int h = 0; h < s.hidden; ++h) {
    const double g_a = g_h[h] * (1.0 - fp.hidden[h] * fp.hidden[h]);
    grad.b1(h) += g_a;
    for (int i = 0; i < s.input_dim; ++i) grad.w1(h, i) += g_a * x[i];
  }
}

void check_finite(std::span<const double> g) {
  for (double v : g) {
    if (!std::isfinite(v)) throw std::domain_error("non-finite gradient; SGD step rejected");
  }
}

}  // namespace

EmbeddingLoss nt_xent_loss(std::span<const std::vector<double>> embeddings, double tau) {
  if (!(tau > 0.0)) throw std::invalid_argument("temperature must be > 0");
  const std::size_t n = embeddings.size();
  if (n < 2 || n % 2 != 0) throw std::invalid_argument("nt_xent needs 2b >= 2 embeddings");
  const std::size_t d = embeddings.front().size();
  for (const auto& z : embeddings) {
    if (z.size() != d) throw std::invalid_argument("embedding dimension mismatch");
  }
  EmbeddingLoss out;
  out.grad.assign(n, std::vector<double>(d, 0.0));
  std::vector<double> sim(n);
  std::vector<double> prob(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t pos = i ^ 1U;
    double m = -std::numeric_limits<double>::infinity();
    for (std::size_t a = 0; a < n; ++a) {
      if (a == i) continue;
      double dot = 0.0;
      for (std::size_t k = 0; k < d; ++k) dot += embeddings[i][k] * embeddings[a][k];
      sim[a] = dot / tau;
      m = std::max(m, sim[a]);
    }
    double total = 0.0;
    for (std::size_t a = 0; a < n; ++a) {
      if (a == i) continue;
      prob[a] = std::exp(sim[a] - m);
      total += prob[a];
    }
    out.value += m + std::log(total) - sim[pos];
    for (std::size_t a = 0; a < n; ++a) {
      if (a == i) continue;
      const double coef = (prob[a] / total - (a == pos ? 1.0 : 0.0)) / (tau * n);
      for (std::size_t k = 0; k < d; ++k) {
        out.grad[i][k] += coef * embeddings[a][k];
        out.grad[a][k] += coef * embeddings[i][k];
      }
    }
  }
  out.value /= static_cast<double>(n);
  return out;
}

DistLoss sce_loss(std::span<const double> pred_dist, int label, const LossConfig& cfg) {
  const int C = static_cast<int>(pred_dist.size());
  if (label < 0 || label >= C) throw std::invalid_argument("label out of range");
  constexpr double kProbFloor = 1e-7;
  DistLoss out;
  out.grad.assign(C, 0.0);
  const double py = pred_dist[label];
  if (py > kProbFloor) {
    out.value += -cfg.sce_alpha * std::log(py);
    out.grad[label] = -cfg.sce_alpha / py;
  } else {
    out.value += -cfg.sce_alpha * std::log(kProbFloor);
  }
  // Reverse term against a one-hot target: log q_k is 0 at the label and the
  // clamp value A everywhere else.
  for (int k = 0; k < C; ++k) {
    if (k == label) continue;
    out.value += -cfg.sce_beta * cfg.rce_clamp * pred_dist[k];
    out.grad[k] += -cfg.sce_beta * cfg.rce_clamp;
  }
  return out;
}

ForwardCorrectedLoss forward_corrected_loss(std::span<const std::vector<double>> pred_dists,
                                            const NoiseAbsorptionMatrix& T,
                                            std::span<const int> labels,
                                            const std::vector<bool>& noisy_mask,
                                            double epsilon) {
  const std::size_t n = pred_dists.size();
  if (labels.size() != n || noisy_mask.size() != n) {
    throw std::invalid_argument("forward_corrected_loss: batch length mismatch");
  }
  const int C = T.num_classes();
  const auto t = T.effective();
  ForwardCorrectedLoss out;
  out.grad_probs.assign(n, std::vector<double>(C, 0.0));
  out.grad_logits.assign(static_cast<std::size_t>(C) * C, 0.0);
  double m = 0.0;
  for (bool b : noisy_mask) m += b ? 1.0 : 0.0;
  const double norm = 1.0 / (m + epsilon);
  std::vector<double> g_t(static_cast<std::size_t>(C) * C, 0.0);  // d loss / d T
  for (std::size_t i = 0; i < n; ++i) {
    if (!noisy_mask[i]) continue;
    const auto& p = pred_dists[i];
    if (static_cast<int>(p.size()) != C) throw std::invalid_argument("prediction/T size mismatch");
    const int y = labels[i];
    if (y < 0 || y >= C) throw std::invalid_argument("label out of range");
    double q = 0.0;
    for (int c = 0; c < C; ++c) q += p[c] * t[static_cast<std::size_t>(c) * C + y];
    out.value += -norm * std::log(q + epsilon);
    const double coef = -norm / (q + epsilon);
    for (int c = 0; c < C; ++c) {
      out.grad_probs[i][c] = coef * t[static_cast<std::size_t>(c) * C + y];
      g_t[static_cast<std::size_t>(c) * C + y] += coef * p[c];
    }
  }
  // Row-softmax Jacobian.
  for (int c = 0; c < C; ++c) {
    double dotp = 0.0;
    for (int j = 0; j < C; ++j) dotp += g_t[static_cast<std::size_t>(c) * C + j] * t[static_cast<std::size_t>(c) * C + j];
    for (int j = 0; j < C; ++j) {
      const std::size_t k = static_cast<std::size_t>(c) * C + j;
      out.grad_logits[k] = t[k] * (g_t[k] - dotp);
    }
  }
  return out;
}

TotalLoss total_loss(std::span<const std::vector<double>> features, std::span<const int> labels,
                     const ModelParams& params, const NoiseAbsorptionMatrix& T,
                     const std::vector<bool>& noisy_mask, const LossConfig& cfg) {
  const std::size_t n = features.size();
  if (n == 0) throw std::invalid_argument("total_loss needs a non-empty batch");
  if (labels.size() != n || noisy_mask.size() != n) throw std::invalid_argument("total_loss: batch length mismatch");
  const int C = params.shape().num_classes;
  if (T.num_classes() != C) throw std::invalid_argument("T/classifier class count mismatch");

  TotalLoss out{0.0, 0.0, 0.0, Gradients(params.shape(), C)};
  std::vector<ForwardPass> passes;
  passes.reserve(n);
  std::vector<std::vector<double>> probs;
  for (std::size_t i = 0; i < n; ++i) {
    passes.push_back(forward(params, features[i]));
    probs.push_back(passes.back().probs);
  }

  ForwardCorrectedLoss ln;
  const bool use_noisy = cfg.lambda_n > 0.0;
  if (use_noisy) {
    ln = forward_corrected_loss(probs, T, labels, noisy_mask, cfg.epsilon_guard);
    out.noisy = ln.value;
    for (std::size_t k = 0; k < ln.grad_logits.size(); ++k) {
      out.grad.absorption[k] = cfg.lambda_n * ln.grad_logits[k];
    }
  }

  std::vector<double> g_p(C);
  std::vector<double> g_logit(C);
  for (std::size_t i = 0; i < n; ++i) {
    const DistLoss sce = sce_loss(probs[i], labels[i], cfg);
    out.sce += sce.value / n;
    for (int c = 0; c < C; ++c) {
      g_p[c] = cfg.lambda_s * sce.grad[c] / n;
      if (use_noisy) g_p[c] += cfg.lambda_n * ln.grad_probs[i][c];
    }
    double dotp = 0.0;
    for (int c = 0; c < C; ++c) dotp += g_p[c] * probs[i][c];
    for (int c = 0; c < C; ++c) g_logit[c] = probs[i][c] * (g_p[c] - dotp);
    backprop(params, passes[i], features[i], g_logit, {}, out.grad.params);
  }
  out.value = cfg.lambda_s * out.sce + (use_noisy ? cfg.lambda_n * out.noisy : 0.0);
  return out;
}

ContrastiveLoss contrastive_loss(std::span<const std::vector<double>> views,
                                 const ModelParams& params, double tau) {
  std::vector<ForwardPass> passes;
  std::vector<std::vector<double>> z;
  for (const auto& v : views) {
    passes.push_back(forward(params, v));
    z.push_back(passes.back().z);
  }
  const EmbeddingLoss nt = nt_xent_loss(z, tau);
  ContrastiveLoss out{nt.value, ModelParams(params.shape())};
  for (std::size_t i = 0; i < views.size(); ++i) {
    backprop(params, passes[i], views[i], {}, nt.grad[i], out.grad);
  }
  return out;
}

std::vector<double> per_sample_ce(const ModelParams& params,
                                  std::span<const std::vector<double>> features,
                                  std::span<const int> labels) {
  std::vector<double> out(features.size());
  for (std::size_t i = 0; i < features.size(); ++i) {
    const ForwardPass fp = forward(params, features[i]);
    const double m = *std::max_element(fp.logits.begin(), fp.logits.end());
    double s = 0.0;
    for (double l : fp.logits) s += std::exp(l - m);
    out[i] = m + std::log(s) - fp.logits[labels[i]];
  }
  return out;
}

void sgd_step(ModelParams& params, const ModelParams& grad, double lr) {
  if (!(lr >= 0.0)) throw std::invalid_argument("learning rate must be >= 0");
  if (!(params.shape() == grad.shape())) throw std::invalid_argument("gradient shape mismatch");
  check_finite(grad.values());
  auto v = params.values();
  const auto g = grad.values();
  for (std::size_t k = 0; k < v.size(); ++k) v[k] -= lr * g[k];
}

void sgd_step(ModelParams& params, NoiseAbsorptionMatrix& T, const Gradients& grad, double lr) {
  if (grad.absorption.size() != T.logits().size()) throw std::invalid_argument("T gradient shape mismatch");
  check_finite(grad.absorption);
  sgd_step(params, grad.params, lr);
  auto l = T.logits();
  for (std::size_t k = 0; k < l.size(); ++k) l[k] -= lr * grad.absorption[k];
}

}  // namespace fedrg::learner
