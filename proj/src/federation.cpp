#include "fedrg/federation.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>

#include "fedrg/rng.hpp"

namespace fedrg::federation {

using directional::UnitVector;
using learner::ModelParams;

nlohmann::json ClientState::to_json() const {
  nlohmann::json j = {{"client_id", client_id},
                      {"num_samples", shard.samples.size()},
                      {"label_support", shard.label_support},
                      {"absorption", absorption.to_json()}};
  j["vmf"] = vmf ? vmf->to_json() : nlohmann::json(nullptr);
  j["geometry"] = geometry ? geometry->to_json() : nlohmann::json(nullptr);
  j["last_partition"] = last_partition ? last_partition->to_json() : nlohmann::json(nullptr);
  return j;
}

nlohmann::json ClientUpdate::to_json() const {
  nlohmann::json j = {{"client_id", client_id},
                      {"num_samples", num_samples},
                      {"params", params.to_json()}};
  if (absorption) j["absorption"] = absorption->to_json();
  return j;
}

std::vector<int> sample_clients(int K, int m, int round, std::uint64_t rng_seed) {
  if (K < 1) throw std::invalid_argument("need at least one client");
  if (m < 1 || m > K) throw std::invalid_argument("clients per round must be in [1, K]");
  std::vector<int> ids(K);
  std::iota(ids.begin(), ids.end(), 0);
  Rng rng(derive_seed(rng_seed, "sample_clients", 0, static_cast<std::uint64_t>(round)));
  // Partial Fisher-Yates: the first m slots are a uniform m-subset.
  for (int i = 0; i < m; ++i) {
    int j = i + static_cast<int>(uniform01(rng) * (K - i));
    if (j >= K) j = K - 1;
    std::swap(ids[i], ids[j]);
  }
  ids.resize(m);
  std::sort(ids.begin(), ids.end());
  return ids;
}

ModelParams aggregate(std::span<const ModelParams> models, std::span<const double> weights) {
  if (models.empty()) throw std::invalid_argument("nothing to aggregate");
  if (models.size() != weights.size()) throw std::invalid_argument("model/weight count mismatch");
  double total = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw std::invalid_argument("aggregation weights must be >= 0");
    total += w;
  }
  if (!(total > 0.0)) throw std::invalid_argument("aggregation weights sum to zero");
  ModelParams out(models.front().shape());
  auto acc = out.values();
  for (std::size_t k = 0; k < models.size(); ++k) {
    if (!(models[k].shape() == out.shape())) throw std::invalid_argument("aggregation shape mismatch");
    const double w = weights[k] / total;
    const auto v = models[k].values();
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += w * v[i];
  }
  return out;
}

namespace {

std::vector<std::size_t> shuffled_indices(std::size_t n, Rng& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  shuffle(idx, rng);
  return idx;
}

}  // namespace

ModelParams stage1_client_round(const data::UnlabeledView& shard, const ModelParams& global,
                                const RunManifest& manifest, int client_id, int round) {
  ModelParams params = global;
  const auto& rc = manifest.rounds;
  if (shard.size() == 0 || rc.local_epochs == 0) return params;
  Rng rng = make_rng(manifest.master_seed, "stage1", client_id, round);
  for (int epoch = 0; epoch < rc.local_epochs; ++epoch) {
    const auto order = shuffled_indices(shard.size(), rng);
    for (std::size_t start = 0; start < order.size(); start += rc.batch_size) {
      const std::size_t end = std::min(order.size(), start + rc.batch_size);
      if (end - start < 2) continue;  // a single pair carries no contrastive signal
      std::vector<std::vector<double>> views;
      for (std::size_t b = start; b < end; ++b) {
        auto [v1, v2] = data::augment_two_views(shard.features(order[b]), manifest.augmentation, rng());
        views.push_back(std::move(v1));
        views.push_back(std::move(v2));
      }
      const auto loss = learner::contrastive_loss(views, params, manifest.loss.tau);
      learner::sgd_step(params, loss.grad, rc.learning_rate);
    }
  }
  return params;
}

DetectionOutcome geometry_detection(ClientState& client, const DetectionInput& input,
                                    int num_classes, const RunManifest& manifest,
                                    std::uint64_t rng_seed) {
  const std::size_t n = input.embeddings.size();
  if (input.view1.size() != n || input.view2.size() != n || input.observed_labels.size() != n) {
    throw std::invalid_argument("detection input length mismatch");
  }
  DetectionOutcome out;
  if (n < 2) {
    out.partition.clean_mask.assign(n, true);
    out.partition.clean_posterior.assign(n, 1.0);
    out.partition.degenerate = true;
    client.last_partition = out.partition;
    return out;
  }
  const int G = std::min<int>(manifest.rounds.clusters, static_cast<int>(n));

  const std::vector<double> ones(n, 1.0);
  try {
    auto fit = directional::em_fit(input.embeddings, ones, G, manifest.em, rng_seed, client.vmf);
    client.vmf = std::move(fit.mixture);
  } catch (const std::exception&) {
    if (!client.vmf) throw;
    out.vmf_fallback = true;
  }
  const auto& mix = *client.vmf;

  out.tempered.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double r = directional::consistency_factor(input.view1[i], input.view2[i], manifest.tempering);
    out.tempered.push_back(directional::tempered_responsibilities(mix, input.embeddings[i], r));
  }

  const int mix_g = mix.num_components();
  if (!client.geometry || client.geometry->num_clusters() != mix_g ||
      client.geometry->num_classes() != num_classes) {
    client.geometry = evidence::ClassGeometryMatrix::uniform(num_classes, mix_g, manifest.eta);
  }
  out.scores = evidence::cleanliness_scores(out.tempered, input.observed_labels, *client.geometry);
  out.partition = evidence::gmm_partition(out.scores, manifest.gmm);

  std::vector<directional::ResponsibilityVector> clean_resp;
  std::vector<int> clean_labels;
  for (std::size_t i = 0; i < n; ++i) {
    if (!out.partition.clean_mask[i]) continue;
    clean_resp.push_back(out.tempered[i]);
    clean_labels.push_back(input.observed_labels[i]);
  }
  if (!clean_resp.empty()) {
    client.geometry = evidence::update_class_geometry(clean_resp, clean_labels, num_classes, manifest.eta);
  }
  client.last_partition = out.partition;
  return out;
}

evidence::PartitionResult small_loss_detection(const ModelParams& params,
                                               const data::ClientShard& shard,
                                               const evidence::GmmConfig& gmm) {
  const std::size_t n = shard.samples.size();
  if (n < 2) {
    evidence::PartitionResult p;
    p.clean_mask.assign(n, true);
    p.clean_posterior.assign(n, 1.0);
    p.degenerate = true;
    return p;
  }
  std::vector<std::vector<double>> features;
  std::vector<int> labels;
  for (const auto& s : shard.samples) {
    features.push_back(s.features);
    labels.push_back(s.observed_label);
  }
  return evidence::gmm_partition_values(learner::per_sample_ce(params, features, labels), gmm);
}

Stage2Result stage2_client_round(ClientState& client, const ModelParams& global,
                                 const RunManifest& manifest, int round) {
  const auto& samples = client.shard.samples;
  const std::size_t n = samples.size();
  const int num_classes = global.shape().num_classes;
  Rng rng = make_rng(manifest.master_seed, "stage2", client.client_id, round);

  Stage2Result out{global, {}, std::nullopt, false};
  if (n == 0) return out;

  std::vector<std::vector<double>> features;
  std::vector<int> labels;
  for (const auto& s : samples) {
    features.push_back(s.features);
    labels.push_back(s.observed_label);
  }

  switch (manifest.method.detector) {
    case Detector::kGeometry: {
      DetectionInput input;
      input.observed_labels = labels;
      for (const auto& x : features) {
        input.embeddings.push_back(learner::encode(x, global));
        auto [v1, v2] = data::augment_two_views(x, manifest.augmentation, rng());
        input.view1.push_back(learner::encode(v1, global));
        input.view2.push_back(learner::encode(v2, global));
      }
      auto det = geometry_detection(client, input, num_classes, manifest, rng());
      out.partition = std::move(det.partition);
      out.vmf_fallback = det.vmf_fallback;
      break;
    }
    case Detector::kSmallLoss:
      out.partition = small_loss_detection(global, client.shard, manifest.gmm);
      client.last_partition = out.partition;
      break;
    case Detector::kNone:
      out.partition.clean_mask.assign(n, true);
      out.partition.clean_posterior.assign(n, 1.0);
      out.partition.degenerate = true;
      client.last_partition = out.partition;
      break;
  }
  if (manifest.method.shadow_small_loss && manifest.method.detector != Detector::kSmallLoss) {
    out.shadow_partition = small_loss_detection(global, client.shard, manifest.gmm);
  }

  std::vector<bool> noisy(n);
  for (std::size_t i = 0; i < n; ++i) noisy[i] = !out.partition.clean_mask[i];

  const auto& rc = manifest.rounds;
  for (int epoch = 0; epoch < rc.local_epochs; ++epoch) {
    const auto order = shuffled_indices(n, rng);
    for (std::size_t start = 0; start < n; start += rc.batch_size) {
      const std::size_t end = std::min(n, start + rc.batch_size);
      std::vector<std::vector<double>> bx;
      std::vector<int> by;
      std::vector<bool> bm;
      for (std::size_t b = start; b < end; ++b) {
        bx.push_back(features[order[b]]);
        by.push_back(labels[order[b]]);
        bm.push_back(noisy[order[b]]);
      }
      const auto loss = learner::total_loss(bx, by, out.params, client.absorption, bm, manifest.loss);
      learner::sgd_step(out.params, client.absorption, loss.grad, rc.learning_rate);
    }
  }
  return out;
}

namespace {

data::Dataset load_or_generate(const RunManifest& m, data::Dataset& test) {
  if (m.data.csv_path.empty()) {
    auto train = data::generate_synthetic(m.data.synthetic, derive_seed(m.master_seed, "data"));
    test = data::sample_from_anchors(train.anchors, m.data.n_test_per_class,
                                     m.data.synthetic.feature_sigma,
                                     derive_seed(m.master_seed, "test"),
                                     static_cast<int>(train.samples.size()));
    return train;
  }
  std::ifstream in(m.data.csv_path);
  if (!in) throw std::runtime_error("cannot open dataset '" + m.data.csv_path + "'");
  data::Dataset all = data::load_csv_dataset(in);
  // Deterministic 80/20 train/test split.
  Rng rng = make_rng(m.master_seed, "csv_split");
  auto samples = all.samples;
  shuffle(samples, rng);
  const std::size_t n_test = std::max<std::size_t>(1, samples.size() / 5);
  test = all;
  test.samples.assign(samples.begin(), samples.begin() + n_test);
  all.samples.assign(samples.begin() + n_test, samples.end());
  return all;
}

}  // namespace

Experiment::Experiment(RunManifest manifest)
    : manifest_(std::move(manifest)), global_(learner::ModelShape{}) {
  manifest_.validate();
  const data::Dataset train = load_or_generate(manifest_, test_);
  num_classes_ = train.num_classes;
  auto shards = data::dirichlet_partition(train, manifest_.data.num_clients,
                                          manifest_.data.dirichlet_alpha,
                                          derive_seed(manifest_.master_seed, "partition"));
  std::vector<std::vector<int>> supports;
  for (const auto& s : shards) supports.push_back(s.label_support);
  kernels_ = noise::build_client_kernels(manifest_.noise, num_classes_, supports);
  for (std::size_t k = 0; k < shards.size(); ++k) {
    std::vector<int> truth;
    for (const auto& s : shards[k].samples) truth.push_back(s.true_label);
    auto rec = noise::inject_noise(truth, *kernels_[k], derive_seed(manifest_.master_seed, "noise", k));
    for (std::size_t i = 0; i < truth.size(); ++i) shards[k].samples[i].observed_label = rec.observed_labels[i];
    corruption_.push_back(std::move(rec));
    clients_.emplace_back(std::move(shards[k]), num_classes_);
  }
  learner::ModelShape shape{train.input_dim, manifest_.hidden, manifest_.embed_dim, num_classes_};
  global_ = ModelParams::initialize(shape, derive_seed(manifest_.master_seed, "model_init"));
}

metrics::MetricsRecord Experiment::evaluate(int round) const {
  std::vector<int> preds;
  std::vector<int> truths;
  for (const auto& s : test_.samples) {
    preds.push_back(learner::predict(global_, s.features));
    truths.push_back(s.true_label);
  }
  const auto cm = metrics::classification_metrics(preds, truths, num_classes_);
  metrics::MetricsRecord rec;
  rec.round = round;
  rec.accuracy = cm.accuracy;
  rec.macro_precision = cm.macro_precision;
  rec.macro_fscore = cm.macro_fscore;
  return rec;
}

std::vector<metrics::MetricsRecord> Experiment::run(const RoundObserver& observer) {
  const auto& rc = manifest_.rounds;
  std::vector<metrics::MetricsRecord> records{evaluate(0)};
  const std::uint64_t sampling_seed = derive_seed(manifest_.master_seed, "sampling");

  for (int t = 0; t < rc.total_rounds; ++t) {
    const bool stage2 = t >= rc.stage1_rounds;
    const auto participants =
        sample_clients(manifest_.data.num_clients, rc.clients_per_round, t, sampling_seed);

    std::vector<ClientUpdate> updates;
    std::size_t cra_match = 0, cra_total = 0, shadow_match = 0, shadow_total = 0;
    std::vector<double> per_client_cra;
    for (int k : participants) {
      ClientState& client = clients_[k];
      if (client.shard.samples.empty()) continue;
      try {
        ClientUpdate update{k, client.shard.samples.size(), global_, std::nullopt};
        if (!stage2) {
          update.params = stage1_client_round(data::UnlabeledView(client.shard), global_, manifest_, k, t);
        } else {
          Stage2Result res = stage2_client_round(client, global_, manifest_, t);
          update.params = std::move(res.params);
          std::vector<bool> truth_clean;
          for (bool noisy : corruption_[k].is_noisy_true) truth_clean.push_back(!noisy);
          const auto& mask = res.partition.clean_mask;
          std::size_t match = 0;
          for (std::size_t i = 0; i < mask.size(); ++i) match += mask[i] == truth_clean[i];
          cra_match += match;
          cra_total += mask.size();
          per_client_cra.push_back(metrics::cra(mask, truth_clean));
          if (res.shadow_partition) {
            const auto& sm = res.shadow_partition->clean_mask;
            for (std::size_t i = 0; i < sm.size(); ++i) shadow_match += sm[i] == truth_clean[i];
            shadow_total += sm.size();
          }
          if (manifest_.method.aggregate_absorption) update.absorption = client.absorption;
        }
        updates.push_back(std::move(update));
      } catch (const RunError&) {
        throw;
      } catch (const std::exception& e) {
        throw RunError(t, k, e.what());
      }
    }

    const ModelParams previous = global_;
    if (!updates.empty()) {
      std::vector<ModelParams> models;
      std::vector<double> weights;
      for (const auto& u : updates) {
        models.push_back(u.params);
        weights.push_back(static_cast<double>(u.num_samples));
      }
      ModelParams next = aggregate(models, weights);
      if (!stage2) {
        // The classifier is not trained in the contrastive stage.
        auto dst = next.values();
        const auto src = previous.values();
        for (std::size_t i = previous.shape().encoder_size(); i < dst.size(); ++i) dst[i] = src[i];
      }
      global_ = std::move(next);

      if (stage2 && manifest_.method.aggregate_absorption) {
        std::vector<double> avg(clients_.front().absorption.logits().size(), 0.0);
        double total = 0.0;
        for (std::size_t u = 0; u < updates.size(); ++u) total += weights[u];
        for (std::size_t u = 0; u < updates.size(); ++u) {
          const auto l = updates[u].absorption->logits();
          for (std::size_t i = 0; i < avg.size(); ++i) avg[i] += weights[u] / total * l[i];
        }
        for (auto& c : clients_) c.absorption = learner::NoiseAbsorptionMatrix(num_classes_, avg);
      }
    }

    metrics::MetricsRecord rec = evaluate(t + 1);
    if (stage2 && cra_total > 0) {
      rec.cra = static_cast<double>(cra_match) / cra_total;
      rec.per_client_cra = std::move(per_client_cra);
      if (shadow_total > 0) rec.cra_small_loss = static_cast<double>(shadow_match) / shadow_total;
    }
    records.push_back(rec);
    if (observer) observer(RoundReport{t + 1, stage2, updates, previous, global_, clients_, records.back()});
  }
  return records;
}

std::vector<metrics::MetricsRecord> run_experiment(const RunManifest& manifest,
                                                   const RoundObserver& observer) {
  Experiment exp(manifest);
  return exp.run(observer);
}

}  // namespace fedrg::federation
