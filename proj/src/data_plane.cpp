#include "fedrg/data_plane.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <random>
#include <sstream>
#include <stdexcept>

#include "fedrg/rng.hpp"

namespace fedrg::data {

namespace {

double distance(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

}  // namespace

Dataset generate_synthetic(const SyntheticConfig& cfg, std::uint64_t rng_seed) {
  if (cfg.num_classes < 2) throw std::invalid_argument("need at least 2 classes");
  if (cfg.n_per_class < 1) throw std::invalid_argument("n_per_class must be >= 1");
  if (cfg.input_dim < 2) throw std::invalid_argument("input_dim must be >= 2");
  if (!(cfg.class_separation > 0.0)) throw std::invalid_argument("class_separation must be > 0");
  if (!(cfg.feature_sigma >= 0.0)) throw std::invalid_argument("feature_sigma must be >= 0");

  Rng rng(rng_seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<std::vector<double>> anchors;
  for (int c = 0; c < cfg.num_classes; ++c) {
    bool placed = false;
    for (int attempt = 0; attempt < 1000 && !placed; ++attempt) {
      std::vector<double> a(cfg.input_dim);
      double n2 = 0.0;
      for (double& v : a) {
        v = normal(rng);
        n2 += v * v;
      }
      const double scale = cfg.class_separation / std::sqrt(n2);
      for (double& v : a) v *= scale;
      placed = std::all_of(anchors.begin(), anchors.end(), [&](const auto& other) {
        return distance(a, other) >= cfg.class_separation;
      });
      if (placed) anchors.push_back(std::move(a));
    }
    if (!placed) throw std::runtime_error("could not place class anchors after 1000 retries");
  }
  Dataset ds = sample_from_anchors(anchors, cfg.n_per_class, cfg.feature_sigma, rng(), 0);
  return ds;
}

Dataset sample_from_anchors(const std::vector<std::vector<double>>& anchors, int n_per_class,
                            double feature_sigma, std::uint64_t rng_seed, int first_id) {
  if (anchors.size() < 2) throw std::invalid_argument("need at least 2 anchors");
  Rng rng(rng_seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Dataset ds;
  ds.num_classes = static_cast<int>(anchors.size());
  ds.input_dim = static_cast<int>(anchors.front().size());
  ds.anchors = anchors;
  int id = first_id;
  for (int c = 0; c < ds.num_classes; ++c) {
    for (int i = 0; i < n_per_class; ++i) {
      Sample s;
      s.features.resize(ds.input_dim);
      for (int k = 0; k < ds.input_dim; ++k) {
        s.features[k] = anchors[c][k] + feature_sigma * normal(rng);
      }
      s.true_label = c;
      s.observed_label = c;
      s.sample_id = id++;
      ds.samples.push_back(std::move(s));
    }
  }
  return ds;
}

std::vector<ClientShard> dirichlet_partition(const Dataset& dataset, int num_clients, double alpha,
                                             std::uint64_t rng_seed) {
  if (num_clients < 1) throw std::invalid_argument("need at least one client");
  if (!(alpha > 0.0)) throw std::invalid_argument("dirichlet alpha must be > 0");
  if (static_cast<std::size_t>(num_clients) > dataset.samples.size()) {
    throw std::invalid_argument("more clients than samples");
  }
  Rng rng(rng_seed);
  std::gamma_distribution<double> gamma(alpha, 1.0);
  std::vector<std::vector<std::size_t>> assigned(num_clients);

  for (int c = 0; c < dataset.num_classes; ++c) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < dataset.samples.size(); ++i) {
      if (dataset.samples[i].true_label == c) idx.push_back(i);
    }
    if (idx.empty()) continue;
    shuffle(idx, rng);
    std::vector<double> p(num_clients);
    double total = 0.0;
    for (double& v : p) {
      v = gamma(rng);
      total += v;
    }
    if (!(total > 0.0)) {
      std::fill(p.begin(), p.end(), 1.0);
      total = num_clients;
    }
    double cum = 0.0;
    std::size_t start = 0;
    for (int k = 0; k < num_clients; ++k) {
      cum += p[k] / total;
      const std::size_t end =
          k + 1 == num_clients ? idx.size()
                               : std::min(idx.size(), static_cast<std::size_t>(std::llround(cum * idx.size())));
      for (std::size_t j = start; j < end; ++j) assigned[k].push_back(idx[j]);
      start = std::max(start, end);
    }
  }

  // Dirichlet draws with small alpha can leave a client empty.
  for (int k = 0; k < num_clients; ++k) {
    if (!assigned[k].empty()) continue;
    auto largest = std::max_element(assigned.begin(), assigned.end(),
                                    [](const auto& a, const auto& b) { return a.size() < b.size(); });
    assigned[k].push_back(largest->back());
    largest->pop_back();
  }

  std::vector<ClientShard> shards(num_clients);
  for (int k = 0; k < num_clients; ++k) {
    std::sort(assigned[k].begin(), assigned[k].end());
    shards[k].client_id = k;
    for (std::size_t i : assigned[k]) {
      shards[k].samples.push_back(dataset.samples[i]);
      shards[k].label_support.push_back(dataset.samples[i].true_label);
    }
    auto& sup = shards[k].label_support;
    std::sort(sup.begin(), sup.end());
    sup.erase(std::unique(sup.begin(), sup.end()), sup.end());
  }
  return shards;
}

void AugmentationConfig::validate() const {
  if (!(jitter_sigma >= 0.0)) throw std::invalid_argument("augmentation.jitter_sigma must be >= 0");
  if (!(mask_fraction >= 0.0 && mask_fraction < 1.0)) {
    throw std::invalid_argument("augmentation.mask_fraction must be in [0,1)");
  }
}

std::pair<std::vector<double>, std::vector<double>> augment_two_views(
    const std::vector<double>& x, const AugmentationConfig& cfg, std::uint64_t rng_seed) {
  cfg.validate();
  Rng rng(rng_seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  auto view = [&]() {
    std::vector<double> v(x.size());
    for (std::size_t k = 0; k < x.size(); ++k) {
      const double jitter = cfg.jitter_sigma > 0.0 ? cfg.jitter_sigma * normal(rng) : 0.0;
      const bool masked = cfg.mask_fraction > 0.0 && uniform01(rng) < cfg.mask_fraction;
      v[k] = masked ? 0.0 : x[k] + jitter;
    }
    return v;
  };
  auto first = view();
  auto second = view();
  return {std::move(first), std::move(second)};
}

Dataset load_csv_dataset(std::istream& in) {
  Dataset ds;
  std::string line;
  if (!std::getline(in, line)) throw std::invalid_argument("empty CSV dataset");
  int max_label = -1;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<double> cells;
    while (std::getline(ss, cell, ',')) cells.push_back(std::stod(cell));
    if (cells.size() < 4) throw std::invalid_argument("CSV row needs sample_id, label and >= 2 features");
    Sample s;
    s.sample_id = static_cast<int>(cells[0]);
    s.true_label = s.observed_label = static_cast<int>(cells[1]);
    if (s.true_label < 0) throw std::invalid_argument("negative label in CSV");
    s.features.assign(cells.begin() + 2, cells.end());
    if (ds.input_dim == 0) ds.input_dim = static_cast<int>(s.features.size());
    if (static_cast<int>(s.features.size()) != ds.input_dim) {
      throw std::invalid_argument("ragged CSV feature rows");
    }
    max_label = std::max(max_label, s.true_label);
    ds.samples.push_back(std::move(s));
  }
  ds.num_classes = max_label + 1;
  return ds;
}

void write_shards_csv(std::ostream& out, const std::vector<ClientShard>& shards) {
  std::size_t dim = 0;
  for (const auto& s : shards) {
    if (!s.samples.empty()) dim = s.samples.front().features.size();
  }
  out << "sample_id,client_id,y_true,y_obs";
  for (std::size_t k = 0; k < dim; ++k) out << ",f" << k;
  out << '\n';
  char buf[32];
  for (const auto& shard : shards) {
    for (const auto& s : shard.samples) {
      out << s.sample_id << ',' << shard.client_id << ',' << s.true_label << ',' << s.observed_label;
      for (double f : s.features) {
        std::snprintf(buf, sizeof buf, "%.17g", f);
        out << ',' << buf;
      }
      out << '\n';
    }
  }
}

}  // namespace fedrg::data
