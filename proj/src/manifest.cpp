#include "fedrg/manifest.hpp"

#include <fstream>
#include <set>
#include <type_traits>

namespace fedrg {

using nlohmann::json;

std::string to_string(Detector d) {
  switch (d) {
    case Detector::kGeometry: return "geometry";
    case Detector::kSmallLoss: return "small_loss";
    case Detector::kNone: return "none";
  }
  return "geometry";
}

Detector parse_detector(const std::string& s) {
  if (s == "geometry") return Detector::kGeometry;
  if (s == "small_loss") return Detector::kSmallLoss;
  if (s == "none") return Detector::kNone;
  throw std::invalid_argument("unknown detector '" + s + "'");
}

namespace {

class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ManifestError(path_.empty() ? "<root>" : path_, "expected an object");
  }

  std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  template <typename T>
  void read(const std::string& key, T& out) {
    auto it = j_.find(key);
    if (it == j_.end()) return;
    seen_.insert(key);
    const json& v = *it;
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) throw ManifestError(field(key), "expected a boolean");
      out = v.get<bool>();
    } else if constexpr (std::is_same_v<T, std::uint64_t>) {
      if (!v.is_number_integer() || (!v.is_number_unsigned() && v.get<std::int64_t>() < 0)) throw ManifestError(field(key), "expected a non-negative integer");
      out = v.get<std::uint64_t>();
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer()) throw ManifestError(field(key), "expected an integer");
      out = v.get<T>();
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) throw ManifestError(field(key), "expected a number");
      out = v.get<T>();
    } else {
      if (!v.is_string()) throw ManifestError(field(key), "expected a string");
      out = v.get<T>();
    }
  }

  Section sub(const std::string& key) {
    seen_.insert(key);
    static const json kEmpty = json::object();
    auto it = j_.find(key);
    return Section(it == j_.end() ? kEmpty : *it, field(key));
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) throw ManifestError(field(it.key()), "unknown field");
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

template <typename Fn>
void wrap(const std::string& field, Fn&& fn) {
  try {
    fn();
  } catch (const std::invalid_argument& e) {
    throw ManifestError(field, e.what());
  }
}

}  // namespace

void RunManifest::validate() const {
  const auto& s = data.synthetic;
  if (data.csv_path.empty()) {
    if (s.num_classes < 2) throw ManifestError("data.num_classes", "must be >= 2");
    if (s.n_per_class < 1) throw ManifestError("data.n_per_class", "must be >= 1");
    if (s.input_dim < 2) throw ManifestError("data.input_dim", "must be >= 2");
    if (!(s.class_separation > 0.0)) throw ManifestError("data.class_separation", "must be > 0");
    if (!(s.feature_sigma >= 0.0)) throw ManifestError("data.feature_sigma", "must be >= 0");
    if (data.n_test_per_class < 1) throw ManifestError("data.n_test_per_class", "must be >= 1");
  }
  if (data.num_clients < 1) throw ManifestError("data.num_clients", "must be >= 1");
  if (!(data.dirichlet_alpha > 0.0)) throw ManifestError("data.dirichlet_alpha", "must be > 0");
  wrap("noise.rate", [&] { noise.validate(); });
  const auto& r = rounds;
  if (r.total_rounds < 0) throw ManifestError("rounds.total_rounds", "must be >= 0");
  if (r.stage1_rounds < 0 || r.stage1_rounds > r.total_rounds) {
    throw ManifestError("rounds.stage1_rounds", "must satisfy 0 <= stage1_rounds <= total_rounds");
  }
  if (r.local_epochs < 0) throw ManifestError("rounds.local_epochs", "must be >= 0");
  if (r.clients_per_round < 1 || r.clients_per_round > data.num_clients) {
    throw ManifestError("rounds.clients_per_round", "must satisfy 1 <= clients_per_round <= num_clients");
  }
  if (r.clusters < 1) throw ManifestError("rounds.clusters", "must be >= 1");
  if (r.batch_size < 1) throw ManifestError("rounds.batch_size", "must be >= 1");
  if (!(r.learning_rate > 0.0)) throw ManifestError("rounds.learning_rate", "must be > 0");
  if (r.checkpoint_every < 0) throw ManifestError("rounds.checkpoint_every", "must be >= 0");
  wrap("loss", [&] { loss.validate(); });
  wrap("tempering", [&] { tempering.validate(); });
  wrap("gmm", [&] { gmm.validate(); });
  wrap("em", [&] { em.validate(); });
  wrap("augmentation", [&] { augmentation.validate(); });
  if (hidden < 1) throw ManifestError("model.hidden", "must be >= 1");
  if (embed_dim < 2) throw ManifestError("model.embed_dim", "must be >= 2");
  if (!(eta > 0.0)) throw ManifestError("evidence.eta", "must be > 0");
}

learner::ModelShape RunManifest::model_shape() const {
  return {data.synthetic.input_dim, hidden, embed_dim, data.synthetic.num_classes};
}

RunManifest manifest_from_json(const json& j) {
  RunManifest m;
  Section root(j, "");
  root.read("master_seed", m.master_seed);
  root.read("output_dir", m.output_dir);
  {
    Section s = root.sub("data");
    s.read("num_classes", m.data.synthetic.num_classes);
    s.read("n_per_class", m.data.synthetic.n_per_class);
    s.read("n_test_per_class", m.data.n_test_per_class);
    s.read("input_dim", m.data.synthetic.input_dim);
    s.read("class_separation", m.data.synthetic.class_separation);
    s.read("feature_sigma", m.data.synthetic.feature_sigma);
    s.read("num_clients", m.data.num_clients);
    s.read("dirichlet_alpha", m.data.dirichlet_alpha);
    s.read("csv_path", m.data.csv_path);
    s.finish();
  }
  {
    Section s = root.sub("noise");
    std::string flavor = noise::to_string(m.noise.flavor);
    std::string pattern = noise::to_string(m.noise.pattern);
    s.read("flavor", flavor);
    s.read("pattern", pattern);
    s.read("rate", m.noise.rate);
    wrap(s.field("flavor"), [&] { m.noise.flavor = noise::parse_flavor(flavor); });
    wrap(s.field("pattern"), [&] { m.noise.pattern = noise::parse_pattern(pattern); });
    s.finish();
  }
  {
    Section s = root.sub("rounds");
    s.read("total_rounds", m.rounds.total_rounds);
    s.read("stage1_rounds", m.rounds.stage1_rounds);
    s.read("local_epochs", m.rounds.local_epochs);
    s.read("clients_per_round", m.rounds.clients_per_round);
    s.read("clusters", m.rounds.clusters);
    s.read("batch_size", m.rounds.batch_size);
    s.read("learning_rate", m.rounds.learning_rate);
    s.read("checkpoint_every", m.rounds.checkpoint_every);
    s.finish();
  }
  {
    Section s = root.sub("loss");
    s.read("tau", m.loss.tau);
    s.read("sce_alpha", m.loss.sce_alpha);
    s.read("sce_beta", m.loss.sce_beta);
    s.read("rce_clamp", m.loss.rce_clamp);
    s.read("lambda_s", m.loss.lambda_s);
    s.read("lambda_n", m.loss.lambda_n);
    s.read("epsilon_guard", m.loss.epsilon_guard);
    s.finish();
  }
  {
    Section s = root.sub("tempering");
    s.read("r_min", m.tempering.r_min);
    s.finish();
  }
  {
    Section s = root.sub("gmm");
    s.read("max_iters", m.gmm.max_iters);
    s.read("tol", m.gmm.tol);
    s.read("var_floor", m.gmm.var_floor);
    s.read("degenerate_var", m.gmm.degenerate_var);
    s.read("min_mean_gap", m.gmm.min_mean_gap);
    s.read("threshold", m.gmm.threshold);
    s.finish();
  }
  {
    Section s = root.sub("em");
    s.read("max_iters", m.em.max_iters);
    s.read("tol", m.em.tol);
    s.read("pi0_init", m.em.pi0_init);
    s.read("pi0_floor", m.em.pi0_floor);
    s.read("kappa_init", m.em.kappa_init);
    s.read("kappa_max", m.em.kappa_max);
    s.read("empty_mass_fraction", m.em.empty_mass_fraction);
    s.finish();
  }
  {
    Section s = root.sub("augmentation");
    s.read("jitter_sigma", m.augmentation.jitter_sigma);
    s.read("mask_fraction", m.augmentation.mask_fraction);
    s.finish();
  }
  {
    Section s = root.sub("model");
    s.read("hidden", m.hidden);
    s.read("embed_dim", m.embed_dim);
    s.finish();
  }
  {
    Section s = root.sub("evidence");
    s.read("eta", m.eta);
    s.finish();
  }
  {
    Section s = root.sub("method");
    std::string detector = to_string(m.method.detector);
    s.read("detector", detector);
    s.read("aggregate_absorption", m.method.aggregate_absorption);
    s.read("shadow_small_loss", m.method.shadow_small_loss);
    wrap(s.field("detector"), [&] { m.method.detector = parse_detector(detector); });
    s.finish();
  }
  root.finish();
  m.validate();
  return m;
}

json manifest_to_json(const RunManifest& m) {
  const auto& s = m.data.synthetic;
  return {
      {"master_seed", m.master_seed},
      {"output_dir", m.output_dir},
      {"data",
       {{"num_classes", s.num_classes},
        {"n_per_class", s.n_per_class},
        {"n_test_per_class", m.data.n_test_per_class},
        {"input_dim", s.input_dim},
        {"class_separation", s.class_separation},
        {"feature_sigma", s.feature_sigma},
        {"num_clients", m.data.num_clients},
        {"dirichlet_alpha", m.data.dirichlet_alpha},
        {"csv_path", m.data.csv_path}}},
      {"noise",
       {{"flavor", noise::to_string(m.noise.flavor)},
        {"pattern", noise::to_string(m.noise.pattern)},
        {"rate", m.noise.rate}}},
      {"rounds",
       {{"total_rounds", m.rounds.total_rounds},
        {"stage1_rounds", m.rounds.stage1_rounds},
        {"local_epochs", m.rounds.local_epochs},
        {"clients_per_round", m.rounds.clients_per_round},
        {"clusters", m.rounds.clusters},
        {"batch_size", m.rounds.batch_size},
        {"learning_rate", m.rounds.learning_rate},
        {"checkpoint_every", m.rounds.checkpoint_every}}},
      {"loss",
       {{"tau", m.loss.tau},
        {"sce_alpha", m.loss.sce_alpha},
        {"sce_beta", m.loss.sce_beta},
        {"rce_clamp", m.loss.rce_clamp},
        {"lambda_s", m.loss.lambda_s},
        {"lambda_n", m.loss.lambda_n},
        {"epsilon_guard", m.loss.epsilon_guard}}},
      {"tempering", {{"r_min", m.tempering.r_min}}},
      {"gmm",
       {{"max_iters", m.gmm.max_iters},
        {"tol", m.gmm.tol},
        {"var_floor", m.gmm.var_floor},
        {"degenerate_var", m.gmm.degenerate_var},
        {"min_mean_gap", m.gmm.min_mean_gap},
        {"threshold", m.gmm.threshold}}},
      {"em",
       {{"max_iters", m.em.max_iters},
        {"tol", m.em.tol},
        {"pi0_init", m.em.pi0_init},
        {"pi0_floor", m.em.pi0_floor},
        {"kappa_init", m.em.kappa_init},
        {"kappa_max", m.em.kappa_max},
        {"empty_mass_fraction", m.em.empty_mass_fraction}}},
      {"augmentation",
       {{"jitter_sigma", m.augmentation.jitter_sigma},
        {"mask_fraction", m.augmentation.mask_fraction}}},
      {"model", {{"hidden", m.hidden}, {"embed_dim", m.embed_dim}}},
      {"evidence", {{"eta", m.eta}}},
      {"method",
       {{"detector", to_string(m.method.detector)},
        {"aggregate_absorption", m.method.aggregate_absorption},
        {"shadow_small_loss", m.method.shadow_small_loss}}},
  };
}

RunManifest load_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ManifestError("<file>", "cannot open manifest '" + path + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ManifestError("<file>", std::string("invalid JSON: ") + e.what());
  }
  return manifest_from_json(j);
}

}  // namespace fedrg
