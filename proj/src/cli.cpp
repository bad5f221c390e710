#include "fedrg/cli.hpp"

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <stdexcept>

namespace fedrg::cli {

namespace fs = std::filesystem;
using federation::Experiment;
using federation::RoundReport;

const std::vector<std::string>& ablation_variants() {
  static const std::vector<std::string> kVariants{
      "no_absorption", "no_stage1", "ce_instead_of_sce", "aggregate_T", "loss_based_detector",
      "fedavg_ce"};
  return kVariants;
}

RunManifest apply_ablation(RunManifest m, const std::string& variant) {
  if (variant == "no_absorption") {
    m.loss.lambda_n = 0.0;
  } else if (variant == "no_stage1") {
    m.rounds.stage1_rounds = 0;
  } else if (variant == "ce_instead_of_sce") {
    m.loss.sce_alpha = 1.0;
    m.loss.sce_beta = 0.0;
  } else if (variant == "aggregate_T") {
    m.method.aggregate_absorption = true;
  } else if (variant == "loss_based_detector") {
    m.method.detector = Detector::kSmallLoss;
  } else if (variant == "fedavg_ce") {
    // Plain FedAvg with cross-entropy: no pretraining, detection or absorption.
    m.rounds.stage1_rounds = 0;
    m.method.detector = Detector::kNone;
    m.loss.lambda_n = 0.0;
    m.loss.sce_alpha = 1.0;
    m.loss.sce_beta = 0.0;
  } else {
    throw std::invalid_argument("unknown ablation variant '" + variant + "'");
  }
  m.validate();
  return m;
}

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10f", v);
  return buf;
}

std::string tagged(const char* prefix, int round, int client) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s_%03d_client_%02d.csv", prefix, round, client);
  return buf;
}

std::ofstream open_out(const fs::path& p) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + p.string() + "'");
  return out;
}

void write_static_artifacts(const Experiment& exp, const fs::path& dir) {
  {
    auto out = open_out(dir / "kernels.json");
    nlohmann::json j = nlohmann::json::array();
    for (std::size_t k = 0; k < exp.kernels().size(); ++k) {
      j.push_back({{"client_id", k}, {"kernel", exp.kernels()[k]->to_json()}});
    }
    out << j.dump(2) << '\n';
  }
  {
    auto out = open_out(dir / "corruption.csv");
    out << "sample_id,client_id,y_true,y_obs,is_noisy\n";
    for (const auto& c : exp.clients()) {
      const auto& rec = exp.corruption()[c.client_id];
      for (std::size_t i = 0; i < c.shard.samples.size(); ++i) {
        out << c.shard.samples[i].sample_id << ',' << c.client_id << ',' << rec.true_labels[i] << ','
            << rec.observed_labels[i] << ',' << (rec.is_noisy_true[i] ? 1 : 0) << '\n';
      }
    }
  }
  {
    auto out = open_out(dir / "shards.csv");
    std::vector<data::ClientShard> shards;
    for (const auto& c : exp.clients()) shards.push_back(c.shard);
    data::write_shards_csv(out, shards);
  }
}

}  // namespace

std::vector<metrics::MetricsRecord> run_to_directory(const RunManifest& manifest,
                                                     const std::string& output_dir) {
  const fs::path dir(output_dir);
  fs::create_directories(dir / "partitions");
  fs::create_directories(dir / "absorption");
  fs::create_directories(dir / "checkpoints");
  {
    RunManifest resolved = manifest;
    resolved.output_dir = output_dir;
    auto out = open_out(dir / "manifest.resolved.json");
    out << manifest_to_json(resolved).dump(2) << '\n';
  }

  Experiment exp(manifest);
  write_static_artifacts(exp, dir);

  auto detectors_out = open_out(dir / "detectors.csv");
  detectors_out << "round,cra_geometry,cra_small_loss\n";

  const int every = manifest.rounds.checkpoint_every;
  auto observer = [&](const RoundReport& rep) {
    if (rep.record.cra) {
      detectors_out << rep.record.round << ',' << fmt(*rep.record.cra) << ','
                    << (rep.record.cra_small_loss ? fmt(*rep.record.cra_small_loss) : "") << '\n';
    }
    if (rep.stage2) {
      for (const auto& u : rep.updates) {
        const auto& client = rep.clients[u.client_id];
        if (!client.last_partition) continue;
        const auto& part = *client.last_partition;
        const auto& truth = exp.corruption()[u.client_id].is_noisy_true;
        auto out = open_out(dir / "partitions" / tagged("round", rep.round, u.client_id));
        out << "sample_id,p_clean,is_clean_pred,is_clean_true\n";
        for (std::size_t i = 0; i < part.clean_mask.size(); ++i) {
          const double p = part.scores.empty() ? part.clean_posterior[i] : part.scores[i];
          out << client.shard.samples[i].sample_id << ',' << fmt(p) << ',' << (part.clean_mask[i] ? 1 : 0)
              << ',' << (truth[i] ? 0 : 1) << '\n';
        }
        auto tout = open_out(dir / "absorption" / tagged("round", rep.round, u.client_id));
        const auto t = client.absorption.effective();
        const int C = client.absorption.num_classes();
        for (int r = 0; r < C; ++r) {
          for (int c = 0; c < C; ++c) tout << (c ? "," : "") << fmt(t[static_cast<std::size_t>(r) * C + c]);
          tout << '\n';
        }
      }
    }
    if (every > 0 && rep.round % every == 0) {
      nlohmann::json ck = {{"round", rep.round}, {"global", rep.aggregated.to_json()}};
      ck["clients"] = nlohmann::json::array();
      for (const auto& c : rep.clients) ck["clients"].push_back(c.to_json());
      char name[48];
      std::snprintf(name, sizeof name, "round_%03d.json", rep.round);
      auto out = open_out(dir / "checkpoints" / name);
      out << ck.dump() << '\n';
    }
  };

  const std::vector<metrics::MetricsRecord> records = exp.run(observer);
  {
    auto out = open_out(dir / "metrics.csv");
    metrics::write_metrics_header(out);
    for (const auto& r : records) metrics::write_metrics_row(out, r);
  }
  {
    nlohmann::json absorption = nlohmann::json::array();
    for (const auto& c : exp.clients()) {
      absorption.push_back({{"client_id", c.client_id}, {"T", c.absorption.to_json()}});
    }
    auto out = open_out(dir / "absorption.json");
    out << absorption.dump(2) << '\n';
  }
  {
    auto out = open_out(dir / "summary.json");
    out << metrics::summarize(records).dump(2) << '\n';
  }
  return records;
}

namespace {

std::string resolve_output_dir(const RunManifest& m) {
  if (const char* env = std::getenv(kOutputDirEnv); env != nullptr && *env != '\0') return env;
  return m.output_dir;
}

template <typename Fn>
int guarded(std::ostream& err, Fn&& fn) {
  try {
    return fn();
  } catch (const ManifestError& e) {
    err << "invalid manifest: " << e.what() << '\n';
    return kExitValidation;
  } catch (const federation::RunError& e) {
    err << "run failed at " << e.what() << '\n';
    return kExitRuntime;
  } catch (const std::exception& e) {
    err << "run failed: " << e.what() << '\n';
    return kExitRuntime;
  }
}

}  // namespace

int cmd_validate(const std::string& manifest_path, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    load_manifest(manifest_path);
    out << "manifest ok\n";
    return kExitOk;
  });
}

int cmd_run(const std::string& manifest_path, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const RunManifest m = load_manifest(manifest_path);
    const std::string dir = resolve_output_dir(m);
    const auto records = run_to_directory(m, dir);
    out << "wrote " << records.size() << " metric records to " << dir << '\n';
    return kExitOk;
  });
}

int cmd_ablate(const std::string& manifest_path, const std::string& variant, std::ostream& out,
               std::ostream& err) {
  return guarded(err, [&] {
    const RunManifest base = load_manifest(manifest_path);
    RunManifest ablated;
    try {
      ablated = apply_ablation(base, variant);
    } catch (const std::invalid_argument& e) {
      throw ManifestError("variant", e.what());
    }
    const fs::path dir(resolve_output_dir(base));
    const auto base_records = run_to_directory(base, (dir / "base").string());
    const auto var_records = run_to_directory(ablated, (dir / variant).string());
    auto csv = open_out(dir / ("ablation_" + variant + ".csv"));
    csv << "round,base_accuracy,variant_accuracy,base_macro_fscore,variant_macro_fscore,base_cra,variant_cra\n";
    for (std::size_t i = 0; i < base_records.size() && i < var_records.size(); ++i) {
      const auto& b = base_records[i];
      const auto& v = var_records[i];
      csv << b.round << ',' << fmt(b.accuracy) << ',' << fmt(v.accuracy) << ',' << fmt(b.macro_fscore)
          << ',' << fmt(v.macro_fscore) << ',' << (b.cra ? fmt(*b.cra) : "") << ','
          << (v.cra ? fmt(*v.cra) : "") << '\n';
    }
    out << "ablation " << variant << ": base final accuracy " << fmt(base_records.back().accuracy)
        << ", variant final accuracy " << fmt(var_records.back().accuracy) << '\n';
    return kExitOk;
  });
}

}  // namespace fedrg::cli
