#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "fedrg/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Federated noisy-label simulator with geometry-based detection"};
  app.require_subcommand(1);

  std::string manifest;
  std::string variant;

  auto* run = app.add_subcommand("run", "Run an experiment from a manifest");
  run->add_option("manifest", manifest, "Manifest JSON path")->required();

  auto* ablate = app.add_subcommand("ablate", "Run a base manifest and one ablated variant");
  ablate->add_option("manifest", manifest, "Manifest JSON path")->required();
  ablate->add_option("--variant", variant, "Ablation variant")
      ->required()
      ->check(CLI::IsMember(fedrg::cli::ablation_variants()));

  auto* validate = app.add_subcommand("validate", "Parse and validate a manifest");
  validate->add_option("manifest", manifest, "Manifest JSON path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : fedrg::cli::kExitValidation;
  }

  if (run->parsed()) return fedrg::cli::cmd_run(manifest, std::cout, std::cerr);
  if (ablate->parsed()) return fedrg::cli::cmd_ablate(manifest, variant, std::cout, std::cerr);
  return fedrg::cli::cmd_validate(manifest, std::cout, std::cerr);
}
