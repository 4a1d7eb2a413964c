#include "kflow/app.hpp"

#include "CLI11.hpp"

int main(int argc, char** argv) {
  CLI::App cli{"kflow: mean curvature flow of symplectic surfaces in Kahler-Einstein surfaces.\n"
               "Exit codes: 0 success, 1 configuration or input error, 2 blow-up flag, 3 degenerate grid.\n"
               "Relative output directories are resolved against $KFLOW_OUTPUT_ROOT when it is set."};
  cli.require_subcommand(1);

  std::string config;
  auto* run = cli.add_subcommand("run", "Run the flow from a JSON config and write a run directory");
  run->add_option("config", config, "Run config (JSON)")->required()->check(CLI::ExistingFile);

  std::string level = "quick";
  bool flip = false;
  auto* verify = cli.add_subcommand("verify", "Run the identity batteries and print a pass/fail table");
  verify->add_option("--level", level, "quick or full (full adds the refinement studies)")
      ->check(CLI::IsMember({"quick", "full"}));
  verify->add_flag("--flip-omega", flip, "Mutation fixture: flip the sign of omega on every model");

  std::string sweep_spec;
  auto* sweep = cli.add_subcommand("sweep", "Run a perturbation-amplitude sweep over perturbed CP1 curves");
  sweep->add_option("spec", sweep_spec, "Sweep spec (JSON)")->required()->check(CLI::ExistingFile);

  std::string run_dir, queries;
  auto* density = cli.add_subcommand("density", "Evaluate the parabolic density on a finished run");
  density->add_option("run_dir", run_dir, "Run directory containing config.resolved.json and snapshots/")->required();
  density->add_option("--queries", queries, "JSON file {\"queries\": [{\"x0\", \"chart\", \"t0\", \"r\"}]}; "
                                            "without it the standard monitor sampling is used")
      ->check(CLI::ExistingFile);

  try {
    cli.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = cli.exit(e);
    return code == 0 ? 0 : kflow::app::config_error;
  }

  if (*run) return kflow::app::cmd_run(config);
  if (*verify) return kflow::app::cmd_verify(level == "full" ? kflow::VerifyLevel::Full : kflow::VerifyLevel::Quick, flip);
  if (*sweep) return kflow::app::cmd_sweep(sweep_spec);
  if (*density) {
    std::optional<std::filesystem::path> q;
    if (!queries.empty()) q = queries;
    return kflow::app::cmd_density(run_dir, q);
  }
  return kflow::app::config_error;
}
