#include "lipmap/jobs.hpp"

#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

int main(int argc, char** argv) {
  CLI::App app{"Heat-flow transport maps and their Lipschitz bounds"};
  app.require_subcommand(1);

  std::string config;
  std::string out = ".";
  bool quick = false;
  std::optional<std::uint64_t> seed;

  for (const char* name : {"transport", "bound", "profile", "verify", "counterexample"}) {
    auto* sub = app.add_subcommand(name);
    sub->add_option("--config", config, "job file (JSON)")->required()->check(CLI::ExistingFile);
    sub->add_option("--out", out, "output directory");
    sub->add_flag("--quick", quick, "coarser settings for smoke runs");
    sub->add_option("--seed", seed, "overrides the seed in the job file");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : lipmap::kExitConfigError;
  }

  const std::string command = app.get_subcommands().front()->get_name();
  return lipmap::run_job_file(command, config, out, quick, seed);
}
