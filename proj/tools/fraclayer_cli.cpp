#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"

#include "fraclayer/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Layer solutions of (-d_xx)^s v = f(v): explicit layers, solvers, extension diagnostics"};
  std::string command;
  std::string config_path;
  std::string out_dir = ".";
  std::optional<unsigned> threads;
  bool verbose = false;
  app.add_option("command", command,
                 "heat-layer | solve | extend | hamiltonian | stability | asymptotics | calibrate "
                 "(overrides 'command' in the config)");
  app.add_option("--config", config_path, "flat key = value config file")->required();
  app.add_option("--out", out_dir, "output directory (created if missing)");
  app.add_option("--threads", threads, "worker cap; falls back to FRACLAYER_THREADS")->check(CLI::PositiveNumber);
  app.add_flag("--verbose", verbose, "echo the run log to stderr");
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : fraclayer::cli::exit_config;
  }
  if (threads) fraclayer::set_max_threads(*threads);

  fraclayer::cli::RunConfig cfg;
  try {
    cfg = fraclayer::cli::parse_config_file(config_path);
  } catch (const fraclayer::cli::ConfigError& e) {
    std::cerr << e.what() << '\n';
    return fraclayer::cli::exit_config;
  }
  return fraclayer::cli::run(cfg, out_dir, std::cerr, verbose ? &std::cerr : nullptr, command);
}
