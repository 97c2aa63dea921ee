#include <iostream>

#include "CLI11.hpp"
#include "runner.hpp"

int main(int argc, char** argv) {
  CLI::App app{"potlab: capacities, Poisson extensions and boundary convergence on discretized Ahlfors-regular spaces"};
  app.require_subcommand(1);
  potlab::cli::RunOptions opt;
  std::string config, out;
  std::uint64_t seed = 0;
  for (const auto& name : potlab::cli::subcommands()) {
    auto* sub = app.add_subcommand(name);
    sub->add_option("--config", config, "INI config file")->required()->check(CLI::ExistingFile);
    sub->add_option("--out", out, "output directory (overrides the config)");
    sub->add_option("--seed", seed, "master seed (overrides the config)");
    sub->add_option("--threads", opt.threads, "worker threads")->check(CLI::PositiveNumber);
    sub->add_option("--tol-override", opt.overrides, "KEY=VAL; bare keys refer to [tolerances]")->take_all();
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    std::cerr << "{\"error\":\"usage\",\"message\":\"" << e.what() << "\"}\n";
    return 2;
  }
  auto* sub = app.get_subcommands().front();
  opt.config = config;
  if (sub->count("--out")) opt.out = out;
  if (sub->count("--seed")) opt.seed = seed;
  return potlab::cli::main_entry(sub->get_name(), opt, std::cout, std::cerr);
}
