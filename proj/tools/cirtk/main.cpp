#include <fmt/format.h>

#include <CLI11.hpp>
#include <cstdlib>
#include <iostream>

#include "cir/error.hpp"
#include "cir/kernels.hpp"
#include "cir/parallel.hpp"
#include "common.hpp"

int main(int argc, char** argv) {
  cirtk::set_argv_words(argc, argv);
  CLI::App app{"Composed image retrieval toolkit: forge triplets, train, cache negatives, evaluate.", "cirtk"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Help for every subcommand");
  std::size_t threads = 0;
  std::string kernel;
  app.add_option("--threads", threads, "Cap on worker threads; 0 uses the hardware count")->capture_default_str();
  app.add_option("--kernel", kernel, "Similarity kernel: scalar, avx2 or neon (default: best available)");

  std::vector<std::pair<CLI::App*, cirtk::Runner>> commands;
  const auto add = [&](cirtk::Runner (*reg)(CLI::App&)) {
    const std::size_t before = app.get_subcommands({}).size();
    cirtk::Runner run = reg(app);
    commands.emplace_back(app.get_subcommands({})[before], std::move(run));
  };
  add(cirtk::register_import);
  add(cirtk::register_forge);
  add(cirtk::register_cache);
  add(cirtk::register_train);
  add(cirtk::register_eval);
  add(cirtk::register_negstudy);
  add(cirtk::register_synthetic);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : static_cast<int>(cir::ExitCode::usage);
  }

  try {
    if (threads > 0) cir::set_max_threads(threads);
    if (!kernel.empty()) cir::kernels::select(kernel);
    for (auto& [cmd, run] : commands) {
      if (cmd->parsed()) return run();
    }
  } catch (const cir::Error& e) {
    std::cerr << "cirtk: " << e.what() << '\n';
    return static_cast<int>(e.code());
  } catch (const std::exception& e) {
    std::cerr << "cirtk: " << e.what() << '\n';
    return static_cast<int>(cir::ExitCode::data);
  }
  return 0;
}
