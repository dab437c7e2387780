#include <cstdlib>
#include <iostream>
#include <string>
#include <vector>

#include <spdlog/cfg/helpers.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "CLI11.hpp"
#include "equitrace/run.hpp"
#include "json.hpp"

namespace {

void print_failures(const std::vector<equitrace::Failure>& failures) {
  nlohmann::ordered_json j;
  j["failures"] = nlohmann::ordered_json::array();
  for (const auto& f : failures) j["failures"].push_back({{"kind", f.kind}, {"message", f.message}});
  std::cerr << j.dump() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  // Logs go to stderr so stdout stays a clean summary line.
  spdlog::set_default_logger(spdlog::stderr_color_mt("equitrace"));
  spdlog::set_level(spdlog::level::warn);
  if (const char* lvl = std::getenv("EQUITRACE_LOG")) spdlog::cfg::helpers::load_levels(lvl);

  CLI::App app{"Equivariant Guillemin trace formula for flows"};
  std::string command;
  std::string config_path;
  equitrace::RunOptions opt;
  app.add_option("command", command, "orbits | trace | verify | all")
      ->required()
      ->check(CLI::IsMember({"orbits", "trace", "verify", "all"}));
  app.add_option("--config", config_path, "config file, or the name of a shipped model")->required();
  app.add_option("--g", opt.g, "group element payload, overrides [group] g");
  app.add_option("--psi", opt.psi, "test function spec, overrides [trace] psi (repeatable)");
  app.add_option("--threads", opt.threads, "worker threads (0 = hardware concurrency)")->check(CLI::NonNegativeNumber);
  app.add_option("--out", opt.out_dir, "output directory");
  app.add_option("--mode", opt.mode, "oracle mode for verify")->check(CLI::IsMember({"mollified", "covering", "catmap"}));
  CLI11_PARSE(app, argc, argv);

  try {
    const auto cfg = equitrace::load_config(config_path);
    const auto res = equitrace::run(command, cfg, opt);
    std::cout << res.summary << "\n";
    for (const auto& f : res.failures) spdlog::error("{}: {}", f.kind, f.message);
    if (res.exit_code != 0) print_failures(res.failures);
    return res.exit_code;
  } catch (const equitrace::Error& e) {
    print_failures({{e.kind(), e.what()}});
    return 2;
  } catch (const std::exception& e) {
    print_failures({{"InternalError", e.what()}});
    return 3;
  }
}
